#include <doctest.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <random>

#include "../oracles.hpp"
#include "fairaug/policies.hpp"
#include "fairaug/synthetic.hpp"
#include "helpers.hpp"

using namespace fairaug;

namespace {

GroupPartition split_groups(std::vector<int> adv, std::vector<int> dis) {
  GroupPartition p;
  p.group1 = std::move(adv);
  p.group2 = std::move(dis);
  p.advantaged = 1;
  return p;
}

InteractionGraph from_pairs(int nu, int ni, std::initializer_list<std::array<int, 3>> e) {
  std::vector<Edge> edges;
  for (auto [u, i, t] : e) edges.push_back({u, i, t});
  return InteractionGraph(nu, ni, edges);
}

}  // namespace

TEST_SUITE("policies") {
  TEST_CASE("names round-trip and labels") {
    for (auto p : kAllUserPolicies) CHECK(parse_user_policy(to_string(p)) == p);
    for (auto p : kAllItemPolicies) CHECK(parse_item_policy(to_string(p)) == p);
    PolicyConfig c;
    c.user_policy = UserPolicy::kFR;
    c.item_policy = ItemPolicy::kPR;
    CHECK(c.label() == "FR+PR");
    CHECK(c.scenario() == Scenario::kUserItem);
    PolicyConfig none;
    CHECK_THROWS_AS(none.validate(), ConfigError);
    c.psi_user = 0.0;
    CHECK_THROWS_AS(c.validate(), ConfigError);
  }

  TEST_CASE("ZN ignores psi and warns when empty") {
    const auto p = split_groups({0}, {1, 2, 3});
    std::vector<double> ndcg{0.0, 0.0, 0.4, std::nan("")};
    CHECK(sample_zn(p, ndcg) == std::vector<int>{1});
    std::vector<double> happy{0.0, 0.1, 0.4, 0.2};
    std::vector<std::string> w;
    CHECK(sample_zn(p, happy, &w).empty());
    CHECK(w.size() == 1);
  }

  TEST_CASE("ZN depends on the model's utilities") {
    const auto p = split_groups({0}, {1, 2});
    CHECK(sample_zn(p, std::vector<double>{0.5, 0.0, 0.3}) != sample_zn(p, std::vector<double>{0.5, 0.3, 0.0}));
  }

  TEST_CASE("LD takes the lowest degrees with index ties") {
    // Users 1..4 have degrees 1..4.
    const auto g = from_pairs(5, 4, {{0, 0, 1}, {1, 0, 1}, {2, 0, 1}, {2, 1, 1}, {3, 0, 1}, {3, 1, 1},
                                     {3, 2, 1}, {4, 0, 1}, {4, 1, 1}, {4, 2, 1}, {4, 3, 1}});
    CHECK(sample_ld(g, split_groups({0}, {1, 2, 3, 4}), 0.5) == std::vector<int>{1, 2});
    const auto flat = from_pairs(4, 2, {{0, 0, 1}, {1, 0, 1}, {2, 0, 1}, {3, 0, 1}});
    CHECK(sample_ld(flat, split_groups({0}, {1, 2, 3}), 0.6) == std::vector<int>{1, 2});
  }

  TEST_CASE("FR: disconnected users come first, close users last") {
    // Users 0 (adv), 1 and 2 share item 0 with the advantaged user; user 3 is
    // alone with item 2.
    const auto g = from_pairs(4, 3, {{0, 0, 1}, {1, 0, 1}, {2, 0, 1}, {2, 1, 1}, {3, 2, 1}});
    const auto p = split_groups({0}, {1, 2, 3});
    const auto scores = fr_scores(g, p);
    CHECK(scores[1] == 2);
    CHECK(scores[3] == 4 + 3);
    CHECK(sample_fr(g, p, 0.34) == std::vector<int>{3});
  }

  TEST_CASE("SP prefers niche consumers and skips isolated users") {
    // Item degrees 3, 1, 2: user 1 averages 2, user 2 averages 2.5.
    const auto g = from_pairs(4, 3, {{0, 0, 1}, {1, 0, 1}, {2, 0, 1}, {1, 1, 1}, {2, 2, 1}, {0, 2, 1}});
    const auto p = split_groups({0}, {1, 2, 3});
    std::vector<std::string> w;
    CHECK(sp_score(g, 2) == doctest::Approx(2.5));
    CHECK(sp_score(g, 1) == doctest::Approx(2.0));
    CHECK(sample_sp(g, p, 0.5, &w) == std::vector<int>{1});
    CHECK(w.size() == 1);
  }

  TEST_CASE("IP scores the disadvantaged share") {
    const auto g = from_pairs(4, 3, {{0, 0, 1}, {1, 1, 1}, {2, 1, 1}, {0, 2, 1}, {3, 2, 1}});
    const auto p = split_groups({0}, {1, 2, 3});
    const auto s = ip_scores(g, p);
    CHECK(s[0] == 0.0);
    CHECK(s[1] == doctest::Approx(4.0 / 3.0));
    CHECK(s[2] == doctest::Approx(4.0 / 3.0 * 0.5));
    CHECK(sample_ip(g, p, 0.34) == std::vector<int>{1});
  }

  TEST_CASE("IR picks the latest users, IT the widest items") {
    const auto g = from_pairs(3, 3, {{0, 0, 5}, {1, 0, 90}, {2, 1, 40}, {2, 2, 41}, {1, 2, 3}});
    const auto p = split_groups({0}, {1, 2});
    CHECK(sample_ir(g, p, 0.5) == std::vector<int>{1});
    // Spans: item0 85, item1 0 (single), item2 38.
    CHECK(sample_it(g, 0.34) == std::vector<int>{0});
    CHECK(sample_it(g, 0.67) == std::vector<int>{0, 2});
  }

  TEST_CASE("pagerank on a biregular graph ties every item") {
    std::vector<Edge> e;
    for (int u = 0; u < 4; ++u) {
      e.push_back({u, u % 4, 1});
      e.push_back({u, (u + 1) % 4, 1});
    }
    InteractionGraph g(4, 4, e);
    const auto r = pagerank(g);
    for (int i = 1; i < 4; ++i) CHECK(r[4 + i] == r[4]);
    CHECK(sample_pr(g, 0.5) == std::vector<int>{0, 1});
    double sum = 0.0;
    for (double x : r) sum += x;
    CHECK(std::abs(sum - 1.0) <= 1e-8);
  }

  TEST_CASE("pagerank non-convergence is a numeric error") {
    const auto g = synthetic::random_graph(6, 6, 12, 1);
    CHECK_THROWS_AS(pagerank(g, 0.85, 1e-30, 3), NumericError);
  }

  TEST_CASE("samplers agree with brute force on random graphs") {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      std::mt19937_64 rng(seed);
      const int nu = 5 + static_cast<int>(rng() % 20), ni = 5 + static_cast<int>(rng() % 20);
      const auto g = synthetic::random_graph(nu, ni, nu * ni / 4, seed, 30);
      const auto p = testutil::random_partition(nu, rng);
      const auto d = oracle::dense(g);
      const auto& dis = p.disadvantaged_users();
      const auto& adv = p.advantaged_users();
      for (double psi : {0.25, 0.35, 0.5}) {
        CHECK(sample_ld(g, p, psi) == oracle::ld(d, dis, psi));
        CHECK(sample_fr(g, p, psi) == oracle::fr(d, dis, adv, psi));
        CHECK(sample_sp(g, p, psi) == oracle::sp(d, dis, psi));
        CHECK(sample_ir(g, p, psi) == oracle::ir(d, dis, psi));
        CHECK(sample_ip(g, p, psi) == oracle::ip(d, dis, psi));
        CHECK(sample_it(g, psi) == oracle::it(d, psi));
      }
      const auto pr = pagerank(g);
      const auto ref = oracle::pagerank(d, 0.85);
      for (int a = 0; a < nu + ni; ++a) CHECK(std::abs(pr[a] - ref(a)) <= 1e-8);
    }
  }

  TEST_CASE("psi-nested samples") {
    const auto g = synthetic::random_graph(30, 25, 200, 3, 100);
    std::mt19937_64 rng(3);
    const auto p = testutil::random_partition(30, rng);
    for (auto pol : {UserPolicy::kLD, UserPolicy::kFR, UserPolicy::kSP, UserPolicy::kIR}) {
      std::vector<int> prev;
      for (double psi : {0.25, 0.30, 0.35, 0.40, 0.45}) {
        PolicyConfig c;
        c.user_policy = pol;
        c.psi_user = psi;
        const auto s = *sample(c, g, p, std::vector<double>(30, 0.1)).users;
        CHECK(std::includes(s.begin(), s.end(), prev.begin(), prev.end()));
        prev = s;
      }
    }
  }

  TEST_CASE("candidate scenarios against enumeration") {
    const auto g = synthetic::random_graph(5, 5, 9, 2);
    std::mt19937_64 rng(2);
    const auto p = testutil::random_partition(5, rng);
    SampledSets s;
    s.users = std::vector<int>{p.disadvantaged_users().front()};
    s.items = std::vector<int>{0, 3};
    for (auto sc : {Scenario::kUser, Scenario::kItem, Scenario::kUserItem}) {
      std::vector<UserItem> expect;
      for (int u : p.disadvantaged_users()) {
        for (int i = 0; i < 5; ++i) {
          if (g.has_edge(u, i)) continue;
          const bool uok = u == s.users->front();
          const bool iok = i == 0 || i == 3;
          if ((sc == Scenario::kUser && uok) || (sc == Scenario::kItem && iok) ||
              (sc == Scenario::kUserItem && uok && iok)) {
            expect.push_back({u, i});
          }
        }
      }
      if (expect.empty()) {
        CHECK_THROWS_AS(build_candidates(g, p, s, sc), EmptyCandidatesError);
      } else {
        CHECK(build_candidates(g, p, s, sc).edges == expect);
      }
    }
  }

  TEST_CASE("candidate errors") {
    std::vector<Edge> full;
    for (int u = 0; u < 2; ++u) {
      for (int i = 0; i < 2; ++i) full.push_back({u, i, 1});
    }
    InteractionGraph g(2, 2, full);
    const auto p = split_groups({0}, {1});
    SampledSets s;
    s.users = std::vector<int>{1};
    CHECK_THROWS_AS(build_candidates(g, p, s, Scenario::kUser), EmptyCandidatesError);
    SampledSets none;
    none.users = std::vector<int>{};
    CHECK_THROWS_AS(build_candidates(InteractionGraph(2, 2, {}), p, none, Scenario::kUser), EmptyCandidatesError);
    SampledSets wrong;
    wrong.users = std::vector<int>{0};
    CHECK_THROWS_AS(build_candidates(InteractionGraph(2, 2, {}), p, wrong, Scenario::kUser), ContractError);
  }

  TEST_CASE("overlap matrix") {
    std::vector<NamedSample> one{{"ZN", SampleKind::kUsers, {1, 2}}};
    const auto m1 = policy_overlap(one);
    CHECK(m1.values == std::vector<std::vector<double>>{{1.0}});
    std::vector<NamedSample> three{{"A", SampleKind::kUsers, {1, 2}},
                                   {"B", SampleKind::kUsers, {3}},
                                   {"C", SampleKind::kUsers, {2, 3}}};
    const auto m = policy_overlap(three);
    CHECK(m.values[0][1] == 0.0);
    CHECK(m.values[0][2] == doctest::Approx(1.0 / 3.0));
    CHECK(m.values[2][0] == m.values[0][2]);
    CHECK(m.to_csv().rfind("policy,A,B,C\n", 0) == 0);
    three.push_back({"IP", SampleKind::kItems, {1}});
    CHECK_THROWS_AS(policy_overlap(three), ContractError);
  }

  TEST_CASE("sample files round-trip with provenance") {
    const auto path = (testutil::temp_dir("sample") / "zn.txt").string();
    export_sample({3, 5, 8}, "user_policy=ZN", path);
    CHECK(import_sample(path) == std::vector<int>{3, 5, 8});
  }
}
