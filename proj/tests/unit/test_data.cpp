#include <doctest.h>

#include <algorithm>
#include <map>
#include <random>
#include <set>

#include "fairaug/errors.hpp"
#include "fairaug/synthetic.hpp"
#include "helpers.hpp"

using namespace fairaug;

namespace {

Schema tsv() { return Schema{}; }

std::vector<Interaction> user_history(const std::string& user, int n, Timestamp t0 = 100) {
  std::vector<Interaction> out;
  for (int k = 0; k < n; ++k) out.push_back({user, "i" + std::to_string(k), t0 + k, std::nullopt});
  return out;
}

}  // namespace

TEST_SUITE("data") {
  TEST_CASE("ingest keeps the earliest duplicate") {
    const auto r = ingest_text("user_id\titem_id\ttimestamp\nu1\ti1\t50\nu1\ti1\t20\nu2\ti1\t30\n", tsv());
    REQUIRE(r.interactions.size() == 2);
    CHECK(r.duplicates_dropped == 1);
    for (const auto& x : r.interactions) {
      if (x.user_id == "u1") CHECK(x.timestamp == 20);
    }
  }

  TEST_CASE("ML1M-shaped input with a schema override") {
    std::mt19937_64 rng(3);
    std::string text;
    std::set<std::pair<int, int>> seen;
    int dups = 0;
    for (int row = 0; row < 100; ++row) {
      const int u = static_cast<int>(rng() % 8);
      const int i = static_cast<int>(rng() % 12);
      if (!seen.insert({u, i}).second) ++dups;
      text += std::to_string(u) + "::" + std::to_string(i) + "::" + std::to_string(1 + rng() % 5) +
              "::" + std::to_string(978300000 + row) + "\n";
    }
    Schema s;
    s.delimiter = "::";
    s.has_header = false;
    s.column_names = {"user_id", "item_id", "rating", "timestamp"};
    s.rating_column = "rating";
    const auto r = ingest_text(text, s);
    CHECK(r.interactions.size() == 100u - dups);
    CHECK(r.duplicates_dropped == static_cast<std::size_t>(dups));
  }

  TEST_CASE("missing item column is a schema error naming it") {
    try {
      ingest_text("user_id\ttimestamp\nu1\t5\n", tsv());
      FAIL("expected SchemaError");
    } catch (const SchemaError& e) {
      CHECK(std::string(e.what()).find("item") != std::string::npos);
    }
  }

  TEST_CASE("unparseable timestamp reports its line") {
    try {
      ingest_text("user_id\titem_id\ttimestamp\nu1\ti1\t5\nu1\ti2\tyesterday\n", tsv());
      FAIL("expected RowError");
    } catch (const RowError& e) {
      CHECK(e.line() == 3);
    }
  }

  TEST_CASE("attribute file parses blanks as missing") {
    const auto r = ingest_text("user_id\titem_id\ttimestamp\nu1\ti1\t1\n", tsv(),
                               std::string("user_id\tgender\tage\nu1\tF\t\nu2\t\t40\n"));
    REQUIRE(r.attributes.count("u1"));
    CHECK(r.attributes.at("u1").gender == std::optional<std::string>("F"));
    CHECK_FALSE(r.attributes.at("u1").age.has_value());
    CHECK(r.attributes.at("u2").age == std::optional<double>(40.0));
  }

  TEST_CASE("k-core fixpoint and star graph") {
    auto star = user_history("hub", 30);
    CHECK(k_core_filter(star, 20).size() == 30);
    CHECK_THROWS_AS(k_core_filter(star, 31), DataError);

    auto mixed = user_history("a", 6);
    auto b = user_history("b", 3);
    mixed.insert(mixed.end(), b.begin(), b.end());
    const auto out = k_core_filter(mixed, 5);
    CHECK(out.size() == 6);
    CHECK(k_core_filter(out, 5).size() == out.size());
  }

  TEST_CASE("k-core matches brute-force repeated filtering") {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      const auto corpus = synthetic::random_corpus(30, 25, 1, 12, seed);
      const int k = 5;
      // Oracle: repeat until nothing changes.
      auto cur = corpus;
      while (true) {
        std::map<std::string, int> deg;
        for (const auto& x : cur) ++deg[x.user_id];
        std::vector<Interaction> next;
        for (const auto& x : cur) {
          if (deg[x.user_id] >= k) next.push_back(x);
        }
        if (next.size() == cur.size()) break;
        cur = next;
      }
      const auto got = k_core_filter(corpus, k);
      REQUIRE(got.size() == cur.size());
      for (std::size_t n = 0; n < got.size(); ++n) {
        CHECK(got[n].user_id == cur[n].user_id);
        CHECK(got[n].item_id == cur[n].item_id);
      }
    }
  }

  TEST_CASE("split sizes follow the rounding rule") {
    CHECK(split_sizes(10) == std::array<int, 3>{7, 1, 2});
    CHECK(split_sizes(3) == std::array<int, 3>{1, 1, 1});
    CHECK(split_sizes(20) == std::array<int, 3>{14, 2, 4});
  }

  TEST_CASE("temporal split rejects short histories") {
    auto h = user_history("u", 2);
    CHECK_THROWS_AS(temporal_split(h), DataError);
  }

  TEST_CASE("temporal split breaks timestamp ties by item index") {
    std::vector<Interaction> h;
    for (int k = 0; k < 10; ++k) h.push_back({"u", "i" + std::to_string(k), 7, std::nullopt});
    const auto s = temporal_split(h);
    CHECK(s.train.n_edges() == 7);
    for (int i : s.test.user_items(0)) CHECK(i >= 8);
  }

  TEST_CASE("split invariants on random corpora") {
    for (std::uint64_t seed = 0; seed < 30; ++seed) {
      const auto s = temporal_split(synthetic::random_corpus(20, 30, 3, 15, seed));
      const int nu = s.train.n_users();
      for (int u = 0; u < nu; ++u) {
        const auto tr = s.train.user_timestamps(u);
        const auto va = s.valid.user_timestamps(u);
        const auto te = s.test.user_timestamps(u);
        REQUIRE(!tr.empty());
        REQUIRE(!va.empty());
        REQUIRE(!te.empty());
        CHECK(*std::max_element(tr.begin(), tr.end()) <= *std::min_element(va.begin(), va.end()));
        CHECK(*std::max_element(va.begin(), va.end()) <= *std::min_element(te.begin(), te.end()));
        for (int i : s.valid.user_items(u)) CHECK_FALSE(s.train.has_edge(u, i));
        for (int i : s.test.user_items(u)) {
          CHECK_FALSE(s.train.has_edge(u, i));
          CHECK_FALSE(s.valid.has_edge(u, i));
        }
      }
    }
  }

  TEST_CASE("adjacency layout and symmetry") {
    InteractionGraph one(2, 3, {{0, 0, 1}});
    const auto a = build_adjacency(one);
    CHECK(a.nonZeros() == 2);
    CHECK(a.coeff(0, 2) == 1.0);
    CHECK(a.coeff(2, 0) == 1.0);
    CHECK(build_adjacency(InteractionGraph(3, 3, {})).nonZeros() == 0);

    const auto g = synthetic::random_graph(5, 5, 12, 4);
    const Eigen::MatrixXd d = Eigen::MatrixXd(build_adjacency(g));
    CHECK((d - d.transpose()).norm() == 0.0);
    CHECK(d.topLeftCorner(5, 5).norm() == 0.0);
    CHECK(d.bottomRightCorner(5, 5).norm() == 0.0);
    // Degrees equal row sums of R.
    for (int u = 0; u < 5; ++u) CHECK(d.row(u).sum() == g.user_degree(u));
  }

  TEST_CASE("graph rejects duplicates and out-of-range edges") {
    CHECK_THROWS_AS(InteractionGraph(2, 2, {{0, 0, 1}, {0, 0, 2}}), DataError);
    CHECK_THROWS_AS(InteractionGraph(2, 2, {{0, 5, 1}}), DataError);
  }

  TEST_CASE("age partition binarizes at the threshold") {
    IdMap ids;
    AttributeTable attrs;
    for (auto [key, age] : {std::pair{"a", 25.0}, {"b", 33.0}, {"c", 34.0}}) {
      ids.add_user(key);
      attrs[key].age = age;
    }
    ids.add_user("d");  // no attribute record
    const auto p = partition_users(attrs, ids, "age");
    CHECK(p.group1 == std::vector<int>{0, 1});
    CHECK(p.group2 == std::vector<int>{2});
    CHECK_FALSE(p.advantaged.has_value());
  }

  TEST_CASE("single-valued gender is degenerate") {
    IdMap ids;
    AttributeTable attrs;
    for (auto key : {"a", "b"}) {
      ids.add_user(key);
      attrs[key].gender = "M";
    }
    CHECK_THROWS_AS(partition_users(attrs, ids, "gender"), DataError);
  }

  TEST_CASE("advantage labeling and its tie rule") {
    GroupPartition p;
    p.group1 = {0, 1};
    p.group2 = {2, 3};
    std::vector<double> a{0.3, 0.3, 0.1, 0.1};
    CHECK(*label_advantage(p, a).advantaged == 1);
    std::vector<double> b{0.1, 0.1, 0.3, 0.3};
    CHECK(*label_advantage(p, b).advantaged == 2);
    std::vector<double> tie{0.2, 0.2, 0.2, 0.2};
    CHECK(*label_advantage(p, tie).advantaged == 1);
  }

  TEST_CASE("id maps round-trip") {
    const auto s = temporal_split(synthetic::random_corpus(10, 12, 3, 6, 2));
    const auto& ids = *s.train.ids();
    for (int u = 0; u < ids.n_users(); ++u) CHECK(*ids.user_index(ids.user_key(u)) == u);
    for (int i = 0; i < ids.n_items(); ++i) CHECK(*ids.item_index(ids.item_key(i)) == i);
  }

  TEST_CASE("split export is bit-exact on re-import") {
    const auto s = temporal_split(synthetic::random_corpus(15, 20, 3, 9, 5));
    const auto dir = testutil::temp_dir("split");
    export_split(s, dir.string());
    const auto back = import_split(dir.string());
    CHECK(back.train.edges() == s.train.edges());
    CHECK(back.valid.edges() == s.valid.edges());
    CHECK(back.test.edges() == s.test.edges());
    CHECK(back.train.ids()->user_key(3) == s.train.ids()->user_key(3));
  }

  TEST_CASE("with_added_edges contract") {
    InteractionGraph g(2, 2, {{0, 0, 5}});
    std::vector<UserItem> add{{1, 1}};
    const auto h = with_added_edges(g, add, 9);
    CHECK(h.n_edges() == 2);
    CHECK(h.user_degree(1) == 1);
    CHECK(h.item_degree(1) == 1);
    std::vector<UserItem> dup{{0, 0}};
    CHECK_THROWS_AS(with_added_edges(g, dup, 9), ContractError);
  }
}
