#include <doctest.h>

#include <cmath>
#include <algorithm>
#include <limits>
#include <numeric>
#include <random>

#include <json.hpp>

#include "fairaug/errors.hpp"
#include "fairaug/metrics.hpp"

using namespace fairaug;

namespace {

double brute_ndcg(const std::vector<int>& list, const std::vector<int>& rel, int k) {
  double dcg = 0.0;
  for (int p = 0; p < static_cast<int>(list.size()) && p < k; ++p) {
    if (std::find(rel.begin(), rel.end(), list[p]) != rel.end()) dcg += 1.0 / std::log2(p + 2.0);
  }
  double idcg = 0.0;
  for (int p = 0; p < std::min<int>(k, static_cast<int>(rel.size())); ++p) idcg += 1.0 / std::log2(p + 2.0);
  return dcg / idcg;
}

}  // namespace

TEST_SUITE("metrics") {
  TEST_CASE("hand-computed NDCG example") {
    const auto u = ndcg_at_k({{7, 8, 9}}, {{7, 9}}, 3);
    CHECK(u.values[0] == doctest::Approx(1.5 / (1.0 + 1.0 / std::log2(3.0))).epsilon(1e-12));
    CHECK(u.values[0] == doctest::Approx(0.9197).epsilon(1e-4));
  }

  TEST_CASE("perfect and empty rankings") {
    CHECK(ndcg_at_k({{1, 2, 3}}, {{1, 2, 3, 4}}, 3).values[0] == doctest::Approx(1.0));
    CHECK(ndcg_at_k({{5, 6, 7}}, {{1}}, 3).values[0] == 0.0);
  }

  TEST_CASE("users without relevant items are excluded") {
    const auto u = ndcg_at_k({{1}, {2}}, {{1}, {}}, 1);
    CHECK(u.evaluated(0));
    CHECK_FALSE(u.evaluated(1));
    CHECK(u.n_evaluated() == 1);
    CHECK(u.mean() == 1.0);
    CHECK(u.excluded_users() == std::vector<int>{1});
  }

  TEST_CASE("random instances match the brute-force oracle and stay in [0,1]") {
    std::mt19937_64 rng(11);
    for (int t = 0; t < 300; ++t) {
      const int n = 5 + static_cast<int>(rng() % 20);
      const int k = 1 + static_cast<int>(rng() % 10);
      std::vector<int> items(n);
      std::iota(items.begin(), items.end(), 0);
      std::shuffle(items.begin(), items.end(), rng);
      std::vector<int> list(items.begin(), items.begin() + std::min(k, n));
      std::vector<int> rel;
      for (int i = 0; i < n; ++i) {
        if (rng() % 3 == 0) rel.push_back(i);
      }
      if (rel.empty()) rel.push_back(0);
      const auto u = ndcg_at_k({list}, {rel}, k);
      CHECK(std::abs(u.values[0] - brute_ndcg(list, rel, k)) <= 1e-12);
      CHECK(u.values[0] >= 0.0);
      CHECK(u.values[0] <= 1.0 + 1e-15);
    }
  }

  TEST_CASE("delta is an absolute gap and symmetric in group labels") {
    UtilityVector u;
    u.values = {0.3, 0.3, 0.1, 0.1, std::numeric_limits<double>::quiet_NaN()};
    GroupPartition p;
    p.group1 = {0, 1};
    p.group2 = {2, 3, 4};
    CHECK(delta_ndcg(u, p).delta == doctest::Approx(0.2));
    std::swap(p.group1, p.group2);
    CHECK(delta_ndcg(u, p).delta == doctest::Approx(0.2));
    p.group1 = {4};
    CHECK_THROWS_AS(delta_ndcg(u, p), DataError);
  }

  TEST_CASE("percent formatting") {
    CHECK(format_percent(0.1251) == "12.51");
    CHECK(format_percent(0.0178) == "1.78");
  }

  TEST_CASE("smooth NDCG saturates for a dominant relevant item") {
    std::vector<double> s{10.0, 0.0, 0.1, -0.2, 0.05};
    std::vector<int> rel{0};
    const double v = smooth_ndcg(s, rel, 3, 0.01);
    CHECK(v >= 0.999);
    CHECK(v <= 1.0);
    CHECK_THROWS(smooth_ndcg(s, rel, 3, 0.0));
  }

  TEST_CASE("equal scores give identical smooth ranks") {
    std::vector<double> s(6, 0.4);
    // Each item is relevant on its own; equal values imply equal ranks.
    std::vector<double> values;
    for (int i = 0; i < 6; ++i) {
      std::vector<int> rel{i};
      values.push_back(smooth_ndcg(s, rel, 10, 0.1));
    }
    for (double v : values) CHECK(v == doctest::Approx(values[0]).epsilon(1e-15));
    // r = 1 + 5 * 0.5 = 3.5, well inside the gate at k = 10.
    CHECK(values[0] == doctest::Approx(1.0 / std::log2(4.5)).epsilon(1e-6));
  }

  TEST_CASE("smooth NDCG approaches the exact metric as tau shrinks") {
    std::mt19937_64 rng(5);
    std::normal_distribution<double> gauss;
    for (int t = 0; t < 50; ++t) {
      std::vector<double> s(10);
      for (auto& x : s) x = gauss(rng);
      std::vector<int> rel{static_cast<int>(rng() % 10), static_cast<int>((rng() % 9 + 1 + t) % 10)};
      std::sort(rel.begin(), rel.end());
      rel.erase(std::unique(rel.begin(), rel.end()), rel.end());
      std::vector<int> order(10);
      std::iota(order.begin(), order.end(), 0);
      std::sort(order.begin(), order.end(), [&](int a, int b) { return s[a] > s[b]; });
      const int k = 5;
      std::vector<int> top(order.begin(), order.begin() + k);
      const double exact = ndcg_at_k({top}, {rel}, k).values[0];
      // Minimum score gap bounds how small tau must be.
      double gap = 1e9;
      for (int a = 0; a < 10; ++a) {
        for (int b = a + 1; b < 10; ++b) gap = std::min(gap, std::abs(s[a] - s[b]));
      }
      const double tau = std::min(1e-3, gap / 40.0);
      CHECK(std::abs(smooth_ndcg(s, rel, k, tau) - exact) <= 1e-3);
    }
  }

  TEST_CASE("smooth NDCG gradient matches central differences") {
    std::mt19937_64 rng(8);
    std::normal_distribution<double> gauss;
    for (int t = 0; t < 20; ++t) {
      const int m = 5 + static_cast<int>(rng() % 16);
      std::vector<double> s(m);
      for (auto& x : s) x = gauss(rng) * 0.3;
      std::vector<int> rel{0, m / 2};
      const double tau = 0.05 + 0.1 * (t % 3);
      std::vector<double> g(m);
      smooth_ndcg(s, rel, 5, tau, g);
      for (int j = 0; j < m; ++j) {
        const double h = 1e-6;
        auto sp = s, sm = s;
        sp[j] += h;
        sm[j] -= h;
        const double num = (smooth_ndcg(sp, rel, 5, tau) - smooth_ndcg(sm, rel, 5, tau)) / (2 * h);
        // Central differences at h = 1e-6 carry roughly 1e-10 of rounding noise.
        CHECK(std::abs(num - g[j]) <= 1e-4 * std::max(std::abs(num), std::abs(g[j])) + 1e-8);
      }
    }
  }

  TEST_CASE("approx_ndcg masks training items and averages evaluated users") {
    RowMatrix scores(2, 4);
    scores << 5, 4, 3, 2, 1, 2, 3, 4;
    InteractionGraph train(2, 4, {{0, 0, 1}});
    Judgements j{{1}, {}};
    const auto a = approx_ndcg(scores, j, 2, 0.01, &train, true);
    // With item 0 masked, item 1 is ranked first.
    CHECK(a.mean == doctest::Approx(1.0).epsilon(1e-6));
    CHECK(std::isnan(a.per_user[1]));
    CHECK(a.gradient(0, 0) == 0.0);
    CHECK(a.gradient.row(1).norm() == 0.0);
  }

  TEST_CASE("Wilcoxon exact example and degenerate input") {
    std::vector<double> a{1, 2, 3, 4, 5, 6}, b(6, 0.0);
    const auto r = wilcoxon_signed_rank(a, b);
    CHECK(r.statistic == 21.0);
    CHECK(r.exact);
    CHECK(r.p_value == doctest::Approx(0.03125).epsilon(1e-12));
    CHECK_THROWS_AS(wilcoxon_signed_rank(a, a), DataError);
  }

  TEST_CASE("Wilcoxon detects a large shift at n = 100") {
    std::mt19937_64 rng(2);
    std::normal_distribution<double> gauss;
    std::vector<double> a(100), b(100), c(100);
    for (int n = 0; n < 100; ++n) {
      a[n] = gauss(rng);
      b[n] = a[n] + 1.0 + 0.1 * gauss(rng);
      c[n] = a[n] + 0.5 * gauss(rng);
    }
    const auto shifted = wilcoxon_signed_rank(b, a);
    CHECK_FALSE(shifted.exact);
    CHECK(shifted.p_value < 0.05);
    CHECK(wilcoxon_signed_rank(c, a).p_value > 1e-3);
  }

  TEST_CASE("Jaccard") {
    CHECK(jaccard({1, 2, 3}, {2, 3, 4}) == 0.5);
    CHECK(jaccard({1}, {2}) == 0.0);
    CHECK(jaccard({4, 5}, {4, 5}) == 1.0);
    CHECK(jaccard({}, {}) == 1.0);
  }

  TEST_CASE("metric record JSON keys") {
    MetricRecord m;
    m.metric = "ndcg";
    m.value = 0.25;
    m.group_values = {0.3, 0.2};
    m.n_users = 4;
    const auto j = nlohmann::json::parse(m.to_json());
    for (auto key : {"metric", "k", "value", "group_values", "p_value", "n_users"}) CHECK(j.contains(key));
    CHECK(j["p_value"].is_null());
  }
}
