#include "fairaug/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

#include <fmt/format.h>
#include <json.hpp>

#include "fairaug/errors.hpp"
#include "fairaug/numeric.hpp"

namespace fairaug {

namespace {

double discount(int position) { return 1.0 / std::log2(static_cast<double>(position) + 1.0); }

double ideal_dcg(std::size_t n_relevant, int k) {
  double idcg = 0.0;
  const int top = std::min<int>(k, static_cast<int>(n_relevant));
  for (int p = 1; p <= top; ++p) idcg += discount(p);
  return idcg;
}

}  // namespace

Judgements judgements_from(const InteractionGraph& split) {
  Judgements j(static_cast<std::size_t>(split.n_users()));
  for (int u = 0; u < split.n_users(); ++u) {
    const auto items = split.user_items(u);
    j[u].assign(items.begin(), items.end());
  }
  return j;
}

bool UtilityVector::evaluated(int u) const { return !std::isnan(values[u]); }

int UtilityVector::n_evaluated() const {
  return static_cast<int>(std::count_if(values.begin(), values.end(),
                                        [](double v) { return !std::isnan(v); }));
}

double UtilityVector::mean() const {
  double sum = 0.0;
  int n = 0;
  for (double v : values) {
    if (std::isnan(v)) continue;
    sum += v;
    ++n;
  }
  return n > 0 ? sum / n : 0.0;
}

double UtilityVector::mean_over(std::span<const int> users) const {
  double sum = 0.0;
  int n = 0;
  for (int u : users) {
    if (!evaluated(u)) continue;
    sum += values[u];
    ++n;
  }
  return n > 0 ? sum / n : 0.0;
}

int UtilityVector::count_over(std::span<const int> users) const {
  return static_cast<int>(std::count_if(users.begin(), users.end(), [&](int u) { return evaluated(u); }));
}

std::vector<int> UtilityVector::excluded_users() const {
  std::vector<int> out;
  for (int u = 0; u < static_cast<int>(values.size()); ++u) {
    if (!evaluated(u)) out.push_back(u);
  }
  return out;
}

UtilityVector ndcg_at_k(const std::vector<std::vector<int>>& topk_lists, const Judgements& judgements,
                        int k) {
  if (k < 1) throw std::invalid_argument("k must be >= 1");
  if (topk_lists.size() != judgements.size()) {
    throw std::invalid_argument("ranking lists and judgements disagree on user count");
  }
  UtilityVector out;
  out.k = k;
  out.values.assign(judgements.size(), std::numeric_limits<double>::quiet_NaN());
  for (std::size_t u = 0; u < judgements.size(); ++u) {
    const auto& rel = judgements[u];
    if (rel.empty()) continue;
    const auto& list = topk_lists[u];
    double dcg = 0.0;
    const int depth = std::min<int>(k, static_cast<int>(list.size()));
    for (int pos = 0; pos < depth; ++pos) {
      if (std::binary_search(rel.begin(), rel.end(), list[pos])) dcg += discount(pos + 1);
    }
    out.values[u] = dcg / ideal_dcg(rel.size(), k);
  }
  return out;
}

GroupGap delta_ndcg(const UtilityVector& utilities, const GroupPartition& partition) {
  GroupGap gap;
  gap.n_group1 = utilities.count_over(partition.group1);
  gap.n_group2 = utilities.count_over(partition.group2);
  if (gap.n_group1 == 0 || gap.n_group2 == 0) {
    throw DataError("delta_ndcg: a demographic group has no evaluated users");
  }
  gap.group1 = utilities.mean_over(partition.group1);
  gap.group2 = utilities.mean_over(partition.group2);
  gap.delta = std::abs(gap.group1 - gap.group2);
  return gap;
}

double smooth_ndcg(std::span<const double> scores, std::span<const int> relevant, int k, double tau,
                   std::span<double> grad) {
  if (!(tau > 0.0)) throw std::invalid_argument("temperature tau must be > 0");
  if (relevant.empty()) return 0.0;
  const std::size_t m = scores.size();
  const double idcg = ideal_dcg(relevant.size(), k);
  const bool want_grad = !grad.empty();
  if (want_grad) std::fill(grad.begin(), grad.end(), 0.0);
  std::vector<double> slope(want_grad ? m : 0);
  double value = 0.0;
  for (int i : relevant) {
    const double si = scores[i];
    double rank = 1.0;
    for (std::size_t j = 0; j < m; ++j) {
      if (static_cast<int>(j) == i) continue;
      const double x = (scores[j] - si) / tau;
      const double s = sigmoid(x);
      rank += s;
      if (want_grad) slope[j] = s * (1.0 - s) / tau;
    }
    // Half-rank offset puts the gate transition between ranks k and k+1.
    const double gate = sigmoid((k + 0.5 - rank) / tau);
    const double ln_r = std::log(rank + 1.0);
    const double gain = std::numbers::ln2 / ln_r;
    value += gate * gain;
    if (want_grad) {
      const double d_gate = -gate * (1.0 - gate) / tau;
      const double d_gain = -std::numbers::ln2 / ((rank + 1.0) * ln_r * ln_r);
      const double d_rank = (d_gate * gain + gate * d_gain) / idcg;
      double self = 0.0;
      for (std::size_t j = 0; j < m; ++j) {
        if (static_cast<int>(j) == i) continue;
        grad[j] += d_rank * slope[j];
        self += slope[j];
      }
      grad[i] -= d_rank * self;
    }
  }
  return value / idcg;
}

ApproxNdcg approx_ndcg(const RowMatrix& scores, const Judgements& judgements, int k, double tau,
                       const InteractionGraph* train_mask, bool with_gradient) {
  if (!(tau > 0.0)) throw std::invalid_argument("temperature tau must be > 0");
  const int n_users = static_cast<int>(scores.rows());
  const int n_items = static_cast<int>(scores.cols());
  ApproxNdcg out;
  out.per_user.assign(static_cast<std::size_t>(n_users), std::numeric_limits<double>::quiet_NaN());
  if (with_gradient) out.gradient = RowMatrix::Zero(n_users, n_items);
  std::vector<int> pool;
  std::vector<double> pool_scores;
  std::vector<double> pool_grad;
  std::vector<int> rel_pos;
  int n_eval = 0;
  double total = 0.0;
  for (int u = 0; u < n_users; ++u) {
    const auto& rel = judgements[u];
    if (rel.empty()) continue;
    pool.clear();
    const auto masked = train_mask ? train_mask->user_items(u) : std::span<const int>{};
    std::size_t mk = 0;
    for (int i = 0; i < n_items; ++i) {
      while (mk < masked.size() && masked[mk] < i) ++mk;
      if (mk < masked.size() && masked[mk] == i) continue;
      pool.push_back(i);
    }
    pool_scores.resize(pool.size());
    for (std::size_t p = 0; p < pool.size(); ++p) pool_scores[p] = scores(u, pool[p]);
    rel_pos.clear();
    for (int i : rel) {
      const auto it = std::lower_bound(pool.begin(), pool.end(), i);
      if (it != pool.end() && *it == i) rel_pos.push_back(static_cast<int>(it - pool.begin()));
    }
    pool_grad.assign(with_gradient ? pool.size() : 0, 0.0);
    const double v = smooth_ndcg(pool_scores, rel_pos, k, tau, pool_grad);
    out.per_user[u] = v;
    total += v;
    ++n_eval;
    if (with_gradient) {
      for (std::size_t p = 0; p < pool.size(); ++p) out.gradient(u, pool[p]) = pool_grad[p];
    }
  }
  out.mean = n_eval > 0 ? total / n_eval : 0.0;
  if (with_gradient && n_eval > 0) out.gradient /= static_cast<double>(n_eval);
  return out;
}

namespace {

// Midranks of |d| (1-based), returned doubled so they are integral.
std::vector<int> doubled_midranks(const std::vector<double>& absd) {
  const std::size_t n = absd.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return absd[a] < absd[b]; });
  std::vector<int> ranks(n);
  std::size_t start = 0;
  while (start < n) {
    std::size_t end = start;
    while (end + 1 < n && absd[order[end + 1]] == absd[order[start]]) ++end;
    // Positions start..end share rank (start+1 + end+1)/2; doubled:
    const int doubled = static_cast<int>(start + end + 2);
    for (std::size_t p = start; p <= end; ++p) ranks[order[p]] = doubled;
    start = end + 1;
  }
  return ranks;
}

}  // namespace

WilcoxonResult wilcoxon_signed_rank(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw std::invalid_argument("wilcoxon: paired samples differ in length");
  std::vector<double> diffs;
  for (std::size_t k = 0; k < a.size(); ++k) {
    const double d = a[k] - b[k];
    if (d != 0.0) diffs.push_back(d);
  }
  if (diffs.empty()) throw DataError("wilcoxon: degenerate sample (all differences are zero)");
  const int n = static_cast<int>(diffs.size());
  std::vector<double> absd(diffs.size());
  std::transform(diffs.begin(), diffs.end(), absd.begin(), [](double d) { return std::abs(d); });
  const auto ranks = doubled_midranks(absd);
  int w_plus2 = 0;
  for (int k = 0; k < n; ++k) {
    if (diffs[k] > 0) w_plus2 += ranks[k];
  }
  WilcoxonResult res;
  res.n = n;
  res.statistic = w_plus2 / 2.0;
  if (n <= 25) {
    res.exact = true;
    const int total2 = std::accumulate(ranks.begin(), ranks.end(), 0);
    // counts[s] = number of sign assignments with doubled W+ == s.
    std::vector<double> counts(static_cast<std::size_t>(total2) + 1, 0.0);
    counts[0] = 1.0;
    int reach = 0;
    for (int r : ranks) {
      for (int s = reach; s >= 0; --s) {
        if (counts[s] != 0.0) counts[s + r] += counts[s];
      }
      reach += r;
    }
    const double all = std::ldexp(1.0, n);
    double lower = 0.0;
    double upper = 0.0;
    for (int s = 0; s <= total2; ++s) {
      if (s <= w_plus2) lower += counts[s];
      if (s >= w_plus2) upper += counts[s];
    }
    res.p_value = std::min(1.0, 2.0 * std::min(lower, upper) / all);
  } else {
    const double nn = n;
    const double mean = nn * (nn + 1.0) / 4.0;
    double var = nn * (nn + 1.0) * (2.0 * nn + 1.0) / 24.0;
    std::vector<int> sorted = ranks;
    std::sort(sorted.begin(), sorted.end());
    for (std::size_t s = 0; s < sorted.size();) {
      std::size_t e = s;
      while (e < sorted.size() && sorted[e] == sorted[s]) ++e;
      const double t = static_cast<double>(e - s);
      var -= (t * t * t - t) / 48.0;
      s = e;
    }
    if (var <= 0.0) throw DataError("wilcoxon: zero variance");
    const double z = (res.statistic - mean) / std::sqrt(var);
    res.p_value = std::erfc(std::abs(z) / std::sqrt(2.0));
  }
  return res;
}

double jaccard(const std::set<int>& a, const std::set<int>& b) {
  if (a.empty() && b.empty()) return 1.0;
  std::size_t inter = 0;
  for (int x : a) inter += b.count(x);
  const std::size_t uni = a.size() + b.size() - inter;
  return static_cast<double>(inter) / static_cast<double>(uni);
}

std::string MetricRecord::to_json() const {
  auto num = [](double v) { return std::isfinite(v) ? nlohmann::ordered_json(v) : nlohmann::ordered_json(nullptr); };
  nlohmann::ordered_json j;
  j["metric"] = metric;
  j["k"] = k;
  j["value"] = num(value);
  j["group_values"] = nlohmann::ordered_json::array();
  for (double g : group_values) j["group_values"].push_back(num(g));
  j["p_value"] = p_value ? num(*p_value) : nlohmann::ordered_json(nullptr);
  j["n_users"] = n_users;
  return j.dump();
}

std::string format_percent(double value) { return fmt::format("{:.2f}", value * 100.0); }

}  // namespace fairaug
