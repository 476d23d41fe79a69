#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "fairaug/data.hpp"

namespace fairaug {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Per-user relevant items (sorted) taken from one split.
using Judgements = std::vector<std::vector<int>>;

Judgements judgements_from(const InteractionGraph& split);

// Per-user NDCG@k. Users without relevant items hold NaN and are excluded from
// every aggregate.
struct UtilityVector {
  int k = 10;
  std::vector<double> values;

  bool evaluated(int u) const;
  int n_evaluated() const;
  // Mean over evaluated users (0 when none).
  double mean() const;
  double mean_over(std::span<const int> users) const;
  int count_over(std::span<const int> users) const;
  std::vector<int> excluded_users() const;
};

UtilityVector ndcg_at_k(const std::vector<std::vector<int>>& topk_lists, const Judgements& judgements,
                        int k);

struct GroupGap {
  double group1 = 0.0;
  double group2 = 0.0;
  int n_group1 = 0;
  int n_group2 = 0;
  double delta = 0.0;
};

// |mean(group1) - mean(group2)|; throws DataError when a group has no
// evaluated user.
GroupGap delta_ndcg(const UtilityVector& utilities, const GroupPartition& partition);

// Smooth NDCG@k of one user's scored pool. `relevant` indexes into `scores`.
// Writes d(value)/d(scores) into `grad` when nonempty (same length as scores).
double smooth_ndcg(std::span<const double> scores, std::span<const int> relevant, int k, double tau,
                   std::span<double> grad = {});

struct ApproxNdcg {
  double mean = 0.0;
  std::vector<double> per_user;  // NaN for users without relevant items
  RowMatrix gradient;            // d(mean)/d(scores); empty unless requested
};

// Mean smooth NDCG@k over users with relevant items. The scored pool of user u
// is every item except u's training items (when `train_mask` is given).
ApproxNdcg approx_ndcg(const RowMatrix& scores, const Judgements& judgements, int k, double tau,
                       const InteractionGraph* train_mask = nullptr, bool with_gradient = false);

struct WilcoxonResult {
  double statistic = 0.0;  // W+ (sum of positive ranks)
  double p_value = 1.0;    // two-sided
  int n = 0;               // nonzero differences
  bool exact = false;
};

// Paired two-sided signed-rank test. Exact distribution for n <= 25 nonzero
// differences, normal approximation with tie correction otherwise.
WilcoxonResult wilcoxon_signed_rank(std::span<const double> a, std::span<const double> b);

double jaccard(const std::set<int>& a, const std::set<int>& b);

// Metric report record serialized as
// {metric, k, value, group_values, p_value, n_users}.
struct MetricRecord {
  std::string metric;
  int k = 10;
  double value = 0.0;
  std::vector<double> group_values;
  std::optional<double> p_value;
  int n_users = 0;

  std::string to_json() const;
};

// Percentage with two decimals, e.g. 0.1251 -> "12.51".
std::string format_percent(double value);

}  // namespace fairaug
