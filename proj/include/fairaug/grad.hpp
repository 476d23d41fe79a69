#pragma once

#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fairaug/data.hpp"
#include "fairaug/metrics.hpp"
#include "fairaug/models.hpp"

namespace fairaug {

// Recorded computation as a list of coarse nodes. Forward closures return
// false when they produced a non-finite value.
class DifferentiableTrace {
 public:
  void record(std::string name, std::function<bool()> forward, std::function<void()> backward);

  // Runs every node in order. Throws NumericError naming the first node with
  // a non-finite output.
  void forward();
  // Reverse topological sweep; each node's backward runs exactly once.
  void backward();

  std::size_t size() const { return nodes_.size(); }
  std::vector<std::string> node_names() const;
  // Backward invocations per node during the last sweep.
  const std::vector<int>& backward_counts() const { return backward_counts_; }

 private:
  struct Node {
    std::string name;
    std::function<bool()> forward;
    std::function<void()> backward;
  };
  std::vector<Node> nodes_;
  std::vector<int> backward_counts_;
};

enum class SvdGradient { kFiniteDifference, kAnalytic };

std::string to_string(SvdGradient s);
SvdGradient parse_svd_gradient(const std::string& name);

struct LossOptions {
  double beta = 0.5;
  double tau = 0.1;
  int k = 10;
  SvdGradient svd_strategy = SvdGradient::kFiniteDifference;
  double fd_step = 1e-4;
};

struct LossEvaluation {
  double l_fair = 0.0;
  double l_dist = 0.0;
  double loss = 0.0;
  // Smooth NDCG means of the two groups.
  double group1 = 0.0;
  double group2 = 0.0;
  std::vector<double> gradient;  // d(loss)/dp, empty unless requested
  std::vector<std::string> warnings;
};

// loss(p) = (smooth NDCG gap between groups)^2 + beta * 1/2 * sigmoid(sum w^2)
// with w = sigmoid(p), evaluated through the frozen model on the train graph
// extended by the candidates at weights w. Smooth NDCG uses validation
// relevance over each user's non-training items.
class AugmentationObjective {
 public:
  // Throws ContractError for non-augmentable models and DataError when a
  // group has no user with validation items.
  AugmentationObjective(const TrainedModel& model, const InteractionGraph& train,
                        std::vector<UserItem> candidates, const GroupPartition& partition,
                        const Judgements& validation, LossOptions options = {});
  ~AugmentationObjective();
  AugmentationObjective(const AugmentationObjective&) = delete;
  AugmentationObjective& operator=(const AugmentationObjective&) = delete;

  LossEvaluation evaluate(std::span<const double> p, bool with_gradient = true);

  std::size_t n_candidates() const;
  const std::vector<UserItem>& candidates() const;
  // The recorded trace of the LightGCN path (null for spectral models).
  const DifferentiableTrace* trace() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

LossEvaluation loss_and_gradient(const TrainedModel& model, const InteractionGraph& train,
                                 std::span<const UserItem> candidates, std::span<const double> p,
                                 const GroupPartition& partition, const Judgements& validation,
                                 const LossOptions& options = {});

// Gradient of the SVD-GCN loss over p with the configured strategy. The
// analytic strategy falls back to finite differences (with a warning) when
// singular values coincide within 1e-8.
LossEvaluation svd_path_gradient(const TrainedModel& model, const InteractionGraph& train,
                                 std::span<const UserItem> candidates, std::span<const double> p,
                                 const GroupPartition& partition, const Judgements& validation,
                                 const LossOptions& options = {});

// d(loss)/d(feedback entry) for every entry of the dense relaxed feedback of
// a parametric SVD-GCN; used to cross-check perturbation identities.
Eigen::MatrixXd svd_feedback_adjoint(const TrainedModel& model, const Eigen::MatrixXd& feedback,
                                     const Eigen::MatrixXd& score_adjoint, bool* degenerate = nullptr);

// Value at p; fills `gradient` when non-null.
using GradientFunction = std::function<double(std::span<const double> p, std::vector<double>* gradient)>;

struct GradientCheck {
  double max_relative_error = 0.0;
  int coordinate = -1;
  double analytic = 0.0;
  double numeric = 0.0;
};

// Central differences per coordinate against the analytic gradient. The
// relative error is |a - n| / max(|a|, |n|, floor).
GradientCheck check_gradient(const GradientFunction& fn, std::span<const double> p, double h = 1e-4,
                             double floor = 1e-12);

}  // namespace fairaug
