#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "fairaug/data.hpp"
#include "fairaug/metrics.hpp"

namespace fairaug {

enum class ModelKind { kLightGcn, kSvdGcn, kSvdGcnS, kMfBpr };

std::string to_string(ModelKind kind);
// Accepts lightgcn, svdgcn, svdgcn_s, mf_bpr; throws ConfigError otherwise.
ModelKind parse_model_kind(const std::string& name);
// True iff inference consumes the graph (lightgcn, svdgcn).
bool is_augmentable(ModelKind kind);

struct ModelConfig {
  ModelKind kind = ModelKind::kLightGcn;
  int embedding_size = 64;
  int layers = 3;
  int negatives_per_positive = 10;
  int train_epochs = 100;
  int batch_size = 2048;
  double learning_rate = 1e-3;
  double l2_reg = 1e-4;
  double init_std = 0.1;
  std::uint64_t seed = 0;
  int svd_rank = 16;
  double svd_alpha = 1.0;
  double zeta_gamma = 1.0;
  int eval_k = 10;

  // Throws ConfigError when a count is not positive.
  void validate() const;
};

struct EmbeddingTable {
  RowMatrix users;  // |U| x d
  RowMatrix items;  // |I| x d
};

struct TrainedModel {
  ModelConfig config;
  EmbeddingTable embeddings;
  RowMatrix weight;  // svdgcn only: svd_rank x embedding_size
  int best_epoch = 0;
  std::vector<double> validation_curve;  // mean validation NDCG per epoch
  std::vector<double> loss_curve;

  bool augmentable() const { return is_augmentable(config.kind); }
};

// Symmetric weighted adjacency over users (0..|U|) and items (|U|..|U|+|I|)
// with each node's neighbors sorted by index. Base edges weigh 1; candidate
// edges carry adjustable weights. Zero-degree nodes get a zero normalization.
class WeightedAdjacency {
 public:
  explicit WeightedAdjacency(const InteractionGraph& base, std::span<const UserItem> candidates = {});

  void set_candidate_weights(std::span<const double> weights);

  int n_users() const { return n_users_; }
  int n_nodes() const { return static_cast<int>(ptr_.size()) - 1; }
  std::size_t n_candidates() const { return n_candidates_; }

  // y = D^-1/2 A D^-1/2 x
  RowMatrix propagate(const RowMatrix& x) const;

  const std::vector<int>& ptr() const { return ptr_; }
  const std::vector<int>& col() const { return col_; }
  // -1 for base edges, candidate index otherwise.
  const std::vector<int>& source() const { return source_; }
  const std::vector<double>& weight() const { return weight_; }
  const std::vector<double>& degree() const { return degree_; }
  // d^-1/2, or 0 for isolated nodes.
  const std::vector<double>& inv_sqrt_degree() const { return inv_sqrt_; }
  const std::vector<double>& normalized() const { return norm_; }

 private:
  void refresh();

  int n_users_ = 0;
  std::size_t n_candidates_ = 0;
  std::vector<int> ptr_;
  std::vector<int> col_;
  std::vector<int> source_;
  std::vector<double> weight_;
  std::vector<double> degree_;
  std::vector<double> inv_sqrt_;
  std::vector<double> norm_;
};

// Base graph plus candidate edges at continuous weights. The base graph must
// outlive this view.
struct RelaxedGraph {
  const InteractionGraph* base = nullptr;
  std::vector<UserItem> candidates;
  std::vector<double> weights;
};

// Mean of layer embeddings e^(0..L) stacked as users then items.
RowMatrix lightgcn_embeddings(const EmbeddingTable& table, const WeightedAdjacency& adjacency,
                              int layers);

RowMatrix lightgcn_forward(const TrainedModel& model, const InteractionGraph& graph);
RowMatrix lightgcn_forward(const TrainedModel& model, const RelaxedGraph& graph);

struct TruncatedSvd {
  RowMatrix left;          // m x k
  Eigen::VectorXd values;  // descending
  RowMatrix right;         // n x k
  // Gap between s_k and s_{k+1} below 1e-8.
  bool boundary_degenerate = false;
};

// Top-k singular triplets. Full decomposition up to 512x512, orthogonal
// iteration beyond. Singular vectors are sign-normalized so each left vector
// has a nonnegative sum.
TruncatedSvd truncated_svd(const Eigen::MatrixXd& m, int k, double tol = 1e-10);

// Dense feedback with `edges` set to 1, or to `weights` when given.
// Throws ContractError when an edge already exists in `train`.
Eigen::MatrixXd svdgcn_augment_feedback(const InteractionGraph& train, std::span<const UserItem> edges,
                                        std::span<const double> weights = {});

// (D_U + alpha I)^-1/2 R (D_I + alpha I)^-1/2 with degrees taken from R.
Eigen::MatrixXd renormalize_feedback(const Eigen::MatrixXd& feedback, double alpha);

// Spectral embeddings from feedback: users then items, and the factors used.
struct SpectralForward {
  RowMatrix users;
  RowMatrix items;
  TruncatedSvd svd;
};
SpectralForward spectral_embeddings(const TrainedModel& model, const Eigen::MatrixXd& feedback);

// Scores of the parametric SVD-GCN over the given (possibly augmented)
// feedback. Appends a warning when the truncation boundary is degenerate.
RowMatrix svdgcn_forward(const TrainedModel& model, const Eigen::MatrixXd& feedback,
                         std::vector<std::string>* warnings = nullptr);

// e_u . e_i from stored embeddings (mf_bpr and svdgcn_s).
RowMatrix mf_forward(const TrainedModel& model);

// Dispatches on model kind; graph-independent kinds ignore `graph`.
RowMatrix score(const TrainedModel& model, const InteractionGraph& graph);
RowMatrix score_relaxed(const TrainedModel& model, const RelaxedGraph& graph);

struct TopN {
  std::vector<std::vector<int>> lists;
  std::vector<int> short_users;  // users whose list holds fewer than n items
};

// Per user: items by score descending (ties by index), training items masked.
TopN recommend_topn(const RowMatrix& scores, const InteractionGraph& train, int n);

// Exact NDCG@k of the full ranking against `judgements`.
UtilityVector evaluate_ndcg(const RowMatrix& scores, const InteractionGraph& train,
                            const Judgements& judgements, int k);

// BPR training with Adam; keeps the parameters of the best validation epoch.
// Throws NumericError on a non-finite loss.
TrainedModel train(const DatasetSplit& split, const ModelConfig& config);
TrainedModel train(const InteractionGraph& train_graph, const Judgements& validation,
                   const ModelConfig& config);

void save_checkpoint(const TrainedModel& model, const std::string& path);
TrainedModel load_checkpoint(const std::string& path);

}  // namespace fairaug
