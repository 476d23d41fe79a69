#include "fairaug/models.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <random>
#include <set>

#include <Eigen/QR>
#include <Eigen/SVD>
#include <spdlog/spdlog.h>

#include "fairaug/errors.hpp"
#include "fairaug/numeric.hpp"
#include "fairaug/optim.hpp"

namespace fairaug {

std::string to_string(ModelKind kind) {
  switch (kind) {
    case ModelKind::kLightGcn: return "lightgcn";
    case ModelKind::kSvdGcn: return "svdgcn";
    case ModelKind::kSvdGcnS: return "svdgcn_s";
    case ModelKind::kMfBpr: return "mf_bpr";
  }
  return "unknown";
}

ModelKind parse_model_kind(const std::string& name) {
  if (name == "lightgcn") return ModelKind::kLightGcn;
  if (name == "svdgcn") return ModelKind::kSvdGcn;
  if (name == "svdgcn_s") return ModelKind::kSvdGcnS;
  if (name == "mf_bpr") return ModelKind::kMfBpr;
  throw ConfigError("unknown model kind '" + name + "'");
}

bool is_augmentable(ModelKind kind) {
  return kind == ModelKind::kLightGcn || kind == ModelKind::kSvdGcn;
}

void ModelConfig::validate() const {
  if (embedding_size < 1 || negatives_per_positive < 1 || train_epochs < 1 || batch_size < 1 ||
      svd_rank < 1 || eval_k < 1) {
    throw ConfigError("model config counts must be positive");
  }
  if (layers < 0) throw ConfigError("layers must be >= 0");
  if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be > 0");
  if (svd_alpha < 0.0) throw ConfigError("svd_alpha must be >= 0");
}

// --- weighted adjacency ----------------------------------------------------

WeightedAdjacency::WeightedAdjacency(const InteractionGraph& base, std::span<const UserItem> candidates)
    : n_users_(base.n_users()), n_candidates_(candidates.size()) {
  const int n = base.n_users() + base.n_items();
  std::vector<std::vector<std::pair<int, int>>> rows(static_cast<std::size_t>(n));
  for (const auto& e : base.edges()) {
    rows[e.user].push_back({n_users_ + e.item, -1});
    rows[n_users_ + e.item].push_back({e.user, -1});
  }
  std::set<UserItem> seen;
  for (std::size_t c = 0; c < candidates.size(); ++c) {
    const auto& ui = candidates[c];
    if (ui.user < 0 || ui.user >= base.n_users() || ui.item < 0 || ui.item >= base.n_items()) {
      throw ContractError("candidate edge out of range");
    }
    if (base.has_edge(ui.user, ui.item) || !seen.insert(ui).second) {
      throw ContractError("candidate edge (" + std::to_string(ui.user) + ", " +
                          std::to_string(ui.item) + ") duplicates an existing edge");
    }
    rows[ui.user].push_back({n_users_ + ui.item, static_cast<int>(c)});
    rows[n_users_ + ui.item].push_back({ui.user, static_cast<int>(c)});
  }
  ptr_.assign(static_cast<std::size_t>(n) + 1, 0);
  for (int a = 0; a < n; ++a) {
    auto& row = rows[a];
    std::sort(row.begin(), row.end());
    ptr_[a + 1] = ptr_[a] + static_cast<int>(row.size());
    for (const auto& [nb, src] : row) {
      col_.push_back(nb);
      source_.push_back(src);
      weight_.push_back(src < 0 ? 1.0 : 0.0);
    }
  }
  refresh();
}

void WeightedAdjacency::set_candidate_weights(std::span<const double> weights) {
  if (weights.size() != n_candidates_) throw ContractError("candidate weight vector misaligned");
  for (std::size_t k = 0; k < source_.size(); ++k) {
    if (source_[k] >= 0) weight_[k] = weights[source_[k]];
  }
  refresh();
}

void WeightedAdjacency::refresh() {
  const int n = n_nodes();
  degree_.assign(static_cast<std::size_t>(n), 0.0);
  inv_sqrt_.assign(static_cast<std::size_t>(n), 0.0);
  for (int a = 0; a < n; ++a) {
    double d = 0.0;
    for (int k = ptr_[a]; k < ptr_[a + 1]; ++k) d += weight_[k];
    degree_[a] = d;
    inv_sqrt_[a] = d > 0.0 ? 1.0 / std::sqrt(d) : 0.0;
  }
  norm_.resize(weight_.size());
  for (int a = 0; a < n; ++a) {
    for (int k = ptr_[a]; k < ptr_[a + 1]; ++k) norm_[k] = weight_[k] * inv_sqrt_[a] * inv_sqrt_[col_[k]];
  }
}

RowMatrix WeightedAdjacency::propagate(const RowMatrix& x) const {
  RowMatrix y = RowMatrix::Zero(x.rows(), x.cols());
  const int n = n_nodes();
  for (int a = 0; a < n; ++a) {
    for (int k = ptr_[a]; k < ptr_[a + 1]; ++k) y.row(a) += norm_[k] * x.row(col_[k]);
  }
  return y;
}

// --- LightGCN --------------------------------------------------------------

namespace {

RowMatrix stack(const RowMatrix& top, const RowMatrix& bottom) {
  RowMatrix out(top.rows() + bottom.rows(), top.cols());
  out.topRows(top.rows()) = top;
  out.bottomRows(bottom.rows()) = bottom;
  return out;
}

RowMatrix dot_scores(const RowMatrix& stacked, int n_users) {
  const int n_items = static_cast<int>(stacked.rows()) - n_users;
  return stacked.topRows(n_users) * stacked.bottomRows(n_items).transpose();
}

}  // namespace

RowMatrix lightgcn_embeddings(const EmbeddingTable& table, const WeightedAdjacency& adjacency,
                              int layers) {
  RowMatrix current = stack(table.users, table.items);
  RowMatrix total = current;
  for (int l = 0; l < layers; ++l) {
    current = adjacency.propagate(current);
    total += current;
  }
  return total / static_cast<double>(layers + 1);
}

RowMatrix lightgcn_forward(const TrainedModel& model, const InteractionGraph& graph) {
  if (model.config.kind != ModelKind::kLightGcn) throw ContractError("lightgcn_forward: wrong model kind");
  const WeightedAdjacency adjacency(graph);
  return dot_scores(lightgcn_embeddings(model.embeddings, adjacency, model.config.layers),
                    graph.n_users());
}

RowMatrix lightgcn_forward(const TrainedModel& model, const RelaxedGraph& graph) {
  if (model.config.kind != ModelKind::kLightGcn) throw ContractError("lightgcn_forward: wrong model kind");
  WeightedAdjacency adjacency(*graph.base, graph.candidates);
  adjacency.set_candidate_weights(graph.weights);
  return dot_scores(lightgcn_embeddings(model.embeddings, adjacency, model.config.layers),
                    graph.base->n_users());
}

// --- SVD -------------------------------------------------------------------

namespace {

void normalize_signs(TruncatedSvd& svd) {
  for (int c = 0; c < static_cast<int>(svd.values.size()); ++c) {
    const double sum = svd.left.col(c).sum();
    double sign = sum < 0.0 ? -1.0 : 1.0;
    if (std::abs(sum) < 1e-12) {
      Eigen::Index arg = 0;
      svd.left.col(c).cwiseAbs().maxCoeff(&arg);
      sign = svd.left(arg, c) < 0.0 ? -1.0 : 1.0;
    }
    if (sign < 0.0) {
      svd.left.col(c) *= -1.0;
      svd.right.col(c) *= -1.0;
    }
  }
}

TruncatedSvd orthogonal_iteration(const Eigen::MatrixXd& m, int k, double tol) {
  const int rank_cap = static_cast<int>(std::min(m.rows(), m.cols()));
  const int p = std::min(k + 10, rank_cap);
  std::mt19937_64 rng(0x5eed);
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::MatrixXd q(m.cols(), p);
  for (Eigen::Index r = 0; r < q.rows(); ++r) {
    for (Eigen::Index c = 0; c < q.cols(); ++c) q(r, c) = normal(rng);
  }
  Eigen::VectorXd previous = Eigen::VectorXd::Zero(k);
  Eigen::MatrixXd qy;
  for (int iter = 0; iter < 1000; ++iter) {
    qy = Eigen::HouseholderQR<Eigen::MatrixXd>(m * q).householderQ() * Eigen::MatrixXd::Identity(m.rows(), p);
    q = Eigen::HouseholderQR<Eigen::MatrixXd>(m.transpose() * qy).householderQ() *
        Eigen::MatrixXd::Identity(m.cols(), p);
    const Eigen::MatrixXd small = qy.transpose() * m * q;
    const Eigen::VectorXd s = Eigen::JacobiSVD<Eigen::MatrixXd>(small).singularValues().head(k);
    const double scale = std::max(s(0), 1e-300);
    if ((s - previous).cwiseAbs().maxCoeff() / scale < tol) {
      const Eigen::MatrixXd b = qy.transpose() * m;
      Eigen::JacobiSVD<Eigen::MatrixXd> svd(b, Eigen::ComputeThinU | Eigen::ComputeThinV);
      TruncatedSvd out;
      out.left = (qy * svd.matrixU()).leftCols(k);
      out.values = svd.singularValues().head(k);
      out.right = svd.matrixV().leftCols(k);
      if (k < p) out.boundary_degenerate = std::abs(svd.singularValues()(k - 1) - svd.singularValues()(k)) < 1e-8;
      return out;
    }
    previous = s;
  }
  throw NumericError("truncated SVD: orthogonal iteration did not converge in 1000 iterations");
}

}  // namespace

TruncatedSvd truncated_svd(const Eigen::MatrixXd& m, int k, double tol) {
  const int rank_cap = static_cast<int>(std::min(m.rows(), m.cols()));
  if (k < 1 || k > rank_cap) {
    throw ConfigError("svd rank " + std::to_string(k) + " outside [1, " + std::to_string(rank_cap) + "]");
  }
  TruncatedSvd out;
  if (m.rows() <= 512 && m.cols() <= 512) {
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(m, Eigen::ComputeThinU | Eigen::ComputeThinV);
    out.left = svd.matrixU().leftCols(k);
    out.values = svd.singularValues().head(k);
    out.right = svd.matrixV().leftCols(k);
    if (k < rank_cap) {
      out.boundary_degenerate = std::abs(svd.singularValues()(k - 1) - svd.singularValues()(k)) < 1e-8;
    }
  } else {
    out = orthogonal_iteration(m, k, tol);
  }
  normalize_signs(out);
  return out;
}

Eigen::MatrixXd svdgcn_augment_feedback(const InteractionGraph& train, std::span<const UserItem> edges,
                                        std::span<const double> weights) {
  if (!weights.empty() && weights.size() != edges.size()) {
    throw ContractError("relaxed feedback weights misaligned with edges");
  }
  Eigen::MatrixXd r = Eigen::MatrixXd::Zero(train.n_users(), train.n_items());
  for (const auto& e : train.edges()) r(e.user, e.item) = 1.0;
  for (std::size_t c = 0; c < edges.size(); ++c) {
    const auto& ui = edges[c];
    if (train.has_edge(ui.user, ui.item)) {
      throw ContractError("edge (" + std::to_string(ui.user) + ", " + std::to_string(ui.item) +
                          ") already in the feedback matrix");
    }
    r(ui.user, ui.item) = weights.empty() ? 1.0 : weights[c];
  }
  return r;
}

Eigen::MatrixXd renormalize_feedback(const Eigen::MatrixXd& feedback, double alpha) {
  const Eigen::VectorXd du = feedback.rowwise().sum();
  const Eigen::VectorXd di = feedback.colwise().sum().transpose();
  Eigen::MatrixXd out(feedback.rows(), feedback.cols());
  for (Eigen::Index u = 0; u < feedback.rows(); ++u) {
    for (Eigen::Index i = 0; i < feedback.cols(); ++i) {
      const double denom = (du(u) + alpha) * (di(i) + alpha);
      out(u, i) = denom > 0.0 ? feedback(u, i) / std::sqrt(denom) : 0.0;
    }
  }
  return out;
}

SpectralForward spectral_embeddings(const TrainedModel& model, const Eigen::MatrixXd& feedback) {
  const auto& cfg = model.config;
  SpectralForward out;
  out.svd = truncated_svd(renormalize_feedback(feedback, cfg.svd_alpha), cfg.svd_rank);
  const Eigen::VectorXd zeta = (cfg.zeta_gamma * out.svd.values.array()).exp().matrix();
  if (cfg.kind == ModelKind::kSvdGcn) {
    out.users = (out.svd.left * zeta.asDiagonal()) * model.weight;
    out.items = (out.svd.right * zeta.asDiagonal()) * model.weight;
  } else {
    const Eigen::VectorXd root = zeta.cwiseSqrt();
    out.users = out.svd.left * root.asDiagonal();
    out.items = out.svd.right * root.asDiagonal();
  }
  return out;
}

RowMatrix svdgcn_forward(const TrainedModel& model, const Eigen::MatrixXd& feedback,
                         std::vector<std::string>* warnings) {
  if (model.config.kind != ModelKind::kSvdGcn && model.config.kind != ModelKind::kSvdGcnS) {
    throw ContractError("svdgcn_forward: wrong model kind");
  }
  const auto fwd = spectral_embeddings(model, feedback);
  if (fwd.svd.boundary_degenerate) {
    const std::string msg = "repeated singular values at the truncation boundary";
    spdlog::warn("svdgcn_forward: {}", msg);
    if (warnings) warnings->push_back(msg);
  }
  return fwd.users * fwd.items.transpose();
}

RowMatrix mf_forward(const TrainedModel& model) {
  return model.embeddings.users * model.embeddings.items.transpose();
}

RowMatrix score(const TrainedModel& model, const InteractionGraph& graph) {
  switch (model.config.kind) {
    case ModelKind::kLightGcn: return lightgcn_forward(model, graph);
    case ModelKind::kSvdGcn: return svdgcn_forward(model, svdgcn_augment_feedback(graph, {}));
    case ModelKind::kSvdGcnS:
    case ModelKind::kMfBpr: return mf_forward(model);
  }
  return {};
}

RowMatrix score_relaxed(const TrainedModel& model, const RelaxedGraph& graph) {
  switch (model.config.kind) {
    case ModelKind::kLightGcn: return lightgcn_forward(model, graph);
    case ModelKind::kSvdGcn:
      return svdgcn_forward(model, svdgcn_augment_feedback(*graph.base, graph.candidates, graph.weights));
    case ModelKind::kSvdGcnS:
    case ModelKind::kMfBpr: return mf_forward(model);
  }
  return {};
}

// --- ranking ---------------------------------------------------------------

TopN recommend_topn(const RowMatrix& scores, const InteractionGraph& train, int n) {
  if (n < 1) throw std::invalid_argument("recommend_topn: n must be >= 1");
  TopN out;
  const int n_users = static_cast<int>(scores.rows());
  const int n_items = static_cast<int>(scores.cols());
  out.lists.resize(static_cast<std::size_t>(n_users));
  std::vector<int> pool;
  for (int u = 0; u < n_users; ++u) {
    pool.clear();
    const auto masked = u < train.n_users() ? train.user_items(u) : std::span<const int>{};
    std::size_t mk = 0;
    for (int i = 0; i < n_items; ++i) {
      while (mk < masked.size() && masked[mk] < i) ++mk;
      if (mk < masked.size() && masked[mk] == i) continue;
      pool.push_back(i);
    }
    const int take = std::min<int>(n, static_cast<int>(pool.size()));
    std::partial_sort(pool.begin(), pool.begin() + take, pool.end(), [&](int a, int b) {
      const double sa = scores(u, a);
      const double sb = scores(u, b);
      return sa != sb ? sa > sb : a < b;
    });
    out.lists[u].assign(pool.begin(), pool.begin() + take);
    if (take < n) out.short_users.push_back(u);
  }
  return out;
}

UtilityVector evaluate_ndcg(const RowMatrix& scores, const InteractionGraph& train,
                            const Judgements& judgements, int k) {
  return ndcg_at_k(recommend_topn(scores, train, k).lists, judgements, k);
}

// --- training --------------------------------------------------------------

namespace {

// Parameterization shared by the BPR loop: maps parameters to final
// user/item embeddings (stacked) and back-propagates embedding gradients.
class Parameterization {
 public:
  virtual ~Parameterization() = default;
  virtual RowMatrix forward() const = 0;
  virtual void backward(const RowMatrix& d_final, std::span<double> grad) const = 0;
  virtual std::span<double> params() = 0;
  // L2 gradient for the rows touched by a triple (embedding models only).
  virtual void regularize(int /*node*/, double /*scale*/, std::span<double> /*grad*/) const {}
  virtual double regularize_all(double /*lambda*/, std::span<double> /*grad*/) const { return 0.0; }
};

class GraphEmbeddings final : public Parameterization {
 public:
  GraphEmbeddings(RowMatrix initial, const InteractionGraph& graph, int layers)
      : e0_(std::move(initial)), adjacency_(graph), layers_(layers) {}

  RowMatrix forward() const override {
    RowMatrix current = e0_;
    RowMatrix total = current;
    for (int l = 0; l < layers_; ++l) {
      current = adjacency_.propagate(current);
      total += current;
    }
    return total / static_cast<double>(layers_ + 1);
  }

  void backward(const RowMatrix& d_final, std::span<double> grad) const override {
    // The normalized adjacency is symmetric, so its transpose is itself.
    RowMatrix current = d_final / static_cast<double>(layers_ + 1);
    RowMatrix total = current;
    for (int l = 0; l < layers_; ++l) {
      current = adjacency_.propagate(current);
      total += current;
    }
    Eigen::Map<RowMatrix>(grad.data(), e0_.rows(), e0_.cols()) += total;
  }

  std::span<double> params() override { return {e0_.data(), static_cast<std::size_t>(e0_.size())}; }

  void regularize(int node, double scale, std::span<double> grad) const override {
    const auto d = e0_.cols();
    for (Eigen::Index c = 0; c < d; ++c) grad[node * d + c] += 2.0 * scale * e0_(node, c);
  }

  const RowMatrix& e0() const { return e0_; }

 private:
  RowMatrix e0_;
  WeightedAdjacency adjacency_;
  int layers_;
};

class SpectralWeights final : public Parameterization {
 public:
  SpectralWeights(RowMatrix basis, RowMatrix weight) : basis_(std::move(basis)), w_(std::move(weight)) {}

  RowMatrix forward() const override { return basis_ * w_; }

  void backward(const RowMatrix& d_final, std::span<double> grad) const override {
    Eigen::Map<RowMatrix>(grad.data(), w_.rows(), w_.cols()) += basis_.transpose() * d_final;
  }

  std::span<double> params() override { return {w_.data(), static_cast<std::size_t>(w_.size())}; }

  double regularize_all(double lambda, std::span<double> grad) const override {
    Eigen::Map<RowMatrix>(grad.data(), w_.rows(), w_.cols()) += 2.0 * lambda * w_;
    return lambda * w_.squaredNorm();
  }

  const RowMatrix& weight() const { return w_; }

 private:
  RowMatrix basis_;  // stacked (P zeta(s)) over users then (Q zeta(s)) over items
  RowMatrix w_;
};

RowMatrix random_normal(Eigen::Index rows, Eigen::Index cols, double std_dev, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, std_dev);
  RowMatrix m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = normal(rng);
  }
  return m;
}

struct Triple {
  int user;
  int pos;
  int neg;
};

}  // namespace

TrainedModel train(const DatasetSplit& split, const ModelConfig& config) {
  return train(split.train, judgements_from(split.valid), config);
}

TrainedModel train(const InteractionGraph& train_graph, const Judgements& validation,
                   const ModelConfig& config) {
  config.validate();
  const int nu = train_graph.n_users();
  const int ni = train_graph.n_items();
  const int d = config.embedding_size;
  std::mt19937_64 rng(config.seed);

  TrainedModel model;
  model.config = config;

  if (config.kind == ModelKind::kSvdGcnS) {
    const auto feedback = svdgcn_augment_feedback(train_graph, {});
    const auto fwd = spectral_embeddings(model, feedback);
    model.embeddings = {fwd.users, fwd.items};
    const double v = evaluate_ndcg(mf_forward(model), train_graph, validation, config.eval_k).mean();
    model.validation_curve = {v};
    model.loss_curve = {0.0};
    model.best_epoch = 1;
    return model;
  }

  std::unique_ptr<Parameterization> params;
  GraphEmbeddings* graph_params = nullptr;
  SpectralWeights* spectral_params = nullptr;
  TruncatedSvd base_svd;
  if (config.kind == ModelKind::kSvdGcn) {
    const auto normalized = renormalize_feedback(svdgcn_augment_feedback(train_graph, {}), config.svd_alpha);
    base_svd = truncated_svd(normalized, config.svd_rank);
    const Eigen::VectorXd zeta = (config.zeta_gamma * base_svd.values.array()).exp().matrix();
    RowMatrix basis(nu + ni, config.svd_rank);
    basis.topRows(nu) = base_svd.left * zeta.asDiagonal();
    basis.bottomRows(ni) = base_svd.right * zeta.asDiagonal();
    auto p = std::make_unique<SpectralWeights>(std::move(basis),
                                               random_normal(config.svd_rank, d, config.init_std, rng));
    spectral_params = p.get();
    params = std::move(p);
  } else {
    const int layers = config.kind == ModelKind::kLightGcn ? config.layers : 0;
    auto p = std::make_unique<GraphEmbeddings>(random_normal(nu + ni, d, config.init_std, rng),
                                               train_graph, layers);
    graph_params = p.get();
    params = std::move(p);
  }

  auto snapshot = [&](TrainedModel& m) {
    if (spectral_params) {
      m.weight = spectral_params->weight();
      const RowMatrix f = spectral_params->forward();
      m.embeddings = {f.topRows(nu), f.bottomRows(ni)};
    } else {
      m.embeddings = {graph_params->e0().topRows(nu), graph_params->e0().bottomRows(ni)};
    }
  };

  Adam adam(config.learning_rate);
  std::vector<double> grad(params->params().size());
  std::vector<std::size_t> order(train_graph.n_edges());
  std::iota(order.begin(), order.end(), 0);
  std::uniform_int_distribution<int> item_dist(0, std::max(0, ni - 1));
  std::vector<Triple> triples;
  double best_valid = -1.0;

  for (int epoch = 1; epoch <= config.train_epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    triples.clear();
    for (std::size_t idx : order) {
      const Edge& e = train_graph.edges()[idx];
      if (train_graph.user_degree(e.user) >= ni) continue;
      for (int s = 0; s < config.negatives_per_positive; ++s) {
        int neg = item_dist(rng);
        while (train_graph.has_edge(e.user, neg)) neg = item_dist(rng);
        triples.push_back({e.user, e.item, neg});
      }
    }
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < triples.size(); start += config.batch_size) {
      const std::size_t end = std::min(triples.size(), start + static_cast<std::size_t>(config.batch_size));
      const double inv_batch = 1.0 / static_cast<double>(end - start);
      const RowMatrix final_emb = params->forward();
      RowMatrix d_final = RowMatrix::Zero(final_emb.rows(), final_emb.cols());
      std::fill(grad.begin(), grad.end(), 0.0);
      double batch_loss = 0.0;
      for (std::size_t t = start; t < end; ++t) {
        const auto& tr = triples[t];
        const auto eu = final_emb.row(tr.user);
        const auto ep = final_emb.row(nu + tr.pos);
        const auto en = final_emb.row(nu + tr.neg);
        const double x = eu.dot(ep - en);
        // -log sigmoid(x) = softplus(-x)
        batch_loss += x > 0 ? std::log1p(std::exp(-x)) : -x + std::log1p(std::exp(x));
        const double g = -sigmoid(-x) * inv_batch;
        d_final.row(tr.user) += g * (ep - en);
        d_final.row(nu + tr.pos) += g * eu;
        d_final.row(nu + tr.neg) -= g * eu;
        if (config.l2_reg > 0.0) {
          const double scale = config.l2_reg * inv_batch;
          params->regularize(tr.user, scale, grad);
          params->regularize(nu + tr.pos, scale, grad);
          params->regularize(nu + tr.neg, scale, grad);
        }
      }
      params->backward(d_final, grad);
      if (config.l2_reg > 0.0) batch_loss += params->regularize_all(config.l2_reg, grad) * (end - start);
      epoch_loss += batch_loss;
      adam.step(params->params(), grad);
    }
    epoch_loss /= std::max<std::size_t>(1, triples.size());
    if (!std::isfinite(epoch_loss)) {
      throw NumericError("training diverged: non-finite loss at epoch " + std::to_string(epoch));
    }
    const RowMatrix final_emb = params->forward();
    const double valid = evaluate_ndcg(dot_scores(final_emb, nu), train_graph, validation, config.eval_k).mean();
    model.loss_curve.push_back(epoch_loss);
    model.validation_curve.push_back(valid);
    spdlog::debug("train {} epoch {} loss {:.6f} valid ndcg {:.4f}", to_string(config.kind), epoch,
                  epoch_loss, valid);
    if (valid > best_valid) {
      best_valid = valid;
      model.best_epoch = epoch;
      snapshot(model);
    }
  }
  return model;
}

// --- checkpoints -----------------------------------------------------------

namespace {

constexpr std::uint32_t kCheckpointMagic = 0x47554146;  // "FAUG"
constexpr std::uint32_t kCheckpointVersion = 1;

template <typename T>
void put(std::ofstream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::ifstream& in) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw DataError("checkpoint truncated");
  return v;
}

void put_matrix(std::ofstream& out, const RowMatrix& m) {
  put<std::int64_t>(out, m.rows());
  put<std::int64_t>(out, m.cols());
  out.write(reinterpret_cast<const char*>(m.data()), static_cast<std::streamsize>(m.size() * sizeof(double)));
}

RowMatrix get_matrix(std::ifstream& in) {
  const auto rows = get<std::int64_t>(in);
  const auto cols = get<std::int64_t>(in);
  if (rows < 0 || cols < 0) throw DataError("checkpoint has negative matrix dimensions");
  RowMatrix m(rows, cols);
  in.read(reinterpret_cast<char*>(m.data()), static_cast<std::streamsize>(m.size() * sizeof(double)));
  if (!in) throw DataError("checkpoint truncated");
  return m;
}

}  // namespace

void save_checkpoint(const TrainedModel& model, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write checkpoint " + path);
  const auto& c = model.config;
  put(out, kCheckpointMagic);
  put(out, kCheckpointVersion);
  put<std::int32_t>(out, static_cast<std::int32_t>(c.kind));
  put<std::int32_t>(out, c.embedding_size);
  put<std::int32_t>(out, c.layers);
  put<std::int32_t>(out, c.svd_rank);
  put<std::uint64_t>(out, c.seed);
  put<double>(out, c.svd_alpha);
  put<double>(out, c.zeta_gamma);
  put<std::int32_t>(out, c.eval_k);
  put<std::int32_t>(out, model.best_epoch);
  put_matrix(out, model.embeddings.users);
  put_matrix(out, model.embeddings.items);
  put_matrix(out, model.weight);
  if (!out) throw DataError("failed writing checkpoint " + path);
}

TrainedModel load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint " + path);
  if (get<std::uint32_t>(in) != kCheckpointMagic) throw DataError("not a model checkpoint: " + path);
  const auto version = get<std::uint32_t>(in);
  if (version != kCheckpointVersion) {
    throw DataError("unsupported checkpoint version " + std::to_string(version));
  }
  TrainedModel model;
  auto& c = model.config;
  const auto kind = get<std::int32_t>(in);
  if (kind < 0 || kind > 3) throw DataError("checkpoint has unknown model kind");
  c.kind = static_cast<ModelKind>(kind);
  c.embedding_size = get<std::int32_t>(in);
  c.layers = get<std::int32_t>(in);
  c.svd_rank = get<std::int32_t>(in);
  c.seed = get<std::uint64_t>(in);
  c.svd_alpha = get<double>(in);
  c.zeta_gamma = get<double>(in);
  c.eval_k = get<std::int32_t>(in);
  model.best_epoch = get<std::int32_t>(in);
  model.embeddings.users = get_matrix(in);
  model.embeddings.items = get_matrix(in);
  model.weight = get_matrix(in);
  return model;
}

}  // namespace fairaug
