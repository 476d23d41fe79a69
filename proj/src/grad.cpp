#include "fairaug/grad.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <spdlog/spdlog.h>

#include "fairaug/errors.hpp"
#include "fairaug/numeric.hpp"

namespace fairaug {

void DifferentiableTrace::record(std::string name, std::function<bool()> forward,
                                 std::function<void()> backward) {
  nodes_.push_back({std::move(name), std::move(forward), std::move(backward)});
}

void DifferentiableTrace::forward() {
  for (const auto& node : nodes_) {
    if (!node.forward()) throw NumericError("non-finite value at trace node '" + node.name + "'");
  }
}

void DifferentiableTrace::backward() {
  backward_counts_.assign(nodes_.size(), 0);
  for (std::size_t n = nodes_.size(); n-- > 0;) {
    nodes_[n].backward();
    ++backward_counts_[n];
  }
}

std::vector<std::string> DifferentiableTrace::node_names() const {
  std::vector<std::string> out;
  for (const auto& node : nodes_) out.push_back(node.name);
  return out;
}

std::string to_string(SvdGradient s) {
  return s == SvdGradient::kAnalytic ? "analytic" : "finite_difference";
}

SvdGradient parse_svd_gradient(const std::string& name) {
  if (name == "analytic") return SvdGradient::kAnalytic;
  if (name == "finite_difference" || name == "fd") return SvdGradient::kFiniteDifference;
  throw ConfigError("unknown svd gradient strategy '" + name + "'");
}

namespace {

bool all_finite(std::span<const double> v) {
  return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

bool all_finite(const RowMatrix& m) { return m.allFinite(); }

// Per-user scored pools and the group each evaluated user counts toward.
struct FairnessTerm {
  int k = 10;
  double tau = 0.1;
  std::vector<int> users;                 // evaluated grouped users
  std::vector<int> group;                 // 1 or 2, aligned with users
  std::vector<std::vector<int>> pools;    // non-training items
  std::vector<std::vector<int>> relevant;  // positions into the pool
  int n1 = 0;
  int n2 = 0;

  FairnessTerm(const InteractionGraph& train, const GroupPartition& partition, const Judgements& validation,
               int k_, double tau_)
      : k(k_), tau(tau_) {
    if (!(tau > 0.0)) throw ConfigError("temperature tau must be > 0");
    const auto membership = partition.membership(train.n_users());
    for (int u = 0; u < train.n_users(); ++u) {
      if (membership[u] == 0 || validation[u].empty()) continue;
      std::vector<int> pool;
      const auto masked = train.user_items(u);
      std::size_t mk = 0;
      for (int i = 0; i < train.n_items(); ++i) {
        while (mk < masked.size() && masked[mk] < i) ++mk;
        if (mk < masked.size() && masked[mk] == i) continue;
        pool.push_back(i);
      }
      std::vector<int> rel;
      for (int i : validation[u]) {
        const auto it = std::lower_bound(pool.begin(), pool.end(), i);
        if (it != pool.end() && *it == i) rel.push_back(static_cast<int>(it - pool.begin()));
      }
      if (rel.empty()) continue;
      users.push_back(u);
      group.push_back(membership[u]);
      (membership[u] == 1 ? n1 : n2) += 1;
      pools.push_back(std::move(pool));
      relevant.push_back(std::move(rel));
    }
    if (n1 == 0 || n2 == 0) throw DataError("a group has no user with validation items");
  }

  struct Value {
    double fair = 0.0;
    double group1 = 0.0;
    double group2 = 0.0;
  };

  // Fairness value; with `score_adjoint` set, writes d(fair)/d(scores).
  Value evaluate(const RowMatrix& scores, RowMatrix* score_adjoint) const {
    std::vector<double> values(users.size());
    std::vector<std::vector<double>> grads(score_adjoint ? users.size() : 0);
    std::vector<double> pool_scores;
    for (std::size_t n = 0; n < users.size(); ++n) {
      const auto& pool = pools[n];
      pool_scores.resize(pool.size());
      for (std::size_t q = 0; q < pool.size(); ++q) pool_scores[q] = scores(users[n], pool[q]);
      if (score_adjoint) grads[n].assign(pool.size(), 0.0);
      values[n] = smooth_ndcg(pool_scores, relevant[n], k, tau,
                              score_adjoint ? std::span<double>(grads[n]) : std::span<double>{});
    }
    Value out;
    for (std::size_t n = 0; n < users.size(); ++n) (group[n] == 1 ? out.group1 : out.group2) += values[n];
    out.group1 /= n1;
    out.group2 /= n2;
    const double gap = out.group1 - out.group2;
    out.fair = gap * gap;
    if (score_adjoint) {
      score_adjoint->setZero(scores.rows(), scores.cols());
      for (std::size_t n = 0; n < users.size(); ++n) {
        const double scale = group[n] == 1 ? 2.0 * gap / n1 : -2.0 * gap / n2;
        const auto& pool = pools[n];
        for (std::size_t q = 0; q < pool.size(); ++q) (*score_adjoint)(users[n], pool[q]) += scale * grads[n][q];
      }
    }
    return out;
  }
};

double distance_value(std::span<const double> w) {
  double sum = 0.0;
  for (double x : w) sum += x * x;
  return 0.5 * sigmoid(sum);
}

}  // namespace

struct AugmentationObjective::Impl {
  const TrainedModel& model;
  const InteractionGraph& train;
  std::vector<UserItem> candidates;
  LossOptions options;
  FairnessTerm fairness;

  // LightGCN path state.
  std::unique_ptr<WeightedAdjacency> adjacency;
  DifferentiableTrace trace;
  std::vector<double> p, w, w_bar, p_bar;
  std::vector<RowMatrix> layers, layers_bar;
  RowMatrix final_emb, final_bar, scores, scores_bar;
  std::vector<double> norm_bar;
  FairnessTerm::Value fair_value;
  double l_dist = 0.0;
  double dist_sum = 0.0;
  double loss = 0.0;

  Impl(const TrainedModel& m, const InteractionGraph& g, std::vector<UserItem> c, const GroupPartition& partition,
       const Judgements& validation, LossOptions o)
      : model(m), train(g), candidates(std::move(c)), options(o),
        fairness(g, partition, validation, o.k, o.tau) {
    if (!model.augmentable()) {
      throw ContractError("model kind " + to_string(model.config.kind) +
                          " is not augmentable: the graph does not influence its recommendations");
    }
    if (model.config.kind == ModelKind::kLightGcn) build_trace();
  }

  void build_trace() {
    adjacency = std::make_unique<WeightedAdjacency>(train, candidates);
    const int n_layers = model.config.layers;
    const int n_users = train.n_users();
    const std::size_t nc = candidates.size();
    layers.resize(static_cast<std::size_t>(n_layers) + 1);
    layers_bar.resize(layers.size());

    trace.record(
        "sigmoid",
        [this] {
          w.resize(p.size());
          for (std::size_t e = 0; e < p.size(); ++e) w[e] = sigmoid(p[e]);
          return all_finite(w);
        },
        [this] {
          p_bar.resize(p.size());
          for (std::size_t e = 0; e < p.size(); ++e) p_bar[e] = w_bar[e] * w[e] * (1.0 - w[e]);
        });

    trace.record(
        "normalize",
        [this] {
          adjacency->set_candidate_weights(w);
          return all_finite(adjacency->normalized());
        },
        [this] {
          const auto& ptr = adjacency->ptr();
          const auto& col = adjacency->col();
          const auto& src = adjacency->source();
          const auto& wt = adjacency->weight();
          const auto& deg = adjacency->degree();
          const auto& c = adjacency->inv_sqrt_degree();
          const int n = adjacency->n_nodes();
          std::vector<double> c_bar(static_cast<std::size_t>(n), 0.0);
          for (int a = 0; a < n; ++a) {
            for (int q = ptr[a]; q < ptr[a + 1]; ++q) {
              const int b = col[q];
              c_bar[a] += norm_bar[q] * wt[q] * c[b];
              c_bar[b] += norm_bar[q] * wt[q] * c[a];
            }
          }
          std::vector<double> d_bar(static_cast<std::size_t>(n), 0.0);
          for (int a = 0; a < n; ++a) {
            if (deg[a] > 0.0) d_bar[a] = c_bar[a] * (-0.5) * c[a] / deg[a];
          }
          for (int a = 0; a < n; ++a) {
            for (int q = ptr[a]; q < ptr[a + 1]; ++q) {
              if (src[q] < 0) continue;
              w_bar[src[q]] += norm_bar[q] * c[a] * c[col[q]] + d_bar[a];
            }
          }
        });

    for (int l = 1; l <= n_layers; ++l) {
      trace.record(
          "propagate[" + std::to_string(l) + "]",
          [this, l] {
            layers[l] = adjacency->propagate(layers[l - 1]);
            return all_finite(layers[l]);
          },
          [this, l] {
            const auto& ptr = adjacency->ptr();
            const auto& col = adjacency->col();
            const int n = adjacency->n_nodes();
            for (int a = 0; a < n; ++a) {
              for (int q = ptr[a]; q < ptr[a + 1]; ++q) norm_bar[q] += layers_bar[l].row(a).dot(layers[l - 1].row(col[q]));
            }
            layers_bar[l - 1] += adjacency->propagate(layers_bar[l]);
          });
    }

    trace.record(
        "readout",
        [this, n_layers] {
          final_emb = layers[0];
          for (int l = 1; l <= n_layers; ++l) final_emb += layers[l];
          final_emb /= static_cast<double>(n_layers + 1);
          return all_finite(final_emb);
        },
        [this, n_layers] {
          for (auto& lb : layers_bar) lb = final_bar / static_cast<double>(n_layers + 1);
        });

    trace.record(
        "score",
        [this, n_users] {
          const auto n_items = final_emb.rows() - n_users;
          scores = final_emb.topRows(n_users) * final_emb.bottomRows(n_items).transpose();
          return all_finite(scores);
        },
        [this, n_users] {
          const auto n_items = final_emb.rows() - n_users;
          final_bar.resize(final_emb.rows(), final_emb.cols());
          final_bar.topRows(n_users) = scores_bar * final_emb.bottomRows(n_items);
          final_bar.bottomRows(n_items) = scores_bar.transpose() * final_emb.topRows(n_users);
        });

    trace.record(
        "smooth_ndcg",
        [this] {
          fair_value = fairness.evaluate(scores, &scores_bar);
          return std::isfinite(fair_value.fair) && all_finite(scores_bar);
        },
        [] {});

    trace.record(
        "distance",
        [this] {
          dist_sum = 0.0;
          for (double x : w) dist_sum += x * x;
          l_dist = 0.5 * sigmoid(dist_sum);
          return std::isfinite(l_dist);
        },
        [this] {
          const double s = sigmoid(dist_sum);
          const double slope = options.beta * s * (1.0 - s);
          for (std::size_t e = 0; e < w.size(); ++e) w_bar[e] += slope * w[e];
        });

    trace.record(
        "total",
        [this] {
          loss = fair_value.fair + options.beta * l_dist;
          return std::isfinite(loss);
        },
        [this, nc] {
          w_bar.assign(nc, 0.0);
          norm_bar.assign(adjacency->normalized().size(), 0.0);
        });
  }

  LossEvaluation evaluate_lightgcn(std::span<const double> p_in, bool with_gradient) {
    p.assign(p_in.begin(), p_in.end());
    layers[0].resize(train.n_users() + train.n_items(), model.embeddings.users.cols());
    layers[0].topRows(train.n_users()) = model.embeddings.users;
    layers[0].bottomRows(train.n_items()) = model.embeddings.items;
    trace.forward();
    LossEvaluation out;
    out.l_fair = fair_value.fair;
    out.l_dist = l_dist;
    out.loss = loss;
    out.group1 = fair_value.group1;
    out.group2 = fair_value.group2;
    if (with_gradient) {
      trace.backward();
      out.gradient = p_bar;
      if (!all_finite(out.gradient)) throw NumericError("non-finite gradient at trace node 'sigmoid'");
    }
    return out;
  }

  std::vector<double> weights_of(std::span<const double> p_in) const {
    std::vector<double> out(p_in.size());
    for (std::size_t e = 0; e < p_in.size(); ++e) out[e] = sigmoid(p_in[e]);
    return out;
  }

  LossEvaluation evaluate_spectral(std::span<const double> p_in, bool with_gradient) {
    const auto weights = weights_of(p_in);
    const Eigen::MatrixXd feedback = svdgcn_augment_feedback(train, candidates, weights);
    LossEvaluation out;
    const auto fwd = spectral_embeddings(model, feedback);
    if (fwd.svd.boundary_degenerate) out.warnings.push_back("repeated singular values at the truncation boundary");
    const RowMatrix s = fwd.users * fwd.items.transpose();
    if (!all_finite(s)) throw NumericError("non-finite value at svd node 'score'");
    RowMatrix s_bar;
    const auto fv = fairness.evaluate(s, with_gradient ? &s_bar : nullptr);
    out.l_fair = fv.fair;
    out.group1 = fv.group1;
    out.group2 = fv.group2;
    out.l_dist = distance_value(weights);
    out.loss = out.l_fair + options.beta * out.l_dist;
    if (!std::isfinite(out.loss)) throw NumericError("non-finite value at svd node 'total'");
    if (!with_gradient) return out;

    bool use_fd = options.svd_strategy == SvdGradient::kFiniteDifference;
    if (!use_fd) {
      bool degenerate = false;
      const Eigen::MatrixXd r_bar = svd_feedback_adjoint(model, feedback, s_bar, &degenerate);
      if (degenerate) {
        const std::string msg = "degenerate singular values: analytic svd gradient replaced by finite differences";
        spdlog::warn(msg);
        out.warnings.push_back(msg);
        use_fd = true;
      } else {
        out.gradient.resize(candidates.size());
        double dist_sum = 0.0;
        for (double x : weights) dist_sum += x * x;
        const double sd = sigmoid(dist_sum);
        for (std::size_t e = 0; e < candidates.size(); ++e) {
          const double wb = r_bar(candidates[e].user, candidates[e].item) + options.beta * sd * (1.0 - sd) * weights[e];
          out.gradient[e] = wb * weights[e] * (1.0 - weights[e]);
        }
      }
    }
    if (use_fd) {
      out.gradient.resize(candidates.size());
      std::vector<double> probe(p_in.begin(), p_in.end());
      const double h = options.fd_step;
      for (std::size_t e = 0; e < candidates.size(); ++e) {
        const double keep = probe[e];
        probe[e] = keep + h;
        const double up = evaluate_spectral(probe, false).loss;
        probe[e] = keep - h;
        const double down = evaluate_spectral(probe, false).loss;
        probe[e] = keep;
        out.gradient[e] = (up - down) / (2.0 * h);
      }
    }
    if (!all_finite(out.gradient)) throw NumericError("non-finite value at svd node 'gradient'");
    return out;
  }
};

AugmentationObjective::AugmentationObjective(const TrainedModel& model, const InteractionGraph& train,
                                             std::vector<UserItem> candidates, const GroupPartition& partition,
                                             const Judgements& validation, LossOptions options)
    : impl_(std::make_unique<Impl>(model, train, std::move(candidates), partition, validation, options)) {}

AugmentationObjective::~AugmentationObjective() = default;

LossEvaluation AugmentationObjective::evaluate(std::span<const double> p, bool with_gradient) {
  if (p.size() != impl_->candidates.size()) throw ContractError("perturbation vector misaligned with candidates");
  if (impl_->model.config.kind == ModelKind::kLightGcn) return impl_->evaluate_lightgcn(p, with_gradient);
  return impl_->evaluate_spectral(p, with_gradient);
}

std::size_t AugmentationObjective::n_candidates() const { return impl_->candidates.size(); }

const std::vector<UserItem>& AugmentationObjective::candidates() const { return impl_->candidates; }

const DifferentiableTrace* AugmentationObjective::trace() const {
  return impl_->model.config.kind == ModelKind::kLightGcn ? &impl_->trace : nullptr;
}

LossEvaluation loss_and_gradient(const TrainedModel& model, const InteractionGraph& train,
                                 std::span<const UserItem> candidates, std::span<const double> p,
                                 const GroupPartition& partition, const Judgements& validation,
                                 const LossOptions& options) {
  if (candidates.empty()) throw ContractError("loss_and_gradient: empty candidate set");
  AugmentationObjective objective(model, train, {candidates.begin(), candidates.end()}, partition, validation,
                                  options);
  return objective.evaluate(p, true);
}

LossEvaluation svd_path_gradient(const TrainedModel& model, const InteractionGraph& train,
                                 std::span<const UserItem> candidates, std::span<const double> p,
                                 const GroupPartition& partition, const Judgements& validation,
                                 const LossOptions& options) {
  if (model.config.kind != ModelKind::kSvdGcn) throw ContractError("svd_path_gradient: model is not svdgcn");
  if (candidates.empty()) return {};
  AugmentationObjective objective(model, train, {candidates.begin(), candidates.end()}, partition, validation,
                                  options);
  return objective.evaluate(p, true);
}

Eigen::MatrixXd svd_feedback_adjoint(const TrainedModel& model, const Eigen::MatrixXd& feedback,
                                     const Eigen::MatrixXd& score_adjoint, bool* degenerate) {
  if (model.config.kind != ModelKind::kSvdGcn) throw ContractError("svd_feedback_adjoint: model is not svdgcn");
  const auto& cfg = model.config;
  const int kk = cfg.svd_rank;
  const auto fwd = spectral_embeddings(model, feedback);
  const Eigen::MatrixXd rdot = renormalize_feedback(feedback, cfg.svd_alpha);
  Eigen::JacobiSVD<Eigen::MatrixXd> full(rdot, Eigen::ComputeThinU | Eigen::ComputeThinV);
  Eigen::MatrixXd u = full.matrixU();
  Eigen::MatrixXd v = full.matrixV();
  const Eigen::VectorXd s = full.singularValues();
  const int r = static_cast<int>(s.size());
  // Same sign branch as the forward.
  for (int c = 0; c < kk; ++c) {
    if (u.col(c).dot(fwd.svd.left.col(c)) < 0.0) {
      u.col(c) *= -1.0;
      v.col(c) *= -1.0;
    }
  }
  bool bad = false;
  const double scale = std::max(1.0, s(0));
  for (int c = 0; c < kk; ++c) {
    if (s(c) < 1e-8 * scale) bad = true;
    for (int j = 0; j < r; ++j) {
      if (j != c && std::abs(s(c) - s(j)) < 1e-8 * scale) bad = true;
    }
  }
  if (degenerate) *degenerate = bad;
  if (bad) return Eigen::MatrixXd::Zero(feedback.rows(), feedback.cols());

  const Eigen::VectorXd zeta = (cfg.zeta_gamma * fwd.svd.values.array()).exp().matrix();
  // S = P Z W W^T Z Q^T
  const Eigen::MatrixXd users_bar = score_adjoint * Eigen::MatrixXd(fwd.items);
  const Eigen::MatrixXd items_bar = score_adjoint.transpose() * Eigen::MatrixXd(fwd.users);
  const Eigen::MatrixXd ub_w = users_bar * model.weight.transpose();  // m x k
  const Eigen::MatrixXd ib_w = items_bar * model.weight.transpose();  // n x k
  const Eigen::MatrixXd uk = u.leftCols(kk);
  const Eigen::MatrixXd vk = v.leftCols(kk);
  const Eigen::MatrixXd left_bar = ub_w * zeta.asDiagonal();
  const Eigen::MatrixXd right_bar = ib_w * zeta.asDiagonal();
  Eigen::VectorXd s_bar(kk);
  for (int c = 0; c < kk; ++c) {
    const double z_bar = ub_w.col(c).dot(uk.col(c)) + ib_w.col(c).dot(vk.col(c));
    s_bar(c) = z_bar * cfg.zeta_gamma * zeta(c);
  }

  Eigen::MatrixXd x = Eigen::MatrixXd::Zero(r, r);
  const Eigen::MatrixXd ut_lb = u.transpose() * left_bar;   // r x k: u_j . ubar_c
  const Eigen::MatrixXd vt_rb = v.transpose() * right_bar;  // r x k: v_j . vbar_c
  for (int c = 0; c < kk; ++c) {
    x(c, c) += s_bar(c);
    for (int j = 0; j < r; ++j) {
      if (j == c) continue;
      const double denom = s(c) * s(c) - s(j) * s(j);
      const double cu = ut_lb(j, c) / denom;
      const double cv = vt_rb(j, c) / denom;
      x(j, c) += cu * s(c) + cv * s(j);
      x(c, j) += cu * s(j) + cv * s(c);
    }
  }
  Eigen::MatrixXd a_bar = u * x * v.transpose();
  const Eigen::VectorXd inv_s = s.head(kk).cwiseInverse();
  if (rdot.rows() > r) {
    const Eigen::MatrixXd comp = left_bar - u * ut_lb;
    a_bar += comp * inv_s.asDiagonal() * vk.transpose();
  }
  if (rdot.cols() > r) {
    const Eigen::MatrixXd comp = right_bar - v * vt_rb;
    a_bar += uk * inv_s.asDiagonal() * comp.transpose();
  }

  // Through the renormalization (D_U + a)^-1/2 R (D_I + a)^-1/2.
  const double alpha = cfg.svd_alpha;
  const Eigen::VectorXd du = feedback.rowwise().sum();
  const Eigen::VectorXd di = feedback.colwise().sum().transpose();
  const Eigen::VectorXd cu = (du.array() + alpha).rsqrt().matrix();
  const Eigen::VectorXd ci = (di.array() + alpha).rsqrt().matrix();
  const Eigen::MatrixXd weighted = a_bar.cwiseProduct(rdot);  // abar_ab * R_ab * cu_a * ci_b
  const Eigen::VectorXd du_bar = -0.5 * weighted.rowwise().sum().cwiseQuotient((du.array() + alpha).matrix());
  const Eigen::VectorXd di_bar =
      -0.5 * weighted.colwise().sum().transpose().cwiseQuotient((di.array() + alpha).matrix());
  Eigen::MatrixXd r_bar = cu.asDiagonal() * a_bar * ci.asDiagonal();
  r_bar.colwise() += du_bar;
  r_bar.rowwise() += di_bar.transpose();
  return r_bar;
}

GradientCheck check_gradient(const GradientFunction& fn, std::span<const double> p, double h, double floor) {
  if (!(h > 0.0)) throw std::invalid_argument("check_gradient: step must be > 0");
  std::vector<double> analytic;
  fn(p, &analytic);
  if (analytic.size() != p.size()) throw ContractError("check_gradient: gradient length mismatch");
  std::vector<double> probe(p.begin(), p.end());
  GradientCheck out;
  for (std::size_t e = 0; e < p.size(); ++e) {
    const double keep = probe[e];
    probe[e] = keep + h;
    const double up = fn(probe, nullptr);
    probe[e] = keep - h;
    const double down = fn(probe, nullptr);
    probe[e] = keep;
    const double numeric = (up - down) / (2.0 * h);
    const double denom = std::max({std::abs(analytic[e]), std::abs(numeric), floor});
    const double err = std::abs(analytic[e] - numeric) / denom;
    if (out.coordinate < 0 || err > out.max_relative_error) {
      out.max_relative_error = err;
      out.coordinate = static_cast<int>(e);
      out.analytic = analytic[e];
      out.numeric = numeric;
    }
  }
  return out;
}

}  // namespace fairaug
