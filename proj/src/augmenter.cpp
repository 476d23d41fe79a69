#include "fairaug/augmenter.hpp"

#include <filesystem>
#include <fstream>
#include <sstream>

#include <fmt/format.h>
#include <json.hpp>
#include <spdlog/spdlog.h>

#include "fairaug/errors.hpp"
#include "fairaug/numeric.hpp"
#include "fairaug/optim.hpp"

namespace fairaug {

void AugmentationConfig::validate() const {
  if (max_epochs < 0) throw ConfigError("max_epochs must be >= 0");
  if (early_stop_patience < 1) throw ConfigError("early_stop_patience must be >= 1");
  if (!(early_stop_min_delta >= 0.0)) throw ConfigError("early_stop_min_delta must be >= 0");
  if (!(discretization_threshold > 0.0 && discretization_threshold < 1.0)) {
    throw ConfigError("discretization_threshold must lie in (0, 1)");
  }
  if (!(tau > 0.0)) throw ConfigError("tau must be > 0");
  if (!(beta >= 0.0)) throw ConfigError("beta must be >= 0");
  if (!(learning_rate >= 0.0)) throw ConfigError("learning_rate must be >= 0");
  if (k < 1) throw ConfigError("k must be >= 1");
}

LossOptions AugmentationConfig::loss_options() const {
  LossOptions o;
  o.beta = beta;
  o.tau = tau;
  o.k = k;
  o.svd_strategy = svd_strategy;
  return o;
}

EarlyStopper::EarlyStopper(double min_delta, int patience) : min_delta_(min_delta), patience_(patience) {
  if (patience < 1) throw ConfigError("patience must be >= 1");
}

bool EarlyStopper::update(double value) {
  if (best_ - value >= min_delta_) {
    best_ = value;
    stale_ = 0;
    return false;
  }
  if (value < best_) best_ = value;
  ++stale_;
  return stale_ >= patience_;
}

std::string to_string(StopReason r) {
  switch (r) {
    case StopReason::kEarlyStop: return "early_stop";
    case StopReason::kMaxEpochs: return "max_epochs";
    case StopReason::kEmptyCandidates: return "empty_candidates";
  }
  return "?";
}

std::vector<UserItem> discretize(std::span<const double> p, std::span<const UserItem> candidates, double threshold) {
  if (p.size() != candidates.size()) throw ContractError("discretize: p misaligned with candidates");
  std::vector<UserItem> out;
  for (std::size_t e = 0; e < p.size(); ++e) {
    if (sigmoid(p[e]) >= threshold) out.push_back(candidates[e]);
  }
  return out;
}

InteractionGraph apply_augmentation(const InteractionGraph& graph, std::span<const UserItem> added,
                                    std::optional<Timestamp> timestamp) {
  return with_added_edges(graph, added, timestamp.value_or(graph.max_timestamp()));
}

namespace {

// Exact validation metrics of the model on train + chosen candidates.
EpochRecord exact_record(const TrainedModel& model, const InteractionGraph& train, const Judgements& validation,
                         const GroupPartition& partition, std::span<const UserItem> candidates,
                         std::span<const double> binary, int k) {
  RelaxedGraph rg{&train, {candidates.begin(), candidates.end()}, {binary.begin(), binary.end()}};
  const RowMatrix scores = score_relaxed(model, rg);
  const auto util = evaluate_ndcg(scores, train, validation, k);
  const auto gap = delta_ndcg(util, partition);
  EpochRecord r;
  r.delta_ndcg_valid = gap.delta;
  r.ndcg_valid = util.mean();
  r.ndcg_group1 = gap.group1;
  r.ndcg_group2 = gap.group2;
  return r;
}

}  // namespace

AugmentationResult augment(const TrainedModel& model, const InteractionGraph& train, const Judgements& validation,
                           const GroupPartition& partition, std::span<const UserItem> candidates,
                           const AugmentationConfig& config) {
  config.validate();
  if (!model.augmentable()) {
    throw ContractError("model kind " + to_string(model.config.kind) +
                        " is not augmentable: the augmented graph does not influence its recommendations");
  }
  AugmentationResult result;
  const std::size_t nc = candidates.size();
  std::vector<double> binary(nc, 0.0);
  EpochRecord base = exact_record(model, train, validation, partition, candidates, binary, config.k);
  base.epoch = 0;
  if (nc == 0) {
    result.trace.push_back(base);
    result.stop_reason = StopReason::kEmptyCandidates;
    result.augmented = train;
    spdlog::warn("augment: empty candidate set");
    return result;
  }

  AugmentationObjective objective(model, train, {candidates.begin(), candidates.end()}, partition, validation,
                                  config.loss_options());
  std::vector<double> p(nc, config.p_init);
  const auto initial = objective.evaluate(p, false);
  base.l_fair = initial.l_fair;
  base.l_dist = initial.l_dist;
  base.loss = initial.loss;
  base.n_edges = 0;
  result.trace.push_back(base);

  Adam adam(config.learning_rate);
  EarlyStopper stopper(config.early_stop_min_delta, config.early_stop_patience);
  bool armed = false;
  double best_delta = base.delta_ndcg_valid;
  result.stop_reason = StopReason::kMaxEpochs;
  for (int epoch = 1; epoch <= config.max_epochs; ++epoch) {
    const auto eval = objective.evaluate(p, true);
    for (const auto& w : eval.warnings) {
      if (std::find(result.warnings.begin(), result.warnings.end(), w) == result.warnings.end()) {
        result.warnings.push_back(w);
      }
    }
    adam.step(p, eval.gradient);
    int n_edges = 0;
    for (std::size_t e = 0; e < nc; ++e) {
      binary[e] = sigmoid(p[e]) >= config.discretization_threshold ? 1.0 : 0.0;
      n_edges += binary[e] > 0.0;
    }
    EpochRecord rec = n_edges == 0 ? base : exact_record(model, train, validation, partition, candidates, binary,
                                                         config.k);
    rec.epoch = epoch;
    rec.l_fair = eval.l_fair;
    rec.l_dist = eval.l_dist;
    rec.loss = eval.loss;
    rec.n_edges = n_edges;
    result.trace.push_back(rec);
    spdlog::debug("augment epoch {} loss {:.6g} edges {} delta {:.6g}", epoch, rec.loss, n_edges,
                  rec.delta_ndcg_valid);
    if (rec.delta_ndcg_valid < best_delta) {
      best_delta = rec.delta_ndcg_valid;
      result.best_epoch = epoch;
      result.added_edges = discretize(p, candidates, config.discretization_threshold);
    }
    if (n_edges > 0 && !armed) {
      armed = true;
      stopper.update(base.delta_ndcg_valid);
    }
    if (armed && stopper.update(rec.delta_ndcg_valid)) {
      result.stop_reason = StopReason::kEarlyStop;
      break;
    }
  }
  result.augmented = apply_augmentation(train, result.added_edges);
  return result;
}

std::string trace_csv(const std::vector<EpochRecord>& trace) {
  std::ostringstream out;
  out << "epoch,l_fair,l_dist,loss,n_edges,delta_ndcg_valid,ndcg_valid,ndcg_group1,ndcg_group2\n";
  for (const auto& r : trace) {
    out << fmt::format("{},{:.10g},{:.10g},{:.10g},{},{:.10g},{:.10g},{:.10g},{:.10g}\n", r.epoch, r.l_fair, r.l_dist,
                       r.loss, r.n_edges, r.delta_ndcg_valid, r.ndcg_valid, r.ndcg_group1, r.ndcg_group2);
  }
  return out.str();
}

void export_augmentation(const std::vector<UserItem>& added, const IdMap& ids, const AugmentationManifest& manifest,
                         const std::string& directory) {
  std::filesystem::create_directories(directory);
  const auto dir = std::filesystem::path(directory);
  std::ofstream edges(dir / "added_edges.tsv");
  if (!edges) throw DataError("cannot write " + (dir / "added_edges.tsv").string());
  edges << "user_id\titem_id\n";
  for (const auto& e : added) edges << ids.user_key(e.user) << '\t' << ids.item_key(e.item) << '\n';
  nlohmann::ordered_json j;
  j["model"] = manifest.model;
  j["policy"] = manifest.policy;
  j["psi_user"] = manifest.psi_user ? nlohmann::ordered_json(*manifest.psi_user) : nlohmann::ordered_json();
  j["psi_item"] = manifest.psi_item ? nlohmann::ordered_json(*manifest.psi_item) : nlohmann::ordered_json();
  j["scenario"] = manifest.scenario;
  j["seed"] = manifest.seed;
  j["best_epoch"] = manifest.best_epoch;
  j["n_edges"] = added.size();
  j["edges_file"] = "added_edges.tsv";
  std::ofstream out(dir / "manifest.json");
  if (!out) throw DataError("cannot write " + (dir / "manifest.json").string());
  out << j.dump(2) << '\n';
}

ImportedAugmentation import_augmentation(const std::string& directory, const IdMap& ids) {
  const auto dir = std::filesystem::path(directory);
  std::ifstream in(dir / "manifest.json");
  if (!in) throw DataError("cannot open " + (dir / "manifest.json").string());
  ImportedAugmentation out;
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
    auto& m = out.manifest;
    m.model = j.value("model", "");
    m.policy = j.at("policy").get<std::string>();
    if (!j.at("psi_user").is_null()) m.psi_user = j.at("psi_user").get<double>();
    if (!j.at("psi_item").is_null()) m.psi_item = j.at("psi_item").get<double>();
    m.scenario = j.at("scenario").get<std::string>();
    m.seed = j.at("seed").get<std::uint64_t>();
    m.best_epoch = j.at("best_epoch").get<int>();
    m.n_edges = j.at("n_edges").get<std::size_t>();
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed augmentation manifest: ") + e.what());
  }
  std::ifstream edges(dir / j.value("edges_file", std::string("added_edges.tsv")));
  if (!edges) throw DataError("cannot open added edge list in " + directory);
  std::string line;
  std::getline(edges, line);
  int line_no = 1;
  while (std::getline(edges, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos) throw RowError(line_no, "expected user_id<TAB>item_id");
    const auto u = ids.user_index(line.substr(0, tab));
    const auto i = ids.item_index(line.substr(tab + 1));
    if (!u || !i) throw RowError(line_no, "unknown user or item key");
    out.edges.push_back({*u, *i});
  }
  if (out.edges.size() != out.manifest.n_edges) throw DataError("added edge count disagrees with manifest");
  return out;
}

}  // namespace fairaug
