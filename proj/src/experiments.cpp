#include "fairaug/experiments.hpp"

#include <algorithm>
#include <atomic>
#include <filesystem>
#include <fstream>
#include <limits>
#include <random>
#include <set>
#include <sstream>
#include <thread>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "fairaug/errors.hpp"

namespace fairaug {

namespace {

using Json = nlohmann::json;

// Reads keys of one JSON object and rejects the ones nobody asked for.
class Section {
 public:
  Section(const Json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError("config section '" + path_ + "' must be an object");
  }

  template <typename T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    try {
      out = j_.at(key).get<T>();
    } catch (const Json::exception& e) {
      throw ConfigError("config key '" + path_ + "." + key + "': " + e.what());
    }
  }

  template <typename T>
  void get(const char* key, std::optional<T>& out) {
    seen_.insert(key);
    if (!j_.contains(key) || j_.at(key).is_null()) return;
    T v{};
    get(key, v);
    out = v;
  }

  const Json* child(const char* key) {
    seen_.insert(key);
    return j_.contains(key) ? &j_.at(key) : nullptr;
  }

  void finish() const {
    for (const auto& [k, v] : j_.items()) {
      if (!seen_.count(k)) throw ConfigError("unknown config key '" + path_ + "." + k + "'");
    }
  }

 private:
  const Json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

ModelConfig parse_model(const Json& j, std::uint64_t default_seed, const std::string& path) {
  Section s(j, path);
  ModelConfig m;
  m.seed = default_seed;
  std::string kind = "lightgcn";
  s.get("kind", kind);
  m.kind = parse_model_kind(kind);
  s.get("embedding_size", m.embedding_size);
  s.get("layers", m.layers);
  s.get("negatives_per_positive", m.negatives_per_positive);
  s.get("train_epochs", m.train_epochs);
  s.get("batch_size", m.batch_size);
  s.get("learning_rate", m.learning_rate);
  s.get("l2_reg", m.l2_reg);
  s.get("init_std", m.init_std);
  s.get("seed", m.seed);
  s.get("svd_rank", m.svd_rank);
  s.get("svd_alpha", m.svd_alpha);
  s.get("zeta_gamma", m.zeta_gamma);
  s.get("eval_k", m.eval_k);
  s.finish();
  m.validate();
  return m;
}

OrderedJson model_to_json(const ModelConfig& m) {
  return {{"kind", to_string(m.kind)},
          {"embedding_size", m.embedding_size},
          {"layers", m.layers},
          {"negatives_per_positive", m.negatives_per_positive},
          {"train_epochs", m.train_epochs},
          {"batch_size", m.batch_size},
          {"learning_rate", m.learning_rate},
          {"l2_reg", m.l2_reg},
          {"init_std", m.init_std},
          {"seed", m.seed},
          {"svd_rank", m.svd_rank},
          {"svd_alpha", m.svd_alpha},
          {"zeta_gamma", m.zeta_gamma},
          {"eval_k", m.eval_k}};
}


template <typename Fn>
auto parallel_map(std::size_t n, int threads, Fn fn) -> std::vector<decltype(fn(std::size_t{}))> {
  std::vector<decltype(fn(std::size_t{}))> out(n);
  const int workers = std::max(1, std::min<int>(threads, static_cast<int>(n)));
  if (workers <= 1) {
    for (std::size_t k = 0; k < n; ++k) out[k] = fn(k);
    return out;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t k = next++; k < n; k = next++) out[k] = fn(k);
    });
  }
  for (auto& t : pool) t.join();
  return out;
}

OrderedJson number_or_null(double v) { return std::isfinite(v) ? OrderedJson(v) : OrderedJson(nullptr); }

}  // namespace

PolicyConfig parse_cell_label(const std::string& label) {
  PolicyConfig p;
  std::stringstream ss(label);
  std::string part;
  while (std::getline(ss, part, '+')) {
    bool matched = false;
    for (auto u : kAllUserPolicies) {
      if (to_string(u) == part) {
        p.user_policy = u;
        matched = true;
      }
    }
    for (auto i : kAllItemPolicies) {
      if (to_string(i) == part) {
        p.item_policy = i;
        matched = true;
      }
    }
    if (!matched) throw ConfigError("unknown policy '" + part + "' in cell '" + label + "'");
  }
  return p;
}

void ExperimentConfig::validate() const {
  if (models.empty()) throw ConfigError("config lists no model");
  if (grid.user_policies.empty() && grid.item_policies.empty()) throw ConfigError("config lists no policy cell");
  if (threads < 1) throw ConfigError("threads must be >= 1");
  if (dataset.interactions.empty() && dataset.synthetic.empty()) {
    throw ConfigError("dataset needs an interactions path or a synthetic source");
  }
  if (!dataset.synthetic.empty() && dataset.synthetic != "planted_bias" && dataset.synthetic != "random") {
    throw ConfigError("unknown synthetic dataset '" + dataset.synthetic + "'");
  }
  if (dataset.k_core < 1) throw ConfigError("k_core must be >= 1");
  for (const auto& m : models) m.validate();
  augmentation.validate();
}

ExperimentConfig parse_config(const std::string& json_text) {
  Json root;
  try {
    root = Json::parse(json_text);
  } catch (const Json::exception& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  ExperimentConfig c;
  Section top(root, "config");
  top.get("seed", c.seed);
  top.get("threads", c.threads);
  top.get("output_dir", c.output_dir);
  top.get("attribute", c.attribute);
  top.get("age_threshold", c.age_threshold);

  if (const Json* d = top.child("dataset")) {
    Section s(*d, "dataset");
    auto& ds = c.dataset;
    s.get("name", ds.name);
    s.get("interactions", ds.interactions);
    s.get("attributes", ds.attributes);
    s.get("delimiter", ds.schema.delimiter);
    s.get("has_header", ds.schema.has_header);
    s.get("columns", ds.schema.column_names);
    s.get("user_column", ds.schema.user_column);
    s.get("item_column", ds.schema.item_column);
    s.get("timestamp_column", ds.schema.timestamp_column);
    s.get("rating_column", ds.schema.rating_column);
    s.get("k_core", ds.k_core);
    s.get("two_sided", ds.two_sided);
    s.get("k_item", ds.k_item);
    s.get("synthetic", ds.synthetic);
    if (const Json* p = s.child("planted")) {
      Section ps(*p, "dataset.planted");
      auto& pc = ds.planted;
      ps.get("n_users", pc.n_users);
      ps.get("majority_fraction", pc.majority_fraction);
      ps.get("n_items", pc.n_items);
      ps.get("per_user", pc.per_user);
      ps.get("late_per_user", pc.late_per_user);
      ps.get("niche_fraction", pc.niche_fraction);
      ps.get("early_niche_prob", pc.early_niche_prob);
      ps.get("early_niche_items", pc.early_niche_items);
      ps.get("cross_items", pc.cross_items);
      ps.get("zipf_exponent", pc.zipf_exponent);
      ps.get("seed", pc.seed);
      ps.finish();
    }
    if (const Json* r = s.child("random")) {
      Section rs(*r, "dataset.random");
      rs.get("users", ds.random_users);
      rs.get("items", ds.random_items);
      rs.get("min_per_user", ds.random_min_per_user);
      rs.get("max_per_user", ds.random_max_per_user);
      rs.finish();
    }
    s.finish();
  }

  if (const Json* ms = top.child("models")) {
    if (!ms->is_array()) throw ConfigError("config key 'models' must be an array");
    c.models.clear();
    for (std::size_t k = 0; k < ms->size(); ++k) {
      c.models.push_back(parse_model(ms->at(k), c.seed, "models[" + std::to_string(k) + "]"));
    }
  } else {
    c.models.front().seed = c.seed;
  }

  if (const Json* a = top.child("augmentation")) {
    Section s(*a, "augmentation");
    auto& ac = c.augmentation;
    s.get("max_epochs", ac.max_epochs);
    s.get("early_stop_min_delta", ac.early_stop_min_delta);
    s.get("early_stop_patience", ac.early_stop_patience);
    s.get("beta", ac.beta);
    s.get("tau", ac.tau);
    s.get("learning_rate", ac.learning_rate);
    s.get("discretization_threshold", ac.discretization_threshold);
    s.get("p_init", ac.p_init);
    s.get("k", ac.k);
    std::string strategy = to_string(ac.svd_strategy);
    s.get("svd_gradient", strategy);
    ac.svd_strategy = parse_svd_gradient(strategy);
    s.finish();
  }

  if (const Json* g = top.child("grid")) {
    Section s(*g, "grid");
    std::optional<std::vector<std::string>> users, items;
    s.get("user_policies", users);
    s.get("item_policies", items);
    if (users) {
      c.grid.user_policies.clear();
      for (const auto& u : *users) c.grid.user_policies.push_back(parse_user_policy(u));
    }
    if (items) {
      c.grid.item_policies.clear();
      for (const auto& i : *items) c.grid.item_policies.push_back(parse_item_policy(i));
    }
    s.get("include_none", c.grid.include_none);
    s.get("psi_user", c.grid.psi_user);
    s.get("psi_item", c.grid.psi_item);
    s.get("pagerank_damping", c.grid.pagerank_damping);
    s.finish();
  }

  if (const Json* w = top.child("sweep")) {
    Section s(*w, "sweep");
    s.get("psi_user_values", c.sweep.psi_user_values);
    s.get("psi_item_values", c.sweep.psi_item_values);
    s.get("fixed_psi_user", c.sweep.fixed_psi_user);
    s.get("fixed_psi_item", c.sweep.fixed_psi_item);
    s.get("cell", c.sweep.cell);
    s.finish();
  }

  std::optional<std::vector<std::string>> targets;
  top.get("transfer_targets", targets);
  if (targets) {
    c.transfer_targets.clear();
    for (const auto& t : *targets) c.transfer_targets.push_back(parse_model_kind(t));
  }
  top.finish();
  c.validate();
  return c;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

OrderedJson config_to_json(const ExperimentConfig& c) {
  const auto& ds = c.dataset;
  const auto& pc = ds.planted;
  OrderedJson dataset = {{"name", ds.name},
                         {"interactions", ds.interactions},
                         {"attributes", ds.attributes ? OrderedJson(*ds.attributes) : OrderedJson(nullptr)},
                         {"delimiter", ds.schema.delimiter},
                         {"has_header", ds.schema.has_header},
                         {"columns", ds.schema.column_names},
                         {"user_column", ds.schema.user_column},
                         {"item_column", ds.schema.item_column},
                         {"timestamp_column", ds.schema.timestamp_column},
                         {"rating_column", ds.schema.rating_column ? OrderedJson(*ds.schema.rating_column)
                                                                   : OrderedJson(nullptr)},
                         {"k_core", ds.k_core},
                         {"two_sided", ds.two_sided},
                         {"k_item", ds.k_item},
                         {"synthetic", ds.synthetic},
                         {"planted",
                          {{"n_users", pc.n_users},
                           {"majority_fraction", pc.majority_fraction},
                           {"n_items", pc.n_items},
                           {"per_user", pc.per_user},
                           {"late_per_user", pc.late_per_user},
                           {"niche_fraction", pc.niche_fraction},
                           {"early_niche_prob", pc.early_niche_prob},
                           {"early_niche_items", pc.early_niche_items},
                           {"cross_items", pc.cross_items},
                           {"zipf_exponent", pc.zipf_exponent},
                           {"seed", pc.seed}}},
                         {"random",
                          {{"users", ds.random_users},
                           {"items", ds.random_items},
                           {"min_per_user", ds.random_min_per_user},
                           {"max_per_user", ds.random_max_per_user}}}};
  OrderedJson models = OrderedJson::array();
  for (const auto& m : c.models) models.push_back(model_to_json(m));
  const auto& ac = c.augmentation;
  OrderedJson aug = {{"max_epochs", ac.max_epochs},
                     {"early_stop_min_delta", ac.early_stop_min_delta},
                     {"early_stop_patience", ac.early_stop_patience},
                     {"beta", ac.beta},
                     {"tau", ac.tau},
                     {"learning_rate", ac.learning_rate},
                     {"discretization_threshold", ac.discretization_threshold},
                     {"p_init", ac.p_init},
                     {"k", ac.k},
                     {"svd_gradient", to_string(ac.svd_strategy)}};
  std::vector<std::string> users, items, targets;
  for (auto u : c.grid.user_policies) users.push_back(to_string(u));
  for (auto i : c.grid.item_policies) items.push_back(to_string(i));
  for (auto t : c.transfer_targets) targets.push_back(to_string(t));
  OrderedJson grid = {{"user_policies", users},
                      {"item_policies", items},
                      {"include_none", c.grid.include_none},
                      {"psi_user", c.grid.psi_user},
                      {"psi_item", c.grid.psi_item},
                      {"pagerank_damping", c.grid.pagerank_damping}};
  OrderedJson sweep = {{"psi_user_values", c.sweep.psi_user_values},
                       {"psi_item_values", c.sweep.psi_item_values},
                       {"fixed_psi_user", c.sweep.fixed_psi_user},
                       {"fixed_psi_item", c.sweep.fixed_psi_item},
                       {"cell", c.sweep.cell}};
  return {{"seed", c.seed},
          {"threads", c.threads},
          {"output_dir", c.output_dir},
          {"attribute", c.attribute},
          {"age_threshold", c.age_threshold},
          {"dataset", dataset},
          {"models", models},
          {"augmentation", aug},
          {"grid", grid},
          {"sweep", sweep},
          {"transfer_targets", targets}};
}

std::string config_hash(const ExperimentConfig& config) {
  const Json canonical = Json::parse(config_to_json(config).dump());
  return hex64(fnv1a64(canonical.dump()));
}

Provenance provenance_of(const ExperimentConfig& config) { return {config.seed, config_hash(config)}; }

PreparedData prepare_data(const ExperimentConfig& config) {
  const auto& ds = config.dataset;
  IngestResult raw;
  if (!ds.interactions.empty()) {
    raw = ingest(ds.interactions, ds.schema, ds.attributes);
  } else if (ds.synthetic == "planted_bias") {
    raw = synthetic::planted_bias_corpus(ds.planted);
  } else if (ds.synthetic == "random") {
    raw.interactions = synthetic::random_corpus(ds.random_users, ds.random_items, ds.random_min_per_user,
                                                ds.random_max_per_user, config.seed);
    std::mt19937_64 rng(config.seed ^ 0xa77b);
    std::uniform_int_distribution<int> age(18, 60);
    for (int u = 0; u < ds.random_users; ++u) {
      auto& rec = raw.attributes["u" + std::to_string(u)];
      rec.gender = (rng() & 1) ? "M" : "F";
      rec.age = age(rng);
    }
  } else {
    throw ConfigError("dataset has no source");
  }
  PreparedData out;
  const auto filtered = k_core_filter(raw.interactions, ds.k_core, ds.two_sided, ds.k_item);
  out.n_interactions = filtered.size();
  out.corpus_max = std::numeric_limits<Timestamp>::min();
  for (const auto& it : filtered) out.corpus_max = std::max(out.corpus_max, it.timestamp);
  out.split = temporal_split(filtered);
  out.partition = partition_users(raw.attributes, *out.split.train.ids(), config.attribute, config.age_threshold);
  out.valid = judgements_from(out.split.valid);
  out.test = judgements_from(out.split.test);
  spdlog::info("prepared {}: {} interactions, {} users, {} items", ds.name, out.n_interactions,
               out.split.train.n_users(), out.split.train.n_items());
  return out;
}

ModelRun train_and_label(const PreparedData& data, const ModelConfig& config) {
  ModelRun run;
  run.model = train(data.split.train, data.valid, config);
  const RowMatrix scores = score(run.model, data.split.train);
  const int k = config.eval_k;
  run.valid = evaluate_ndcg(scores, data.split.train, data.valid, k);
  run.test = evaluate_ndcg(scores, data.split.train, data.test, k);
  run.labeled = label_advantage(data.partition, run.valid.values);
  run.valid_gap = delta_ndcg(run.valid, run.labeled);
  run.test_gap = delta_ndcg(run.test, run.labeled);
  return run;
}

std::string to_string(CellStatus s) {
  switch (s) {
    case CellStatus::kOk: return "ok";
    case CellStatus::kSkipped: return "skipped";
    case CellStatus::kFailed: return "failed";
  }
  return "?";
}

CellResult run_cell(const PreparedData& data, const ModelRun& run, const PolicyConfig& policy,
                    const AugmentationConfig& config) {
  CellResult r;
  r.label = policy.label();
  r.policy = policy;
  r.valid_delta_base = run.valid_gap.delta;
  r.valid_delta = run.valid_gap.delta;
  r.test_ndcg = run.test.mean();
  r.test_delta = run.test_gap.delta;
  r.test_group1 = run.test_gap.group1;
  r.test_group2 = run.test_gap.group2;
  r.test_utility = run.test;
  try {
    const auto sampled = sample(policy, data.split.train, run.labeled, run.valid.values);
    if (sampled.users) r.n_users_sampled = sampled.users->size();
    if (sampled.items) r.n_items_sampled = sampled.items->size();
    if ((sampled.users && sampled.users->empty()) || (sampled.items && sampled.items->empty())) {
      r.status = CellStatus::kSkipped;
      r.message = "empty sample";
      return r;
    }
    const auto candidates = build_candidates(data.split.train, run.labeled, sampled, policy.scenario());
    r.n_candidates = candidates.edges.size();
    const auto res = augment(run.model, data.split.train, data.valid, run.labeled, candidates.edges, config);
    r.best_epoch = res.best_epoch;
    r.epochs_run = static_cast<int>(res.trace.size()) - 1;
    r.stop_reason = to_string(res.stop_reason);
    r.added_edges = res.added_edges;
    r.valid_delta = res.trace.at(res.best_epoch).delta_ndcg_valid;
    r.trace = res.trace;
    const auto augmented = apply_augmentation(data.split.train, res.added_edges, data.corpus_max);
    const RowMatrix scores = score(run.model, augmented);
    r.test_utility = evaluate_ndcg(scores, data.split.train, data.test, config.k);
    const auto gap = delta_ndcg(r.test_utility, run.labeled);
    r.test_ndcg = r.test_utility.mean();
    r.test_delta = gap.delta;
    r.test_group1 = gap.group1;
    r.test_group2 = gap.group2;
  } catch (const EmptyCandidatesError& e) {
    r.status = CellStatus::kSkipped;
    r.message = e.what();
  } catch (const std::exception& e) {
    r.status = CellStatus::kFailed;
    r.message = e.what();
    spdlog::warn("cell {} failed: {}", r.label, e.what());
  }
  return r;
}

std::vector<PolicyConfig> grid_cells(const GridConfig& grid) {
  std::vector<std::optional<UserPolicy>> rows(grid.user_policies.begin(), grid.user_policies.end());
  std::vector<std::optional<ItemPolicy>> cols(grid.item_policies.begin(), grid.item_policies.end());
  if (grid.include_none) {
    rows.push_back(std::nullopt);
    cols.push_back(std::nullopt);
  }
  std::vector<PolicyConfig> out;
  for (const auto& u : rows) {
    for (const auto& i : cols) {
      if (!u && !i) continue;
      PolicyConfig p;
      p.user_policy = u;
      p.item_policy = i;
      p.psi_user = grid.psi_user;
      p.psi_item = grid.psi_item;
      p.pagerank_damping = grid.pagerank_damping;
      out.push_back(p);
    }
  }
  return out;
}

std::vector<CellResult> run_cells(const PreparedData& data, const ModelRun& run,
                                  const std::vector<PolicyConfig>& cells, const AugmentationConfig& config,
                                  int threads) {
  return parallel_map(cells.size(), threads, [&](std::size_t k) { return run_cell(data, run, cells[k], config); });
}

BenchmarkResult run_benchmark(const ExperimentConfig& config) { return run_benchmark(config, prepare_data(config)); }

BenchmarkResult run_benchmark(const ExperimentConfig& config, const PreparedData& data) {
  BenchmarkResult out;
  const auto cells = grid_cells(config.grid);
  Report& rep = out.report;
  rep.type = "benchmark";
  rep.provenance = provenance_of(config);
  rep.table.columns = {"dataset", "attribute", "model",   "row",        "policy",       "ndcg",
                       "delta",   "p_value",   "significant", "fairness_improved", "utility_improved",
                       "regression", "n_added", "manifest"};
  OrderedJson per_model = OrderedJson::array();
  for (const auto& mc : config.models) {
    if (!is_augmentable(mc.kind)) {
      spdlog::info("benchmark skips non-augmentable model {}", to_string(mc.kind));
      continue;
    }
    const auto run = train_and_label(data, mc);
    auto results = run_cells(data, run, cells, config.augmentation, config.threads);
    BenchmarkRow row;
    row.model = to_string(mc.kind);
    row.base_ndcg = run.test.mean();
    row.base_delta = run.test_gap.delta;
    row.best_policy = "none";
    row.aug_ndcg = row.base_ndcg;
    row.aug_delta = row.base_delta;
    const CellResult* best = nullptr;
    for (const auto& r : results) {
      if (r.status != CellStatus::kOk) continue;
      if (!best || r.valid_delta < best->valid_delta) best = &r;
    }
    if (best) {
      row.best_policy = best->label;
      row.aug_ndcg = best->test_ndcg;
      row.aug_delta = best->test_delta;
      row.n_added = best->added_edges.size();
      std::vector<double> a, b;
      for (std::size_t u = 0; u < run.test.values.size(); ++u) {
        if (!run.test.evaluated(static_cast<int>(u))) continue;
        a.push_back(best->test_utility.values[u]);
        b.push_back(run.test.values[u]);
      }
      try {
        row.p_value = wilcoxon_signed_rank(a, b).p_value;
        row.significant = *row.p_value < 0.05;
      } catch (const DataError&) {
        row.p_value.reset();
      }
      AugmentationManifest m;
      m.model = row.model;
      m.policy = best->label;
      if (best->policy.user_policy) m.psi_user = best->policy.psi_user;
      if (best->policy.item_policy) m.psi_item = best->policy.psi_item;
      m.scenario = to_string(best->policy.scenario());
      m.seed = mc.seed;
      m.best_epoch = best->best_epoch;
      m.n_edges = best->added_edges.size();
      row.manifest = "augmentations/" + row.model;
      export_augmentation(best->added_edges, *data.split.train.ids(), m,
                          (std::filesystem::path(config.output_dir) / row.manifest).string());
    }
    row.fairness_improved = row.aug_delta < row.base_delta;
    row.utility_improved = row.aug_ndcg > row.base_ndcg;
    row.regression = row.aug_delta > row.base_delta;
    const auto pv = row.p_value ? OrderedJson(*row.p_value) : OrderedJson(nullptr);
    rep.table.add_row({config.dataset.name, config.attribute, row.model, "Base", "", row.base_ndcg, row.base_delta,
                       nullptr, nullptr, nullptr, nullptr, nullptr, 0, ""});
    rep.table.add_row({config.dataset.name, config.attribute, row.model, "Aug", row.best_policy, row.aug_ndcg,
                       row.aug_delta, pv, row.significant, row.fairness_improved, row.utility_improved,
                       row.regression, row.n_added, row.manifest});
    OrderedJson cell_json = OrderedJson::array();
    for (const auto& r : results) {
      cell_json.push_back({{"policy", r.label},
                           {"scenario", to_string(r.policy.scenario())},
                           {"status", to_string(r.status)},
                           {"message", r.message},
                           {"n_candidates", r.n_candidates},
                           {"best_epoch", r.best_epoch},
                           {"n_added", r.added_edges.size()},
                           {"valid_delta", number_or_null(r.valid_delta)},
                           {"test_ndcg", number_or_null(r.test_ndcg)},
                           {"test_delta", number_or_null(r.test_delta)}});
    }
    per_model.push_back({{"model", row.model},
                         {"advantaged_group", run.labeled.advantaged == 1 ? run.labeled.group1_label
                                                                          : run.labeled.group2_label},
                         {"base_valid_delta", run.valid_gap.delta},
                         {"cells", cell_json}});
    out.rows.push_back(row);
    out.cells.push_back(std::move(results));
  }
  rep.details["models"] = per_model;
  return out;
}

Report run_policy_grid(const ExperimentConfig& config, const PreparedData& data, const ModelRun& run) {
  const auto cells = grid_cells(config.grid);
  const auto results = run_cells(data, run, cells, config.augmentation, config.threads);
  Report rep;
  rep.type = "policy_grid";
  rep.provenance = provenance_of(config);
  rep.table.columns = {"model", "user_policy", "item_policy", "scenario", "status", "n_candidates",
                       "n_added", "valid_delta", "test_ndcg", "test_delta"};
  const std::string model = to_string(run.model.config.kind);
  rep.table.add_row({model, "none", "none", "base", "ok", 0, 0, run.valid_gap.delta, run.test.mean(),
                     run.test_gap.delta});
  for (const auto& r : results) {
    rep.table.add_row({model, r.policy.user_policy ? to_string(*r.policy.user_policy) : "none",
                       r.policy.item_policy ? to_string(*r.policy.item_policy) : "none",
                       to_string(r.policy.scenario()), to_string(r.status), r.n_candidates, r.added_edges.size(),
                       number_or_null(r.valid_delta), number_or_null(r.test_ndcg), number_or_null(r.test_delta)});
  }
  std::vector<std::string> row_names, col_names;
  for (auto u : config.grid.user_policies) row_names.push_back(to_string(u));
  for (auto i : config.grid.item_policies) col_names.push_back(to_string(i));
  if (config.grid.include_none) {
    row_names.push_back("none");
    col_names.push_back("none");
  }
  OrderedJson matrix = OrderedJson::array();
  std::size_t next = 0;
  for (std::size_t a = 0; a < row_names.size(); ++a) {
    OrderedJson line = OrderedJson::array();
    for (std::size_t b = 0; b < col_names.size(); ++b) {
      if (row_names[a] == "none" && col_names[b] == "none") {
        line.push_back(run.test_gap.delta);
        continue;
      }
      const auto& r = results[next++];
      line.push_back(r.status == CellStatus::kOk ? number_or_null(r.test_delta) : OrderedJson(nullptr));
    }
    matrix.push_back(line);
  }
  rep.details = {{"rows", row_names}, {"columns", col_names}, {"test_delta", matrix}};
  return rep;
}

SweepResult run_psi_sweep(const ExperimentConfig& config, const PreparedData& data, const ModelRun& run) {
  const PolicyConfig base = parse_cell_label(config.sweep.cell);
  if (!base.user_policy || !base.item_policy) {
    throw ConfigError("psi sweep cell '" + config.sweep.cell + "' needs a user and an item policy");
  }
  SweepResult out;
  std::vector<PolicyConfig> cells;
  for (double psi : config.sweep.psi_user_values) {
    PolicyConfig p = base;
    p.psi_user = psi;
    p.psi_item = config.sweep.fixed_psi_item;
    p.pagerank_damping = config.grid.pagerank_damping;
    cells.push_back(p);
    out.points.push_back({"psi_user", p.psi_user, p.psi_item, {}});
  }
  for (double psi : config.sweep.psi_item_values) {
    PolicyConfig p = base;
    p.psi_user = config.sweep.fixed_psi_user;
    p.psi_item = psi;
    p.pagerank_damping = config.grid.pagerank_damping;
    cells.push_back(p);
    out.points.push_back({"psi_item", p.psi_user, p.psi_item, {}});
  }
  auto results = run_cells(data, run, cells, config.augmentation, config.threads);
  Report& rep = out.report;
  rep.type = "psi_sweep";
  rep.provenance = provenance_of(config);
  rep.table.columns = {"model",        "cell",    "family",  "psi_user", "psi_item",   "n_users_sampled",
                       "n_items_sampled", "n_candidates", "status", "n_added", "valid_delta", "test_ndcg",
                       "test_delta"};
  const std::string model = to_string(run.model.config.kind);
  for (std::size_t k = 0; k < results.size(); ++k) {
    auto& pt = out.points[k];
    pt.cell = std::move(results[k]);
    const auto& r = pt.cell;
    rep.table.add_row({model, config.sweep.cell, pt.family, pt.psi_user, pt.psi_item, r.n_users_sampled,
                       r.n_items_sampled, r.n_candidates, to_string(r.status), r.added_edges.size(),
                       number_or_null(r.valid_delta), number_or_null(r.test_ndcg), number_or_null(r.test_delta)});
  }
  rep.details = {{"base_test_ndcg", run.test.mean()}, {"base_test_delta", run.test_gap.delta}};
  return out;
}

Report run_transfer(const ExperimentConfig& config, const PreparedData& data, const std::string& manifest_dir,
                    ModelKind target) {
  if (is_augmentable(target)) {
    throw ContractError("transfer target " + to_string(target) + " is augmentable; transfer needs a model that "
                        "does not consume the graph at inference");
  }
  const auto imported = import_augmentation(manifest_dir, *data.split.train.ids());
  ModelConfig mc;
  mc.kind = target;
  mc.seed = config.seed;
  bool found = false;
  for (const auto& m : config.models) {
    if (m.kind == target) {
      mc = m;
      found = true;
      break;
    }
  }
  if (!found && !config.models.empty()) {
    mc = config.models.front();
    mc.kind = target;
  }
  const auto augmented = apply_augmentation(data.split.train, imported.edges, data.corpus_max);
  const auto base_run = train_and_label(data, mc);
  const TrainedModel aug_model = train(augmented, data.valid, mc);
  const auto aug_test = evaluate_ndcg(score(aug_model, augmented), data.split.train, data.test, mc.eval_k);
  const auto aug_gap = delta_ndcg(aug_test, base_run.labeled);
  const std::string kind = target == ModelKind::kMfBpr ? "strong" : "weak";
  Report rep;
  rep.type = "transfer";
  rep.provenance = provenance_of(config);
  rep.table.columns = {"target", "transferability", "row", "policy", "n_added", "ndcg", "delta",
                       "ndcg_group1", "ndcg_group2"};
  rep.table.add_row({to_string(target), kind, "Base", "", 0, base_run.test.mean(), base_run.test_gap.delta,
                     base_run.test_gap.group1, base_run.test_gap.group2});
  rep.table.add_row({to_string(target), kind, "Aug", imported.manifest.policy, imported.edges.size(),
                     aug_test.mean(), aug_gap.delta, aug_gap.group1, aug_gap.group2});
  rep.details = {{"source_model", imported.manifest.model},
                 {"ndcg_change", aug_test.mean() - base_run.test.mean()},
                 {"delta_change", aug_gap.delta - base_run.test_gap.delta}};
  return rep;
}

Report run_overlap(const ExperimentConfig& config, const PreparedData& data, const ModelRun& run) {
  std::vector<NamedSample> users, items;
  for (auto u : kAllUserPolicies) {
    PolicyConfig p;
    p.user_policy = u;
    p.psi_user = config.grid.psi_user;
    const auto s = sample(p, data.split.train, run.labeled, run.valid.values);
    users.push_back({to_string(u), SampleKind::kUsers, {s.users->begin(), s.users->end()}});
  }
  for (auto i : kAllItemPolicies) {
    PolicyConfig p;
    p.item_policy = i;
    p.psi_item = config.grid.psi_item;
    p.pagerank_damping = config.grid.pagerank_damping;
    const auto s = sample(p, data.split.train, run.labeled, run.valid.values);
    items.push_back({to_string(i), SampleKind::kItems, {s.items->begin(), s.items->end()}});
  }
  const auto um = policy_overlap(users);
  const auto im = policy_overlap(items);
  Report rep;
  rep.type = "overlap";
  rep.provenance = provenance_of(config);
  rep.table.columns = {"model", "kind", "policy_a", "policy_b", "size_a", "size_b", "jaccard"};
  const std::string model = to_string(run.model.config.kind);
  auto emit = [&](const std::vector<NamedSample>& samples, const OverlapMatrix& m, const char* kind) {
    for (std::size_t a = 0; a < samples.size(); ++a) {
      for (std::size_t b = 0; b < samples.size(); ++b) {
        rep.table.add_row({model, kind, m.names[a], m.names[b], samples[a].members.size(),
                           samples[b].members.size(), m.values[a][b]});
      }
    }
  };
  emit(users, um, "users");
  emit(items, im, "items");
  rep.details = {{"user_policies", um.names}, {"user_jaccard", um.values},
                 {"item_policies", im.names}, {"item_jaccard", im.values}};
  return rep;
}

}  // namespace fairaug
