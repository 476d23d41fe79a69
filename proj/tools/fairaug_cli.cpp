// fairaug command-line front end. Exit codes: 0 success, 1 configuration
// error, 2 data error, 3 numeric failure.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "fairaug/experiments.hpp"

using namespace fairaug;
namespace fs = std::filesystem;

namespace {

struct Globals {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::optional<int> threads;
  std::string log_level = "info";
};

ExperimentConfig load(const Globals& g) {
  if (g.config_path.empty()) throw ConfigError("--config is required for this command");
  auto c = load_config(g.config_path);
  if (g.seed) {
    c.seed = *g.seed;
    for (auto& m : c.models) m.seed = *g.seed;
  }
  if (!g.out.empty()) c.output_dir = g.out;
  if (g.threads) c.threads = *g.threads;
  c.validate();
  return c;
}

const ModelConfig& first_augmentable(const ExperimentConfig& c) {
  for (const auto& m : c.models) {
    if (is_augmentable(m.kind)) return m;
  }
  throw ConfigError("no augmentable model (lightgcn or svdgcn) in the config");
}

void write_text(const fs::path& path, const std::string& text) {
  fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << text;
}

void finish(const Report& r, const ExperimentConfig& c, const std::string& stem) {
  emit_report(r, c.output_dir, stem);
  std::cout << render_text(r);
  spdlog::info("wrote {}/{}.{{json,txt,csv}}", c.output_dir, stem);
}

int cmd_ingest(const Globals& g) {
  const auto c = load(g);
  const auto data = prepare_data(c);
  const auto dir = fs::path(c.output_dir) / "split";
  export_split(data.split, dir.string());
  Report r;
  r.type = "ingest";
  r.provenance = provenance_of(c);
  r.table.columns = {"dataset", "users", "items", "interactions", "train", "valid", "test", "group1", "group2"};
  r.table.add_row({c.dataset.name, data.split.train.n_users(), data.split.train.n_items(), data.n_interactions,
                   data.split.train.n_edges(), data.split.valid.n_edges(), data.split.test.n_edges(),
                   data.partition.group1.size(), data.partition.group2.size()});
  r.details = {{"split_dir", dir.string()},
               {"group1_label", data.partition.group1_label},
               {"group2_label", data.partition.group2_label}};
  finish(r, c, "ingest");
  return 0;
}

int cmd_train(const Globals& g) {
  const auto c = load(g);
  const auto data = prepare_data(c);
  Report r;
  r.type = "train";
  r.provenance = provenance_of(c);
  r.table.columns = {"model", "best_epoch", "valid_ndcg", "valid_delta", "test_ndcg", "test_delta", "advantaged",
                     "checkpoint"};
  for (const auto& mc : c.models) {
    const auto run = train_and_label(data, mc);
    const auto path = fs::path(c.output_dir) / "models" / (to_string(mc.kind) + ".ckpt");
    fs::create_directories(path.parent_path());
    save_checkpoint(run.model, path.string());
    r.table.add_row({to_string(mc.kind), run.model.best_epoch, run.valid.mean(), run.valid_gap.delta,
                     run.test.mean(), run.test_gap.delta,
                     run.labeled.advantaged == 1 ? run.labeled.group1_label : run.labeled.group2_label,
                     path.string()});
  }
  finish(r, c, "train");
  return 0;
}

int cmd_augment(const Globals& g, const std::string& cell) {
  const auto c = load(g);
  const auto data = prepare_data(c);
  const auto& mc = first_augmentable(c);
  const auto run = train_and_label(data, mc);
  auto policy = parse_cell_label(cell);
  policy.psi_user = c.grid.psi_user;
  policy.psi_item = c.grid.psi_item;
  policy.pagerank_damping = c.grid.pagerank_damping;
  const auto res = run_cell(data, run, policy, c.augmentation);
  if (res.status == CellStatus::kFailed) throw NumericError("augmentation failed: " + res.message);
  const std::string name = to_string(mc.kind) + "-" + policy.label();
  const auto dir = fs::path(c.output_dir) / "augmentations" / name;
  AugmentationManifest m;
  m.model = to_string(mc.kind);
  m.policy = policy.label();
  if (policy.user_policy) m.psi_user = policy.psi_user;
  if (policy.item_policy) m.psi_item = policy.psi_item;
  m.scenario = to_string(policy.scenario());
  m.seed = mc.seed;
  m.best_epoch = res.best_epoch;
  m.n_edges = res.added_edges.size();
  export_augmentation(res.added_edges, *data.split.train.ids(), m, dir.string());
  write_text(dir / "trace.csv", trace_csv(res.trace));
  Report r;
  r.type = "augment";
  r.provenance = provenance_of(c);
  r.table.columns = {"model", "policy", "status", "n_candidates", "best_epoch", "epochs_run", "stop_reason",
                     "n_added", "valid_delta_base", "valid_delta", "test_ndcg", "test_delta"};
  r.table.add_row({m.model, m.policy, to_string(res.status), res.n_candidates, res.best_epoch, res.epochs_run,
                   res.stop_reason, res.added_edges.size(), run.valid_gap.delta, res.valid_delta, res.test_ndcg,
                   res.test_delta});
  r.details = {{"manifest", dir.string()}, {"message", res.message}};
  finish(r, c, "augment");
  return 0;
}

int cmd_transfer(const Globals& g, std::string manifest, const std::vector<std::string>& targets) {
  const auto c = load(g);
  const auto data = prepare_data(c);
  if (manifest.empty()) {
    manifest = (fs::path(c.output_dir) / "augmentations" / to_string(first_augmentable(c).kind)).string();
  }
  std::vector<ModelKind> kinds;
  for (const auto& t : targets) kinds.push_back(parse_model_kind(t));
  if (kinds.empty()) kinds = c.transfer_targets;
  for (auto kind : kinds) finish(run_transfer(c, data, manifest, kind), c, "transfer_" + to_string(kind));
  return 0;
}

int cmd_report(const std::string& input, const std::string& format) {
  std::ifstream in(input);
  if (!in) throw DataError("cannot open " + input);
  std::stringstream ss;
  ss << in.rdbuf();
  const auto r = parse_report(ss.str());
  if (format == "json") {
    std::cout << render_json(r);
  } else if (format == "csv") {
    std::cout << render_csv(r);
  } else {
    std::cout << render_text(r);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Fair graph augmentation for bipartite recommenders"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("--config", g.config_path, "JSON experiment config")->check(CLI::ExistingFile);
  app.add_option("--seed", g.seed, "override the config and model seeds");
  app.add_option("--out", g.out, "override the output directory");
  app.add_option("--threads", g.threads, "worker threads for policy cells")->check(CLI::PositiveNumber);
  app.add_option("--log-level", g.log_level, "trace, debug, info, warn, error, off")
      ->check(CLI::IsMember({"trace", "debug", "info", "warn", "error", "critical", "off"}));

  auto* ingest = app.add_subcommand("ingest", "filter, split and export the dataset");
  auto* train_cmd = app.add_subcommand("train", "train every configured model and save checkpoints");
  auto* augment_cmd = app.add_subcommand("augment", "augment the first augmentable model with one policy cell");
  std::string cell = "ZN";
  augment_cmd->add_option("--policy", cell, "cell label such as ZN, IP or FR+PR");
  auto* bench = app.add_subcommand("benchmark", "base vs augmented test metrics per model");
  auto* grid = app.add_subcommand("policy-grid", "test delta for every policy cell");
  auto* sweep = app.add_subcommand("psi-sweep", "vary psi_user and psi_item for one cell");
  std::string sweep_cell;
  sweep->add_option("--cell", sweep_cell, "cell label with user and item components");
  auto* transfer = app.add_subcommand("transfer", "retrain non-augmentable models on an augmented graph");
  std::string manifest;
  std::vector<std::string> targets;
  transfer->add_option("--manifest", manifest, "augmentation directory (defaults to the benchmark export)");
  transfer->add_option("--target", targets, "svdgcn_s and/or mf_bpr");
  auto* overlap = app.add_subcommand("overlap", "Jaccard overlap between policy samples");
  auto* report = app.add_subcommand("report", "re-render a JSON report");
  std::string input, format = "text";
  report->add_option("input", input, "report JSON file")->required()->check(CLI::ExistingFile);
  report->add_option("--format", format, "text, csv or json")->check(CLI::IsMember({"text", "csv", "json"}));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }
  spdlog::set_level(spdlog::level::from_str(g.log_level));

  try {
    if (*ingest) return cmd_ingest(g);
    if (*train_cmd) return cmd_train(g);
    if (*augment_cmd) return cmd_augment(g, cell);
    if (*bench) {
      const auto c = load(g);
      finish(run_benchmark(c).report, c, "benchmark");
      return 0;
    }
    if (*grid || *sweep || *overlap) {
      auto c = load(g);
      if (!sweep_cell.empty()) c.sweep.cell = sweep_cell;
      const auto data = prepare_data(c);
      const auto run = train_and_label(data, first_augmentable(c));
      if (*grid) finish(run_policy_grid(c, data, run), c, "policy_grid");
      if (*sweep) finish(run_psi_sweep(c, data, run).report, c, "psi_sweep");
      if (*overlap) finish(run_overlap(c, data, run), c, "overlap");
      return 0;
    }
    if (*transfer) return cmd_transfer(g, manifest, targets);
    if (*report) return cmd_report(input, format);
  } catch (const ConfigError& e) {
    spdlog::error("config error: {}", e.what());
    return 1;
  } catch (const ContractError& e) {
    spdlog::error("invalid request: {}", e.what());
    return 1;
  } catch (const DataError& e) {
    spdlog::error("data error: {}", e.what());
    return 2;
  } catch (const NumericError& e) {
    spdlog::error("numeric failure: {}", e.what());
    return 3;
  } catch (const std::exception& e) {
    // Remaining failures are I/O (filesystem, streams).
    spdlog::error("{}", e.what());
    return 2;
  }
  return 1;
}
