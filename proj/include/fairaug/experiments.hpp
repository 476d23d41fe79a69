#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "fairaug/augmenter.hpp"
#include "fairaug/data.hpp"
#include "fairaug/metrics.hpp"
#include "fairaug/models.hpp"
#include "fairaug/policies.hpp"
#include "fairaug/report.hpp"
#include "fairaug/synthetic.hpp"

namespace fairaug {

struct DatasetConfig {
  // File source.
  std::string interactions;
  std::optional<std::string> attributes;
  Schema schema;
  // Synthetic source, used when `interactions` is empty: "planted_bias" or
  // "random".
  std::string synthetic;
  synthetic::PlantedBiasConfig planted;
  int random_users = 60;
  int random_items = 50;
  int random_min_per_user = 5;
  int random_max_per_user = 15;

  int k_core = 5;
  bool two_sided = false;
  int k_item = 1;
  std::string name = "dataset";
};

struct GridConfig {
  std::vector<UserPolicy> user_policies{std::begin(kAllUserPolicies), std::end(kAllUserPolicies)};
  std::vector<ItemPolicy> item_policies{std::begin(kAllItemPolicies), std::end(kAllItemPolicies)};
  // Adds the "none" row and column (single-component cells).
  bool include_none = true;
  double psi_user = 0.35;
  double psi_item = 0.20;
  double pagerank_damping = 0.85;
};

struct SweepConfig {
  std::vector<double> psi_user_values{0.25, 0.30, 0.35, 0.40, 0.45};
  std::vector<double> psi_item_values{0.10, 0.15, 0.20, 0.25, 0.30};
  double fixed_psi_user = 0.35;
  double fixed_psi_item = 0.20;
  // "FR+PR" style cell label; both components are required.
  std::string cell = "ZN+IP";
};

struct ExperimentConfig {
  DatasetConfig dataset;
  std::string attribute = "gender";
  double age_threshold = 33.0;
  std::vector<ModelConfig> models{ModelConfig{}};
  AugmentationConfig augmentation;
  GridConfig grid;
  SweepConfig sweep;
  std::vector<ModelKind> transfer_targets{ModelKind::kSvdGcnS, ModelKind::kMfBpr};
  std::uint64_t seed = 0;
  int threads = 1;
  std::string output_dir = "out";

  // Throws ConfigError when no model or no policy cell is configured.
  void validate() const;
};

// "ZN", "IP", "FR+PR" -> policy config with default psi values.
PolicyConfig parse_cell_label(const std::string& label);

// Parses the JSON config format; unknown keys throw ConfigError.
ExperimentConfig parse_config(const std::string& json_text);
ExperimentConfig load_config(const std::string& path);
OrderedJson config_to_json(const ExperimentConfig& config);
// FNV-1a over the canonical (sorted-key) JSON of the config.
std::string config_hash(const ExperimentConfig& config);
Provenance provenance_of(const ExperimentConfig& config);

struct PreparedData {
  DatasetSplit split;
  GroupPartition partition;  // unlabeled
  Judgements valid;
  Judgements test;
  Timestamp corpus_max = 0;
  std::size_t n_interactions = 0;
};

// Ingest (or synthesize), k-core filter, temporal split, group partition.
PreparedData prepare_data(const ExperimentConfig& config);

struct ModelRun {
  TrainedModel model;
  GroupPartition labeled;  // advantage from validation NDCG
  UtilityVector valid;
  UtilityVector test;
  GroupGap valid_gap;
  GroupGap test_gap;
};

ModelRun train_and_label(const PreparedData& data, const ModelConfig& config);

enum class CellStatus { kOk, kSkipped, kFailed };
std::string to_string(CellStatus s);

struct CellResult {
  std::string label;  // "ZN", "IP", "FR+PR"
  PolicyConfig policy;
  CellStatus status = CellStatus::kOk;
  std::string message;
  std::size_t n_users_sampled = 0;
  std::size_t n_items_sampled = 0;
  std::size_t n_candidates = 0;
  int best_epoch = 0;
  int epochs_run = 0;
  std::string stop_reason;
  std::vector<UserItem> added_edges;
  double valid_delta_base = 0.0;
  double valid_delta = 0.0;
  double test_ndcg = 0.0;
  double test_delta = 0.0;
  double test_group1 = 0.0;
  double test_group2 = 0.0;
  UtilityVector test_utility;
  std::vector<EpochRecord> trace;
};

// Samples, builds candidates, augments on train + validation, then evaluates
// the materialized graph on test. Failures are captured in the result.
CellResult run_cell(const PreparedData& data, const ModelRun& run, const PolicyConfig& policy,
                    const AugmentationConfig& config);

// Grid cells in row-major order: user policies (then none) x item policies
// (then none), skipping (none, none).
std::vector<PolicyConfig> grid_cells(const GridConfig& grid);

// Runs `tasks` on at most `threads` workers; results keep task order.
std::vector<CellResult> run_cells(const PreparedData& data, const ModelRun& run,
                                  const std::vector<PolicyConfig>& cells, const AugmentationConfig& config,
                                  int threads);

struct BenchmarkRow {
  std::string model;
  double base_ndcg = 0.0;
  double base_delta = 0.0;
  std::string best_policy;
  double aug_ndcg = 0.0;
  double aug_delta = 0.0;
  std::optional<double> p_value;
  bool significant = false;
  bool fairness_improved = false;
  bool utility_improved = false;
  bool regression = false;
  std::size_t n_added = 0;
  std::string manifest;  // relative directory of the exported augmentation
};

struct BenchmarkResult {
  std::vector<BenchmarkRow> rows;
  std::vector<std::vector<CellResult>> cells;  // per model
  Report report;
};

// RQ1. Exports the best cell's augmentation per model under
// <output_dir>/augmentations/<model>.
BenchmarkResult run_benchmark(const ExperimentConfig& config);
BenchmarkResult run_benchmark(const ExperimentConfig& config, const PreparedData& data);

// RQ2: test delta per cell plus the base cell.
Report run_policy_grid(const ExperimentConfig& config, const PreparedData& data, const ModelRun& run);

struct SweepPoint {
  std::string family;  // "psi_user" or "psi_item"
  double psi_user = 0.0;
  double psi_item = 0.0;
  CellResult cell;
};

struct SweepResult {
  std::vector<SweepPoint> points;
  Report report;
};

// RQ3. Throws ConfigError unless the cell has both components.
SweepResult run_psi_sweep(const ExperimentConfig& config, const PreparedData& data, const ModelRun& run);

// RQ4. Throws ContractError for augmentable targets.
Report run_transfer(const ExperimentConfig& config, const PreparedData& data, const std::string& manifest_dir,
                    ModelKind target);

// Jaccard overlap of the sampled sets of every user and item policy.
Report run_overlap(const ExperimentConfig& config, const PreparedData& data, const ModelRun& run);

}  // namespace fairaug
