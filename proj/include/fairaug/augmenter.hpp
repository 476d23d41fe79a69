#pragma once

#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fairaug/data.hpp"
#include "fairaug/grad.hpp"
#include "fairaug/metrics.hpp"
#include "fairaug/models.hpp"

namespace fairaug {

struct AugmentationConfig {
  int max_epochs = 800;
  double early_stop_min_delta = 1e-4;
  int early_stop_patience = 7;
  double beta = 0.5;
  double tau = 0.1;
  double learning_rate = 0.01;
  double discretization_threshold = 0.5;
  double p_init = -1.0;
  int k = 10;
  SvdGradient svd_strategy = SvdGradient::kFiniteDifference;

  // Throws ConfigError on out-of-range values.
  void validate() const;
  LossOptions loss_options() const;
};

// Stops after `patience` consecutive updates that fail to improve on the best
// value seen so far by at least `min_delta`.
class EarlyStopper {
 public:
  EarlyStopper(double min_delta, int patience);

  // Returns true when the run should stop after this value.
  bool update(double value);

  int stale() const { return stale_; }
  double best() const { return best_; }

 private:
  double min_delta_;
  int patience_;
  int stale_ = 0;
  double best_ = std::numeric_limits<double>::infinity();
};

struct EpochRecord {
  int epoch = 0;
  double l_fair = 0.0;
  double l_dist = 0.0;
  double loss = 0.0;
  int n_edges = 0;
  double delta_ndcg_valid = 0.0;
  double ndcg_valid = 0.0;
  double ndcg_group1 = 0.0;
  double ndcg_group2 = 0.0;
};

enum class StopReason { kEarlyStop, kMaxEpochs, kEmptyCandidates };
std::string to_string(StopReason r);

struct AugmentationResult {
  int best_epoch = 0;
  std::vector<UserItem> added_edges;
  InteractionGraph augmented;
  // Epoch 0 is the unaugmented model.
  std::vector<EpochRecord> trace;
  StopReason stop_reason = StopReason::kMaxEpochs;
  std::vector<std::string> warnings;
};

// Candidates whose sigmoid(p) reaches the threshold (inclusive).
std::vector<UserItem> discretize(std::span<const double> p, std::span<const UserItem> candidates,
                                 double threshold = 0.5);

// Learns p against the frozen model using validation relevance only. Epochs
// run until max_epochs or early stop; the stopper is armed once the
// discretized set first becomes nonempty. Throws ContractError for
// non-augmentable models.
AugmentationResult augment(const TrainedModel& model, const InteractionGraph& train, const Judgements& validation,
                           const GroupPartition& partition, std::span<const UserItem> candidates,
                           const AugmentationConfig& config);

// Graph plus `added`. Added edges carry `timestamp`, or the graph's max
// timestamp when unset. Throws ContractError on duplicates.
InteractionGraph apply_augmentation(const InteractionGraph& graph, std::span<const UserItem> added,
                                    std::optional<Timestamp> timestamp = std::nullopt);

// CSV with header epoch,l_fair,l_dist,loss,n_edges,delta_ndcg_valid,ndcg_valid,ndcg_group1,ndcg_group2.
std::string trace_csv(const std::vector<EpochRecord>& trace);

struct AugmentationManifest {
  std::string model;
  std::string policy;
  std::optional<double> psi_user;
  std::optional<double> psi_item;
  std::string scenario;
  std::uint64_t seed = 0;
  int best_epoch = 0;
  std::size_t n_edges = 0;
};

// Writes added_edges.tsv (original user_id, item_id keys) and manifest.json
// into `directory`.
void export_augmentation(const std::vector<UserItem>& added, const IdMap& ids, const AugmentationManifest& manifest,
                         const std::string& directory);

struct ImportedAugmentation {
  AugmentationManifest manifest;
  std::vector<UserItem> edges;
};

// Resolves keys through `ids`; throws DataError for unknown keys.
ImportedAugmentation import_augmentation(const std::string& directory, const IdMap& ids);

}  // namespace fairaug
