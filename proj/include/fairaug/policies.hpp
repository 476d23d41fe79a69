#pragma once

#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "fairaug/data.hpp"
#include "fairaug/errors.hpp"

namespace fairaug {

// User sampling policies draw from the disadvantaged group.
enum class UserPolicy { kZN, kLD, kFR, kSP, kIR };
// Item sampling policies draw from the whole item set.
enum class ItemPolicy { kIP, kIT, kPR };
enum class Scenario { kUser, kItem, kUserItem };

std::string to_string(UserPolicy p);
std::string to_string(ItemPolicy p);
std::string to_string(Scenario s);
UserPolicy parse_user_policy(const std::string& name);
ItemPolicy parse_item_policy(const std::string& name);

inline constexpr UserPolicy kAllUserPolicies[] = {UserPolicy::kZN, UserPolicy::kLD, UserPolicy::kFR,
                                                 UserPolicy::kSP, UserPolicy::kIR};
inline constexpr ItemPolicy kAllItemPolicies[] = {ItemPolicy::kIP, ItemPolicy::kIT, ItemPolicy::kPR};

struct PolicyConfig {
  std::optional<UserPolicy> user_policy;
  std::optional<ItemPolicy> item_policy;
  double psi_user = 0.35;
  double psi_item = 0.20;
  double pagerank_damping = 0.85;
  // Defaults to |U| + |I| when unset.
  std::optional<int> unreachable_distance_cap;

  // Throws ConfigError unless 0 < psi <= 1 and at least one policy is set.
  void validate() const;
  Scenario scenario() const;
  // "ZN", "IP", "FR+PR", ...
  std::string label() const;
};

struct SampledSets {
  std::optional<std::vector<int>> users;  // sorted subset of U_D
  std::optional<std::vector<int>> items;  // sorted subset of I
  std::string provenance;
  std::vector<std::string> warnings;
};

class EmptyCandidatesError : public DataError {
 public:
  using DataError::DataError;
};

struct CandidateEdgeSet {
  std::vector<UserItem> edges;  // lexicographic (user, item)
  Scenario scenario = Scenario::kUser;
};

// Disadvantaged users with validation NDCG exactly 0; users whose NDCG is
// undefined (NaN) are skipped. Psi is not used.
std::vector<int> sample_zn(const GroupPartition& partition, std::span<const double> validation_ndcg,
                           std::vector<std::string>* warnings = nullptr);
std::vector<int> sample_ld(const InteractionGraph& graph, const GroupPartition& partition, double psi_user);
std::vector<int> sample_fr(const InteractionGraph& graph, const GroupPartition& partition, double psi_user,
                           std::optional<int> distance_cap = std::nullopt);
std::vector<int> sample_sp(const InteractionGraph& graph, const GroupPartition& partition, double psi_user,
                           std::vector<std::string>* warnings = nullptr);
std::vector<int> sample_ip(const InteractionGraph& graph, const GroupPartition& partition, double psi_item);
std::vector<int> sample_ir(const InteractionGraph& graph, const GroupPartition& partition, double psi_user);
std::vector<int> sample_it(const InteractionGraph& graph, double psi_item);
std::vector<int> sample_pr(const InteractionGraph& graph, double psi_item, double damping = 0.85);

// Per-node scores behind the samplers, exposed for analysis and tests.
std::vector<long> fr_scores(const InteractionGraph& graph, const GroupPartition& partition,
                            std::optional<int> distance_cap = std::nullopt);
double sp_score(const InteractionGraph& graph, int user);
std::vector<double> ip_scores(const InteractionGraph& graph, const GroupPartition& partition);

// PageRank over users then items of the undirected graph; uniform teleport,
// dangling mass spread uniformly, power iteration to L1 change < tol.
// Throws NumericError after max_iter iterations.
std::vector<double> pagerank(const InteractionGraph& graph, double damping = 0.85, double tol = 1e-10,
                             int max_iter = 1000);

// Runs the configured policies on the training graph.
SampledSets sample(const PolicyConfig& config, const InteractionGraph& train,
                   const GroupPartition& labeled, std::span<const double> validation_ndcg);

// Missing (u, i) pairs with u disadvantaged, filtered by the scenario.
// Throws EmptyCandidatesError when nothing remains.
CandidateEdgeSet build_candidates(const InteractionGraph& graph, const GroupPartition& labeled,
                                  const SampledSets& sampled, Scenario scenario);

enum class SampleKind { kUsers, kItems };

struct NamedSample {
  std::string name;
  SampleKind kind = SampleKind::kUsers;
  std::set<int> members;
};

struct OverlapMatrix {
  std::vector<std::string> names;
  std::vector<std::vector<double>> values;

  std::string to_csv() const;
};

// Pairwise Jaccard similarity. Throws ContractError when user and item
// samples are mixed.
OverlapMatrix policy_overlap(const std::vector<NamedSample>& samples);

// Newline-delimited indices behind a '#' provenance line.
void export_sample(const std::vector<int>& members, const std::string& provenance, const std::string& path);
std::vector<int> import_sample(const std::string& path);

}  // namespace fairaug
