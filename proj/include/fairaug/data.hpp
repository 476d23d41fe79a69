#pragma once

#include <Eigen/SparseCore>

#include <array>
#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

namespace fairaug {

using Timestamp = std::int64_t;

struct Interaction {
  std::string user_id;
  std::string item_id;
  Timestamp timestamp = 0;
  std::optional<double> rating;
};

struct AttributeRecord {
  std::optional<std::string> gender;
  std::optional<double> age;
};

// Keyed by original user id; ordered so iteration is deterministic.
using AttributeTable = std::map<std::string, AttributeRecord>;

// Column mapping for delimiter-separated interaction files. Without a header
// row, `column_names` assigns names to positional columns.
struct Schema {
  std::string delimiter = "\t";
  bool has_header = true;
  std::vector<std::string> column_names;
  std::string user_column = "user_id";
  std::string item_column = "item_id";
  std::string timestamp_column = "timestamp";
  std::optional<std::string> rating_column;
};

struct IngestResult {
  std::vector<Interaction> interactions;
  AttributeTable attributes;
  std::size_t duplicates_dropped = 0;
};

// Original key <-> dense index, for users and items.
class IdMap {
 public:
  int add_user(const std::string& key);
  int add_item(const std::string& key);

  std::optional<int> user_index(const std::string& key) const;
  std::optional<int> item_index(const std::string& key) const;
  const std::string& user_key(int index) const { return user_keys_.at(index); }
  const std::string& item_key(int index) const { return item_keys_.at(index); }

  int n_users() const { return static_cast<int>(user_keys_.size()); }
  int n_items() const { return static_cast<int>(item_keys_.size()); }

  // Identity map over 0..n-1 with keys "0".."n-1".
  static IdMap identity(int n_users, int n_items);

 private:
  std::vector<std::string> user_keys_;
  std::vector<std::string> item_keys_;
  std::unordered_map<std::string, int> user_lookup_;
  std::unordered_map<std::string, int> item_lookup_;
};

struct Edge {
  int user = 0;
  int item = 0;
  Timestamp timestamp = 0;

  friend bool operator==(const Edge&, const Edge&) = default;
};

// A user-item pair without a timestamp (candidate or added edge).
struct UserItem {
  int user = 0;
  int item = 0;

  friend bool operator==(const UserItem&, const UserItem&) = default;
  friend auto operator<=>(const UserItem&, const UserItem&) = default;
};

// Immutable bipartite interaction graph. Edges are stored sorted by
// (user, item) with CSR views in both directions.
class InteractionGraph {
 public:
  InteractionGraph() = default;
  // Throws DataError on out-of-range indices or duplicate (user, item) pairs.
  InteractionGraph(int n_users, int n_items, std::vector<Edge> edges,
                   std::shared_ptr<const IdMap> ids = nullptr);

  int n_users() const { return n_users_; }
  int n_items() const { return n_items_; }
  std::size_t n_edges() const { return edges_.size(); }
  const std::vector<Edge>& edges() const { return edges_; }
  const std::shared_ptr<const IdMap>& ids() const { return ids_; }

  int user_degree(int u) const { return user_ptr_[u + 1] - user_ptr_[u]; }
  int item_degree(int i) const { return item_ptr_[i + 1] - item_ptr_[i]; }

  // Items of user u in ascending order.
  std::span<const int> user_items(int u) const;
  // Users of item i in ascending order.
  std::span<const int> item_users(int i) const;
  // Timestamps aligned with user_items(u).
  std::span<const Timestamp> user_timestamps(int u) const;
  std::span<const Timestamp> item_timestamps(int i) const;

  bool has_edge(int u, int i) const;
  Timestamp max_timestamp() const;

  // Implicit feedback matrix R (|U| x |I|, ones at edges).
  Eigen::SparseMatrix<double> feedback() const;

 private:
  int n_users_ = 0;
  int n_items_ = 0;
  std::vector<Edge> edges_;
  std::shared_ptr<const IdMap> ids_;
  std::vector<int> user_ptr_{0};
  std::vector<int> user_adj_;
  std::vector<Timestamp> user_ts_;
  std::vector<int> item_ptr_{0};
  std::vector<int> item_adj_;
  std::vector<Timestamp> item_ts_;
};

struct DatasetSplit {
  InteractionGraph train;
  InteractionGraph valid;
  InteractionGraph test;
};

struct SplitRatios {
  double train = 0.7;
  double valid = 0.1;
  double test = 0.2;
};

struct GroupPartition {
  std::string attribute;
  std::string group1_label;
  std::string group2_label;
  std::vector<int> group1;  // sorted user indices
  std::vector<int> group2;
  // 1 or 2 once labeled.
  std::optional<int> advantaged;

  const std::vector<int>& advantaged_users() const;
  const std::vector<int>& disadvantaged_users() const;
  // Per-user membership: 0 = ungrouped, 1 or 2.
  std::vector<std::uint8_t> membership(int n_users) const;
};

// Reads an interaction file and an optional attribute file. Duplicate
// (user, item) pairs keep the earliest timestamp.
IngestResult ingest(const std::string& path, const Schema& schema,
                    const std::optional<std::string>& attribute_path = std::nullopt);

// Same as ingest() over in-memory text; used by tests and bindings.
// The attribute text uses the schema's delimiter and always has a header.
IngestResult ingest_text(const std::string& interactions_text, const Schema& schema,
                         const std::optional<std::string>& attribute_text = std::nullopt);

// Removes users with fewer than k_user interactions until fixpoint. With
// two_sided, items with fewer than k_item interactions are also removed.
std::vector<Interaction> k_core_filter(const std::vector<Interaction>& interactions, int k_user,
                                       bool two_sided = false, int k_item = 1);

// Per-user chronological split; users and items are indexed in order of first
// appearance in `interactions`.
DatasetSplit temporal_split(const std::vector<Interaction>& interactions,
                            const SplitRatios& ratios = {});

// Per-user split sizes {train, valid, test} for n interactions.
std::array<int, 3> split_sizes(int n, const SplitRatios& ratios = {});

// Symmetric (|U|+|I|)^2 adjacency with R top-right and R^T bottom-left.
Eigen::SparseMatrix<double> build_adjacency(const InteractionGraph& graph);

GroupPartition partition_users(const AttributeTable& attributes, const IdMap& ids,
                               const std::string& attribute_name, double age_threshold = 33.0);

// Sets the advantaged group to the one with the higher mean utility over its
// evaluated users (NaN entries skipped); ties go to group 1.
GroupPartition label_advantage(GroupPartition partition, std::span<const double> per_user_ndcg);

// Split manifest: three delimiter-separated files user_idx, item_idx, timestamp
// plus an id map file.
void export_split(const DatasetSplit& split, const std::string& directory, char delimiter = '\t');
DatasetSplit import_split(const std::string& directory, char delimiter = '\t');

// Edges of `graph` plus `added`, which carry `timestamp`. Throws
// ContractError if an added edge already exists or repeats.
InteractionGraph with_added_edges(const InteractionGraph& graph, std::span<const UserItem> added,
                                  Timestamp timestamp);

}  // namespace fairaug
