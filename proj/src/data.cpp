#include "fairaug/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "fairaug/errors.hpp"
#include "fairaug/numeric.hpp"

namespace fairaug {

namespace {

std::vector<std::string> split_fields(const std::string& line, const std::string& delimiter) {
  std::vector<std::string> fields;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = line.find(delimiter, start);
    if (pos == std::string::npos) {
      fields.push_back(line.substr(start));
      break;
    }
    fields.push_back(line.substr(start, pos - start));
    start = pos + delimiter.size();
  }
  return fields;
}

std::string strip_cr(std::string line) {
  if (!line.empty() && line.back() == '\r') line.pop_back();
  return line;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t");
  return s.substr(b, e - b + 1);
}

bool parse_int64(const std::string& text, std::int64_t& out) {
  const std::string t = trim(text);
  if (t.empty()) return false;
  const auto* first = t.data();
  const auto* last = t.data() + t.size();
  auto [ptr, ec] = std::from_chars(first, last, out);
  return ec == std::errc() && ptr == last;
}

bool parse_double(const std::string& text, double& out) {
  const std::string t = trim(text);
  if (t.empty()) return false;
  try {
    std::size_t used = 0;
    out = std::stod(t, &used);
    return used == t.size();
  } catch (const std::exception&) {
    return false;
  }
}

std::size_t find_column(const std::vector<std::string>& names, const std::string& column,
                        const std::string& role) {
  const auto it = std::find(names.begin(), names.end(), column);
  if (it == names.end()) {
    throw SchemaError("missing column '" + column + "' for role " + role);
  }
  return static_cast<std::size_t>(it - names.begin());
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open file: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

AttributeTable parse_attributes(const std::string& text, const std::string& delimiter) {
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  AttributeTable table;
  std::vector<std::string> header;
  std::optional<std::size_t> gender_col;
  std::optional<std::size_t> age_col;
  std::size_t user_col = 0;
  while (std::getline(in, line)) {
    ++line_no;
    line = strip_cr(line);
    if (line_no == 1) {
      header = split_fields(line, delimiter);
      for (auto& h : header) h = trim(h);
      user_col = find_column(header, "user_id", "user");
      if (auto it = std::find(header.begin(), header.end(), "gender"); it != header.end()) {
        gender_col = static_cast<std::size_t>(it - header.begin());
      }
      if (auto it = std::find(header.begin(), header.end(), "age"); it != header.end()) {
        age_col = static_cast<std::size_t>(it - header.begin());
      }
      continue;
    }
    if (trim(line).empty()) continue;
    const auto fields = split_fields(line, delimiter);
    if (fields.size() != header.size()) {
      throw RowError(line_no, "expected " + std::to_string(header.size()) + " fields, got " +
                                  std::to_string(fields.size()));
    }
    AttributeRecord record;
    if (gender_col) {
      const std::string g = trim(fields[*gender_col]);
      if (!g.empty()) record.gender = g;
    }
    if (age_col) {
      const std::string a = trim(fields[*age_col]);
      if (!a.empty()) {
        double age = 0.0;
        if (!parse_double(a, age)) throw RowError(line_no, "unparseable age '" + a + "'");
        record.age = age;
      }
    }
    table[trim(fields[user_col])] = record;
  }
  return table;
}

void build_csr(int n, const std::vector<std::pair<int, std::pair<int, Timestamp>>>& entries,
               std::vector<int>& ptr, std::vector<int>& adj, std::vector<Timestamp>& ts) {
  ptr.assign(static_cast<std::size_t>(n) + 1, 0);
  for (const auto& e : entries) ++ptr[static_cast<std::size_t>(e.first) + 1];
  for (int r = 0; r < n; ++r) ptr[r + 1] += ptr[r];
  adj.assign(entries.size(), 0);
  ts.assign(entries.size(), 0);
  std::vector<int> cursor(ptr.begin(), ptr.end() - 1);
  for (const auto& e : entries) {
    const int pos = cursor[e.first]++;
    adj[pos] = e.second.first;
    ts[pos] = e.second.second;
  }
}

}  // namespace

// --- IdMap -----------------------------------------------------------------

int IdMap::add_user(const std::string& key) {
  auto [it, inserted] = user_lookup_.emplace(key, static_cast<int>(user_keys_.size()));
  if (inserted) user_keys_.push_back(key);
  return it->second;
}

int IdMap::add_item(const std::string& key) {
  auto [it, inserted] = item_lookup_.emplace(key, static_cast<int>(item_keys_.size()));
  if (inserted) item_keys_.push_back(key);
  return it->second;
}

std::optional<int> IdMap::user_index(const std::string& key) const {
  const auto it = user_lookup_.find(key);
  if (it == user_lookup_.end()) return std::nullopt;
  return it->second;
}

std::optional<int> IdMap::item_index(const std::string& key) const {
  const auto it = item_lookup_.find(key);
  if (it == item_lookup_.end()) return std::nullopt;
  return it->second;
}

IdMap IdMap::identity(int n_users, int n_items) {
  IdMap ids;
  for (int u = 0; u < n_users; ++u) ids.add_user(std::to_string(u));
  for (int i = 0; i < n_items; ++i) ids.add_item(std::to_string(i));
  return ids;
}

// --- InteractionGraph ------------------------------------------------------

InteractionGraph::InteractionGraph(int n_users, int n_items, std::vector<Edge> edges,
                                   std::shared_ptr<const IdMap> ids)
    : n_users_(n_users), n_items_(n_items), edges_(std::move(edges)), ids_(std::move(ids)) {
  if (n_users_ < 0 || n_items_ < 0) throw DataError("graph sizes must be nonnegative");
  std::sort(edges_.begin(), edges_.end(), [](const Edge& a, const Edge& b) {
    return a.user != b.user ? a.user < b.user : a.item < b.item;
  });
  std::vector<std::pair<int, std::pair<int, Timestamp>>> by_user;
  std::vector<std::pair<int, std::pair<int, Timestamp>>> by_item;
  by_user.reserve(edges_.size());
  by_item.reserve(edges_.size());
  for (std::size_t k = 0; k < edges_.size(); ++k) {
    const Edge& e = edges_[k];
    if (e.user < 0 || e.user >= n_users_ || e.item < 0 || e.item >= n_items_) {
      throw DataError("edge (" + std::to_string(e.user) + ", " + std::to_string(e.item) +
                      ") out of range");
    }
    if (k > 0 && edges_[k - 1].user == e.user && edges_[k - 1].item == e.item) {
      throw DataError("duplicate edge (" + std::to_string(e.user) + ", " + std::to_string(e.item) +
                      ")");
    }
    by_user.push_back({e.user, {e.item, e.timestamp}});
    by_item.push_back({e.item, {e.user, e.timestamp}});
  }
  build_csr(n_users_, by_user, user_ptr_, user_adj_, user_ts_);
  build_csr(n_items_, by_item, item_ptr_, item_adj_, item_ts_);
}

std::span<const int> InteractionGraph::user_items(int u) const {
  return {user_adj_.data() + user_ptr_[u], static_cast<std::size_t>(user_degree(u))};
}

std::span<const int> InteractionGraph::item_users(int i) const {
  return {item_adj_.data() + item_ptr_[i], static_cast<std::size_t>(item_degree(i))};
}

std::span<const Timestamp> InteractionGraph::user_timestamps(int u) const {
  return {user_ts_.data() + user_ptr_[u], static_cast<std::size_t>(user_degree(u))};
}

std::span<const Timestamp> InteractionGraph::item_timestamps(int i) const {
  return {item_ts_.data() + item_ptr_[i], static_cast<std::size_t>(item_degree(i))};
}

bool InteractionGraph::has_edge(int u, int i) const {
  if (u < 0 || u >= n_users_) return false;
  const auto items = user_items(u);
  return std::binary_search(items.begin(), items.end(), i);
}

Timestamp InteractionGraph::max_timestamp() const {
  Timestamp best = 0;
  for (const auto& e : edges_) best = std::max(best, e.timestamp);
  return best;
}

Eigen::SparseMatrix<double> InteractionGraph::feedback() const {
  std::vector<Eigen::Triplet<double>> triplets;
  triplets.reserve(edges_.size());
  for (const auto& e : edges_) triplets.emplace_back(e.user, e.item, 1.0);
  Eigen::SparseMatrix<double> r(n_users_, n_items_);
  r.setFromTriplets(triplets.begin(), triplets.end());
  return r;
}

// --- GroupPartition --------------------------------------------------------

const std::vector<int>& GroupPartition::advantaged_users() const {
  if (!advantaged) throw ContractError("partition has no advantage label");
  return *advantaged == 1 ? group1 : group2;
}

const std::vector<int>& GroupPartition::disadvantaged_users() const {
  if (!advantaged) throw ContractError("partition has no advantage label");
  return *advantaged == 1 ? group2 : group1;
}

std::vector<std::uint8_t> GroupPartition::membership(int n_users) const {
  std::vector<std::uint8_t> m(static_cast<std::size_t>(n_users), 0);
  for (int u : group1) m[u] = 1;
  for (int u : group2) m[u] = 2;
  return m;
}

// --- ingestion -------------------------------------------------------------

IngestResult ingest_text(const std::string& interactions_text, const Schema& schema,
                         const std::optional<std::string>& attribute_text) {
  if (schema.delimiter.empty()) throw ConfigError("schema delimiter must be nonempty");
  std::istringstream in(interactions_text);
  std::string line;
  std::size_t line_no = 0;
  std::vector<std::string> names = schema.column_names;
  std::size_t user_col = 0, item_col = 0, ts_col = 0;
  std::optional<std::size_t> rating_col;
  auto resolve = [&]() {
    user_col = find_column(names, schema.user_column, "user");
    item_col = find_column(names, schema.item_column, "item");
    ts_col = find_column(names, schema.timestamp_column, "timestamp");
    if (schema.rating_column) rating_col = find_column(names, *schema.rating_column, "rating");
  };
  if (!schema.has_header) resolve();

  // Keyed by (user, item); position records first appearance order.
  std::map<std::pair<std::string, std::string>, std::size_t> seen;
  IngestResult result;
  while (std::getline(in, line)) {
    ++line_no;
    line = strip_cr(line);
    if (schema.has_header && line_no == 1) {
      names = split_fields(line, schema.delimiter);
      for (auto& n : names) n = trim(n);
      resolve();
      continue;
    }
    if (trim(line).empty()) continue;
    const auto fields = split_fields(line, schema.delimiter);
    if (fields.size() < names.size()) {
      throw RowError(line_no, "expected " + std::to_string(names.size()) + " fields, got " +
                                  std::to_string(fields.size()));
    }
    Interaction row;
    row.user_id = trim(fields[user_col]);
    row.item_id = trim(fields[item_col]);
    if (!parse_int64(fields[ts_col], row.timestamp) || row.timestamp < 0) {
      throw RowError(line_no, "unparseable timestamp '" + fields[ts_col] + "'");
    }
    if (rating_col) {
      double rating = 0.0;
      if (parse_double(fields[*rating_col], rating)) row.rating = rating;
    }
    const auto key = std::make_pair(row.user_id, row.item_id);
    if (auto it = seen.find(key); it != seen.end()) {
      ++result.duplicates_dropped;
      Interaction& kept = result.interactions[it->second];
      if (row.timestamp < kept.timestamp) kept = row;
      continue;
    }
    seen.emplace(key, result.interactions.size());
    result.interactions.push_back(std::move(row));
  }
  if (line_no == 0 && schema.has_header) throw SchemaError("empty file: no header row");
  if (attribute_text) result.attributes = parse_attributes(*attribute_text, schema.delimiter);
  return result;
}

IngestResult ingest(const std::string& path, const Schema& schema,
                    const std::optional<std::string>& attribute_path) {
  std::optional<std::string> attributes;
  if (attribute_path) attributes = read_file(*attribute_path);
  return ingest_text(read_file(path), schema, attributes);
}

// --- filtering and splitting ----------------------------------------------

std::vector<Interaction> k_core_filter(const std::vector<Interaction>& interactions, int k_user,
                                       bool two_sided, int k_item) {
  if (k_user < 1) throw ConfigError("k_user must be >= 1");
  std::vector<Interaction> current = interactions;
  while (true) {
    std::unordered_map<std::string, int> user_deg;
    std::unordered_map<std::string, int> item_deg;
    for (const auto& x : current) {
      ++user_deg[x.user_id];
      ++item_deg[x.item_id];
    }
    std::vector<Interaction> next;
    next.reserve(current.size());
    for (const auto& x : current) {
      if (user_deg[x.user_id] < k_user) continue;
      if (two_sided && item_deg[x.item_id] < k_item) continue;
      next.push_back(x);
    }
    const bool changed = next.size() != current.size();
    current = std::move(next);
    // Dropping users never lowers another user's degree, so one pass is a
    // fixpoint unless items are also filtered.
    if (!changed || !two_sided) break;
  }
  if (current.empty()) throw DataError("empty corpus after k-core filtering");
  return current;
}

std::array<int, 3> split_sizes(int n, const SplitRatios& ratios) {
  const int n_test = std::max(1, static_cast<int>(round_half_up(ratios.test * n)));
  const int n_valid = std::max(1, static_cast<int>(round_half_up(ratios.valid * n)));
  return {n - n_test - n_valid, n_valid, n_test};
}

DatasetSplit temporal_split(const std::vector<Interaction>& interactions, const SplitRatios& ratios) {
  auto ids = std::make_shared<IdMap>();
  std::vector<std::vector<std::pair<Timestamp, int>>> per_user;
  for (const auto& x : interactions) {
    const int u = ids->add_user(x.user_id);
    const int i = ids->add_item(x.item_id);
    if (static_cast<std::size_t>(u) >= per_user.size()) per_user.resize(u + 1);
    per_user[u].push_back({x.timestamp, i});
  }
  std::vector<Edge> train, valid, test;
  for (int u = 0; u < static_cast<int>(per_user.size()); ++u) {
    auto& hist = per_user[u];
    const int n = static_cast<int>(hist.size());
    if (n < 3) {
      throw DataError("user '" + ids->user_key(u) + "' has " + std::to_string(n) +
                      " interactions; temporal split needs at least 3");
    }
    std::sort(hist.begin(), hist.end());
    const auto sizes = split_sizes(n, ratios);
    if (sizes[0] < 1) {
      throw DataError("user '" + ids->user_key(u) + "' leaves no training interactions");
    }
    for (int k = 0; k < n; ++k) {
      const Edge e{u, hist[k].second, hist[k].first};
      if (k < sizes[0]) {
        train.push_back(e);
      } else if (k < sizes[0] + sizes[1]) {
        valid.push_back(e);
      } else {
        test.push_back(e);
      }
    }
  }
  const int nu = ids->n_users();
  const int ni = ids->n_items();
  std::shared_ptr<const IdMap> shared = ids;
  return DatasetSplit{InteractionGraph(nu, ni, std::move(train), shared),
                      InteractionGraph(nu, ni, std::move(valid), shared),
                      InteractionGraph(nu, ni, std::move(test), shared)};
}

Eigen::SparseMatrix<double> build_adjacency(const InteractionGraph& graph) {
  const int nu = graph.n_users();
  const int n = nu + graph.n_items();
  std::vector<Eigen::Triplet<double>> triplets;
  triplets.reserve(graph.n_edges() * 2);
  for (const auto& e : graph.edges()) {
    triplets.emplace_back(e.user, nu + e.item, 1.0);
    triplets.emplace_back(nu + e.item, e.user, 1.0);
  }
  Eigen::SparseMatrix<double> a(n, n);
  a.setFromTriplets(triplets.begin(), triplets.end());
  return a;
}

// --- demographic groups ----------------------------------------------------

GroupPartition partition_users(const AttributeTable& attributes, const IdMap& ids,
                               const std::string& attribute_name, double age_threshold) {
  GroupPartition part;
  part.attribute = attribute_name;
  if (attribute_name == "gender") {
    std::map<std::string, std::vector<int>> by_label;
    for (const auto& [key, record] : attributes) {
      const auto u = ids.user_index(key);
      if (!u || !record.gender) continue;
      by_label[*record.gender].push_back(*u);
    }
    if (by_label.size() < 2) {
      throw DataError("degenerate partition: attribute 'gender' has fewer than two values");
    }
    if (by_label.size() > 2) {
      throw DataError("attribute 'gender' has more than two values; only binary groups are supported");
    }
    auto it = by_label.begin();
    part.group1_label = it->first;
    part.group1 = it->second;
    ++it;
    part.group2_label = it->first;
    part.group2 = it->second;
  } else if (attribute_name == "age") {
    part.group1_label = "younger";
    part.group2_label = "older";
    for (const auto& [key, record] : attributes) {
      const auto u = ids.user_index(key);
      if (!u || !record.age) continue;
      (*record.age <= age_threshold ? part.group1 : part.group2).push_back(*u);
    }
    if (part.group1.empty() || part.group2.empty()) {
      throw DataError("degenerate partition: attribute 'age' yields a single group");
    }
  } else {
    throw ConfigError("unknown attribute '" + attribute_name + "' (expected gender or age)");
  }
  std::sort(part.group1.begin(), part.group1.end());
  std::sort(part.group2.begin(), part.group2.end());
  return part;
}

GroupPartition label_advantage(GroupPartition partition, std::span<const double> per_user_ndcg) {
  auto mean_of = [&](const std::vector<int>& group) {
    double sum = 0.0;
    int n = 0;
    for (int u : group) {
      const double v = per_user_ndcg[u];
      if (std::isnan(v)) continue;
      sum += v;
      ++n;
    }
    return n > 0 ? sum / n : 0.0;
  };
  partition.advantaged = mean_of(partition.group1) >= mean_of(partition.group2) ? 1 : 2;
  return partition;
}

// --- split manifest --------------------------------------------------------

namespace {

void write_edges(const InteractionGraph& g, const std::filesystem::path& path, char d) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << "user_idx" << d << "item_idx" << d << "timestamp\n";
  for (const auto& e : g.edges()) out << e.user << d << e.item << d << e.timestamp << '\n';
}

std::vector<Edge> read_edges(const std::filesystem::path& path, char d) {
  Schema schema;
  schema.delimiter = std::string(1, d);
  schema.user_column = "user_idx";
  schema.item_column = "item_idx";
  const auto rows = ingest_text(read_file(path.string()), schema);
  std::vector<Edge> edges;
  edges.reserve(rows.interactions.size());
  for (const auto& r : rows.interactions) {
    edges.push_back({std::stoi(r.user_id), std::stoi(r.item_id), r.timestamp});
  }
  return edges;
}

}  // namespace

void export_split(const DatasetSplit& split, const std::string& directory, char delimiter) {
  namespace fs = std::filesystem;
  fs::create_directories(directory);
  const fs::path dir(directory);
  write_edges(split.train, dir / "train.tsv", delimiter);
  write_edges(split.valid, dir / "valid.tsv", delimiter);
  write_edges(split.test, dir / "test.tsv", delimiter);
  std::ofstream users(dir / "users.tsv");
  std::ofstream items(dir / "items.tsv");
  users << "user_idx" << delimiter << "user_id\n";
  items << "item_idx" << delimiter << "item_id\n";
  const int nu = split.train.n_users();
  const int ni = split.train.n_items();
  const auto& ids = split.train.ids();
  for (int u = 0; u < nu; ++u) users << u << delimiter << (ids ? ids->user_key(u) : std::to_string(u)) << '\n';
  for (int i = 0; i < ni; ++i) items << i << delimiter << (ids ? ids->item_key(i) : std::to_string(i)) << '\n';
  if (!users || !items) throw DataError("cannot write id maps under " + directory);
}

DatasetSplit import_split(const std::string& directory, char delimiter) {
  namespace fs = std::filesystem;
  const fs::path dir(directory);
  auto ids = std::make_shared<IdMap>();
  auto read_keys = [&](const fs::path& path, bool users) {
    std::istringstream in(read_file(path.string()));
    std::string line;
    bool header = true;
    const std::string delim(1, delimiter);
    while (std::getline(in, line)) {
      line = strip_cr(line);
      if (header) {
        header = false;
        continue;
      }
      if (line.empty()) continue;
      const auto fields = split_fields(line, delim);
      if (fields.size() != 2) throw DataError("malformed id map row in " + path.string());
      const int idx = users ? ids->add_user(fields[1]) : ids->add_item(fields[1]);
      if (idx != std::stoi(fields[0])) throw DataError("non-contiguous id map in " + path.string());
    }
  };
  read_keys(dir / "users.tsv", true);
  read_keys(dir / "items.tsv", false);
  const int nu = ids->n_users();
  const int ni = ids->n_items();
  std::shared_ptr<const IdMap> shared = ids;
  return DatasetSplit{InteractionGraph(nu, ni, read_edges(dir / "train.tsv", delimiter), shared),
                      InteractionGraph(nu, ni, read_edges(dir / "valid.tsv", delimiter), shared),
                      InteractionGraph(nu, ni, read_edges(dir / "test.tsv", delimiter), shared)};
}

InteractionGraph with_added_edges(const InteractionGraph& graph, std::span<const UserItem> added,
                                  Timestamp timestamp) {
  std::vector<Edge> edges = graph.edges();
  std::set<UserItem> fresh;
  for (const auto& a : added) {
    if (graph.has_edge(a.user, a.item) || !fresh.insert(a).second) {
      throw ContractError("edge (" + std::to_string(a.user) + ", " + std::to_string(a.item) +
                          ") already present");
    }
    edges.push_back({a.user, a.item, timestamp});
  }
  return InteractionGraph(graph.n_users(), graph.n_items(), std::move(edges), graph.ids());
}

}  // namespace fairaug
