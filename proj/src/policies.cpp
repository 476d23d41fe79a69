#include "fairaug/policies.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <queue>
#include <sstream>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "fairaug/metrics.hpp"
#include "fairaug/numeric.hpp"

namespace fairaug {

std::string to_string(UserPolicy p) {
  switch (p) {
    case UserPolicy::kZN: return "ZN";
    case UserPolicy::kLD: return "LD";
    case UserPolicy::kFR: return "FR";
    case UserPolicy::kSP: return "SP";
    case UserPolicy::kIR: return "IR";
  }
  return "?";
}

std::string to_string(ItemPolicy p) {
  switch (p) {
    case ItemPolicy::kIP: return "IP";
    case ItemPolicy::kIT: return "IT";
    case ItemPolicy::kPR: return "PR";
  }
  return "?";
}

std::string to_string(Scenario s) {
  switch (s) {
    case Scenario::kUser: return "U";
    case Scenario::kItem: return "I";
    case Scenario::kUserItem: return "U+I";
  }
  return "?";
}

UserPolicy parse_user_policy(const std::string& name) {
  for (auto p : kAllUserPolicies) {
    if (to_string(p) == name) return p;
  }
  throw ConfigError("unknown user policy '" + name + "'");
}

ItemPolicy parse_item_policy(const std::string& name) {
  for (auto p : kAllItemPolicies) {
    if (to_string(p) == name) return p;
  }
  throw ConfigError("unknown item policy '" + name + "'");
}

void PolicyConfig::validate() const {
  if (!user_policy && !item_policy) throw ConfigError("policy config sets no policy");
  if (!(psi_user > 0.0 && psi_user <= 1.0) || !(psi_item > 0.0 && psi_item <= 1.0)) {
    throw ConfigError("psi values must lie in (0, 1]");
  }
  if (!(pagerank_damping > 0.0 && pagerank_damping < 1.0)) {
    throw ConfigError("pagerank damping must lie in (0, 1)");
  }
}

Scenario PolicyConfig::scenario() const {
  if (user_policy && item_policy) return Scenario::kUserItem;
  return user_policy ? Scenario::kUser : Scenario::kItem;
}

std::string PolicyConfig::label() const {
  if (user_policy && item_policy) return to_string(*user_policy) + "+" + to_string(*item_policy);
  if (user_policy) return to_string(*user_policy);
  if (item_policy) return to_string(*item_policy);
  return "none";
}

namespace {

// The round(psi * |universe|) best members; `before(a, b)` orders by score
// with ties broken by index ascending. Returned sorted by index.
template <typename Score>
std::vector<int> take_best(const std::vector<int>& universe, double psi, Score score, bool descending) {
  std::vector<int> order = universe;
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    const auto sa = score(a);
    const auto sb = score(b);
    if (sa != sb) return descending ? sa > sb : sa < sb;
    return a < b;
  });
  order.resize(static_cast<std::size_t>(sample_size(psi, static_cast<int>(universe.size()))));
  std::sort(order.begin(), order.end());
  return order;
}

std::vector<int> all_items(const InteractionGraph& graph) {
  std::vector<int> items(static_cast<std::size_t>(graph.n_items()));
  std::iota(items.begin(), items.end(), 0);
  return items;
}

// Hop distances from `source` (a user node) over the bipartite graph; nodes
// are users 0..|U| then items. Unreached nodes hold -1.
std::vector<int> bfs(const InteractionGraph& graph, int source) {
  const int nu = graph.n_users();
  std::vector<int> dist(static_cast<std::size_t>(nu + graph.n_items()), -1);
  std::queue<int> queue;
  dist[source] = 0;
  queue.push(source);
  while (!queue.empty()) {
    const int a = queue.front();
    queue.pop();
    auto visit = [&](int b) {
      if (dist[b] < 0) {
        dist[b] = dist[a] + 1;
        queue.push(b);
      }
    };
    if (a < nu) {
      for (int i : graph.user_items(a)) visit(nu + i);
    } else {
      for (int u : graph.item_users(a - nu)) visit(u);
    }
  }
  return dist;
}

}  // namespace

std::vector<int> sample_zn(const GroupPartition& partition, std::span<const double> validation_ndcg,
                           std::vector<std::string>* warnings) {
  std::vector<int> out;
  for (int u : partition.disadvantaged_users()) {
    if (validation_ndcg[u] == 0.0) out.push_back(u);
  }
  if (out.empty()) {
    const std::string msg = "ZN: no disadvantaged user has zero validation NDCG";
    spdlog::warn(msg);
    if (warnings) warnings->push_back(msg);
  }
  return out;
}

std::vector<int> sample_ld(const InteractionGraph& graph, const GroupPartition& partition, double psi_user) {
  return take_best(partition.disadvantaged_users(), psi_user,
                   [&](int u) { return graph.user_degree(u); }, false);
}

std::vector<long> fr_scores(const InteractionGraph& graph, const GroupPartition& partition,
                            std::optional<int> distance_cap) {
  const long cap = distance_cap.value_or(graph.n_users() + graph.n_items());
  const auto& disadvantaged = partition.disadvantaged_users();
  const auto& advantaged = partition.advantaged_users();
  std::vector<long> scores(static_cast<std::size_t>(graph.n_users()), 0);
  for (int u : disadvantaged) {
    const auto dist = bfs(graph, u);
    long total = 0;
    for (int a : advantaged) total += dist[a] < 0 ? cap : dist[a];
    scores[u] = total;
  }
  return scores;
}

std::vector<int> sample_fr(const InteractionGraph& graph, const GroupPartition& partition, double psi_user,
                           std::optional<int> distance_cap) {
  const auto scores = fr_scores(graph, partition, distance_cap);
  return take_best(partition.disadvantaged_users(), psi_user, [&](int u) { return scores[u]; }, true);
}

double sp_score(const InteractionGraph& graph, int user) {
  const auto items = graph.user_items(user);
  if (items.empty()) return std::numeric_limits<double>::quiet_NaN();
  double total = 0.0;
  for (int i : items) total += graph.item_degree(i);
  return total / static_cast<double>(items.size());
}

std::vector<int> sample_sp(const InteractionGraph& graph, const GroupPartition& partition, double psi_user,
                           std::vector<std::string>* warnings) {
  std::vector<int> universe;
  for (int u : partition.disadvantaged_users()) {
    if (graph.user_degree(u) == 0) {
      const std::string msg = fmt::format("SP: user {} has no interactions and is excluded", u);
      spdlog::warn(msg);
      if (warnings) warnings->push_back(msg);
      continue;
    }
    universe.push_back(u);
  }
  return take_best(universe, psi_user, [&](int u) { return sp_score(graph, u); }, false);
}

std::vector<double> ip_scores(const InteractionGraph& graph, const GroupPartition& partition) {
  const auto& disadvantaged = partition.disadvantaged_users();
  std::vector<std::uint8_t> is_disadvantaged(static_cast<std::size_t>(graph.n_users()), 0);
  for (int u : disadvantaged) is_disadvantaged[u] = 1;
  const double scale = static_cast<double>(graph.n_users()) / static_cast<double>(disadvantaged.size());
  std::vector<double> scores(static_cast<std::size_t>(graph.n_items()), 0.0);
  for (int i = 0; i < graph.n_items(); ++i) {
    const auto users = graph.item_users(i);
    if (users.empty()) continue;
    int from_disadvantaged = 0;
    for (int u : users) from_disadvantaged += is_disadvantaged[u];
    // Ratio first so equal fractions compare equal under the tie rule.
    scores[i] = scale * (static_cast<double>(from_disadvantaged) / static_cast<double>(users.size()));
  }
  return scores;
}

std::vector<int> sample_ip(const InteractionGraph& graph, const GroupPartition& partition, double psi_item) {
  const auto scores = ip_scores(graph, partition);
  return take_best(all_items(graph), psi_item, [&](int i) { return scores[i]; }, true);
}

std::vector<int> sample_ir(const InteractionGraph& graph, const GroupPartition& partition, double psi_user) {
  auto latest = [&](int u) {
    const auto ts = graph.user_timestamps(u);
    return ts.empty() ? std::numeric_limits<Timestamp>::min() : *std::max_element(ts.begin(), ts.end());
  };
  return take_best(partition.disadvantaged_users(), psi_user, latest, true);
}

std::vector<int> sample_it(const InteractionGraph& graph, double psi_item) {
  auto interval = [&](int i) -> Timestamp {
    const auto ts = graph.item_timestamps(i);
    if (ts.empty()) return 0;
    const auto [lo, hi] = std::minmax_element(ts.begin(), ts.end());
    return *hi - *lo;
  };
  return take_best(all_items(graph), psi_item, interval, true);
}

std::vector<double> pagerank(const InteractionGraph& graph, double damping, double tol, int max_iter) {
  const int nu = graph.n_users();
  const int n = nu + graph.n_items();
  if (n == 0) return {};
  const double inv_n = 1.0 / n;
  std::vector<double> rank(static_cast<std::size_t>(n), inv_n);
  std::vector<double> next(static_cast<std::size_t>(n));
  for (int iter = 0; iter < max_iter; ++iter) {
    double dangling = 0.0;
    for (int a = 0; a < n; ++a) {
      const int deg = a < nu ? graph.user_degree(a) : graph.item_degree(a - nu);
      if (deg == 0) dangling += rank[a];
    }
    const double base = (1.0 - damping) * inv_n + damping * dangling * inv_n;
    std::fill(next.begin(), next.end(), base);
    for (const auto& e : graph.edges()) {
      const int item_node = nu + e.item;
      next[item_node] += damping * rank[e.user] / graph.user_degree(e.user);
      next[e.user] += damping * rank[item_node] / graph.item_degree(e.item);
    }
    double change = 0.0;
    for (int a = 0; a < n; ++a) change += std::abs(next[a] - rank[a]);
    rank.swap(next);
    if (change < tol) return rank;
  }
  throw NumericError("pagerank did not converge in " + std::to_string(max_iter) + " iterations");
}

std::vector<int> sample_pr(const InteractionGraph& graph, double psi_item, double damping) {
  const auto rank = pagerank(graph, damping);
  const int nu = graph.n_users();
  return take_best(all_items(graph), psi_item, [&](int i) { return rank[nu + i]; }, true);
}

SampledSets sample(const PolicyConfig& config, const InteractionGraph& train,
                   const GroupPartition& labeled, std::span<const double> validation_ndcg) {
  config.validate();
  SampledSets out;
  std::vector<std::string> parts;
  if (config.user_policy) {
    switch (*config.user_policy) {
      case UserPolicy::kZN: out.users = sample_zn(labeled, validation_ndcg, &out.warnings); break;
      case UserPolicy::kLD: out.users = sample_ld(train, labeled, config.psi_user); break;
      case UserPolicy::kFR:
        out.users = sample_fr(train, labeled, config.psi_user, config.unreachable_distance_cap);
        break;
      case UserPolicy::kSP: out.users = sample_sp(train, labeled, config.psi_user, &out.warnings); break;
      case UserPolicy::kIR: out.users = sample_ir(train, labeled, config.psi_user); break;
    }
    parts.push_back(fmt::format("user_policy={} psi_user={}", to_string(*config.user_policy), config.psi_user));
  }
  if (config.item_policy) {
    switch (*config.item_policy) {
      case ItemPolicy::kIP: out.items = sample_ip(train, labeled, config.psi_item); break;
      case ItemPolicy::kIT: out.items = sample_it(train, config.psi_item); break;
      case ItemPolicy::kPR: out.items = sample_pr(train, config.psi_item, config.pagerank_damping); break;
    }
    parts.push_back(fmt::format("item_policy={} psi_item={}", to_string(*config.item_policy), config.psi_item));
  }
  out.provenance = fmt::format("{}", fmt::join(parts, " "));
  return out;
}

CandidateEdgeSet build_candidates(const InteractionGraph& graph, const GroupPartition& labeled,
                                  const SampledSets& sampled, Scenario scenario) {
  const bool need_users = scenario != Scenario::kItem;
  const bool need_items = scenario != Scenario::kUser;
  if ((need_users && !sampled.users) || (need_items && !sampled.items)) {
    throw ContractError("sampled sets do not match scenario " + to_string(scenario));
  }
  const auto& disadvantaged = labeled.disadvantaged_users();
  std::vector<std::uint8_t> item_ok(static_cast<std::size_t>(graph.n_items()), need_items ? 0 : 1);
  if (need_items) {
    for (int i : *sampled.items) item_ok.at(i) = 1;
  }
  std::vector<int> users;
  if (need_users) {
    for (int u : *sampled.users) {
      if (!std::binary_search(disadvantaged.begin(), disadvantaged.end(), u)) {
        throw ContractError("sampled user " + std::to_string(u) + " is not disadvantaged");
      }
      users.push_back(u);
    }
    std::sort(users.begin(), users.end());
  } else {
    users = disadvantaged;
  }
  CandidateEdgeSet out;
  out.scenario = scenario;
  for (int u : users) {
    const auto items = graph.user_items(u);
    std::size_t k = 0;
    for (int i = 0; i < graph.n_items(); ++i) {
      while (k < items.size() && items[k] < i) ++k;
      if (k < items.size() && items[k] == i) continue;
      if (item_ok[i]) out.edges.push_back({u, i});
    }
  }
  if (out.edges.empty()) throw EmptyCandidatesError("empty candidate edge set for scenario " + to_string(scenario));
  return out;
}

std::string OverlapMatrix::to_csv() const {
  std::ostringstream out;
  out << "policy";
  for (const auto& n : names) out << ',' << n;
  out << '\n';
  for (std::size_t r = 0; r < names.size(); ++r) {
    out << names[r];
    for (double v : values[r]) out << ',' << fmt::format("{:.6f}", v);
    out << '\n';
  }
  return out.str();
}

OverlapMatrix policy_overlap(const std::vector<NamedSample>& samples) {
  OverlapMatrix out;
  for (const auto& s : samples) {
    if (s.kind != samples.front().kind) throw ContractError("policy_overlap: cannot mix user and item samples");
    out.names.push_back(s.name);
  }
  const std::size_t n = samples.size();
  out.values.assign(n, std::vector<double>(n, 1.0));
  for (std::size_t a = 0; a < n; ++a) {
    for (std::size_t b = a + 1; b < n; ++b) {
      const double j = jaccard(samples[a].members, samples[b].members);
      out.values[a][b] = j;
      out.values[b][a] = j;
    }
  }
  return out;
}

void export_sample(const std::vector<int>& members, const std::string& provenance, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path);
  out << "# " << provenance << '\n';
  for (int m : members) out << m << '\n';
}

std::vector<int> import_sample(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path);
  std::vector<int> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    out.push_back(std::stoi(line));
  }
  return out;
}

}  // namespace fairaug
