#include "fairaug/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <set>

#include "fairaug/errors.hpp"

namespace fairaug::synthetic {

InteractionGraph random_graph(int n_users, int n_items, int n_edges, std::uint64_t seed,
                              Timestamp max_time) {
  const long capacity = static_cast<long>(n_users) * n_items;
  if (n_edges > capacity) throw ConfigError("random_graph: more edges than user-item pairs");
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> user(0, n_users - 1);
  std::uniform_int_distribution<int> item(0, n_items - 1);
  std::uniform_int_distribution<Timestamp> time(0, max_time);
  std::set<std::pair<int, int>> seen;
  std::vector<Edge> edges;
  while (static_cast<int>(edges.size()) < n_edges) {
    const int u = user(rng);
    const int i = item(rng);
    if (!seen.insert({u, i}).second) continue;
    edges.push_back({u, i, time(rng)});
  }
  auto ids = std::make_shared<IdMap>(IdMap::identity(n_users, n_items));
  return InteractionGraph(n_users, n_items, std::move(edges), ids);
}

std::vector<Interaction> random_corpus(int n_users, int n_items, int min_per_user, int max_per_user,
                                       std::uint64_t seed) {
  if (max_per_user > n_items || min_per_user > max_per_user) {
    throw ConfigError("random_corpus: inconsistent per-user bounds");
  }
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> count(min_per_user, max_per_user);
  std::uniform_int_distribution<int> item(0, n_items - 1);
  std::uniform_int_distribution<Timestamp> time(0, 50);
  std::vector<Interaction> out;
  for (int u = 0; u < n_users; ++u) {
    const int n = count(rng);
    std::set<int> chosen;
    while (static_cast<int>(chosen.size()) < n) chosen.insert(item(rng));
    for (int i : chosen) out.push_back({"u" + std::to_string(u), "i" + std::to_string(i), time(rng), {}});
  }
  std::shuffle(out.begin(), out.end(), rng);
  return out;
}

namespace {

// Distinct draws from [first, first + count) with Zipf-like weights.
std::vector<int> zipf_distinct(int first, int count, int n, double exponent, std::set<int>& taken,
                               std::mt19937_64& rng) {
  std::vector<double> weights(static_cast<std::size_t>(count));
  for (int r = 0; r < count; ++r) weights[r] = 1.0 / std::pow(r + 1.0, exponent);
  std::discrete_distribution<int> dist(weights.begin(), weights.end());
  std::vector<int> out;
  int guard = 0;
  while (static_cast<int>(out.size()) < n) {
    if (++guard > 100000) throw ConfigError("planted corpus: block too small for requested draws");
    const int item = first + dist(rng);
    if (!taken.insert(item).second) continue;
    out.push_back(item);
  }
  return out;
}

}  // namespace

IngestResult planted_bias_corpus(const PlantedBiasConfig& config) {
  std::mt19937_64 rng(config.seed);
  const int n_major = static_cast<int>(std::lround(config.n_users * config.majority_fraction));
  const int block = config.n_items / 2;
  const int niche = static_cast<int>(std::lround(block * config.niche_fraction));
  const int minor_first = block;
  const int minor_core = config.n_items - block - niche;
  const int minor_niche_first = minor_first + minor_core;
  const int early = config.per_user - config.late_per_user;

  std::vector<int> user_order(static_cast<std::size_t>(config.n_users));
  for (int u = 0; u < config.n_users; ++u) user_order[u] = u;
  std::shuffle(user_order.begin(), user_order.end(), rng);

  std::uniform_int_distribution<Timestamp> early_time(0, 999'999);
  std::uniform_int_distribution<Timestamp> late_time(1'000'000, 1'999'999);
  std::bernoulli_distribution early_niche(config.early_niche_prob);

  IngestResult out;
  for (int rank = 0; rank < config.n_users; ++rank) {
    const int u = user_order[rank];
    const bool major = rank < n_major;
    const std::string uid = "u" + std::to_string(u);
    out.attributes[uid].gender = major ? "M" : "F";
    std::set<int> taken;
    std::vector<int> early_items;
    std::vector<int> late_items;
    const int cross = std::min(config.cross_items, early);
    if (major) {
      early_items = zipf_distinct(0, block, early - cross, config.zipf_exponent, taken, rng);
      late_items = zipf_distinct(0, block, config.late_per_user, config.zipf_exponent, taken, rng);
      for (int c : zipf_distinct(minor_first, minor_core, cross, config.zipf_exponent, taken, rng)) {
        early_items.push_back(c);
      }
    } else {
      const int from_niche = early_niche(rng) ? std::min(config.early_niche_items, early - cross) : 0;
      early_items = zipf_distinct(minor_first, minor_core, early - cross - from_niche,
                                  config.zipf_exponent, taken, rng);
      for (int c : zipf_distinct(minor_niche_first, niche, from_niche, config.zipf_exponent, taken, rng)) {
        early_items.push_back(c);
      }
      for (int c : zipf_distinct(0, block, cross, config.zipf_exponent, taken, rng)) early_items.push_back(c);
      late_items = zipf_distinct(minor_niche_first, niche, config.late_per_user, config.zipf_exponent, taken, rng);
    }
    for (int i : early_items) out.interactions.push_back({uid, "i" + std::to_string(i), early_time(rng), {}});
    for (int i : late_items) out.interactions.push_back({uid, "i" + std::to_string(i), late_time(rng), {}});
  }
  return out;
}

}  // namespace fairaug::synthetic
