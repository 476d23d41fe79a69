#pragma once

#include <cstdint>

#include "fairaug/data.hpp"

namespace fairaug::synthetic {

// Uniform random bipartite graph with identity id maps and random timestamps.
InteractionGraph random_graph(int n_users, int n_items, int n_edges, std::uint64_t seed,
                              Timestamp max_time = 1'000'000);

// Random corpus where every user has between min_per_user and max_per_user
// distinct items; timestamps are drawn with frequent ties.
std::vector<Interaction> random_corpus(int n_users, int n_items, int min_per_user, int max_per_user,
                                       std::uint64_t seed);

// Corpus with a planted utility gap. The majority group ("M") draws all its
// interactions from a well-connected block. The minority group ("F") draws
// its late interactions (which land in validation/test after a temporal
// split) from a niche block that is rare in everyone's early history.
struct PlantedBiasConfig {
  int n_users = 200;
  double majority_fraction = 0.6;
  int n_items = 150;
  int per_user = 15;
  int late_per_user = 5;
  // Share of each block reserved as niche items.
  double niche_fraction = 1.0 / 3.0;
  // Probability that a minority user has niche items in its early history.
  double early_niche_prob = 0.7;
  int early_niche_items = 2;
  // Cross-block items in every user's early history.
  int cross_items = 1;
  double zipf_exponent = 0.8;
  std::uint64_t seed = 2;
};

IngestResult planted_bias_corpus(const PlantedBiasConfig& config = {});

}  // namespace fairaug::synthetic
