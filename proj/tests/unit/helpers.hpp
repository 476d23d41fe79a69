#pragma once

#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "fairaug/data.hpp"

namespace testutil {

inline std::filesystem::path temp_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("fairaug_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

// Random labeled partition covering every user (roughly half per group).
inline fairaug::GroupPartition random_partition(int n_users, std::mt19937_64& rng, int advantaged = 1) {
  fairaug::GroupPartition p;
  p.attribute = "gender";
  p.group1_label = "F";
  p.group2_label = "M";
  for (int u = 0; u < n_users; ++u) (rng() & 1 ? p.group1 : p.group2).push_back(u);
  if (p.group1.empty()) {
    p.group1.push_back(p.group2.back());
    p.group2.pop_back();
  }
  if (p.group2.empty()) {
    p.group2.push_back(p.group1.back());
    p.group1.pop_back();
  }
  p.advantaged = advantaged;
  return p;
}

}  // namespace testutil
