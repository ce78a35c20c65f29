#pragma once

#include <cmath>
#include <cstdint>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "segsense/errors.hpp"
#include "segsense/rng.hpp"

namespace segsense {

struct SplitRatios {
  double train = 0.8;
  double test = 0.1;
  double validation = 0.1;
};

/// Disjoint train/test/validation id lists whose union is the input set.
struct DatasetSplit {
  std::vector<std::string> train;
  std::vector<std::string> test;
  std::vector<std::string> validation;
  std::uint64_t seed = 0;

  friend bool operator==(const DatasetSplit&, const DatasetSplit&) = default;
};

/// Seeded shuffle followed by a contiguous split. Test and validation sizes
/// are floor(n * ratio); the remainder goes to train.
inline DatasetSplit partition(std::vector<std::string> ids, const SplitRatios& ratios,
                              std::uint64_t seed) {
  if (!(ratios.train > 0 && ratios.test > 0 && ratios.validation > 0)) {
    throw UsageError("split ratios must all be positive");
  }
  if (std::abs(ratios.train + ratios.test + ratios.validation - 1.0) > 1e-9) {
    throw UsageError("split ratios must sum to 1");
  }
  if (ids.size() < 3) {
    throw DataError("partition needs at least 3 ids, got " + std::to_string(ids.size()));
  }
  if (std::set<std::string>(ids.begin(), ids.end()).size() != ids.size()) {
    throw DataError("partition input contains duplicate ids");
  }

  const auto n = static_cast<double>(ids.size());
  // Ratios given as count/total fractions must land exactly on the count.
  const auto floor_share = [n](double r) { return static_cast<std::size_t>(std::floor(n * r + 1e-9)); };
  const std::size_t n_test = floor_share(ratios.test);
  const std::size_t n_val = floor_share(ratios.validation);
  if (n_test == 0 || n_val == 0 || n_test + n_val >= ids.size()) {
    throw DataError("ratios leave an empty split for " + std::to_string(ids.size()) + " ids");
  }
  const std::size_t n_train = ids.size() - n_test - n_val;

  Rng rng(seed);
  rng.shuffle(std::span<std::string>(ids));

  DatasetSplit split;
  split.seed = seed;
  auto it = ids.begin();
  split.train.assign(it, it + static_cast<std::ptrdiff_t>(n_train));
  it += static_cast<std::ptrdiff_t>(n_train);
  split.test.assign(it, it + static_cast<std::ptrdiff_t>(n_test));
  it += static_cast<std::ptrdiff_t>(n_test);
  split.validation.assign(it, ids.end());
  return split;
}

inline nlohmann::json to_json(const DatasetSplit& s) {
  return nlohmann::json{{"seed", s.seed}, {"train", s.train}, {"test", s.test}, {"validation", s.validation}};
}

inline DatasetSplit split_from_json(const nlohmann::json& j) {
  try {
    DatasetSplit s;
    s.seed = j.at("seed").get<std::uint64_t>();
    s.train = j.at("train").get<std::vector<std::string>>();
    s.test = j.at("test").get<std::vector<std::string>>();
    s.validation = j.at("validation").get<std::vector<std::string>>();
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed split manifest: ") + e.what());
  }
}

}  // namespace segsense
