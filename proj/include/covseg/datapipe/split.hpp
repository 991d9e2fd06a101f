#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"

namespace covseg::datapipe {

struct DatasetSplit {
  std::vector<std::string> train_ids;
  std::vector<std::string> tune_ids;
  std::uint64_t seed = 0;
};

// |tune| = floor(tune_percent * N / 100), clamped to [1, N - 1].
std::size_t tune_count(std::size_t n, int tune_percent = 15);

// Seeded Fisher-Yates shuffle (own index draw, so the result does not
// depend on the standard library), then the first |tune| ids form the tune
// set. Throws UsageError for N < 2 or duplicate ids.
DatasetSplit split_dataset(const std::vector<std::string>& ids, std::uint64_t seed,
                           int tune_percent = 15);

void to_json(nlohmann::json& j, const DatasetSplit& s);
void from_json(const nlohmann::json& j, DatasetSplit& s);

}  // namespace covseg::datapipe
