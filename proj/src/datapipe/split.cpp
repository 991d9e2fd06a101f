#include "covseg/datapipe/split.hpp"

#include <algorithm>
#include <random>
#include <set>

#include "covseg/core/error.hpp"

namespace covseg::datapipe {

namespace {

// Uniform in [0, bound) by rejection.
std::uint64_t draw_below(std::mt19937_64& rng, std::uint64_t bound) {
  const std::uint64_t limit = UINT64_MAX - UINT64_MAX % bound;
  std::uint64_t v;
  do {
    v = rng();
  } while (v >= limit);
  return v % bound;
}

}  // namespace

std::size_t tune_count(std::size_t n, int tune_percent) {
  if (n < 2) throw UsageError("splitting needs at least two studies, got " + std::to_string(n));
  if (tune_percent <= 0 || tune_percent >= 100) throw UsageError("tune percentage must lie in (0, 100)");
  const std::size_t t = n * static_cast<std::size_t>(tune_percent) / 100;
  return std::clamp<std::size_t>(t, 1, n - 1);
}

DatasetSplit split_dataset(const std::vector<std::string>& ids, std::uint64_t seed, int tune_percent) {
  const std::size_t tune = tune_count(ids.size(), tune_percent);
  if (std::set<std::string>(ids.begin(), ids.end()).size() != ids.size()) {
    throw UsageError("duplicate study ids in split input");
  }
  std::vector<std::string> order = ids;
  std::mt19937_64 rng(seed);
  for (std::size_t i = order.size() - 1; i > 0; --i) {
    std::swap(order[i], order[draw_below(rng, i + 1)]);
  }
  DatasetSplit s;
  s.seed = seed;
  s.tune_ids.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(tune));
  s.train_ids.assign(order.begin() + static_cast<std::ptrdiff_t>(tune), order.end());
  return s;
}

void to_json(nlohmann::json& j, const DatasetSplit& s) {
  j = {{"seed", s.seed}, {"train", s.train_ids}, {"tune", s.tune_ids}};
}

void from_json(const nlohmann::json& j, DatasetSplit& s) {
  s.seed = j.at("seed").get<std::uint64_t>();
  s.train_ids = j.at("train").get<std::vector<std::string>>();
  s.tune_ids = j.at("tune").get<std::vector<std::string>>();
}

}  // namespace covseg::datapipe
