#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "covseg/datapipe/sample.hpp"

namespace covseg::datapipe {

struct Batch {
  Tensor images;                     // (B, 3, D, H, W)
  std::vector<std::uint8_t> labels;  // B * D * H * W
  std::vector<std::string> study_ids;
};

// Stacks samples of one common extent; throws ShapeError otherwise.
Batch make_batch(const std::vector<const ModelSample*>& samples);
Batch make_batch(const std::vector<ModelSample>& samples);

// Index groups of at most batch_size covering 0..n-1 once. Shuffled with a
// stream derived from (seed, epoch) when `shuffle`; the last group may be
// short.
std::vector<std::vector<std::size_t>> epoch_batches(std::size_t n, int batch_size,
                                                    std::uint64_t seed, std::uint64_t epoch,
                                                    bool shuffle);

}  // namespace covseg::datapipe
