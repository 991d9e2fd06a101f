#include "covseg/datapipe/batch.hpp"

#include <algorithm>
#include <cstring>
#include <numeric>
#include <random>

#include "covseg/datapipe/augment.hpp"

namespace covseg::datapipe {

Batch make_batch(const std::vector<const ModelSample*>& samples) {
  if (samples.empty()) throw ShapeError("make_batch: no samples");
  const Dims3 n = samples.front()->mask.dims();
  const std::vector<int> image_shape{3, n.depth, n.height, n.width};
  Batch b;
  b.images = Tensor({static_cast<int>(samples.size()), 3, n.depth, n.height, n.width});
  b.labels.resize(samples.size() * n.size());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const ModelSample& s = *samples[i];
    if (s.mask.dims() != n || s.image.shape() != image_shape) {
      throw ShapeError("make_batch: sample " + s.study_id + " has extent " + to_string(s.mask.dims()) +
                       ", batch extent is " + to_string(n));
    }
    std::memcpy(b.images.data() + i * 3 * n.size(), s.image.data(), 3 * n.size() * sizeof(float));
    std::memcpy(b.labels.data() + i * n.size(), s.mask.data(), n.size());
    b.study_ids.push_back(s.study_id);
  }
  return b;
}

Batch make_batch(const std::vector<ModelSample>& samples) {
  std::vector<const ModelSample*> ptrs;
  for (const auto& s : samples) ptrs.push_back(&s);
  return make_batch(ptrs);
}

std::vector<std::vector<std::size_t>> epoch_batches(std::size_t n, int batch_size,
                                                    std::uint64_t seed, std::uint64_t epoch,
                                                    bool shuffle) {
  if (batch_size < 1) throw UsageError("batch size must be >= 1");
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  if (shuffle && n > 1) {
    std::mt19937_64 rng(sample_seed(seed, epoch, UINT64_MAX));
    for (std::size_t i = n - 1; i > 0; --i) {
      std::swap(order[i], order[rng() % (i + 1)]);
    }
  }
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t i = 0; i < n; i += batch_size) {
    out.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(i),
                     order.begin() + static_cast<std::ptrdiff_t>(std::min(n, i + batch_size)));
  }
  return out;
}

}  // namespace covseg::datapipe
