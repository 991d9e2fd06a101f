#include "covseg/train/source.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "covseg/ingest/nifti.hpp"

namespace covseg::train {

ManifestSource::ManifestSource(const ingest::Manifest& manifest, const std::vector<std::string>& ids) {
  for (const auto& id : ids) entries_.push_back(manifest.find(id));
}

datapipe::ModelSample ManifestSource::prepare(std::size_t i, const datapipe::StageSpec& stage) const {
  const auto& e = entries_.at(i);
  CtVolume ct = ingest::read_nifti_ct(e.ct_path);
  ct.study_instance_uid = e.study_id;
  const LabelMask mask = ingest::read_nifti_mask(e.seg_path);
  return datapipe::prepare_sample(ct, mask, stage);
}

MemorySource::MemorySource(std::vector<Study> studies) : studies_(std::move(studies)) {}

datapipe::ModelSample MemorySource::prepare(std::size_t i, const datapipe::StageSpec& stage) const {
  const Study& s = studies_.at(i);
  return datapipe::prepare_sample(s.ct, s.mask, stage);
}

std::vector<datapipe::ModelSample> prepare_all(const SampleSource& source, const datapipe::StageSpec& stage) {
  std::vector<datapipe::ModelSample> out;
  out.reserve(source.size());
  for (std::size_t i = 0; i < source.size(); ++i) out.push_back(source.prepare(i, stage));
  return out;
}

Study sphere_phantom(const Dims3& dims, std::uint64_t seed, const std::string& id, int spheres) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::normal_distribution<double> noise(0.0, 20.0);
  Study s;
  s.ct.voxels = Volume3<float>(dims, -1000.0f);
  s.ct.spacing = {2.5, 1.0, 1.0};
  s.ct.affine = diagonal_affine(s.ct.spacing);
  s.ct.study_instance_uid = id;
  s.mask.voxels = Volume3<std::uint8_t>(dims, 0);
  s.mask.spacing = s.ct.spacing;

  struct Ball {
    double d, h, w, r;
  };
  std::vector<Ball> balls;
  const double rmax = 0.3 * std::min(dims.height, dims.width);
  for (int k = 0; k < spheres; ++k) {
    const double r = rmax * (0.6 + 0.4 * u(rng));
    balls.push_back({dims.depth * (0.35 + 0.3 * u(rng)), dims.height * (0.3 + 0.4 * u(rng)),
                     dims.width * (0.3 + 0.4 * u(rng)), r});
  }
  const double ch = 0.5 * (dims.height - 1), cw = 0.5 * (dims.width - 1);
  for (int d = 0; d < dims.depth; ++d) {
    for (int h = 0; h < dims.height; ++h) {
      for (int w = 0; w < dims.width; ++w) {
        const double eh = (h - ch) / (0.48 * dims.height), ew = (w - cw) / (0.48 * dims.width);
        double hu = eh * eh + ew * ew <= 1.0 ? -850.0 : -1000.0;
        bool lesion = false;
        for (const Ball& b : balls) {
          // depth is in slices of 2.5 voxel widths
          const double dd = (d - b.d) * 2.5, dh = h - b.h, dw = w - b.w;
          if (dd * dd + dh * dh + dw * dw <= b.r * b.r) lesion = true;
        }
        if (lesion) hu = -300.0;
        s.ct.voxels.at(d, h, w) = static_cast<float>(std::clamp(hu + noise(rng), -2000.0, 500.0));
        s.mask.voxels.at(d, h, w) = lesion;
      }
    }
  }
  return s;
}

}  // namespace covseg::train
