#pragma once

#include <memory>
#include <string>
#include <vector>

#include "covseg/core/volume.hpp"
#include "covseg/datapipe/sample.hpp"
#include "covseg/ingest/manifest.hpp"

namespace covseg::train {

// Studies that can be prepared at any stage extent.
class SampleSource {
 public:
  virtual ~SampleSource() = default;
  virtual std::size_t size() const = 0;
  virtual std::string study_id(std::size_t i) const = 0;
  virtual datapipe::ModelSample prepare(std::size_t i, const datapipe::StageSpec& stage) const = 0;
};

// Converted NIfTI pairs, read from disk on each prepare().
class ManifestSource final : public SampleSource {
 public:
  ManifestSource(const ingest::Manifest& manifest, const std::vector<std::string>& ids);
  std::size_t size() const override { return entries_.size(); }
  std::string study_id(std::size_t i) const override { return entries_.at(i).study_id; }
  datapipe::ModelSample prepare(std::size_t i, const datapipe::StageSpec& stage) const override;

 private:
  std::vector<ingest::ManifestEntry> entries_;
};

struct Study {
  CtVolume ct;
  LabelMask mask;
};

class MemorySource final : public SampleSource {
 public:
  explicit MemorySource(std::vector<Study> studies);
  std::size_t size() const override { return studies_.size(); }
  std::string study_id(std::size_t i) const override { return studies_.at(i).ct.study_instance_uid; }
  datapipe::ModelSample prepare(std::size_t i, const datapipe::StageSpec& stage) const override;
  const Study& study(std::size_t i) const { return studies_.at(i); }

 private:
  std::vector<Study> studies_;
};

std::vector<datapipe::ModelSample> prepare_all(const SampleSource& source, const datapipe::StageSpec& stage);

// Sphere-shaped lesions in a lung-like phantom: air background, soft-tissue
// body and one or more brighter spheres marked as foreground.
Study sphere_phantom(const Dims3& dims, std::uint64_t seed, const std::string& id, int spheres = 1);

}  // namespace covseg::train
