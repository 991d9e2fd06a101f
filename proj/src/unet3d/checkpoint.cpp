#include "covseg/unet3d/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>

#include "covseg/core/error.hpp"

namespace covseg::unet3d {

static_assert(std::endian::native == std::endian::little, "archive IO assumes a little-endian host");

namespace {

constexpr char kMagic[8] = {'C', 'O', 'V', 'S', 'E', 'G', 'v', '1'};
constexpr const char* kEncoderPrefix = "encoder.";
constexpr const char* kMomentPrefix1 = "optimizer.m/";
constexpr const char* kMomentPrefix2 = "optimizer.v/";

std::size_t element_count(const std::vector<int>& shape) {
  std::size_t n = 1;
  for (int s : shape) {
    if (s < 0) throw DataError("negative extent in archive shape");
    n *= static_cast<std::size_t>(s);
  }
  return n;
}

void copy_checked(const std::string& path, const std::string& name, const Tensor& src, Tensor& dst) {
  if (src.shape() != dst.shape()) {
    throw DataError(path + ": " + name + " has shape " + nn::shape_string(src.shape()) +
                    ", model expects " + nn::shape_string(dst.shape()));
  }
  dst.values() = src.values();
}

const Tensor& require(const Archive& a, const std::string& path, const std::string& name) {
  const Tensor* t = a.find(name);
  if (!t) throw DataError(path + ": checkpoint has no entry for " + name);
  return *t;
}

void hash_bytes(std::uint64_t& h, const void* data, std::size_t n) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 1099511628211ull;
  }
}

void hash_tensor(std::uint64_t& h, const std::string& name, const Tensor& t) {
  hash_bytes(h, name.data(), name.size());
  hash_bytes(h, t.shape().data(), t.shape().size() * sizeof(int));
  hash_bytes(h, t.data(), t.numel() * sizeof(float));
}

}  // namespace

const Tensor* Archive::find(const std::string& name) const {
  for (const auto& [n, t] : tensors) {
    if (n == name) return &t;
  }
  return nullptr;
}

void write_archive(const std::string& path, const Archive& archive) {
  nlohmann::json header;
  header["meta"] = archive.meta;
  nlohmann::json list = nlohmann::json::array();
  std::uint64_t offset = 0;
  for (const auto& [name, t] : archive.tensors) {
    list.push_back({{"name", name}, {"shape", t.shape()}, {"offset", offset}});
    offset += t.numel() * sizeof(float);
  }
  header["tensors"] = std::move(list);
  const std::string text = header.dump();

  const std::filesystem::path target(path);
  if (target.has_parent_path()) std::filesystem::create_directories(target.parent_path());
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw InputError("cannot write " + tmp);
    const std::uint64_t len = text.size();
    out.write(kMagic, sizeof kMagic);
    out.write(reinterpret_cast<const char*>(&len), sizeof len);
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    for (const auto& [name, t] : archive.tensors) {
      out.write(reinterpret_cast<const char*>(t.data()),
                static_cast<std::streamsize>(t.numel() * sizeof(float)));
    }
    out.flush();
    if (!out) throw InputError("failed writing " + tmp);
  }
  std::filesystem::rename(tmp, target);
}

Archive read_archive(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open " + path);
  char magic[8];
  std::uint64_t len = 0;
  if (!in.read(magic, sizeof magic) || std::memcmp(magic, kMagic, sizeof kMagic) != 0) {
    throw DataError(path + ": not a covseg archive");
  }
  if (!in.read(reinterpret_cast<char*>(&len), sizeof len) || len > (1ull << 30)) {
    throw DataError(path + ": truncated or corrupt archive header");
  }
  std::string text(len, '\0');
  if (!in.read(text.data(), static_cast<std::streamsize>(len))) {
    throw DataError(path + ": truncated archive header");
  }
  const auto data_start = in.tellg();
  Archive a;
  try {
    const nlohmann::json header = nlohmann::json::parse(text);
    a.meta = header.value("meta", nlohmann::json::object());
    for (const auto& e : header.at("tensors")) {
      std::vector<int> shape = e.at("shape").get<std::vector<int>>();
      const std::size_t n = element_count(shape);
      Tensor t(shape);
      in.seekg(data_start + static_cast<std::streamoff>(e.at("offset").get<std::uint64_t>()));
      if (!in.read(reinterpret_cast<char*>(t.data()), static_cast<std::streamsize>(n * sizeof(float)))) {
        throw DataError(path + ": truncated data for " + e.at("name").get<std::string>());
      }
      a.tensors.emplace_back(e.at("name").get<std::string>(), std::move(t));
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError(path + ": malformed archive header: " + e.what());
  }
  return a;
}

void save_checkpoint(const std::string& path, UNet3d& model, const CheckpointMeta& meta,
                     const nn::AdamW* optimizer) {
  Archive a;
  a.meta = {{"kind", "checkpoint"},
            {"config", model.config()},
            {"epoch", meta.epoch},
            {"best_tune_dice", meta.best_tune_dice},
            {"extra", meta.extra},
            {"encoder_frozen", model.encoder_frozen()}};
  for (Parameter* p : model.parameters()) a.tensors.emplace_back(p->name, p->value);
  for (Buffer* b : model.buffers()) a.tensors.emplace_back(b->name, b->value);
  if (optimizer) {
    nlohmann::json steps = nlohmann::json::object();
    for (const auto& [name, s] : optimizer->state()) {
      a.tensors.emplace_back(kMomentPrefix1 + name, s.m);
      a.tensors.emplace_back(kMomentPrefix2 + name, s.v);
      steps[name] = s.step;
    }
    a.meta["optimizer_steps"] = std::move(steps);
  }
  write_archive(path, a);
}

CheckpointMeta load_checkpoint(const std::string& path, UNet3d& model, nn::AdamW* optimizer) {
  const Archive a = read_archive(path);
  if (a.meta.value("kind", "") != "checkpoint") throw DataError(path + ": not a model checkpoint");
  UNet3dConfig stored = a.meta.at("config").get<UNet3dConfig>();
  UNet3dConfig current = model.config();
  stored.pretrained_weights_path.clear();
  current.pretrained_weights_path.clear();
  stored.init_seed = current.init_seed;
  if (!(stored == current)) {
    throw DataError(path + ": checkpoint config " + nlohmann::json(stored).dump() +
                    " does not match the model");
  }
  for (Parameter* p : model.parameters()) copy_checked(path, p->name, require(a, path, p->name), p->value);
  for (Buffer* b : model.buffers()) copy_checked(path, b->name, require(a, path, b->name), b->value);
  if (optimizer && a.meta.contains("optimizer_steps")) {
    const auto& steps = a.meta.at("optimizer_steps");
    for (auto& [name, s] : optimizer->state()) {
      if (!steps.contains(name)) continue;
      copy_checked(path, kMomentPrefix1 + name, require(a, path, kMomentPrefix1 + name), s.m);
      copy_checked(path, kMomentPrefix2 + name, require(a, path, kMomentPrefix2 + name), s.v);
      s.step = steps.at(name).get<long>();
    }
  }
  CheckpointMeta meta;
  meta.epoch = a.meta.value("epoch", -1);
  meta.best_tune_dice = a.meta.value("best_tune_dice", -1.0);
  meta.extra = a.meta.value("extra", nlohmann::json::object());
  return meta;
}

UNet3dConfig read_checkpoint_config(const std::string& path) {
  const Archive a = read_archive(path);
  if (a.meta.value("kind", "") != "checkpoint") throw DataError(path + ": not a model checkpoint");
  UNet3dConfig cfg = a.meta.at("config").get<UNet3dConfig>();
  cfg.pretrained_weights_path.clear();
  return cfg;
}

std::unique_ptr<UNet3d> load_model(const std::string& path, CheckpointMeta* meta) {
  auto model = std::make_unique<UNet3d>(read_checkpoint_config(path));
  const CheckpointMeta m = load_checkpoint(path, *model);
  if (meta) *meta = m;
  return model;
}

PretrainedReport load_pretrained_encoder(UNet3d& model, const std::string& path) {
  if (!std::filesystem::exists(path)) throw InputError("pretrained weights not found: " + path);
  const Archive a = read_archive(path);
  std::map<std::string, Tensor*> targets;
  for (Parameter* p : model.encoder_parameters()) targets[p->name] = &p->value;
  for (Buffer* b : model.encoder_buffers()) targets[b->name] = &b->value;

  PretrainedReport report;
  std::map<std::string, bool> seen;
  for (const auto& [raw, t] : a.tensors) {
    std::string name = raw;
    if (name.rfind(kEncoderPrefix, 0) != 0) name = kEncoderPrefix + name;
    const auto it = targets.find(name);
    if (it == targets.end()) {
      report.ignored.push_back(raw);
      continue;
    }
    copy_checked(path, raw, t, *it->second);
    seen[name] = true;
  }
  for (const auto& [name, t] : targets) {
    if (seen.count(name)) {
      ++report.matched;
    } else {
      ++report.unmatched;
      report.missing.push_back(name);
    }
  }
  return report;
}

std::unique_ptr<UNet3d> build_model(const UNet3dConfig& cfg, PretrainedReport* report) {
  auto model = std::make_unique<UNet3d>(cfg);
  if (!cfg.pretrained_weights_path.empty()) {
    const PretrainedReport r = load_pretrained_encoder(*model, cfg.pretrained_weights_path);
    if (report) *report = r;
  }
  return model;
}

std::uint64_t parameter_hash(UNet3d& model) {
  std::uint64_t h = 14695981039346656037ull;
  for (Parameter* p : model.parameters()) hash_tensor(h, p->name, p->value);
  for (Buffer* b : model.buffers()) hash_tensor(h, b->name, b->value);
  return h;
}

}  // namespace covseg::unet3d
