#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include "covseg/core/error.hpp"
#include "covseg/unet3d/checkpoint.hpp"
#include "doctest.h"

using namespace covseg;
using namespace covseg::unet3d;
using nn::Tensor;
namespace fs = std::filesystem;

namespace {

UNet3dConfig tiny_config(std::uint64_t seed = 11) {
  UNet3dConfig c;
  c.encoder_channels = {4, 4, 6, 6, 8};
  c.decoder_channels = {6, 6, 4, 4};
  c.head_channels = 3;
  c.init_seed = seed;
  return c;
}

Tensor probe_input() {
  Tensor t({1, 3, 8, 32, 32});
  std::mt19937_64 rng(99);
  std::uniform_real_distribution<float> u(-1.0f, 1.0f);
  for (float& v : t.values()) v = u(rng);
  return t;
}

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "covseg_test_checkpoint";
  fs::create_directories(dir);
  return dir / name;
}

double mean(const Tensor& t) {
  double s = 0.0;
  for (float v : t.values()) s += v;
  return s / static_cast<double>(t.numel());
}

}  // namespace

TEST_CASE("archive round trip") {
  Archive a;
  a.meta = {{"k", 3}};
  Tensor t({2, 3});
  for (int i = 0; i < 6; ++i) t[i] = 0.5f * i - 1.0f;
  a.tensors.emplace_back("x", t);
  a.tensors.emplace_back("empty", Tensor({0}));
  const fs::path p = scratch("a.bin");
  write_archive(p.string(), a);
  CHECK_FALSE(fs::exists(p.string() + ".tmp"));
  const Archive b = read_archive(p.string());
  CHECK(b.meta["k"] == 3);
  REQUIRE(b.find("x"));
  CHECK(*b.find("x") == t);
  CHECK(b.find("missing") == nullptr);

  std::ofstream(scratch("junk.bin")) << "not an archive";
  CHECK_THROWS_AS(read_archive(scratch("junk.bin").string()), DataError);
  CHECK_THROWS_AS(read_archive(scratch("absent.bin").string()), InputError);
}

TEST_CASE("checkpoint restores parameters, buffers, metadata and optimizer state") {
  UNet3d model(tiny_config());
  nn::AdamW opt(model.parameters());
  const Tensor x = probe_input();
  const Tensor y = model.forward(x, true);
  model.backward(Tensor(y.shape(), 0.01f));
  opt.step(1e-3f, 1e-5f);

  CheckpointMeta meta;
  meta.epoch = 4;
  meta.best_tune_dice = 0.625;
  meta.extra = {{"session", 1}};
  const fs::path p = scratch("model.ckpt");
  save_checkpoint(p.string(), model, meta, &opt);

  UNet3d other(tiny_config(12));
  CHECK(parameter_hash(other) != parameter_hash(model));
  nn::AdamW other_opt(other.parameters());
  const CheckpointMeta back = load_checkpoint(p.string(), other, &other_opt);
  CHECK(parameter_hash(other) == parameter_hash(model));
  CHECK(back.epoch == 4);
  CHECK(back.best_tune_dice == 0.625);
  CHECK(back.extra["session"] == 1);
  for (const auto& [name, s] : opt.state()) {
    const auto& o = other_opt.state().at(name);
    CHECK(o.step == s.step);
    CHECK(o.m == s.m);
    CHECK(o.v == s.v);
  }
  CHECK(other.forward(x, false) == model.forward(x, false));

  CheckpointMeta m2;
  const auto loaded = load_model(p.string(), &m2);
  CHECK(parameter_hash(*loaded) == parameter_hash(model));
  CHECK(m2.epoch == 4);

  UNet3dConfig wider = tiny_config();
  wider.head_channels = 5;
  UNet3d mismatched(wider);
  CHECK_THROWS_AS(load_checkpoint(p.string(), mismatched), DataError);
}

TEST_CASE("pretrained encoder weights") {
  UNet3d donor(tiny_config(5));
  Archive file;
  for (Parameter* p : donor.encoder_parameters()) {
    file.tensors.emplace_back(p->name.substr(std::string("encoder.").size()), p->value);
  }
  for (Buffer* b : donor.encoder_buffers()) {
    file.tensors.emplace_back(b->name.substr(std::string("encoder.").size()), b->value);
  }
  file.tensors.emplace_back("fc.weight", Tensor({400, 8}, 0.1f));
  file.tensors.emplace_back("fc.bias", Tensor({400}, 0.0f));
  const fs::path p = scratch("pretrained.bin");
  write_archive(p.string(), file);

  UNet3dConfig cfg = tiny_config(6);
  const UNet3d random_init(cfg);
  cfg.pretrained_weights_path = p.string();
  PretrainedReport report;
  auto model = build_model(cfg, &report);
  CHECK(report.unmatched == 0);
  CHECK(report.matched == donor.encoder_parameters().size() + donor.encoder_buffers().size());
  CHECK(report.ignored == std::vector<std::string>{"fc.weight", "fc.bias"});
  for (Parameter* q : model->encoder_parameters()) {
    for (Parameter* d : donor.encoder_parameters()) {
      if (d->name == q->name) CHECK(d->value == q->value);
    }
  }

  UNet3d plain(tiny_config(6));
  const Tensor x = probe_input();
  const double loaded_mean = mean(model->encode(x).stage4);
  const double random_mean = mean(plain.encode(x).stage4);
  CHECK(loaded_mean != random_mean);
  CHECK(mean(donor.encode(x).stage4) == loaded_mean);

  Archive bad = file;
  bad.tensors[3].second = Tensor({1, 2, 3});
  const std::string bad_name = bad.tensors[3].first;
  write_archive(scratch("bad.bin").string(), bad);
  try {
    load_pretrained_encoder(*model, scratch("bad.bin").string());
    FAIL("expected a shape error");
  } catch (const DataError& e) {
    CHECK(std::string(e.what()).find(bad_name) != std::string::npos);
  }
  CHECK_THROWS_AS(load_pretrained_encoder(*model, scratch("nope.bin").string()), InputError);
}
