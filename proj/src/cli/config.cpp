#include "covseg/cli/config.hpp"

#include <yaml-cpp/yaml.h>

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

namespace covseg::cli {

using nlohmann::json;

namespace {

void merge_strict(json& base, const json& update, const std::string& where) {
  for (auto it = update.begin(); it != update.end(); ++it) {
    const std::string key = where.empty() ? it.key() : where + "." + it.key();
    if (!base.contains(it.key())) throw UsageError("unknown config key '" + key + "'");
    json& slot = base[it.key()];
    if (slot.is_object() && it->is_object()) {
      merge_strict(slot, *it, key);
    } else {
      slot = *it;
    }
  }
}

json scalar_to_json(const YAML::Node& n) {
  const std::string& s = n.Scalar();
  if (n.Tag() == "!") return s;  // quoted
  if (s.empty() || s == "~" || s == "null" || s == "Null" || s == "NULL") return nullptr;
  if (s == "true" || s == "True" || s == "TRUE") return true;
  if (s == "false" || s == "False" || s == "FALSE") return false;
  {
    std::size_t pos = 0;
    try {
      const long long v = std::stoll(s, &pos, 10);
      if (pos == s.size()) return v;
    } catch (const std::exception&) {
    }
  }
  {
    std::size_t pos = 0;
    try {
      const double v = std::stod(s, &pos);
      if (pos == s.size()) return v;
    } catch (const std::exception&) {
    }
  }
  return s;
}

json node_to_json(const YAML::Node& n) {
  switch (n.Type()) {
    case YAML::NodeType::Null:
    case YAML::NodeType::Undefined: return nullptr;
    case YAML::NodeType::Scalar: return scalar_to_json(n);
    case YAML::NodeType::Sequence: {
      json a = json::array();
      for (const auto& e : n) a.push_back(node_to_json(e));
      return a;
    }
    case YAML::NodeType::Map: {
      json o = json::object();
      for (const auto& kv : n) o[kv.first.as<std::string>()] = node_to_json(kv.second);
      return o;
    }
  }
  return nullptr;
}

template <class T>
T field(const json& j, const char* key) {
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw UsageError(std::string("config value '") + key + "': " + e.what());
  }
}

// Shortest decimal that reads back as the same float.
double decimal(float v) {
  char buf[32];
  for (int digits = 6; digits <= 9; ++digits) {
    std::snprintf(buf, sizeof buf, "%.*g", digits, v);
    if (std::strtof(buf, nullptr) == v) break;
  }
  return std::strtod(buf, nullptr);
}

}  // namespace

datapipe::StageSpec RunConfig::inference_stage() const {
  if (predict_stage) return *predict_stage;
  return plan.sessions.back().stage;
}

void RunConfig::validate() const {
  plan.validate();
  model.validate();
  augmentation.validate();
  schedule.validate();
  if (predict_stage) predict_stage->validate();
  if (!(nsd_tolerance_mm > 0.0)) throw UsageError("nsd_tolerance_mm must be positive");
  if (tune_percent <= 0 || tune_percent >= 100) throw UsageError("tune_percent must lie in (0, 100)");
  if (!(dataset.clip_low < dataset.clip_high)) throw UsageError("dataset clip_low must be below clip_high");
  if (loss.dice < 0 || loss.ce < 0 || loss.dice + loss.ce <= 0) throw UsageError("loss weights must be non-negative and not both zero");
  ingest::parse_dataset_kind(dataset.kind);
  ingest::parse_merge(dataset.annotator_merge);
}

json config_to_json(const RunConfig& c) {
  const auto& p = c.paths;
  const auto& d = c.dataset;
  return {
      {"seed", c.seed},
      {"paths",
       {{"dicom_root", p.dicom_root}, {"annotations", p.annotations}, {"images", p.images}, {"masks", p.masks},
        {"nifti", p.nifti}, {"manifest", p.manifest}, {"split", p.split}, {"checkpoints", p.checkpoints},
        {"reports", p.reports}, {"log", p.log}}},
      {"dataset",
       {{"name", d.name}, {"kind", d.kind}, {"clip", d.clip}, {"clip_low", d.clip_low}, {"clip_high", d.clip_high},
        {"binarize_masks", d.binarize_masks}, {"annotator_merge", d.annotator_merge}}},
      {"annotation_schema", c.annotation_schema},
      {"model", c.model},
      {"tune_percent", c.tune_percent},
      {"plan", c.plan},
      {"schedule",
       {{"warmup_fraction", c.schedule.warmup_fraction}, {"start_div", c.schedule.start_div},
        {"final_div", c.schedule.final_div}}},
      {"optimizer",
       {{"beta1", decimal(c.optimizer.beta1)}, {"beta2", decimal(c.optimizer.beta2)}, {"eps", decimal(c.optimizer.eps)}}},
      {"augmentation", c.augmentation},
      {"loss", {{"dice", c.loss.dice}, {"ce", c.loss.ce}, {"dice_eps", c.loss.dice_eps}}},
      {"nsd_tolerance_mm", c.nsd_tolerance_mm},
      {"predict_stage", c.predict_stage ? json(*c.predict_stage) : json(nullptr)},
  };
}

RunConfig config_from_json(const json& user) {
  json j = config_to_json(RunConfig{});
  if (!user.is_null()) {
    if (!user.is_object()) throw UsageError("config must be a mapping");
    merge_strict(j, user, "");
  }
  RunConfig c;
  try {
    c.seed = field<std::uint64_t>(j, "seed");
    const json& p = j.at("paths");
    c.paths = {field<std::string>(p, "dicom_root"), field<std::string>(p, "annotations"),
               field<std::string>(p, "images"),     field<std::string>(p, "masks"),
               field<std::string>(p, "nifti"),      field<std::string>(p, "manifest"),
               field<std::string>(p, "split"),      field<std::string>(p, "checkpoints"),
               field<std::string>(p, "reports"),    field<std::string>(p, "log")};
    const json& d = j.at("dataset");
    c.dataset = {field<std::string>(d, "name"),   field<std::string>(d, "kind"),      field<bool>(d, "clip"),
                 field<double>(d, "clip_low"),    field<double>(d, "clip_high"),      field<bool>(d, "binarize_masks"),
                 field<std::string>(d, "annotator_merge")};
    c.annotation_schema = j.at("annotation_schema").get<ingest::AnnotationSchema>();
    c.model = j.at("model").get<unet3d::UNet3dConfig>();
    c.tune_percent = field<int>(j, "tune_percent");
    c.plan = j.at("plan").get<train::TrainingPlan>();
    const json& s = j.at("schedule");
    c.schedule = {field<double>(s, "warmup_fraction"), field<double>(s, "start_div"), field<double>(s, "final_div")};
    const json& o = j.at("optimizer");
    c.optimizer = {field<float>(o, "beta1"), field<float>(o, "beta2"), field<float>(o, "eps")};
    c.augmentation = j.at("augmentation").get<datapipe::AugmentationConfig>();
    const json& l = j.at("loss");
    c.loss = {field<double>(l, "dice"), field<double>(l, "ce"), field<double>(l, "dice_eps")};
    c.nsd_tolerance_mm = field<double>(j, "nsd_tolerance_mm");
    if (!j.at("predict_stage").is_null()) c.predict_stage = j.at("predict_stage").get<datapipe::StageSpec>();
  } catch (const json::exception& e) {
    throw UsageError(std::string("invalid config: ") + e.what());
  }
  c.validate();
  return c;
}

json yaml_to_json(const std::string& text) {
  try {
    return node_to_json(YAML::Load(text));
  } catch (const YAML::Exception& e) {
    throw UsageError(std::string("YAML: ") + e.what());
  }
}

json load_yaml_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open config " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  try {
    return yaml_to_json(ss.str());
  } catch (const UsageError& e) {
    throw UsageError(path + ": " + e.what());
  }
}

void apply_override(json& tree, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw UsageError("override '" + assignment + "' is not key=value");
  const std::string path = assignment.substr(0, eq);
  json value = yaml_to_json(assignment.substr(eq + 1));
  json* node = &tree;
  std::stringstream ss(path);
  std::string key;
  std::vector<std::string> keys;
  while (std::getline(ss, key, '.')) keys.push_back(key);
  for (std::size_t i = 0; i < keys.size(); ++i) {
    const std::string& k = keys[i];
    const bool index = !k.empty() && k.find_first_not_of("0123456789") == std::string::npos;
    json* next;
    if (index && node->is_array()) {
      const std::size_t at = std::stoul(k);
      if (at >= node->size()) throw UsageError("override index " + k + " out of range in '" + path + "'");
      next = &(*node)[at];
    } else {
      if (node->is_null()) *node = json::object();
      if (!node->is_object()) throw UsageError("override path '" + path + "' crosses a non-mapping value");
      next = &(*node)[k];
    }
    node = next;
  }
  *node = std::move(value);
}

RunConfig resolve_config(const std::string& path, const std::vector<std::string>& overrides) {
  json tree = config_to_json(RunConfig{});
  if (!path.empty()) {
    const json file = load_yaml_file(path);
    if (!file.is_null()) {
      if (!file.is_object()) throw UsageError(path + ": config must be a mapping");
      merge_strict(tree, file, "");
    }
  }
  for (const auto& o : overrides) apply_override(tree, o);
  return config_from_json(tree);
}

}  // namespace covseg::cli
