#include "cxr/report/config.hpp"

#include <cstdio>
#include <fstream>
#include <initializer_list>
#include <iterator>
#include <set>
#include <sstream>

#include "cxr/common/error.hpp"
#include "cxr/common/random.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace cxr {
namespace {

// Strict view over one JSON object: remembers its path for messages and
// rejects keys that the caller never declared.
class Obj {
 public:
  Obj(const json& j, std::string path, std::initializer_list<const char*> keys)
      : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(where() + " must be an object");
    std::set<std::string> allowed(keys.begin(), keys.end());
    for (const auto& [k, v] : j_.items())
      if (!allowed.contains(k)) throw ConfigError("unknown key '" + k + "' in " + where());
  }

  bool has(const char* key) const { return j_.contains(key); }
  const json& at(const char* key) const { return j_.at(key); }
  std::string sub(const char* key) const { return path_.empty() ? key : path_ + "." + key; }

  double number(const char* key, double fallback) const {
    if (!has(key)) return fallback;
    const auto& v = j_.at(key);
    if (!v.is_number()) throw ConfigError(sub(key) + " must be a number");
    return v.get<double>();
  }

  std::int64_t integer(const char* key, std::int64_t fallback) const {
    if (!has(key)) return fallback;
    const auto& v = j_.at(key);
    if (!v.is_number_integer()) throw ConfigError(sub(key) + " must be an integer");
    return v.get<std::int64_t>();
  }

  std::uint64_t unsigned_integer(const char* key, std::uint64_t fallback) const {
    if (!has(key)) return fallback;
    const auto& v = j_.at(key);
    if (!v.is_number_unsigned()) throw ConfigError(sub(key) + " must be a non-negative integer");
    return v.get<std::uint64_t>();
  }

  bool boolean(const char* key, bool fallback) const {
    if (!has(key)) return fallback;
    const auto& v = j_.at(key);
    if (!v.is_boolean()) throw ConfigError(sub(key) + " must be true or false");
    return v.get<bool>();
  }

  std::string string(const char* key, const std::string& fallback) const {
    if (!has(key)) return fallback;
    const auto& v = j_.at(key);
    if (!v.is_string()) throw ConfigError(sub(key) + " must be a string");
    return v.get<std::string>();
  }

  std::array<float, 3> triple(const char* key, std::array<float, 3> fallback) const {
    if (!has(key)) return fallback;
    const auto& v = j_.at(key);
    if (!v.is_array() || v.size() != 3)
      throw ConfigError(sub(key) + " must be an array of 3 numbers");
    std::array<float, 3> out{};
    for (std::size_t i = 0; i < 3; ++i) {
      if (!v[i].is_number()) throw ConfigError(sub(key) + " must be an array of 3 numbers");
      out[i] = v[i].get<float>();
    }
    return out;
  }

 private:
  std::string where() const { return path_.empty() ? "the config" : "'" + path_ + "'"; }

  const json& j_;
  std::string path_;
};

int to_int(std::int64_t v, const std::string& name) {
  if (v < std::numeric_limits<int>::min() || v > std::numeric_limits<int>::max())
    throw ConfigError(name + " is out of range");
  return static_cast<int>(v);
}

PreprocessConfig parse_preprocess(const json& j) {
  const Obj o(j, "preprocess", {"target_size", "channel_means", "channel_stds"});
  PreprocessConfig p;
  p.target_size = to_int(o.integer("target_size", p.target_size), "preprocess.target_size");
  p.channel_means = o.triple("channel_means", p.channel_means);
  p.channel_stds = o.triple("channel_stds", p.channel_stds);
  return p;
}

AugmentPolicy parse_augment(const json& j) {
  const Obj o(j, "augment", {"hflip_prob", "max_rotation_deg", "max_translate_frac", "scale_lo",
                             "scale_hi", "jitter_frac"});
  AugmentPolicy a;
  a.hflip_prob = o.number("hflip_prob", a.hflip_prob);
  a.max_rotation_deg = o.number("max_rotation_deg", a.max_rotation_deg);
  a.max_translate_frac = o.number("max_translate_frac", a.max_translate_frac);
  a.scale_lo = o.number("scale_lo", a.scale_lo);
  a.scale_hi = o.number("scale_hi", a.scale_hi);
  a.jitter_frac = o.number("jitter_frac", a.jitter_frac);
  return a;
}

PlateauConfig parse_plateau(const json& j) {
  const Obj o(j, "train.plateau", {"patience", "factor", "min_lr", "threshold"});
  PlateauConfig p;
  p.patience = to_int(o.integer("patience", p.patience), "train.plateau.patience");
  p.factor = o.number("factor", p.factor);
  p.min_lr = o.number("min_lr", p.min_lr);
  p.threshold = o.number("threshold", p.threshold);
  return p;
}

TrainConfig parse_train(const json& j) {
  const Obj o(j, "train", {"batch_size", "max_epochs", "adam_beta1", "adam_beta2", "adam_eps",
                           "plateau", "early_stop_patience", "improvement_threshold", "seed",
                           "workers", "cache_images"});
  TrainConfig t;
  t.batch_size = to_int(o.integer("batch_size", t.batch_size), "train.batch_size");
  t.max_epochs = to_int(o.integer("max_epochs", t.max_epochs), "train.max_epochs");
  t.adam_beta1 = o.number("adam_beta1", t.adam_beta1);
  t.adam_beta2 = o.number("adam_beta2", t.adam_beta2);
  t.adam_eps = o.number("adam_eps", t.adam_eps);
  if (o.has("plateau")) t.plateau = parse_plateau(o.at("plateau"));
  t.early_stop_patience =
      to_int(o.integer("early_stop_patience", t.early_stop_patience), "train.early_stop_patience");
  t.improvement_threshold = o.number("improvement_threshold", t.improvement_threshold);
  t.seed = o.unsigned_integer("seed", t.seed);
  t.workers = to_int(o.integer("workers", t.workers), "train.workers");
  t.cache_images = o.boolean("cache_images", t.cache_images);
  return t;
}

json triple_json(const std::array<float, 3>& v) { return json::array({v[0], v[1], v[2]}); }

}  // namespace

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::string ModelSelector::token() const {
  return std::string(to_string(arch)) + ":" + std::string(to_string(regime));
}

ModelSelector parse_selector(std::string_view text) {
  ModelSelector s;
  const auto colon = text.find(':');
  s.arch = parse_architecture(text.substr(0, colon));
  if (colon == std::string_view::npos) {
    if (s.arch != ArchitectureId::kCustomCnn)
      throw ConfigError("model selector '" + std::string(text) + "' needs a regime (frozen or finetune)");
    s.regime = Regime::kScratch;
  } else {
    s.regime = parse_regime(text.substr(colon + 1));
  }
  const bool custom = s.arch == ArchitectureId::kCustomCnn;
  if (custom != (s.regime == Regime::kScratch))
    throw ConfigError("unsupported model selector '" + std::string(text) + "'");
  return s;
}

std::vector<ModelSelector> default_sweep() {
  std::vector<ModelSelector> out{{ArchitectureId::kCustomCnn, Regime::kScratch}};
  for (auto arch : {ArchitectureId::kResNet50, ArchitectureId::kDenseNet121,
                    ArchitectureId::kEfficientNetB0})
    for (auto regime : {Regime::kFrozen, Regime::kFinetune}) out.push_back({arch, regime});
  return out;
}

void RunConfig::validate() const {
  if (dataset_root.empty()) throw ConfigError("dataset_root is required");
  if (outputs.empty()) throw ConfigError("outputs must not be empty");
  ratios.validate();
  if (models.empty()) throw ConfigError("models must list at least one selector");
  for (std::size_t i = 0; i < models.size(); ++i)
    for (std::size_t k = i + 1; k < models.size(); ++k)
      if (models[i] == models[k]) throw ConfigError("duplicate model selector " + models[i].token());
  if (class_dirs.size() != 2 || class_dirs.at(Label::kNormal).empty() ||
      class_dirs.at(Label::kPneumonia).empty())
    throw ConfigError("class_dirs needs non-empty NORMAL and PNEUMONIA entries");
  train.validate();
  if (train.preprocess.target_size % 16 != 0)
    throw ConfigError("preprocess.target_size must be divisible by 16");
  if (gradcam.per_category == 0) throw ConfigError("gradcam.per_category must be > 0");
  if (!(gradcam.alpha >= 0.0f && gradcam.alpha <= 1.0f))
    throw ConfigError("gradcam.alpha must be in [0, 1]");
}

RunConfig RunConfig::from_json(const json& j) {
  const Obj o(j, "", {"dataset_root", "class_dirs", "splits", "models", "train", "preprocess",
                      "augment", "gradcam", "outputs"});
  RunConfig c;
  if (!o.has("dataset_root")) throw ConfigError("dataset_root is required");
  c.dataset_root = o.string("dataset_root", "");
  if (o.has("class_dirs")) {
    const Obj d(o.at("class_dirs"), "class_dirs", {"NORMAL", "PNEUMONIA"});
    c.class_dirs[Label::kNormal] = d.string("NORMAL", c.class_dirs[Label::kNormal]);
    c.class_dirs[Label::kPneumonia] = d.string("PNEUMONIA", c.class_dirs[Label::kPneumonia]);
  }
  if (o.has("splits")) {
    const Obj s(o.at("splits"), "splits", {"ratios", "seed"});
    if (s.has("ratios")) {
      const Obj r(s.at("ratios"), "splits.ratios", {"train", "val", "test"});
      c.ratios.train = r.number("train", c.ratios.train);
      c.ratios.val = r.number("val", c.ratios.val);
      c.ratios.test = r.number("test", c.ratios.test);
    }
    c.split_seed = s.unsigned_integer("seed", c.split_seed);
  }
  if (o.has("models")) {
    const auto& m = o.at("models");
    if (!m.is_array()) throw ConfigError("models must be an array of selectors");
    c.models.clear();
    for (const auto& v : m) {
      if (!v.is_string()) throw ConfigError("models entries must be strings like \"resnet50:finetune\"");
      c.models.push_back(parse_selector(v.get<std::string>()));
    }
  }
  if (o.has("train")) c.train = parse_train(o.at("train"));
  if (o.has("preprocess")) c.train.preprocess = parse_preprocess(o.at("preprocess"));
  if (o.has("augment")) c.train.augment = parse_augment(o.at("augment"));
  if (o.has("gradcam")) {
    const Obj g(o.at("gradcam"), "gradcam", {"per_category", "alpha"});
    const auto per = g.integer("per_category", static_cast<std::int64_t>(c.gradcam.per_category));
    if (per <= 0) throw ConfigError("gradcam.per_category must be > 0");
    c.gradcam.per_category = static_cast<std::size_t>(per);
    c.gradcam.alpha = static_cast<float>(g.number("alpha", c.gradcam.alpha));
  }
  c.outputs = o.string("outputs", c.outputs.string());
  c.validate();
  return c;
}

json RunConfig::to_json() const {
  json models_json = json::array();
  for (const auto& m : models) models_json.push_back(m.token());
  const auto& p = train.preprocess;
  const auto& a = train.augment;
  return {
      {"dataset_root", dataset_root.generic_string()},
      {"class_dirs",
       {{"NORMAL", class_dirs.at(Label::kNormal)}, {"PNEUMONIA", class_dirs.at(Label::kPneumonia)}}},
      {"splits",
       {{"ratios", {{"train", ratios.train}, {"val", ratios.val}, {"test", ratios.test}}},
        {"seed", split_seed}}},
      {"models", models_json},
      {"train",
       {{"batch_size", train.batch_size},
        {"max_epochs", train.max_epochs},
        {"adam_beta1", train.adam_beta1},
        {"adam_beta2", train.adam_beta2},
        {"adam_eps", train.adam_eps},
        {"plateau",
         {{"patience", train.plateau.patience},
          {"factor", train.plateau.factor},
          {"min_lr", train.plateau.min_lr},
          {"threshold", train.plateau.threshold}}},
        {"early_stop_patience", train.early_stop_patience},
        {"improvement_threshold", train.improvement_threshold},
        {"seed", train.seed},
        {"workers", train.workers},
        {"cache_images", train.cache_images}}},
      {"preprocess",
       {{"target_size", p.target_size},
        {"channel_means", triple_json(p.channel_means)},
        {"channel_stds", triple_json(p.channel_stds)}}},
      {"augment",
       {{"hflip_prob", a.hflip_prob},
        {"max_rotation_deg", a.max_rotation_deg},
        {"max_translate_frac", a.max_translate_frac},
        {"scale_lo", a.scale_lo},
        {"scale_hi", a.scale_hi},
        {"jitter_frac", a.jitter_frac}}},
      {"gradcam", {{"per_category", gradcam.per_category}, {"alpha", gradcam.alpha}}},
      {"outputs", outputs.generic_string()},
  };
}

std::string RunConfig::hash() const { return hex64(fnv1a64(to_json().dump())); }

void RunConfig::override_seed(std::uint64_t seed) {
  split_seed = seed;
  train.seed = seed;
}

RunConfig load_run_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("config " + path.string() + " is not valid JSON: " + e.what());
  }
  RunConfig c = RunConfig::from_json(j);
  const auto base = path.parent_path();
  if (c.dataset_root.is_relative()) c.dataset_root = fs::absolute(base / c.dataset_root).lexically_normal();
  if (c.outputs.is_relative()) c.outputs = fs::absolute(base / c.outputs).lexically_normal();
  return c;
}

std::string file_hash(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read " + path.string());
  const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return hex64(fnv1a64(bytes));
}

const json& run_config_schema() {
  static const json schema = [] {
    const json number = {{"type", "number"}};
    const json pos_int = {{"type", "integer"}, {"minimum", 1}};
    const json triple = {{"type", "array"}, {"items", number}, {"minItems", 3}, {"maxItems", 3}};
    auto object = [](json props, json required = json::array()) {
      json o = {{"type", "object"}, {"additionalProperties", false}, {"properties", std::move(props)}};
      if (!required.empty()) o["required"] = std::move(required);
      return o;
    };
    json selectors = json::array();
    selectors.push_back("custom_cnn");
    for (const auto& s : default_sweep()) selectors.push_back(s.token());
    json s = object(
        {{"dataset_root", {{"type", "string"}, {"minLength", 1}}},
         {"class_dirs", object({{"NORMAL", {{"type", "string"}}}, {"PNEUMONIA", {{"type", "string"}}}})},
         {"splits",
          object({{"ratios", object({{"train", number}, {"val", number}, {"test", number}})},
                  {"seed", {{"type", "integer"}, {"minimum", 0}}}})},
         {"models",
          {{"type", "array"}, {"minItems", 1}, {"uniqueItems", true}, {"items", {{"enum", selectors}}}}},
         {"train",
          object({{"batch_size", pos_int},
                  {"max_epochs", pos_int},
                  {"adam_beta1", number},
                  {"adam_beta2", number},
                  {"adam_eps", number},
                  {"plateau", object({{"patience", pos_int},
                                      {"factor", number},
                                      {"min_lr", number},
                                      {"threshold", number}})},
                  {"early_stop_patience", pos_int},
                  {"improvement_threshold", number},
                  {"seed", {{"type", "integer"}, {"minimum", 0}}},
                  {"workers", pos_int},
                  {"cache_images", {{"type", "boolean"}}}})},
         {"preprocess", object({{"target_size", {{"type", "integer"}, {"minimum", 16}, {"multipleOf", 16}}},
                                {"channel_means", triple},
                                {"channel_stds", triple}})},
         {"augment", object({{"hflip_prob", number},
                             {"max_rotation_deg", number},
                             {"max_translate_frac", number},
                             {"scale_lo", number},
                             {"scale_hi", number},
                             {"jitter_frac", number}})},
         {"gradcam", object({{"per_category", pos_int}, {"alpha", number}})},
         {"outputs", {{"type", "string"}, {"minLength", 1}}}},
        json::array({"dataset_root"}));
    s["$schema"] = "https://json-schema.org/draft/2020-12/schema";
    s["title"] = "cxr run configuration";
    return s;
  }();
  return schema;
}

}  // namespace cxr
