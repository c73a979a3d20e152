#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "cxr/data/manifest.hpp"
#include "cxr/models/model.hpp"
#include "cxr/training/trainer.hpp"

namespace cxr {

/// "resnet50:finetune"; a bare "custom_cnn" means custom_cnn:scratch.
struct ModelSelector {
  ArchitectureId arch = ArchitectureId::kCustomCnn;
  Regime regime = Regime::kScratch;

  std::string token() const;
  friend bool operator==(const ModelSelector&, const ModelSelector&) = default;
};

/// Throws ConfigError for unknown tokens or an unsupported arch/regime pair.
ModelSelector parse_selector(std::string_view text);

/// custom_cnn:scratch followed by {resnet50, densenet121, efficientnet_b0} x {frozen, finetune}.
std::vector<ModelSelector> default_sweep();

struct GradcamOptions {
  std::size_t per_category = 4;
  float alpha = 0.4f;
};

/// One experiment, loaded from a single JSON document. Every object is
/// parsed strictly: unknown keys and wrongly typed values are ConfigErrors.
struct RunConfig {
  std::filesystem::path dataset_root;
  ClassDirs class_dirs = default_class_dirs();
  SplitRatios ratios;
  std::uint64_t split_seed = 42;
  std::vector<ModelSelector> models = default_sweep();
  TrainConfig train;
  GradcamOptions gradcam;
  std::filesystem::path outputs = "runs";

  void validate() const;
  static RunConfig from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;
  /// 16 hex digits over the canonical JSON form.
  std::string hash() const;

  std::filesystem::path manifest_path() const { return outputs / "manifest.csv"; }
  /// Sets both the split seed and the training seed.
  void override_seed(std::uint64_t seed);
};

/// Parses and validates `path`. Relative dataset_root/outputs are resolved
/// against the directory holding the file.
RunConfig load_run_config(const std::filesystem::path& path);

/// JSON Schema (draft 2020-12) describing the accepted document.
const nlohmann::json& run_config_schema();

/// 16 hex digits of FNV-1a over the file's bytes. Throws DataError if unreadable.
std::string file_hash(const std::filesystem::path& path);

std::string hex64(std::uint64_t v);

}  // namespace cxr
