#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>
#include <torch/torch.h>

namespace cxr {

enum class ArchitectureId { kCustomCnn, kResNet50, kDenseNet121, kEfficientNetB0 };

enum class Regime { kScratch, kFrozen, kFinetune };

std::string_view to_string(ArchitectureId arch);
std::string_view to_string(Regime regime);
ArchitectureId parse_architecture(std::string_view token);
Regime parse_regime(std::string_view token);

struct RegimeConfig {
  Regime regime = Regime::kScratch;
  double backbone_lr = 1e-3;
  double head_lr = 1e-3;
  int unfrozen_blocks = 2;  ///< trailing backbone stages trained under FINETUNE

  /// SCRATCH: 1e-3 everywhere. FROZEN: head 1e-3 (backbone rate unused).
  /// FINETUNE: backbone 1e-4, head 1e-3, last two stages unfrozen.
  static RegimeConfig defaults(Regime regime);
  /// Throws ConfigError: rates must be > 0, FINETUNE needs backbone_lr < head_lr.
  void validate() const;
};

struct ModelSpec {
  ArchitectureId arch = ArchitectureId::kCustomCnn;
  RegimeConfig regime;
  int num_classes = 2;
  double dropout = 0.5;
  int head_hidden = 512;
  int input_size = 224;

  void validate() const;
  nlohmann::json to_json() const;
  static ModelSpec from_json(const nlohmann::json& j);
  /// Stable 16-hex-digit hash of the canonical JSON form.
  std::string hash() const;
};

/// SCRATCH for the custom CNN, otherwise the regime's defaults.
ModelSpec default_spec(ArchitectureId arch, Regime regime);

/// "frozen" holds backbone parameters excluded from optimisation, "backbone"
/// the trainable backbone parameters and "head" the classifier.
struct ParamGroup {
  std::string name;
  std::int64_t parameter_count = 0;
  bool trainable = false;
  double learning_rate = 0.0;
};

struct ParameterCounts {
  std::int64_t total = 0;
  std::int64_t trainable = 0;
  std::vector<ParamGroup> by_group;
};

/// Network split into a final-conv feature extractor and a classifier so
/// Grad-CAM can differentiate with respect to the final feature map.
class ClassifierNetImpl : public torch::nn::Module {
 public:
  /// Output of the final convolutional layer, N x K x h x w.
  virtual torch::Tensor feature_map(const torch::Tensor& x) = 0;
  /// Logits N x 2 from a feature map.
  virtual torch::Tensor classify(const torch::Tensor& fmap) = 0;
  torch::Tensor forward(const torch::Tensor& x) { return classify(feature_map(x)); }

  /// Backbone-relative parameter-name prefixes of each top-level stage, in
  /// forward order. Used to pick the stages unfrozen under FINETUNE.
  virtual std::vector<std::vector<std::string>> backbone_stages() const = 0;
  virtual std::string final_conv_layer() const = 0;
  virtual std::shared_ptr<torch::nn::Module> backbone_module() = 0;
};

/// A built network with its regime applied.
class ModelHandle {
 public:
  ModelHandle(ModelSpec spec, std::shared_ptr<ClassifierNetImpl> net);

  torch::Tensor forward(const torch::Tensor& batch) { return net_->forward(batch); }

  /// Training mode, except that modules whose parameters are all frozen
  /// (e.g. BatchNorm in a frozen backbone) stay in eval mode.
  void train_mode();
  void eval_mode();

  const ModelSpec& spec() const { return spec_; }
  const std::vector<ParamGroup>& groups() const { return groups_; }
  const std::vector<torch::Tensor>& group_parameters(std::string_view name) const;
  std::string final_conv_layer() const { return net_->final_conv_layer(); }

  /// One Adam group per trainable ParamGroup, in groups() order.
  std::vector<torch::optim::OptimizerParamGroup> optimizer_groups(double beta1, double beta2,
                                                                  double eps) const;
  std::vector<std::string> optimizer_group_names() const;

  ClassifierNetImpl& net() { return *net_; }
  std::shared_ptr<ClassifierNetImpl> net_ptr() { return net_; }

 private:
  ModelSpec spec_;
  std::shared_ptr<ClassifierNetImpl> net_;
  std::vector<ParamGroup> groups_;
  std::vector<std::vector<torch::Tensor>> group_params_;
};

/// Location of pretrained backbone weights: `<dir>/<arch token>.pt`, each a
/// plain dict {parameter name: tensor} saved with torch.save.
struct WeightSource {
  std::filesystem::path directory;

  /// $CXR_WEIGHTS_DIR, else $HOME/.cache/cxr/weights.
  static WeightSource from_env();
  std::filesystem::path file_for(ArchitectureId arch) const;
};

inline constexpr const char* kWeightsEnvVar = "CXR_WEIGHTS_DIR";

/// Four 3x3 conv blocks (32-64-128-256, ReLU, 2x2 max-pool), then
/// flatten -> 512 -> ReLU -> Dropout -> 2. Throws ModelError if the input
/// size is not divisible by 16.
ModelHandle build_custom_cnn(const ModelSpec& spec);

/// Pretrained backbone with its classifier replaced by
/// feat -> 512 -> ReLU -> Dropout -> 2 and the regime applied. Throws
/// ModelError when the weight file is missing or does not match.
ModelHandle build_transfer_model(const ModelSpec& spec, const WeightSource& weights);

ModelHandle build_model(const ModelSpec& spec, const WeightSource& weights);

/// Architecture with framework-default initialisation and the regime applied;
/// no pretrained weights are read. Used to restore checkpoints.
ModelHandle instantiate_model(const ModelSpec& spec);

/// Bare backbone of a transfer architecture (framework-default init).
std::shared_ptr<torch::nn::Module> make_backbone(ArchitectureId arch);

ParameterCounts count_parameters(const ModelHandle& handle);

/// Strict load: every parameter and buffer must be present with the right
/// shape; extra keys (the original classifier) are ignored.
void load_state_dict(torch::nn::Module& module, const std::filesystem::path& file);
/// Writes a plain-dict pickle readable by load_state_dict and torch.load.
void save_state_dict(const torch::nn::Module& module, const std::filesystem::path& file);

/// Writes `<path>` (backend archive) and `<path stem>.json` {arch, regime, spec, spec_hash}.
void save_checkpoint(ModelHandle& handle, const std::filesystem::path& path);
ModelHandle load_checkpoint(const std::filesystem::path& path);

}  // namespace cxr
