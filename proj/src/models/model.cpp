#include "cxr/models/model.hpp"

#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "cxr/common/error.hpp"
#include "cxr/common/random.hpp"
#include "cxr/models/backbones.hpp"

namespace fs = std::filesystem;
namespace nn = torch::nn;
using nlohmann::json;

namespace cxr {
namespace {

nn::Sequential make_head(std::int64_t in_features, const ModelSpec& spec) {
  return nn::Sequential(nn::Linear(in_features, spec.head_hidden), nn::ReLU(),
                        nn::Dropout(spec.dropout), nn::Linear(spec.head_hidden, spec.num_classes));
}

class CustomCnnFeaturesImpl : public nn::Module {
 public:
  CustomCnnFeaturesImpl() {
    const std::int64_t widths[] = {3, 32, 64, 128, 256};
    for (int i = 0; i < 4; ++i)
      convs[i] = register_module("conv" + std::to_string(i + 1),
                                 nn::Conv2d(nn::Conv2dOptions(widths[i], widths[i + 1], 3).padding(1)));
  }
  nn::Conv2d convs[4] = {nullptr, nullptr, nullptr, nullptr};
};
TORCH_MODULE(CustomCnnFeatures);

class CustomCnnImpl : public ClassifierNetImpl {
 public:
  explicit CustomCnnImpl(const ModelSpec& spec) {
    const std::int64_t side = spec.input_size / 16;
    backbone_ = register_module("backbone", CustomCnnFeatures());
    head_ = register_module("head", make_head(256 * side * side, spec));
  }

  // Blocks 1-3 in full; block 4 stops at its convolution (the Grad-CAM layer).
  torch::Tensor feature_map(const torch::Tensor& x) override {
    auto out = x;
    for (int i = 0; i < 3; ++i) out = torch::max_pool2d(torch::relu(backbone_->convs[i](out)), 2);
    return backbone_->convs[3](out);
  }

  torch::Tensor classify(const torch::Tensor& fmap) override {
    auto out = torch::max_pool2d(torch::relu(fmap), 2).flatten(1);
    return head_->forward(out);
  }

  std::vector<std::vector<std::string>> backbone_stages() const override {
    return {{"conv1"}, {"conv2"}, {"conv3"}, {"conv4"}};
  }
  std::string final_conv_layer() const override { return "backbone.conv4"; }
  std::shared_ptr<nn::Module> backbone_module() override { return backbone_.ptr(); }

 private:
  CustomCnnFeatures backbone_{nullptr};
  nn::Sequential head_{nullptr};
};

class TransferNetImpl : public ClassifierNetImpl {
 public:
  TransferNetImpl(std::shared_ptr<BackboneImpl> backbone, const ModelSpec& spec) {
    backbone_ = register_module("backbone", std::move(backbone));
    head_ = register_module("head", make_head(backbone_->feature_dim(), spec));
  }

  torch::Tensor feature_map(const torch::Tensor& x) override { return backbone_->features(x); }
  torch::Tensor classify(const torch::Tensor& fmap) override {
    return head_->forward(backbone_->pool(fmap));
  }
  std::vector<std::vector<std::string>> backbone_stages() const override {
    return backbone_->stages();
  }
  std::string final_conv_layer() const override {
    return "backbone." + backbone_->final_conv_layer();
  }
  std::shared_ptr<nn::Module> backbone_module() override { return backbone_; }

 private:
  std::shared_ptr<BackboneImpl> backbone_;
  nn::Sequential head_{nullptr};
};

bool has_prefix(const std::string& name, const std::string& prefix) {
  return name.size() > prefix.size() && name.compare(0, prefix.size(), prefix) == 0 &&
         name[prefix.size()] == '.';
}

std::shared_ptr<ClassifierNetImpl> make_network(const ModelSpec& spec) {
  if (spec.arch == ArchitectureId::kCustomCnn) return std::make_shared<CustomCnnImpl>(spec);
  return std::make_shared<TransferNetImpl>(
      std::static_pointer_cast<BackboneImpl>(make_backbone(spec.arch)), spec);
}

}  // namespace

// ------------------------------------------------------------------ tokens

std::string_view to_string(ArchitectureId arch) {
  switch (arch) {
    case ArchitectureId::kCustomCnn: return "custom_cnn";
    case ArchitectureId::kResNet50: return "resnet50";
    case ArchitectureId::kDenseNet121: return "densenet121";
    case ArchitectureId::kEfficientNetB0: return "efficientnet_b0";
  }
  return "custom_cnn";
}

std::string_view to_string(Regime regime) {
  switch (regime) {
    case Regime::kScratch: return "scratch";
    case Regime::kFrozen: return "frozen";
    case Regime::kFinetune: return "finetune";
  }
  return "scratch";
}

ArchitectureId parse_architecture(std::string_view t) {
  if (t == "custom_cnn" || t == "custom") return ArchitectureId::kCustomCnn;
  if (t == "resnet50") return ArchitectureId::kResNet50;
  if (t == "densenet121") return ArchitectureId::kDenseNet121;
  if (t == "efficientnet_b0" || t == "efficientnet") return ArchitectureId::kEfficientNetB0;
  throw ConfigError("unknown architecture '" + std::string(t) + "'");
}

Regime parse_regime(std::string_view t) {
  if (t == "scratch") return Regime::kScratch;
  if (t == "frozen") return Regime::kFrozen;
  if (t == "finetune") return Regime::kFinetune;
  throw ConfigError("unknown regime '" + std::string(t) + "'");
}

// ------------------------------------------------------------ spec/regime

RegimeConfig RegimeConfig::defaults(Regime regime) {
  switch (regime) {
    case Regime::kScratch: return {Regime::kScratch, 1e-3, 1e-3, 0};
    case Regime::kFrozen: return {Regime::kFrozen, 1e-4, 1e-3, 0};
    case Regime::kFinetune: return {Regime::kFinetune, 1e-4, 1e-3, 2};
  }
  return {};
}

void RegimeConfig::validate() const {
  if (!(backbone_lr > 0.0) || !(head_lr > 0.0)) throw ConfigError("learning rates must be > 0");
  if (regime == Regime::kFinetune) {
    if (!(backbone_lr < head_lr))
      throw ConfigError("fine-tuning requires backbone_lr < head_lr");
    if (unfrozen_blocks <= 0) throw ConfigError("fine-tuning requires unfrozen_blocks > 0");
  }
}

void ModelSpec::validate() const {
  regime.validate();
  if (num_classes != 2) throw ConfigError("only binary classification (num_classes = 2) is supported");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("dropout must be in [0, 1)");
  if (head_hidden <= 0) throw ConfigError("head_hidden must be > 0");
  if (input_size <= 0) throw ConfigError("input_size must be > 0");
  const bool custom = arch == ArchitectureId::kCustomCnn;
  if (custom && regime.regime != Regime::kScratch)
    throw ConfigError("the custom CNN is only trained from scratch");
  if (!custom && regime.regime == Regime::kScratch)
    throw ConfigError("transfer architectures use the frozen or finetune regime");
}

json ModelSpec::to_json() const {
  return {{"arch", std::string(cxr::to_string(arch))},
          {"regime",
           {{"regime", std::string(cxr::to_string(regime.regime))},
            {"backbone_lr", regime.backbone_lr},
            {"head_lr", regime.head_lr},
            {"unfrozen_blocks", regime.unfrozen_blocks}}},
          {"num_classes", num_classes},
          {"dropout", dropout},
          {"head_hidden", head_hidden},
          {"input_size", input_size}};
}

ModelSpec ModelSpec::from_json(const json& j) {
  try {
    ModelSpec s;
    s.arch = parse_architecture(j.at("arch").get<std::string>());
    const auto& r = j.at("regime");
    s.regime.regime = parse_regime(r.at("regime").get<std::string>());
    s.regime.backbone_lr = r.at("backbone_lr").get<double>();
    s.regime.head_lr = r.at("head_lr").get<double>();
    s.regime.unfrozen_blocks = r.at("unfrozen_blocks").get<int>();
    s.num_classes = j.at("num_classes").get<int>();
    s.dropout = j.at("dropout").get<double>();
    s.head_hidden = j.at("head_hidden").get<int>();
    s.input_size = j.at("input_size").get<int>();
    return s;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("malformed model spec: ") + e.what());
  }
}

std::string ModelSpec::hash() const {
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << fnv1a64(to_json().dump());
  return os.str();
}

ModelSpec default_spec(ArchitectureId arch, Regime regime) {
  ModelSpec s;
  s.arch = arch;
  s.regime = RegimeConfig::defaults(arch == ArchitectureId::kCustomCnn ? Regime::kScratch : regime);
  return s;
}

// ------------------------------------------------------------------ handle

ModelHandle::ModelHandle(ModelSpec spec, std::shared_ptr<ClassifierNetImpl> net)
    : spec_(std::move(spec)), net_(std::move(net)) {
  const auto& rc = spec_.regime;
  std::vector<std::string> unfrozen;
  if (rc.regime == Regime::kFinetune) {
    const auto stages = net_->backbone_stages();
    const int n = std::min<int>(rc.unfrozen_blocks, static_cast<int>(stages.size()));
    for (auto it = stages.end() - n; it != stages.end(); ++it)
      unfrozen.insert(unfrozen.end(), it->begin(), it->end());
  }

  std::vector<torch::Tensor> frozen, backbone, head;
  for (const auto& item : net_->backbone_module()->named_parameters()) {
    bool trainable = rc.regime == Regime::kScratch;
    for (const auto& p : unfrozen) trainable = trainable || has_prefix(item.key(), p);
    item.value().set_requires_grad(trainable);
    (trainable ? backbone : frozen).push_back(item.value());
  }
  for (const auto& item : net_->named_parameters()) {
    if (item.key().rfind("head.", 0) == 0) {
      item.value().set_requires_grad(true);
      head.push_back(item.value());
    }
  }

  const auto count = [](const std::vector<torch::Tensor>& ps) {
    std::int64_t n = 0;
    for (const auto& p : ps) n += p.numel();
    return n;
  };
  if (!frozen.empty()) {
    groups_.push_back({"frozen", count(frozen), false, 0.0});
    group_params_.push_back(std::move(frozen));
  }
  if (!backbone.empty()) {
    groups_.push_back({"backbone", count(backbone), true, rc.backbone_lr});
    group_params_.push_back(std::move(backbone));
  }
  groups_.push_back({"head", count(head), true, rc.head_lr});
  group_params_.push_back(std::move(head));
}

void ModelHandle::train_mode() {
  net_->train(true);
  for (const auto& m : net_->modules(/*include_self=*/false)) {
    const auto params = m->parameters(/*recurse=*/false);
    if (params.empty()) continue;
    bool all_frozen = true;
    for (const auto& p : params) all_frozen = all_frozen && !p.requires_grad();
    if (all_frozen) m->eval();
  }
}

void ModelHandle::eval_mode() { net_->eval(); }

const std::vector<torch::Tensor>& ModelHandle::group_parameters(std::string_view name) const {
  for (std::size_t i = 0; i < groups_.size(); ++i)
    if (groups_[i].name == name) return group_params_[i];
  throw InvalidArgument("no parameter group named '" + std::string(name) + "'");
}

std::vector<torch::optim::OptimizerParamGroup> ModelHandle::optimizer_groups(double beta1,
                                                                             double beta2,
                                                                             double eps) const {
  std::vector<torch::optim::OptimizerParamGroup> out;
  for (std::size_t i = 0; i < groups_.size(); ++i) {
    if (!groups_[i].trainable) continue;
    auto opts = std::make_unique<torch::optim::AdamOptions>(groups_[i].learning_rate);
    opts->betas({beta1, beta2}).eps(eps);
    out.emplace_back(group_params_[i], std::move(opts));
  }
  return out;
}

std::vector<std::string> ModelHandle::optimizer_group_names() const {
  std::vector<std::string> out;
  for (const auto& g : groups_)
    if (g.trainable) out.push_back(g.name);
  return out;
}

ParameterCounts count_parameters(const ModelHandle& handle) {
  ParameterCounts c;
  c.by_group = handle.groups();
  for (const auto& g : c.by_group) {
    c.total += g.parameter_count;
    if (g.trainable) c.trainable += g.parameter_count;
  }
  return c;
}

// --------------------------------------------------------------- weights

WeightSource WeightSource::from_env() {
  if (const char* dir = std::getenv(kWeightsEnvVar); dir && *dir) return {fs::path(dir)};
  const char* home = std::getenv("HOME");
  return {fs::path(home ? home : ".") / ".cache" / "cxr" / "weights"};
}

fs::path WeightSource::file_for(ArchitectureId arch) const {
  return directory / (std::string(to_string(arch)) + ".pt");
}

void load_state_dict(nn::Module& module, const fs::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw ModelError("cannot open weight file " + file.string());
  std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  c10::IValue value;
  try {
    value = torch::pickle_load(bytes);
  } catch (const c10::Error& e) {
    throw ModelError("cannot read weight file " + file.string() +
                     " (expected torch.save of a plain dict): " + e.what_without_backtrace());
  }
  if (!value.isGenericDict())
    throw ModelError("weight file " + file.string() +
                     " must hold a plain dict of tensors; save dict(model.state_dict())");
  std::map<std::string, torch::Tensor> tensors;
  for (const auto& kv : value.toGenericDict())
    if (kv.key().isString() && kv.value().isTensor())
      tensors.emplace(kv.key().toStringRef(), kv.value().toTensor());

  torch::NoGradGuard guard;
  const auto assign = [&](const std::string& name, torch::Tensor& target) {
    const auto it = tensors.find(name);
    if (it == tensors.end())
      throw ModelError("weight file " + file.string() + " lacks tensor '" + name + "'");
    if (it->second.sizes() != target.sizes())
      throw ModelError("shape mismatch for '" + name + "' in " + file.string());
    target.copy_(it->second.to(target.dtype()));
  };
  for (auto& item : module.named_parameters()) assign(item.key(), item.value());
  for (auto& item : module.named_buffers()) assign(item.key(), item.value());
}

void save_state_dict(const nn::Module& module, const fs::path& file) {
  c10::Dict<std::string, torch::Tensor> dict;
  for (const auto& item : module.named_parameters()) dict.insert(item.key(), item.value().detach());
  for (const auto& item : module.named_buffers()) dict.insert(item.key(), item.value().detach());
  const auto bytes = torch::pickle_save(c10::IValue(dict));
  if (file.has_parent_path()) fs::create_directories(file.parent_path());
  std::ofstream out(file, std::ios::binary);
  if (!out) throw ModelError("cannot write weight file " + file.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

// ---------------------------------------------------------------- builders

std::shared_ptr<nn::Module> make_backbone(ArchitectureId arch) {
  switch (arch) {
    case ArchitectureId::kResNet50: return make_resnet50();
    case ArchitectureId::kDenseNet121: return make_densenet121();
    case ArchitectureId::kEfficientNetB0: return make_efficientnet_b0();
    case ArchitectureId::kCustomCnn: break;
  }
  throw ModelError("architecture '" + std::string(to_string(arch)) + "' has no pretrained backbone");
}

ModelHandle build_custom_cnn(const ModelSpec& spec) {
  if (spec.arch != ArchitectureId::kCustomCnn)
    throw ModelError("build_custom_cnn called for " + std::string(to_string(spec.arch)));
  if (spec.input_size % 16 != 0)
    throw ModelError("custom CNN input size must be divisible by 16, got " +
                     std::to_string(spec.input_size));
  spec.validate();
  return ModelHandle(spec, make_network(spec));
}

ModelHandle build_transfer_model(const ModelSpec& spec, const WeightSource& weights) {
  if (spec.arch == ArchitectureId::kCustomCnn)
    throw ModelError("build_transfer_model needs a pretrained architecture, got custom_cnn");
  spec.validate();
  const fs::path file = weights.file_for(spec.arch);
  if (!fs::exists(file)) {
    throw ModelError("pretrained weights for " + std::string(to_string(spec.arch)) +
                     " not found at " + file.string() + ". Provision them with " +
                     "`python3 tools/export_torchvision_weights.py --out <dir>` and set " +
                     kWeightsEnvVar + "=<dir>");
  }
  auto net = make_network(spec);
  load_state_dict(*net->backbone_module(), file);
  return ModelHandle(spec, std::move(net));
}

ModelHandle build_model(const ModelSpec& spec, const WeightSource& weights) {
  return spec.arch == ArchitectureId::kCustomCnn ? build_custom_cnn(spec)
                                                 : build_transfer_model(spec, weights);
}

ModelHandle instantiate_model(const ModelSpec& spec) {
  if (spec.arch == ArchitectureId::kCustomCnn) return build_custom_cnn(spec);
  spec.validate();
  return ModelHandle(spec, make_network(spec));
}

// ------------------------------------------------------------- checkpoints

void save_checkpoint(ModelHandle& handle, const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  torch::save(std::static_pointer_cast<nn::Module>(handle.net_ptr()), path.string());
  fs::path descriptor = path;
  descriptor.replace_extension(".json");
  const auto& spec = handle.spec();
  const json j = {{"arch", std::string(to_string(spec.arch))},
                  {"regime", std::string(to_string(spec.regime.regime))},
                  {"spec", spec.to_json()},
                  {"spec_hash", spec.hash()}};
  std::ofstream out(descriptor);
  out << j.dump(2) << '\n';
}

ModelHandle load_checkpoint(const fs::path& path) {
  fs::path descriptor = path;
  descriptor.replace_extension(".json");
  std::ifstream in(descriptor);
  if (!in) throw ModelError("checkpoint descriptor missing: " + descriptor.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ModelError("malformed checkpoint descriptor " + descriptor.string() + ": " + e.what());
  }
  const auto spec = ModelSpec::from_json(j.at("spec"));
  if (j.value("spec_hash", "") != spec.hash())
    throw ModelError("checkpoint descriptor hash mismatch in " + descriptor.string());
  auto handle = instantiate_model(spec);
  auto module = std::static_pointer_cast<nn::Module>(handle.net_ptr());
  try {
    torch::load(module, path.string());
  } catch (const c10::Error& e) {
    throw ModelError("cannot load checkpoint " + path.string() + ": " + e.what_without_backtrace());
  }
  return handle;
}

}  // namespace cxr
