#pragma once

#include <memory>
#include <string>
#include <vector>

#include <torch/torch.h>

namespace cxr {

/// Convolutional feature extractor. Parameter names follow torchvision so a
/// torchvision state dict loads without renaming.
class BackboneImpl : public torch::nn::Module {
 public:
  /// Output of the final convolutional stage.
  virtual torch::Tensor features(const torch::Tensor& x) = 0;
  /// Global pooling of `features` to N x feature_dim().
  virtual torch::Tensor pool(const torch::Tensor& fmap) = 0;
  virtual std::int64_t feature_dim() const = 0;
  /// Parameter-name prefixes of each top-level stage, in forward order.
  virtual std::vector<std::vector<std::string>> stages() const = 0;
  virtual std::string final_conv_layer() const = 0;
};

/// ResNet-50 (v1.5: stride on the 3x3 conv), without avgpool/fc.
std::shared_ptr<BackboneImpl> make_resnet50();
/// DenseNet-121 (growth 32, blocks 6/12/24/16), without the classifier.
std::shared_ptr<BackboneImpl> make_densenet121();
/// EfficientNet-B0 features (stem, seven MBConv stages, 1x1 head conv).
std::shared_ptr<BackboneImpl> make_efficientnet_b0();

}  // namespace cxr
