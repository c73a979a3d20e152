#pragma once

#include <optional>

#include <torch/torch.h>

#include "cxr/explain/gradcam.hpp"
#include "cxr/models/model.hpp"

namespace cxr {

/// Eval-mode forward pass on one standardized image (1 x 3 x S x S or
/// 3 x S x S), then the gradient of the selected logit (override, else the
/// argmax) with respect to the final convolutional feature map. Parameter
/// values and their .grad fields are left untouched; the model's previous
/// train/eval mode is restored.
ActivationBundle capture(ModelHandle& model, const torch::Tensor& image,
                         std::optional<int> class_override = std::nullopt);

}  // namespace cxr
