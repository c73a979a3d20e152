#pragma once

#include <array>

#include "cxr/data/image.hpp"

namespace cxr {

/// ImageNet statistics by default.
struct PreprocessConfig {
  int target_size = 224;
  std::array<float, 3> channel_means{0.485f, 0.456f, 0.406f};
  std::array<float, 3> channel_stds{0.229f, 0.224f, 0.225f};

  /// Throws ConfigError if target_size <= 0 or any std is not > 0.
  void validate() const;
};

/// Resize (bilinear) to target x target and promote grayscale to 3 channels.
/// Values stay in the input range; this is the space augmentation works in.
Image prepare_image(const Image& raw, const PreprocessConfig& cfg);

/// Per-channel (x - mean_c) / std_c on a 3-channel image.
Image normalize(const Image& rgb, const PreprocessConfig& cfg);

/// Inverse of normalize.
Image denormalize(const Image& standardized, const PreprocessConfig& cfg);

/// prepare_image followed by normalize.
Image preprocess_image(const Image& raw, const PreprocessConfig& cfg);

/// Grayscale view of a prepared image (luma for colour input).
Image to_grayscale(const Image& img);

}  // namespace cxr
