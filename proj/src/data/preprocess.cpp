#include "cxr/data/preprocess.hpp"

#include <cmath>
#include <string>

#include "cxr/common/error.hpp"

namespace cxr {

void PreprocessConfig::validate() const {
  if (target_size <= 0) throw ConfigError("preprocess target_size must be > 0");
  for (float s : channel_stds)
    if (!(s > 0.0f) || !std::isfinite(s)) throw ConfigError("preprocess channel stds must be > 0");
  for (float m : channel_means)
    if (!std::isfinite(m)) throw ConfigError("preprocess channel means must be finite");
}

Image prepare_image(const Image& raw, const PreprocessConfig& cfg) {
  if (raw.channels != 1 && raw.channels != 3)
    throw InvalidArgument("expected a 1- or 3-channel image, got " + std::to_string(raw.channels));
  Image resized = resize_bilinear(raw, cfg.target_size, cfg.target_size);
  if (resized.channels == 3) return resized;
  Image rgb(3, resized.height, resized.width);
  for (int c = 0; c < 3; ++c) std::copy(resized.data.begin(), resized.data.end(), rgb.plane(c));
  return rgb;
}

Image normalize(const Image& rgb, const PreprocessConfig& cfg) {
  if (rgb.channels != 3) throw InvalidArgument("normalize expects 3 channels");
  Image out = rgb;
  for (int c = 0; c < 3; ++c) {
    float* p = out.plane(c);
    const float mean = cfg.channel_means[c];
    const float std = cfg.channel_stds[c];
    for (std::size_t i = 0; i < out.plane_size(); ++i) p[i] = (p[i] - mean) / std;
  }
  return out;
}

Image denormalize(const Image& standardized, const PreprocessConfig& cfg) {
  if (standardized.channels != 3) throw InvalidArgument("denormalize expects 3 channels");
  Image out = standardized;
  for (int c = 0; c < 3; ++c) {
    float* p = out.plane(c);
    for (std::size_t i = 0; i < out.plane_size(); ++i)
      p[i] = p[i] * cfg.channel_stds[c] + cfg.channel_means[c];
  }
  return out;
}

Image preprocess_image(const Image& raw, const PreprocessConfig& cfg) {
  return normalize(prepare_image(raw, cfg), cfg);
}

Image to_grayscale(const Image& img) {
  if (img.channels == 1) return img;
  if (img.channels != 3) throw InvalidArgument("to_grayscale expects 1 or 3 channels");
  Image out(1, img.height, img.width);
  const float* r = img.plane(0);
  const float* g = img.plane(1);
  const float* b = img.plane(2);
  float* o = out.plane(0);
  for (std::size_t i = 0; i < img.plane_size(); ++i) {
    o[i] = (r[i] == g[i] && g[i] == b[i]) ? r[i] : 0.299f * r[i] + 0.587f * g[i] + 0.114f * b[i];
  }
  return out;
}

}  // namespace cxr
