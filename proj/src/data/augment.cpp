#include "cxr/data/augment.hpp"

#include <cmath>
#include <numbers>

#include "cxr/common/error.hpp"

namespace cxr {

void AugmentPolicy::validate() const {
  if (!std::isfinite(hflip_prob) || hflip_prob < 0.0 || hflip_prob > 1.0)
    throw ConfigError("augment hflip_prob must be within [0, 1]");
  for (double v : {max_rotation_deg, max_translate_frac, scale_lo, scale_hi, jitter_frac})
    if (!std::isfinite(v) || v < 0.0)
      throw ConfigError("augment magnitudes must be finite and non-negative");
  if (scale_lo > scale_hi) throw ConfigError("augment scale range must satisfy lo <= hi");
  if (scale_lo == 0.0) throw ConfigError("augment scale must be > 0");
}

AugmentPolicy AugmentPolicy::identity() { return {0.0, 0.0, 0.0, 1.0, 1.0, 0.0}; }

AugmentDraw draw_augmentation(const AugmentPolicy& p, Rng& rng) {
  AugmentDraw d;
  d.flip = rng.bernoulli(p.hflip_prob);
  d.rotation_deg = rng.uniform(-p.max_rotation_deg, p.max_rotation_deg);
  d.translate_x = rng.uniform(-p.max_translate_frac, p.max_translate_frac);
  d.translate_y = rng.uniform(-p.max_translate_frac, p.max_translate_frac);
  d.scale = rng.uniform(p.scale_lo, p.scale_hi);
  d.brightness = rng.uniform(1.0 - p.jitter_frac, 1.0 + p.jitter_frac);
  d.contrast = rng.uniform(1.0 - p.jitter_frac, 1.0 + p.jitter_frac);
  return d;
}

Image hflip(const Image& img) {
  Image out(img.channels, img.height, img.width);
  for (int c = 0; c < img.channels; ++c)
    for (int y = 0; y < img.height; ++y)
      for (int x = 0; x < img.width; ++x) out.at(c, y, x) = img.at(c, y, img.width - 1 - x);
  return out;
}

Image warp_affine(const Image& img, double a00, double a01, double a10, double a11, double tx,
                  double ty) {
  const double det = a00 * a11 - a01 * a10;
  if (det == 0.0) throw InvalidArgument("singular affine transform");
  const double i00 = a11 / det, i01 = -a01 / det, i10 = -a10 / det, i11 = a00 / det;
  const double cx = (img.width - 1) * 0.5;
  const double cy = (img.height - 1) * 0.5;

  Image out(img.channels, img.height, img.width);
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      const double dx = x - cx - tx;
      const double dy = y - cy - ty;
      const double sx = cx + i00 * dx + i01 * dy;
      const double sy = cy + i10 * dx + i11 * dy;
      const double fx = std::floor(sx);
      const double fy = std::floor(sy);
      const int x0 = static_cast<int>(fx);
      const int y0 = static_cast<int>(fy);
      const float wx = static_cast<float>(sx - fx);
      const float wy = static_cast<float>(sy - fy);
      for (int c = 0; c < img.channels; ++c) {
        const auto sample = [&](int yy, int xx) -> float {
          if (xx < 0 || yy < 0 || xx >= img.width || yy >= img.height) return 0.0f;
          return img.at(c, yy, xx);
        };
        const float top = sample(y0, x0) * (1.0f - wx) + sample(y0, x0 + 1) * wx;
        const float bot = sample(y0 + 1, x0) * (1.0f - wx) + sample(y0 + 1, x0 + 1) * wx;
        out.at(c, y, x) = top * (1.0f - wy) + bot * wy;
      }
    }
  }
  return out;
}

Image apply_augmentation(const Image& img, const AugmentDraw& d) {
  Image out = d.flip ? hflip(img) : img;

  if (d.rotation_deg != 0.0) {
    const double rad = d.rotation_deg * std::numbers::pi / 180.0;
    const double c = std::cos(rad), s = std::sin(rad);
    out = warp_affine(out, c, -s, s, c, 0.0, 0.0);
  }
  if (d.translate_x != 0.0 || d.translate_y != 0.0 || d.scale != 1.0) {
    out = warp_affine(out, d.scale, 0.0, 0.0, d.scale, d.translate_x * out.width,
                      d.translate_y * out.height);
  }
  if (d.brightness != 1.0) {
    const auto b = static_cast<float>(d.brightness);
    for (float& v : out.data) v *= b;
  }
  if (d.contrast != 1.0) {
    const auto k = static_cast<float>(d.contrast);
    for (int ch = 0; ch < out.channels; ++ch) {
      float* p = out.plane(ch);
      double sum = 0.0;
      for (std::size_t i = 0; i < out.plane_size(); ++i) sum += p[i];
      const auto mean = static_cast<float>(sum / static_cast<double>(out.plane_size()));
      for (std::size_t i = 0; i < out.plane_size(); ++i) p[i] = mean + k * (p[i] - mean);
    }
  }
  return out;
}

Image augment_image(const Image& img, const AugmentPolicy& policy, Rng& rng) {
  return apply_augmentation(img, draw_augmentation(policy, rng));
}

}  // namespace cxr
