#pragma once

#include "cxr/common/random.hpp"
#include "cxr/data/image.hpp"

namespace cxr {

/// Random training-time augmentation. Defaults: 50% horizontal flip,
/// rotation in +-10 deg, translation +-10% per axis, scale 0.9-1.1,
/// brightness and contrast factors in [0.8, 1.2].
struct AugmentPolicy {
  double hflip_prob = 0.5;
  double max_rotation_deg = 10.0;
  double max_translate_frac = 0.1;
  double scale_lo = 0.9;
  double scale_hi = 1.1;
  double jitter_frac = 0.2;

  /// Throws ConfigError when a magnitude is negative/non-finite, the flip
  /// probability is outside [0,1] or scale_lo > scale_hi.
  void validate() const;

  /// A policy that leaves every image untouched.
  static AugmentPolicy identity();
};

/// The parameters drawn for one image, in application order.
struct AugmentDraw {
  bool flip = false;
  double rotation_deg = 0.0;
  double translate_x = 0.0;  ///< fraction of width
  double translate_y = 0.0;  ///< fraction of height
  double scale = 1.0;
  double brightness = 1.0;
  double contrast = 1.0;
};

/// Always consumes exactly seven draws from `rng`, whatever the policy.
AugmentDraw draw_augmentation(const AugmentPolicy& policy, Rng& rng);

/// Applies flip, rotation, translate+scale (bilinear, zero fill), brightness
/// x*b, then contrast mean_c + c*(x - mean_c) with the per-channel mean.
Image apply_augmentation(const Image& img, const AugmentDraw& draw);

Image augment_image(const Image& img, const AugmentPolicy& policy, Rng& rng);

Image hflip(const Image& img);

/// Inverse-mapped affine warp about the image centre: output pixel p samples
/// the input at centre + inverse(A) * (p - centre - t). Zero outside.
Image warp_affine(const Image& img, double a00, double a01, double a10, double a11, double tx,
                  double ty);

}  // namespace cxr
