#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ddet/dataset.hpp"

namespace ddet {

// Training-time augmentation policy. Geometric ops move boxes with the
// raster; photometric ops touch pixels only. Each enabled op is gated by an
// independent Bernoulli draw from its own derived stream, so toggling one op
// never shifts another op's randomness.
struct AugmentPolicy {
  std::vector<std::string> geometric;    // from {rot90_random, hflip, vflip, center_crop}
  std::vector<std::string> photometric;  // from {blur, equalize, contrast, brightness,
                                         //       darkness, sharpness, hue, saturation}
  double p_apply = 0.5;
  std::uint64_t seed = 0;

  int blur_lo = 3, blur_hi = 5;  // odd box-kernel sizes
  double contrast_lo = 0.7, contrast_hi = 1.3;
  double brightness_lo = 1.0, brightness_hi = 1.3;
  double darkness_lo = 0.7, darkness_hi = 1.0;
  double sharp_lo = 0.5, sharp_hi = 1.5;
  double hue_shift_deg = 18.0;
  double saturation_lo = 0.7, saturation_hi = 1.3;
  double crop_frac = 0.8;
  double min_box_area = 16.0;

  static AugmentPolicy none(std::uint64_t seed);
  static AugmentPolicy geometric_only(std::uint64_t seed);
  static AugmentPolicy photometric_only(std::uint64_t seed);
  static AugmentPolicy combined(std::uint64_t seed);

  bool empty() const { return geometric.empty() && photometric.empty(); }
  void validate() const;  // throws on unknown op names or bad ranges
};

// Deterministic in (sample, policy, draw); draw indexes the augmentation
// stream (one value per training visit).
ImageSample apply_augment(const ImageSample& sample, const AugmentPolicy& policy,
                          std::uint64_t draw);

// One quarter turn counterclockwise maps (x, y) to (y, W - x); k turns
// compose, swapping the frame each time.
Box box_transform_rot90(const Box& box, double frame_w, double frame_h,
                        int quarter_turns);

Image rot90_image(const Image& img, int quarter_turns);
Image hflip_image(const Image& img);
Image vflip_image(const Image& img);
Image box_blur(const Image& img, int k);
Image equalize_image(const Image& img);

}  // namespace ddet
