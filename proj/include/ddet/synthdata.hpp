#pragma once

#include <cstdint>
#include <map>
#include <string>

#include "ddet/dataset.hpp"

namespace ddet {

inline constexpr int kImageSize = 225;

// Rendering parameter ranges for one corpus. Everything here is echoed into
// the dataset manifest so corpora can be compared without pixel inspection.
struct RenderParams {
  // mucosa background: bright desaturated pink, so tissue keeps blue-channel
  // mass that the warm saturated lesion families lack
  double bg_hue_lo = 340.0, bg_hue_hi = 356.0;
  double bg_sat_lo = 0.22, bg_sat_hi = 0.38;
  double bg_val_lo = 0.72, bg_val_hi = 0.86;
  double vignette_lo = 0.10, vignette_hi = 0.22;
  double noise_amp = 4.0;
  double specular_lo = 2.0, specular_hi = 6.0;
  // polyp family: filled ellipse with a specular highlight
  double polyp_hue_lo = 26.0, polyp_hue_hi = 48.0;
  double polyp_sat_lo = 0.55, polyp_sat_hi = 0.85;
  double polyp_val_lo = 0.55, polyp_val_hi = 0.82;
  double size_lo = 46.0, size_hi = 118.0;  // box major dimension, px
  double aspect_lo = 0.67, aspect_hi = 1.5;
  // ndbe family: elongated low-contrast reddish patch
  double ndbe_aspect_lo = 2.2, ndbe_aspect_hi = 3.6;
  double ndbe_alpha = 0.45;
  // neoplasia family: irregular speckled blob, dark red; a fraction is
  // rendered ellipse-like to overlap visually with the polyp family
  double neo_val_lo = 0.35, neo_val_hi = 0.60;
  double neo_ellipse_frac = 0.3;

  std::map<std::string, double> to_map() const;
};

RenderParams proxy_render_params();   // broad polyp appearance band
RenderParams edd_render_params();     // narrower polyp hue band
RenderParams unseen_render_params();  // shifted hue / brightness / sizes

struct GenTriple {
  DataSet train, val, test;
};

// Single-class corpus: 800/100/100 images, 858/111/102 polyp instances.
GenTriple generate_polyp_proxy(std::uint64_t seed);

// Imbalanced multi-class corpus: 376/38/38 images with per-split instance
// counts ndbe (239, 28, 19), neoplasia (183, 21, 31), polyp (172, 24, 32).
GenTriple generate_edd_proxy(std::uint64_t seed);

// 38 images, same class mix as the edd test split, shifted rendering.
DataSet generate_unseen_test(std::uint64_t seed);

}  // namespace ddet
