#pragma once

#include <vector>

#include "ddet/geometry.hpp"
#include "ddet/image.hpp"

namespace ddet {

// Region descriptor layout (all components in [0,1]):
//   [0..23]  color histogram, 3 channels x 8 bins (bin = value >> 5),
//            each channel L1-normalized over the region
//   [24..31] gradient-orientation histogram over interior pixels,
//            magnitude-weighted, L1-normalized (all zero for flat regions)
//   [32]     mean intensity / 255
//   [33]     intensity variance / 127.5^2, clamped to [0,1]
//   [34..37] region center x/W, center y/H, width/W, height/H
inline constexpr int kDescriptorDim = 38;
inline constexpr int kDescriptorVersion = 1;

// Integral planes over one image; descriptors for any region cost O(planes).
class RegionDescriptors {
 public:
  explicit RegionDescriptors(const Image& img);

  void describe(const Box& region, double* out) const;
  std::vector<double> describe(const Box& region) const;

 private:
  int w_ = 0, h_ = 0;
  // (w+1) x (h+1) cells, kPlanes doubles per cell, interleaved so the
  // prefix recurrence runs over contiguous lanes.
  std::vector<double> cells_;
};

}  // namespace ddet
