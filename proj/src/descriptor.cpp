#include "ddet/descriptor.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

#include "ddet/kernels.hpp"

namespace ddet {
namespace {

// Plane layout inside each integral cell.
constexpr int kColorBase = 0;   // 24 planes: HSV channel*8 + bin
constexpr int kOrientBase = 24; // 8 planes: magnitude-weighted orientation bins
constexpr int kIntensity = 32;  // sum of (r+g+b)/3
constexpr int kIntensitySq = 33;
constexpr int kPlanes = 34;

inline double intensity(const Image& img, int x, int y) {
  return (img.at(x, y, 0) + img.at(x, y, 1) + img.at(x, y, 2)) / 3.0;
}

// Hue/saturation/value bins. Hue bins are offset by half a sector so the
// red wrap-around (348..12 degrees) falls inside one bin instead of being
// split across the first and last; saturation and value bin linearly.
inline void hsv_bins(unsigned char r, unsigned char g, unsigned char b,
                     int* hb, int* sb, int* vb) {
  const int mx = std::max({r, g, b});
  const int mn = std::min({r, g, b});
  const int c = mx - mn;
  double h = 0.0;
  if (c > 0) {
    if (mx == r)
      h = 60.0 * (std::fmod((g - b) / static_cast<double>(c) + 6.0, 6.0));
    else if (mx == g)
      h = 60.0 * ((b - r) / static_cast<double>(c) + 2.0);
    else
      h = 60.0 * ((r - g) / static_cast<double>(c) + 4.0);
  }
  *hb = std::min(static_cast<int>(std::fmod(h + 22.5, 360.0) / 45.0), 7);
  const double s = mx > 0 ? c / static_cast<double>(mx) : 0.0;
  *sb = std::min(static_cast<int>(s * 8.0), 7);
  *vb = mx >> 5;
}

}  // namespace

RegionDescriptors::RegionDescriptors(const Image& img)
    : w_(img.width), h_(img.height) {
  if (w_ <= 0 || h_ <= 0) throw std::invalid_argument("empty image");
  const std::size_t cols = static_cast<std::size_t>(w_) + 1;
  cells_.assign(cols * (static_cast<std::size_t>(h_) + 1) * kPlanes, 0.0);

  std::vector<double> inc(kPlanes);
  for (int y = 1; y <= h_; ++y) {
    for (int x = 1; x <= w_; ++x) {
      double* dst = cells_.data() + (static_cast<std::size_t>(y) * cols + x) * kPlanes;
      const double* left = dst - kPlanes;
      const double* up = dst - cols * kPlanes;
      const double* upleft = up - kPlanes;
      kernels::integral_step(dst, left, up, upleft, kPlanes);

      const int px = x - 1, py = y - 1;
      std::fill(inc.begin(), inc.end(), 0.0);
      int hb, sb, vb;
      hsv_bins(img.at(px, py, 0), img.at(px, py, 1), img.at(px, py, 2), &hb,
               &sb, &vb);
      inc[kColorBase + 0 * 8 + hb] += 1.0;
      inc[kColorBase + 1 * 8 + sb] += 1.0;
      inc[kColorBase + 2 * 8 + vb] += 1.0;
      if (px > 0 && px < w_ - 1 && py > 0 && py < h_ - 1) {
        const double gx = intensity(img, px + 1, py) - intensity(img, px - 1, py);
        const double gy = intensity(img, px, py + 1) - intensity(img, px, py - 1);
        const double mag = std::sqrt(gx * gx + gy * gy);
        if (mag > 0.0) {
          const double theta = std::atan2(gy, gx);  // [-pi, pi]
          int bin = static_cast<int>(
              (theta + std::numbers::pi) / (2.0 * std::numbers::pi) * 8.0);
          inc[kOrientBase + std::min(bin, 7)] += mag;
        }
      }
      const double inten = intensity(img, px, py);
      inc[kIntensity] += inten;
      inc[kIntensitySq] += inten * inten;
      for (int p = 0; p < kPlanes; ++p) dst[p] += inc[p];
    }
  }
}

void RegionDescriptors::describe(const Box& region, double* out) const {
  if (!region.valid()) throw std::invalid_argument("degenerate region");
  int x0 = std::clamp(static_cast<int>(std::floor(region.x_min)), 0, w_ - 1);
  int y0 = std::clamp(static_cast<int>(std::floor(region.y_min)), 0, h_ - 1);
  int x1 = std::clamp(static_cast<int>(std::ceil(region.x_max)), x0 + 1, w_);
  int y1 = std::clamp(static_cast<int>(std::ceil(region.y_max)), y0 + 1, h_);

  const std::size_t cols = static_cast<std::size_t>(w_) + 1;
  auto cell = [&](int x, int y) {
    return cells_.data() + (static_cast<std::size_t>(y) * cols + x) * kPlanes;
  };
  const double *a = cell(x0, y0), *b = cell(x1, y0), *c = cell(x0, y1),
               *d = cell(x1, y1);
  double sums[kPlanes];
  for (int p = 0; p < kPlanes; ++p) sums[p] = (d[p] - b[p]) - (c[p] - a[p]);

  const double n = static_cast<double>(x1 - x0) * static_cast<double>(y1 - y0);
  for (int ch = 0; ch < 3; ++ch)
    for (int bin = 0; bin < 8; ++bin)
      out[ch * 8 + bin] = sums[kColorBase + ch * 8 + bin] / n;

  double osum = 0.0;
  for (int bin = 0; bin < 8; ++bin) osum += sums[kOrientBase + bin];
  for (int bin = 0; bin < 8; ++bin)
    out[24 + bin] = osum > 0.0 ? sums[kOrientBase + bin] / osum : 0.0;

  const double mean = sums[kIntensity] / n;
  out[32] = mean / 255.0;
  const double var = sums[kIntensitySq] / n - mean * mean;
  out[33] = std::clamp(var / (127.5 * 127.5), 0.0, 1.0);

  out[34] = std::clamp(region.center_x() / w_, 0.0, 1.0);
  out[35] = std::clamp(region.center_y() / h_, 0.0, 1.0);
  out[36] = std::clamp(region.width() / w_, 0.0, 1.0);
  out[37] = std::clamp(region.height() / h_, 0.0, 1.0);
}

std::vector<double> RegionDescriptors::describe(const Box& region) const {
  std::vector<double> out(kDescriptorDim);
  describe(region, out.data());
  return out;
}

}  // namespace ddet
