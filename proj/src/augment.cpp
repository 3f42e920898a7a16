#include "ddet/augment.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "ddet/kernels.hpp"
#include "ddet/rng.hpp"

namespace ddet {

namespace {

// Fixed op slots; ops always apply in slot order regardless of the order
// they were listed in the policy.
const char* kGeoOps[] = {"rot90_random", "hflip", "vflip", "center_crop"};
const char* kPhotoOps[] = {"blur",      "equalize",  "contrast", "brightness",
                           "darkness",  "sharpness", "hue",      "saturation"};
constexpr int kGeoCount = 4;
constexpr int kPhotoCount = 8;

int geo_slot(const std::string& name) {
  for (int i = 0; i < kGeoCount; ++i)
    if (name == kGeoOps[i]) return i;
  return -1;
}

int photo_slot(const std::string& name) {
  for (int i = 0; i < kPhotoCount; ++i)
    if (name == kPhotoOps[i]) return kGeoCount + i;
  return -1;
}

double gray_mean(const Image& img) {
  double sum = 0.0;
  for (std::size_t i = 0; i < img.pixel_count(); ++i)
    sum += (img.pixels[i * 3] + img.pixels[i * 3 + 1] + img.pixels[i * 3 + 2]) / 3.0;
  return sum / static_cast<double>(img.pixel_count());
}

Image gray_image(const Image& img) {
  Image out(img.width, img.height);
  for (std::size_t i = 0; i < img.pixel_count(); ++i) {
    double g = (img.pixels[i * 3] + img.pixels[i * 3 + 1] + img.pixels[i * 3 + 2]) / 3.0;
    double r = std::nearbyint(g);
    auto v = static_cast<std::uint8_t>(r < 0 ? 0 : (r > 255 ? 255 : r));
    out.pixels[i * 3] = out.pixels[i * 3 + 1] = out.pixels[i * 3 + 2] = v;
  }
  return out;
}

void rgb_to_hsv(double r, double g, double b, double& h, double& s, double& v) {
  double mx = std::max({r, g, b}), mn = std::min({r, g, b});
  double c = mx - mn;
  v = mx / 255.0;
  s = mx > 0 ? c / mx : 0.0;
  if (c == 0) {
    h = 0;
  } else if (mx == r) {
    h = 60.0 * std::fmod((g - b) / c, 6.0);
  } else if (mx == g) {
    h = 60.0 * ((b - r) / c + 2.0);
  } else {
    h = 60.0 * ((r - g) / c + 4.0);
  }
  if (h < 0) h += 360.0;
}

Image shift_hue(const Image& img, double degrees) {
  Image out(img.width, img.height);
  for (std::size_t i = 0; i < img.pixel_count(); ++i) {
    double h, s, v;
    rgb_to_hsv(img.pixels[i * 3], img.pixels[i * 3 + 1], img.pixels[i * 3 + 2], h,
               s, v);
    double rgb[3];
    hsv_to_rgb(h + degrees, s, v, rgb);
    for (int c = 0; c < 3; ++c) {
      double r = std::nearbyint(rgb[c]);
      out.pixels[i * 3 + c] =
          static_cast<std::uint8_t>(r < 0 ? 0 : (r > 255 ? 255 : r));
    }
  }
  return out;
}

struct GeoResult {
  Image image;
  std::vector<Annotation> annotations;
  bool ok = true;  // false → all boxes dropped, caller rolls the op back
};

GeoResult center_crop(const Image& img, const std::vector<Annotation>& anns,
                      double frac, double min_area) {
  int cw = static_cast<int>(std::lround(frac * img.width));
  int ch = static_cast<int>(std::lround(frac * img.height));
  int ox = (img.width - cw) / 2;
  int oy = (img.height - ch) / 2;

  Image crop(cw, ch);
  for (int y = 0; y < ch; ++y)
    for (int x = 0; x < cw; ++x)
      for (int c = 0; c < 3; ++c) crop.at(x, y, c) = img.at(x + ox, y + oy, c);

  GeoResult res;
  res.image = resize_bilinear(crop, img.width, img.height);

  double sx = static_cast<double>(img.width) / cw;
  double sy = static_cast<double>(img.height) / ch;
  for (const auto& a : anns) {
    Box b{(a.box.x_min - ox) * sx, (a.box.y_min - oy) * sy,
          (a.box.x_max - ox) * sx, (a.box.y_max - oy) * sy};
    b.x_min = std::clamp(b.x_min, 0.0, static_cast<double>(img.width));
    b.x_max = std::clamp(b.x_max, 0.0, static_cast<double>(img.width));
    b.y_min = std::clamp(b.y_min, 0.0, static_cast<double>(img.height));
    b.y_max = std::clamp(b.y_max, 0.0, static_cast<double>(img.height));
    if (b.valid() && b.area() >= min_area)
      res.annotations.push_back(Annotation{b, a.class_index});
  }
  res.ok = !res.annotations.empty();
  return res;
}

}  // namespace

AugmentPolicy AugmentPolicy::none(std::uint64_t seed) {
  AugmentPolicy p;
  p.seed = seed;
  return p;
}

AugmentPolicy AugmentPolicy::geometric_only(std::uint64_t seed) {
  AugmentPolicy p;
  p.seed = seed;
  p.geometric = {"rot90_random", "hflip", "vflip", "center_crop"};
  return p;
}

AugmentPolicy AugmentPolicy::photometric_only(std::uint64_t seed) {
  AugmentPolicy p;
  p.seed = seed;
  p.photometric = {"blur",     "equalize",  "contrast", "brightness",
                   "darkness", "sharpness", "hue",      "saturation"};
  return p;
}

AugmentPolicy AugmentPolicy::combined(std::uint64_t seed) {
  AugmentPolicy p = geometric_only(seed);
  p.photometric = photometric_only(seed).photometric;
  return p;
}

void AugmentPolicy::validate() const {
  for (const auto& op : geometric)
    if (geo_slot(op) < 0) throw std::runtime_error("unknown geometric op: " + op);
  for (const auto& op : photometric)
    if (photo_slot(op) < 0)
      throw std::runtime_error("unknown photometric op: " + op);
  if (p_apply < 0.0 || p_apply > 1.0)
    throw std::runtime_error("p_apply outside [0,1]");
  if (blur_lo < 3 || blur_hi < blur_lo || blur_lo % 2 == 0 || blur_hi % 2 == 0)
    throw std::runtime_error("blur kernel range must be odd and ordered");
  if (crop_frac <= 0.0 || crop_frac > 1.0)
    throw std::runtime_error("crop_frac outside (0,1]");
}

Box box_transform_rot90(const Box& box, double frame_w, double frame_h,
                        int quarter_turns) {
  Box b = box;
  double w = frame_w, h = frame_h;
  for (int i = 0; i < (quarter_turns % 4 + 4) % 4; ++i) {
    b = Box{b.y_min, w - b.x_max, b.y_max, w - b.x_min};
    std::swap(w, h);
  }
  return b;
}

Image rot90_image(const Image& img, int quarter_turns) {
  Image cur = img;
  for (int i = 0; i < (quarter_turns % 4 + 4) % 4; ++i) {
    Image next(cur.height, cur.width);
    for (int y = 0; y < next.height; ++y)
      for (int x = 0; x < next.width; ++x)
        for (int c = 0; c < 3; ++c)
          next.at(x, y, c) = cur.at(cur.width - 1 - y, x, c);
    cur = std::move(next);
  }
  return cur;
}

Image hflip_image(const Image& img) {
  Image out(img.width, img.height);
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x)
      for (int c = 0; c < 3; ++c) out.at(x, y, c) = img.at(img.width - 1 - x, y, c);
  return out;
}

Image vflip_image(const Image& img) {
  Image out(img.width, img.height);
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x)
      for (int c = 0; c < 3; ++c) out.at(x, y, c) = img.at(x, img.height - 1 - y, c);
  return out;
}

Image box_blur(const Image& img, int k) {
  // horizontal then vertical pass in float, rounded once at the end
  int r = k / 2;
  std::vector<float> tmp(img.pixels.size());
  auto clampi = [](int v, int lo, int hi) { return v < lo ? lo : (v > hi ? hi : v); };
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x)
      for (int c = 0; c < 3; ++c) {
        float s = 0;
        for (int dx = -r; dx <= r; ++dx)
          s += img.at(clampi(x + dx, 0, img.width - 1), y, c);
        tmp[(static_cast<std::size_t>(y) * img.width + x) * 3 + c] = s / k;
      }
  Image out(img.width, img.height);
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x)
      for (int c = 0; c < 3; ++c) {
        float s = 0;
        for (int dy = -r; dy <= r; ++dy)
          s += tmp[(static_cast<std::size_t>(clampi(y + dy, 0, img.height - 1)) *
                        img.width +
                    x) *
                       3 +
                   c];
        float v = std::nearbyintf(s / k);
        out.at(x, y, c) = static_cast<std::uint8_t>(v < 0 ? 0 : (v > 255 ? 255 : v));
      }
  return out;
}

Image equalize_image(const Image& img) {
  Image out(img.width, img.height);
  std::size_t n = img.pixel_count();
  for (int c = 0; c < 3; ++c) {
    std::size_t hist[256] = {0};
    for (std::size_t i = 0; i < n; ++i) ++hist[img.pixels[i * 3 + c]];
    std::size_t cdf[256];
    std::size_t acc = 0;
    for (int v = 0; v < 256; ++v) {
      acc += hist[v];
      cdf[v] = acc;
    }
    std::size_t cdf_min = 0;
    for (int v = 0; v < 256; ++v)
      if (hist[v] > 0) {
        cdf_min = cdf[v];
        break;
      }
    std::uint8_t lut[256];
    if (n == cdf_min) {
      for (int v = 0; v < 256; ++v) lut[v] = static_cast<std::uint8_t>(v);
    } else {
      for (int v = 0; v < 256; ++v) {
        double m = 255.0 * (static_cast<double>(cdf[v]) - cdf_min) /
                   (static_cast<double>(n) - cdf_min);
        double rv = std::nearbyint(m);
        lut[v] = static_cast<std::uint8_t>(rv < 0 ? 0 : (rv > 255 ? 255 : rv));
      }
    }
    for (std::size_t i = 0; i < n; ++i) out.pixels[i * 3 + c] = lut[img.pixels[i * 3 + c]];
  }
  return out;
}

ImageSample apply_augment(const ImageSample& sample, const AugmentPolicy& policy,
                          std::uint64_t draw) {
  ImageSample cur = sample;
  auto op_rng = [&](int slot) {
    return stream(policy.seed, "aug-op", draw * 64 + static_cast<std::uint64_t>(slot));
  };
  auto enabled = [&](const std::vector<std::string>& list, const char* name) {
    return std::find(list.begin(), list.end(), name) != list.end();
  };

  // geometric, in slot order
  if (enabled(policy.geometric, "rot90_random")) {
    Rng r = op_rng(0);
    if (r.bernoulli(policy.p_apply)) {
      int k = static_cast<int>(r.uniform_int(1, 3));
      cur.image = rot90_image(cur.image, k);
      double w = sample.image.width, h = sample.image.height;
      for (auto& a : cur.annotations)
        a.box = box_transform_rot90(a.box, w, h, k);
    }
  }
  if (enabled(policy.geometric, "hflip")) {
    Rng r = op_rng(1);
    if (r.bernoulli(policy.p_apply)) {
      cur.image = hflip_image(cur.image);
      double w = cur.image.width;
      for (auto& a : cur.annotations)
        a.box = Box{w - a.box.x_max, a.box.y_min, w - a.box.x_min, a.box.y_max};
    }
  }
  if (enabled(policy.geometric, "vflip")) {
    Rng r = op_rng(2);
    if (r.bernoulli(policy.p_apply)) {
      cur.image = vflip_image(cur.image);
      double h = cur.image.height;
      for (auto& a : cur.annotations)
        a.box = Box{a.box.x_min, h - a.box.y_max, a.box.x_max, h - a.box.y_min};
    }
  }
  if (enabled(policy.geometric, "center_crop")) {
    Rng r = op_rng(3);
    if (r.bernoulli(policy.p_apply)) {
      GeoResult res = center_crop(cur.image, cur.annotations, policy.crop_frac,
                                  policy.min_box_area);
      if (res.ok) {
        cur.image = std::move(res.image);
        cur.annotations = std::move(res.annotations);
      }
      // all boxes dropped: roll the op back, keep cur untouched
    }
  }

  // photometric, raster only
  if (enabled(policy.photometric, "blur")) {
    Rng r = op_rng(4);
    if (r.bernoulli(policy.p_apply)) {
      int span = (policy.blur_hi - policy.blur_lo) / 2;
      int k = policy.blur_lo + 2 * static_cast<int>(r.uniform_int(0, span));
      cur.image = box_blur(cur.image, k);
    }
  }
  if (enabled(policy.photometric, "equalize")) {
    Rng r = op_rng(5);
    if (r.bernoulli(policy.p_apply)) cur.image = equalize_image(cur.image);
  }
  if (enabled(policy.photometric, "contrast")) {
    Rng r = op_rng(6);
    if (r.bernoulli(policy.p_apply)) {
      double f = r.uniform(policy.contrast_lo, policy.contrast_hi);
      double mu = gray_mean(cur.image);
      kernels::affine_clamp_u8(cur.image.pixels.data(), cur.image.pixels.data(),
                               cur.image.pixels.size(), static_cast<float>(f),
                               static_cast<float>((1.0 - f) * mu));
    }
  }
  if (enabled(policy.photometric, "brightness")) {
    Rng r = op_rng(7);
    if (r.bernoulli(policy.p_apply)) {
      double f = r.uniform(policy.brightness_lo, policy.brightness_hi);
      kernels::affine_clamp_u8(cur.image.pixels.data(), cur.image.pixels.data(),
                               cur.image.pixels.size(), static_cast<float>(f), 0.0f);
    }
  }
  if (enabled(policy.photometric, "darkness")) {
    Rng r = op_rng(8);
    if (r.bernoulli(policy.p_apply)) {
      double f = r.uniform(policy.darkness_lo, policy.darkness_hi);
      kernels::affine_clamp_u8(cur.image.pixels.data(), cur.image.pixels.data(),
                               cur.image.pixels.size(), static_cast<float>(f), 0.0f);
    }
  }
  if (enabled(policy.photometric, "sharpness")) {
    Rng r = op_rng(9);
    if (r.bernoulli(policy.p_apply)) {
      double amount = r.uniform(policy.sharp_lo, policy.sharp_hi);
      Image blurred = box_blur(cur.image, 3);
      kernels::mix_clamp_u8(cur.image.pixels.data(), blurred.pixels.data(),
                            cur.image.pixels.data(), cur.image.pixels.size(),
                            static_cast<float>(1.0 + amount));
    }
  }
  if (enabled(policy.photometric, "hue")) {
    Rng r = op_rng(10);
    if (r.bernoulli(policy.p_apply)) {
      double deg = r.uniform(-policy.hue_shift_deg, policy.hue_shift_deg);
      cur.image = shift_hue(cur.image, deg);
    }
  }
  if (enabled(policy.photometric, "saturation")) {
    Rng r = op_rng(11);
    if (r.bernoulli(policy.p_apply)) {
      double f = r.uniform(policy.saturation_lo, policy.saturation_hi);
      Image gray = gray_image(cur.image);
      kernels::mix_clamp_u8(cur.image.pixels.data(), gray.pixels.data(),
                            cur.image.pixels.data(), cur.image.pixels.size(),
                            static_cast<float>(f));
    }
  }

  return cur;
}

}  // namespace ddet
