#include "ddet/synthdata.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "ddet/rng.hpp"

namespace ddet {

std::map<std::string, double> RenderParams::to_map() const {
  return {
      {"bg_hue_lo", bg_hue_lo},       {"bg_hue_hi", bg_hue_hi},
      {"bg_sat_lo", bg_sat_lo},       {"bg_sat_hi", bg_sat_hi},
      {"bg_val_lo", bg_val_lo},       {"bg_val_hi", bg_val_hi},
      {"vignette_lo", vignette_lo},   {"vignette_hi", vignette_hi},
      {"noise_amp", noise_amp},       {"specular_lo", specular_lo},
      {"specular_hi", specular_hi},   {"polyp_hue_lo", polyp_hue_lo},
      {"polyp_hue_hi", polyp_hue_hi}, {"polyp_sat_lo", polyp_sat_lo},
      {"polyp_sat_hi", polyp_sat_hi}, {"polyp_val_lo", polyp_val_lo},
      {"polyp_val_hi", polyp_val_hi}, {"size_lo", size_lo},
      {"size_hi", size_hi},           {"aspect_lo", aspect_lo},
      {"aspect_hi", aspect_hi},       {"ndbe_aspect_lo", ndbe_aspect_lo},
      {"ndbe_aspect_hi", ndbe_aspect_hi}, {"ndbe_alpha", ndbe_alpha},
      {"neo_val_lo", neo_val_lo},     {"neo_val_hi", neo_val_hi},
      {"neo_ellipse_frac", neo_ellipse_frac},
  };
}

RenderParams proxy_render_params() { return RenderParams{}; }

RenderParams edd_render_params() {
  RenderParams p;
  p.polyp_hue_lo = 25.0;
  p.polyp_hue_hi = 45.0;
  return p;
}

RenderParams unseen_render_params() {
  RenderParams p = edd_render_params();
  p.polyp_hue_lo = 38.0;
  p.polyp_hue_hi = 58.0;
  p.bg_val_lo = 0.58;
  p.bg_val_hi = 0.74;
  p.size_lo = 54.0;
  p.size_hi = 132.0;
  p.noise_amp = 6.0;
  return p;
}

namespace {

constexpr int W = kImageSize;
constexpr int H = kImageSize;

inline std::uint8_t to_u8(double v) {
  double r = std::nearbyint(v);
  return static_cast<std::uint8_t>(r < 0 ? 0 : (r > 255 ? 255 : r));
}

// Deterministic per-pixel speckle in [-1, 1], keyed off the shape, so
// texture costs no stream draws.
inline double speckle(int x, int y, std::uint64_t key) {
  std::uint64_t h = mix64(key ^ (static_cast<std::uint64_t>(y) * W + x));
  return (static_cast<double>(h >> 11) * 0x1.0p-53) * 2.0 - 1.0;
}

void draw_background(Image& img, Rng& rng, const RenderParams& p) {
  double hue = rng.uniform(p.bg_hue_lo, p.bg_hue_hi);
  double sat = rng.uniform(p.bg_sat_lo, p.bg_sat_hi);
  double val = rng.uniform(p.bg_val_lo, p.bg_val_hi);
  double base[3];
  hsv_to_rgb(hue, sat, val, base);

  double gx = rng.uniform(-0.12, 0.12);
  double gy = rng.uniform(-0.12, 0.12);
  double vig = rng.uniform(p.vignette_lo, p.vignette_hi);
  double cx = W * 0.5, cy = H * 0.5;
  double r2max = cx * cx + cy * cy;

  for (int y = 0; y < H; ++y) {
    double fy = (y + 0.5) / H - 0.5;
    for (int x = 0; x < W; ++x) {
      double fx = (x + 0.5) / W - 0.5;
      double dx = x + 0.5 - cx, dy = y + 0.5 - cy;
      double f = (1.0 + 2.0 * (gx * fx + gy * fy)) *
                 (1.0 - vig * (dx * dx + dy * dy) / r2max);
      for (int c = 0; c < 3; ++c) img.at(x, y, c) = to_u8(base[c] * f);
    }
  }
}

void draw_specular_dots(Image& img, Rng& rng, const RenderParams& p) {
  int count = static_cast<int>(rng.uniform(p.specular_lo, p.specular_hi + 1.0));
  for (int i = 0; i < count; ++i) {
    double cx = rng.uniform(4, W - 4);
    double cy = rng.uniform(4, H - 4);
    double r = rng.uniform(1.0, 2.2);
    double amp = rng.uniform(0.35, 0.60);
    double sigma2 = 2.0 * (r / 1.5) * (r / 1.5);
    int x0 = std::max(0, static_cast<int>(cx - 3 * r));
    int x1 = std::min(W - 1, static_cast<int>(cx + 3 * r));
    int y0 = std::max(0, static_cast<int>(cy - 3 * r));
    int y1 = std::min(H - 1, static_cast<int>(cy + 3 * r));
    for (int y = y0; y <= y1; ++y)
      for (int x = x0; x <= x1; ++x) {
        double dx = x + 0.5 - cx, dy = y + 0.5 - cy;
        double a = amp * std::exp(-(dx * dx + dy * dy) / sigma2);
        for (int c = 0; c < 3; ++c) {
          double v = img.at(x, y, c);
          img.at(x, y, c) = to_u8(v + a * (255.0 - v));
        }
      }
  }
}

void add_noise(Image& img, Rng& rng, double amp) {
  for (std::size_t i = 0; i < img.pixel_count(); ++i) {
    double n = rng.uniform(-amp, amp);
    for (int c = 0; c < 3; ++c) {
      double v = img.pixels[i * 3 + c] + n;
      img.pixels[i * 3 + c] = to_u8(v);
    }
  }
}

struct ShapeSpec {
  double cx = 0, cy = 0;     // center
  double a = 0, b = 0;       // semi-axes
  double theta = 0;          // rotation, radians
  double color[3] = {0, 0, 0};
  double alpha = 1.0;        // fill opacity
  double soft = 0.15;        // edge softness in q units
  double speckle_amp = 0.0;  // multiplicative texture amplitude
  std::uint64_t speckle_key = 0;
  bool highlight = false;
};

Box ellipse_extent_box(const ShapeSpec& s) {
  double c = std::cos(s.theta), sn = std::sin(s.theta);
  double ex = std::sqrt(s.a * s.a * c * c + s.b * s.b * sn * sn);
  double ey = std::sqrt(s.a * s.a * sn * sn + s.b * s.b * c * c);
  return Box{s.cx - ex, s.cy - ey, s.cx + ex, s.cy + ey};
}

void render_ellipse(Image& img, const ShapeSpec& s) {
  Box ext = ellipse_extent_box(s);
  int x0 = std::max(0, static_cast<int>(ext.x_min) - 1);
  int x1 = std::min(W - 1, static_cast<int>(ext.x_max) + 1);
  int y0 = std::max(0, static_cast<int>(ext.y_min) - 1);
  int y1 = std::min(H - 1, static_cast<int>(ext.y_max) + 1);
  double c = std::cos(s.theta), sn = std::sin(s.theta);

  for (int y = y0; y <= y1; ++y)
    for (int x = x0; x <= x1; ++x) {
      double dx = x + 0.5 - s.cx, dy = y + 0.5 - s.cy;
      double u = (dx * c + dy * sn) / s.a;
      double v = (-dx * sn + dy * c) / s.b;
      double q = u * u + v * v;
      if (q > 1.0 + s.soft) continue;
      double edge = q <= 1.0 - s.soft ? 1.0 : (1.0 + s.soft - q) / (2.0 * s.soft);
      double alpha = s.alpha * std::clamp(edge, 0.0, 1.0);
      double shade = 1.0 - 0.40 * q;  // dome shading, darker toward the rim
      double tex = 1.0 + s.speckle_amp * speckle(x, y, s.speckle_key);
      for (int ch = 0; ch < 3; ++ch) {
        double bgv = img.at(x, y, ch);
        double fill = s.color[ch] * shade * tex;
        img.at(x, y, ch) = to_u8(bgv + alpha * (fill - bgv));
      }
    }

  if (s.highlight) {
    double hx = s.cx - 0.30 * s.a * c;
    double hy = s.cy - 0.30 * s.a * sn;
    double hr = 0.20 * std::min(s.a, s.b);
    double sigma2 = 2.0 * hr * hr;
    int hx0 = std::max(0, static_cast<int>(hx - 3 * hr));
    int hx1 = std::min(W - 1, static_cast<int>(hx + 3 * hr));
    int hy0 = std::max(0, static_cast<int>(hy - 3 * hr));
    int hy1 = std::min(H - 1, static_cast<int>(hy + 3 * hr));
    for (int y = hy0; y <= hy1; ++y)
      for (int x = hx0; x <= hx1; ++x) {
        double dx = x + 0.5 - hx, dy = y + 0.5 - hy;
        double a = 0.85 * std::exp(-(dx * dx + dy * dy) / sigma2);
        for (int ch = 0; ch < 3; ++ch) {
          double v = img.at(x, y, ch);
          img.at(x, y, ch) = to_u8(v + a * (255.0 - v));
        }
      }
  }
}

// Irregular blob: radius modulated by low-order harmonics around a circle.
struct BlobSpec {
  double cx = 0, cy = 0, radius = 0;
  double m[3] = {0, 0, 0};    // amplitudes for harmonics k = 2, 3, 5
  double psi[3] = {0, 0, 0};  // phases
  double color[3] = {0, 0, 0};
  double alpha = 0.95;
  double speckle_amp = 0.28;
  std::uint64_t speckle_key = 0;
};

double blob_radius(const BlobSpec& s, double phi) {
  static const int kHarm[3] = {2, 3, 5};
  double r = 1.0;
  for (int i = 0; i < 3; ++i) r += s.m[i] * std::cos(kHarm[i] * phi + s.psi[i]);
  return s.radius * r;
}

Box blob_extent_box(const BlobSpec& s) {
  double x_lo = s.cx, x_hi = s.cx, y_lo = s.cy, y_hi = s.cy;
  for (int i = 0; i < 256; ++i) {
    double phi = 2.0 * M_PI * i / 256.0;
    double r = blob_radius(s, phi);
    x_lo = std::min(x_lo, s.cx + r * std::cos(phi));
    x_hi = std::max(x_hi, s.cx + r * std::cos(phi));
    y_lo = std::min(y_lo, s.cy + r * std::sin(phi));
    y_hi = std::max(y_hi, s.cy + r * std::sin(phi));
  }
  return Box{x_lo, y_lo, x_hi, y_hi};
}

void render_blob(Image& img, const BlobSpec& s) {
  Box ext = blob_extent_box(s);
  int x0 = std::max(0, static_cast<int>(ext.x_min) - 1);
  int x1 = std::min(W - 1, static_cast<int>(ext.x_max) + 1);
  int y0 = std::max(0, static_cast<int>(ext.y_min) - 1);
  int y1 = std::min(H - 1, static_cast<int>(ext.y_max) + 1);
  const double soft = 0.10;

  for (int y = y0; y <= y1; ++y)
    for (int x = x0; x <= x1; ++x) {
      double dx = x + 0.5 - s.cx, dy = y + 0.5 - s.cy;
      double d = std::sqrt(dx * dx + dy * dy);
      double r = blob_radius(s, std::atan2(dy, dx));
      double q = d / r;
      if (q > 1.0 + soft) continue;
      double edge = q <= 1.0 - soft ? 1.0 : (1.0 + soft - q) / (2.0 * soft);
      double alpha = s.alpha * std::clamp(edge, 0.0, 1.0);
      double tex = 1.0 + s.speckle_amp * speckle(x, y, s.speckle_key);
      for (int ch = 0; ch < 3; ++ch) {
        double bgv = img.at(x, y, ch);
        double fill = s.color[ch] * tex;
        img.at(x, y, ch) = to_u8(bgv + alpha * (fill - bgv));
      }
    }
}

// Places a shape of the given class, avoiding heavy overlap with boxes
// already on the canvas. Returns the ground-truth box.
Box place_shape(Image& img, Rng& rng, const RenderParams& p, int cls,
                const std::vector<Box>& placed) {
  // cls uses the edd merged order: 0 ndbe, 1 neoplasia, 2 polyp
  for (int attempt = 0;; ++attempt) {
    bool last_try = attempt >= 24;
    Box gt;

    if (cls == 0) {
      // ndbe: elongated, translucent, reddish, close to background value
      ShapeSpec s;
      double size = std::exp(rng.uniform(std::log(p.size_lo), std::log(p.size_hi)));
      double ar = rng.uniform(p.ndbe_aspect_lo, p.ndbe_aspect_hi);
      s.a = size * 0.5;
      s.b = s.a / ar;
      s.theta = rng.uniform(0.0, M_PI);
      double hue = rng.uniform(352.0, 368.0);
      hsv_to_rgb(hue, rng.uniform(0.35, 0.55), rng.uniform(0.55, 0.75), s.color);
      s.alpha = p.ndbe_alpha;
      s.soft = 0.5;
      Box ext = ellipse_extent_box(ShapeSpec{0, 0, s.a, s.b, s.theta});
      double ex = ext.x_max, ey = ext.y_max;
      s.cx = rng.uniform(ex + 2.0, W - 2.0 - ex);
      s.cy = rng.uniform(ey + 2.0, H - 2.0 - ey);
      gt = ellipse_extent_box(s);
      if (last_try || std::none_of(placed.begin(), placed.end(), [&](const Box& o) {
            return iou(gt, o) > 0.35;
          })) {
        render_ellipse(img, s);
        return gt;
      }
      continue;
    }

    if (cls == 1 && rng.uniform() >= p.neo_ellipse_frac) {
      // irregular speckled blob, dark red
      BlobSpec s;
      double size = std::exp(rng.uniform(std::log(p.size_lo), std::log(p.size_hi)));
      s.radius = size * 0.5;
      for (int i = 0; i < 3; ++i) {
        s.m[i] = rng.uniform(0.04, 0.14);
        s.psi[i] = rng.uniform(0.0, 2.0 * M_PI);
      }
      double hue = rng.uniform(350.0, 368.0);
      hsv_to_rgb(hue, rng.uniform(0.50, 0.75),
                 rng.uniform(p.neo_val_lo, p.neo_val_hi), s.color);
      s.speckle_key = rng.next_u64();
      double reach = s.radius * (1.0 + s.m[0] + s.m[1] + s.m[2]);
      s.cx = rng.uniform(reach + 2.0, W - 2.0 - reach);
      s.cy = rng.uniform(reach + 2.0, H - 2.0 - reach);
      gt = blob_extent_box(s);
      if (last_try || std::none_of(placed.begin(), placed.end(), [&](const Box& o) {
            return iou(gt, o) > 0.35;
          })) {
        render_blob(img, s);
        return gt;
      }
      continue;
    }

    // polyp, or the ellipse-like neoplasia fraction
    bool confusable_neo = (cls == 1);
    ShapeSpec s;
    double size = std::exp(rng.uniform(std::log(p.size_lo), std::log(p.size_hi)));
    double ar = rng.uniform(p.aspect_lo, p.aspect_hi);
    s.a = size * 0.5;
    s.b = s.a / ar;
    s.theta = rng.uniform(0.0, M_PI);
    double hue = rng.uniform(p.polyp_hue_lo, p.polyp_hue_hi);
    if (confusable_neo) {
      hsv_to_rgb(hue, rng.uniform(p.polyp_sat_lo, p.polyp_sat_hi),
                 rng.uniform(0.45, 0.70), s.color);
      s.speckle_amp = 0.12;
      s.speckle_key = rng.next_u64();
    } else {
      hsv_to_rgb(hue, rng.uniform(p.polyp_sat_lo, p.polyp_sat_hi),
                 rng.uniform(p.polyp_val_lo, p.polyp_val_hi), s.color);
    }
    s.highlight = true;
    Box ext = ellipse_extent_box(ShapeSpec{0, 0, s.a, s.b, s.theta});
    double ex = ext.x_max, ey = ext.y_max;
    s.cx = rng.uniform(ex + 2.0, W - 2.0 - ex);
    s.cy = rng.uniform(ey + 2.0, H - 2.0 - ey);
    gt = ellipse_extent_box(s);
    if (last_try || std::none_of(placed.begin(), placed.end(), [&](const Box& o) {
          return iou(gt, o) > 0.35;
        })) {
      render_ellipse(img, s);
      return gt;
    }
  }
}

// Exact-count bookkeeping: every image gets one instance, the surplus is
// dealt round-robin over a shuffled image order up to the cap, and the
// label multiset (exact per-class counts) is shuffled and dealt in order.
std::vector<std::vector<int>> plan_labels(std::size_t n_images,
                                          const std::vector<std::size_t>& counts,
                                          std::size_t cap, Rng& rng) {
  std::size_t total = std::accumulate(counts.begin(), counts.end(), std::size_t{0});
  if (total < n_images || total > n_images * cap)
    throw std::runtime_error("instance totals incompatible with image count");

  std::vector<std::size_t> slots(n_images, 1);
  std::vector<std::size_t> order(n_images);
  std::iota(order.begin(), order.end(), std::size_t{0});
  rng.shuffle(order);
  std::size_t extras = total - n_images;
  for (std::size_t i = 0; extras > 0; i = (i + 1) % n_images) {
    if (slots[order[i]] < cap) {
      ++slots[order[i]];
      --extras;
    }
  }

  std::vector<int> labels;
  labels.reserve(total);
  for (std::size_t c = 0; c < counts.size(); ++c)
    labels.insert(labels.end(), counts[c], static_cast<int>(c));
  rng.shuffle(labels);

  std::vector<std::vector<int>> out(n_images);
  std::size_t pos = 0;
  for (std::size_t i = 0; i < n_images; ++i)
    for (std::size_t s = 0; s < slots[i]; ++s) out[i].push_back(labels[pos++]);
  return out;
}

// cls values arriving here use the catalog passed in; class_for_render maps
// them onto the edd merged order the renderers expect.
DataSet generate_split(const std::string& corpus, Split split,
                       const ClassCatalog& catalog,
                       const std::vector<std::size_t>& counts, std::size_t n_images,
                       std::size_t cap, const RenderParams& params,
                       std::uint64_t seed, int class_render_offset) {
  Rng plan_rng = stream(seed, "plan-" + corpus + "-" + split_name(split), 0);
  auto labels = plan_labels(n_images, counts, cap, plan_rng);

  DataSet ds;
  ds.name = corpus;
  ds.split = split;
  ds.catalog = catalog;
  ds.seed = seed;
  ds.gen_params = params.to_map();
  ds.samples.reserve(n_images);

  for (std::size_t i = 0; i < n_images; ++i) {
    Rng rng = stream(seed, "img-" + corpus + "-" + split_name(split), i);
    ImageSample sample;
    sample.image = Image(W, H);
    sample.source_id = corpus + "-" + split_name(split) + "-" + std::to_string(i);
    draw_background(sample.image, rng, params);

    std::vector<Box> placed;
    for (int cls : labels[i]) {
      Box gt = place_shape(sample.image, rng, params, cls + class_render_offset,
                           placed);
      placed.push_back(gt);
      sample.annotations.push_back(Annotation{gt, cls});
    }
    draw_specular_dots(sample.image, rng, params);
    add_noise(sample.image, rng, params.noise_amp);
    ds.samples.push_back(std::move(sample));
  }
  return ds;
}

}  // namespace

GenTriple generate_polyp_proxy(std::uint64_t seed) {
  ClassCatalog cat = ClassCatalog::polyp_only();
  RenderParams p = proxy_render_params();
  // single class "polyp" renders as class 2 in the shared renderer
  GenTriple t;
  t.train = generate_split("polyp-proxy", Split::train, cat, {858}, 800, 2, p,
                           seed, 2);
  t.val = generate_split("polyp-proxy", Split::val, cat, {111}, 100, 2, p, seed, 2);
  t.test = generate_split("polyp-proxy", Split::test, cat, {102}, 100, 2, p, seed, 2);
  return t;
}

GenTriple generate_edd_proxy(std::uint64_t seed) {
  ClassCatalog cat = ClassCatalog::edd();
  RenderParams p = edd_render_params();
  GenTriple t;
  t.train = generate_split("edd-proxy", Split::train, cat, {239, 183, 172}, 376,
                           3, p, seed, 0);
  t.val = generate_split("edd-proxy", Split::val, cat, {28, 21, 24}, 38, 3, p,
                         seed, 0);
  t.test = generate_split("edd-proxy", Split::test, cat, {19, 31, 32}, 38, 3, p,
                          seed, 0);
  return t;
}

DataSet generate_unseen_test(std::uint64_t seed) {
  ClassCatalog cat = ClassCatalog::edd();
  RenderParams p = unseen_render_params();
  return generate_split("unseen", Split::test, cat, {19, 31, 32}, 38, 3, p, seed,
                        0);
}

}  // namespace ddet
