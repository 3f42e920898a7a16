// NEON (aarch64) kernel variants. Mirrors the AVX2 file: same accumulation
// tree, same expression order, explicit round-to-nearest-even conversions.

#if defined(__aarch64__)

#include <arm_neon.h>

#include "ddet/kernels.hpp"

namespace ddet::kernels {

namespace {

// Accumulators p=(l0,l1), q=(l2,l3); reduce as (l0+l2) + (l1+l3).
inline double reduce_tree(float64x2_t p, float64x2_t q) {
  float64x2_t s = vaddq_f64(p, q);
  return vgetq_lane_f64(s, 0) + vgetq_lane_f64(s, 1);
}

double dot_neon(const double* a, const double* b, std::size_t n) {
  float64x2_t p = vdupq_n_f64(0.0), q = vdupq_n_f64(0.0);
  std::size_t n4 = n & ~std::size_t{3};
  for (std::size_t i = 0; i < n4; i += 4) {
    p = vaddq_f64(p, vmulq_f64(vld1q_f64(a + i), vld1q_f64(b + i)));
    q = vaddq_f64(q, vmulq_f64(vld1q_f64(a + i + 2), vld1q_f64(b + i + 2)));
  }
  double total = reduce_tree(p, q);
  for (std::size_t i = n4; i < n; ++i) total += a[i] * b[i];
  return total;
}

double sum_neon(const double* a, std::size_t n) {
  float64x2_t p = vdupq_n_f64(0.0), q = vdupq_n_f64(0.0);
  std::size_t n4 = n & ~std::size_t{3};
  for (std::size_t i = 0; i < n4; i += 4) {
    p = vaddq_f64(p, vld1q_f64(a + i));
    q = vaddq_f64(q, vld1q_f64(a + i + 2));
  }
  double total = reduce_tree(p, q);
  for (std::size_t i = n4; i < n; ++i) total += a[i];
  return total;
}

void axpy_neon(double alpha, const double* x, double* y, std::size_t n) {
  float64x2_t va = vdupq_n_f64(alpha);
  std::size_t n2 = n & ~std::size_t{1};
  for (std::size_t i = 0; i < n2; i += 2) {
    float64x2_t yy = vld1q_f64(y + i);
    yy = vaddq_f64(yy, vmulq_f64(va, vld1q_f64(x + i)));
    vst1q_f64(y + i, yy);
  }
  for (std::size_t i = n2; i < n; ++i) y[i] += alpha * x[i];
}

void scale_neon(const double* x, double s, double* y, std::size_t n) {
  float64x2_t vs = vdupq_n_f64(s);
  std::size_t n2 = n & ~std::size_t{1};
  for (std::size_t i = 0; i < n2; i += 2)
    vst1q_f64(y + i, vmulq_f64(vs, vld1q_f64(x + i)));
  for (std::size_t i = n2; i < n; ++i) y[i] = s * x[i];
}

void add_neon(const double* x, double* y, std::size_t n) {
  std::size_t n2 = n & ~std::size_t{1};
  for (std::size_t i = 0; i < n2; i += 2)
    vst1q_f64(y + i, vaddq_f64(vld1q_f64(y + i), vld1q_f64(x + i)));
  for (std::size_t i = n2; i < n; ++i) y[i] += x[i];
}

void sgd_update_neon(double* w, const double* g, double* v, std::size_t n,
                     double lr, double momentum, double weight_decay) {
  float64x2_t vmom = vdupq_n_f64(momentum);
  float64x2_t vwd = vdupq_n_f64(weight_decay);
  float64x2_t vlr = vdupq_n_f64(lr);
  std::size_t n2 = n & ~std::size_t{1};
  for (std::size_t i = 0; i < n2; i += 2) {
    float64x2_t ww = vld1q_f64(w + i);
    float64x2_t vv = vld1q_f64(v + i);
    vv = vaddq_f64(vaddq_f64(vmulq_f64(vmom, vv), vld1q_f64(g + i)), vmulq_f64(vwd, ww));
    ww = vsubq_f64(ww, vmulq_f64(vlr, vv));
    vst1q_f64(v + i, vv);
    vst1q_f64(w + i, ww);
  }
  for (std::size_t i = n2; i < n; ++i) {
    v[i] = (momentum * v[i] + g[i]) + weight_decay * w[i];
    w[i] = w[i] - lr * v[i];
  }
}

inline std::uint8_t clamp_round_u8(float x) {
  float r = __builtin_nearbyintf(x);
  if (!(r >= 0.0f)) r = 0.0f;
  if (r > 255.0f) r = 255.0f;
  return static_cast<std::uint8_t>(r);
}

// vcvtnq rounds to nearest-even and maps NaN to 0, matching the scalar rule.
inline void store_u8x8(float32x4_t lo, float32x4_t hi, std::uint8_t* dst) {
  int32x4_t i0 = vcvtnq_s32_f32(lo);
  int32x4_t i1 = vcvtnq_s32_f32(hi);
  uint16x8_t v16 = vcombine_u16(vqmovun_s32(i0), vqmovun_s32(i1));
  vst1_u8(dst, vqmovn_u16(v16));
}

inline void load_u8x8(const std::uint8_t* src, float32x4_t& lo, float32x4_t& hi) {
  uint16x8_t v16 = vmovl_u8(vld1_u8(src));
  lo = vcvtq_f32_u32(vmovl_u16(vget_low_u16(v16)));
  hi = vcvtq_f32_u32(vmovl_u16(vget_high_u16(v16)));
}

void affine_clamp_u8_neon(const std::uint8_t* src, std::uint8_t* dst,
                          std::size_t n, float scale, float offset) {
  float32x4_t vs = vdupq_n_f32(scale);
  float32x4_t vo = vdupq_n_f32(offset);
  std::size_t n8 = n & ~std::size_t{7};
  for (std::size_t i = 0; i < n8; i += 8) {
    float32x4_t lo, hi;
    load_u8x8(src + i, lo, hi);
    store_u8x8(vaddq_f32(vmulq_f32(vs, lo), vo), vaddq_f32(vmulq_f32(vs, hi), vo), dst + i);
  }
  for (std::size_t i = n8; i < n; ++i)
    dst[i] = clamp_round_u8(scale * static_cast<float>(src[i]) + offset);
}

void mix_clamp_u8_neon(const std::uint8_t* a, const std::uint8_t* b,
                       std::uint8_t* dst, std::size_t n, float t) {
  float32x4_t vt = vdupq_n_f32(t);
  std::size_t n8 = n & ~std::size_t{7};
  for (std::size_t i = 0; i < n8; i += 8) {
    float32x4_t alo, ahi, blo, bhi;
    load_u8x8(a + i, alo, ahi);
    load_u8x8(b + i, blo, bhi);
    store_u8x8(vaddq_f32(blo, vmulq_f32(vt, vsubq_f32(alo, blo))),
               vaddq_f32(bhi, vmulq_f32(vt, vsubq_f32(ahi, bhi))), dst + i);
  }
  for (std::size_t i = n8; i < n; ++i) {
    float fa = static_cast<float>(a[i]);
    float fb = static_cast<float>(b[i]);
    dst[i] = clamp_round_u8(fb + t * (fa - fb));
  }
}

void integral_step_neon(double* dst, const double* left, const double* up,
                        const double* upleft, std::size_t n) {
  std::size_t n2 = n & ~std::size_t{1};
  for (std::size_t i = 0; i < n2; i += 2) {
    float64x2_t s = vaddq_f64(vld1q_f64(left + i), vld1q_f64(up + i));
    vst1q_f64(dst + i, vsubq_f64(s, vld1q_f64(upleft + i)));
  }
  for (std::size_t i = n2; i < n; ++i) dst[i] = (left[i] + up[i]) - upleft[i];
}

}  // namespace

const Ops& neon_ops() {
  static const Ops ops{dot_neon,  sum_neon,        axpy_neon,
                       scale_neon, add_neon,       sgd_update_neon,
                       affine_clamp_u8_neon, mix_clamp_u8_neon,
                       integral_step_neon};
  return ops;
}

}  // namespace ddet::kernels

#endif  // aarch64
