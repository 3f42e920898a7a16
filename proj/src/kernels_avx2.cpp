// AVX2 kernel variants. Compiled with -mavx2 in its own translation unit;
// only reachable after the runtime CPU check in kernels.cpp.
//
// Bit-exactness with the scalar reference relies on: identical 4-lane
// accumulation tree for reductions, identical per-element expression order,
// mul/add kept separate (no FMA), and round-to-nearest-even for u8 packing.

#if defined(__x86_64__) || defined(_M_X64)

#include <immintrin.h>

#include "ddet/kernels.hpp"

namespace ddet::kernels {

namespace {

inline double reduce_tree(__m256d acc) {
  __m128d lo = _mm256_castpd256_pd128(acc);   // (l0, l1)
  __m128d hi = _mm256_extractf128_pd(acc, 1); // (l2, l3)
  __m128d s = _mm_add_pd(lo, hi);             // (l0+l2, l1+l3)
  return _mm_cvtsd_f64(s) + _mm_cvtsd_f64(_mm_unpackhi_pd(s, s));
}

double dot_avx2(const double* a, const double* b, std::size_t n) {
  __m256d acc = _mm256_setzero_pd();
  std::size_t n4 = n & ~std::size_t{3};
  for (std::size_t i = 0; i < n4; i += 4)
    acc = _mm256_add_pd(acc, _mm256_mul_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
  double total = reduce_tree(acc);
  for (std::size_t i = n4; i < n; ++i) total += a[i] * b[i];
  return total;
}

double sum_avx2(const double* a, std::size_t n) {
  __m256d acc = _mm256_setzero_pd();
  std::size_t n4 = n & ~std::size_t{3};
  for (std::size_t i = 0; i < n4; i += 4)
    acc = _mm256_add_pd(acc, _mm256_loadu_pd(a + i));
  double total = reduce_tree(acc);
  for (std::size_t i = n4; i < n; ++i) total += a[i];
  return total;
}

void axpy_avx2(double alpha, const double* x, double* y, std::size_t n) {
  __m256d va = _mm256_set1_pd(alpha);
  std::size_t n4 = n & ~std::size_t{3};
  for (std::size_t i = 0; i < n4; i += 4) {
    __m256d yy = _mm256_loadu_pd(y + i);
    yy = _mm256_add_pd(yy, _mm256_mul_pd(va, _mm256_loadu_pd(x + i)));
    _mm256_storeu_pd(y + i, yy);
  }
  for (std::size_t i = n4; i < n; ++i) y[i] += alpha * x[i];
}

void scale_avx2(const double* x, double s, double* y, std::size_t n) {
  __m256d vs = _mm256_set1_pd(s);
  std::size_t n4 = n & ~std::size_t{3};
  for (std::size_t i = 0; i < n4; i += 4)
    _mm256_storeu_pd(y + i, _mm256_mul_pd(vs, _mm256_loadu_pd(x + i)));
  for (std::size_t i = n4; i < n; ++i) y[i] = s * x[i];
}

void add_avx2(const double* x, double* y, std::size_t n) {
  std::size_t n4 = n & ~std::size_t{3};
  for (std::size_t i = 0; i < n4; i += 4)
    _mm256_storeu_pd(y + i, _mm256_add_pd(_mm256_loadu_pd(y + i), _mm256_loadu_pd(x + i)));
  for (std::size_t i = n4; i < n; ++i) y[i] += x[i];
}

void sgd_update_avx2(double* w, const double* g, double* v, std::size_t n,
                     double lr, double momentum, double weight_decay) {
  __m256d vmom = _mm256_set1_pd(momentum);
  __m256d vwd = _mm256_set1_pd(weight_decay);
  __m256d vlr = _mm256_set1_pd(lr);
  std::size_t n4 = n & ~std::size_t{3};
  for (std::size_t i = 0; i < n4; i += 4) {
    __m256d ww = _mm256_loadu_pd(w + i);
    __m256d vv = _mm256_loadu_pd(v + i);
    vv = _mm256_add_pd(_mm256_add_pd(_mm256_mul_pd(vmom, vv), _mm256_loadu_pd(g + i)),
                       _mm256_mul_pd(vwd, ww));
    ww = _mm256_sub_pd(ww, _mm256_mul_pd(vlr, vv));
    _mm256_storeu_pd(v + i, vv);
    _mm256_storeu_pd(w + i, ww);
  }
  for (std::size_t i = n4; i < n; ++i) {
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

// rint(clamp(x)) == clamp(rint(x)) since rint is monotone and fixes 0/255;
// max(x, 0) also maps NaN to 0 (maxps returns the second operand on NaN).
inline void store_u8x8(__m256 x, std::uint8_t* dst) {
  x = _mm256_max_ps(x, _mm256_setzero_ps());
  x = _mm256_min_ps(x, _mm256_set1_ps(255.0f));
  __m256i vi = _mm256_cvtps_epi32(x);  // nearest-even
  __m256i v16 = _mm256_packs_epi32(vi, vi);
  v16 = _mm256_permute4x64_epi64(v16, _MM_SHUFFLE(3, 1, 2, 0));
  __m128i v8 = _mm_packus_epi16(_mm256_castsi256_si128(v16), _mm256_castsi256_si128(v16));
  _mm_storel_epi64(reinterpret_cast<__m128i*>(dst), v8);
}

inline __m256 load_u8x8(const std::uint8_t* src) {
  __m128i b = _mm_loadl_epi64(reinterpret_cast<const __m128i*>(src));
  return _mm256_cvtepi32_ps(_mm256_cvtepu8_epi32(b));
}

void affine_clamp_u8_avx2(const std::uint8_t* src, std::uint8_t* dst,
                          std::size_t n, float scale, float offset) {
  __m256 vs = _mm256_set1_ps(scale);
  __m256 vo = _mm256_set1_ps(offset);
  std::size_t n8 = n & ~std::size_t{7};
  for (std::size_t i = 0; i < n8; i += 8)
    store_u8x8(_mm256_add_ps(_mm256_mul_ps(vs, load_u8x8(src + i)), vo), dst + i);
  for (std::size_t i = n8; i < n; ++i)
    dst[i] = clamp_round_u8(scale * static_cast<float>(src[i]) + offset);
}

void mix_clamp_u8_avx2(const std::uint8_t* a, const std::uint8_t* b,
                       std::uint8_t* dst, std::size_t n, float t) {
  __m256 vt = _mm256_set1_ps(t);
  std::size_t n8 = n & ~std::size_t{7};
  for (std::size_t i = 0; i < n8; i += 8) {
    __m256 fa = load_u8x8(a + i);
    __m256 fb = load_u8x8(b + i);
    store_u8x8(_mm256_add_ps(fb, _mm256_mul_ps(vt, _mm256_sub_ps(fa, fb))), dst + i);
  }
  for (std::size_t i = n8; i < n; ++i) {
    float fa = static_cast<float>(a[i]);
    float fb = static_cast<float>(b[i]);
    dst[i] = clamp_round_u8(fb + t * (fa - fb));
  }
}

void integral_step_avx2(double* dst, const double* left, const double* up,
                        const double* upleft, std::size_t n) {
  std::size_t n4 = n & ~std::size_t{3};
  for (std::size_t i = 0; i < n4; i += 4) {
    __m256d s = _mm256_add_pd(_mm256_loadu_pd(left + i), _mm256_loadu_pd(up + i));
    _mm256_storeu_pd(dst + i, _mm256_sub_pd(s, _mm256_loadu_pd(upleft + i)));
  }
  for (std::size_t i = n4; i < n; ++i) dst[i] = (left[i] + up[i]) - upleft[i];
}

}  // namespace

const Ops& avx2_ops() {
  static const Ops ops{dot_avx2,  sum_avx2,        axpy_avx2,
                       scale_avx2, add_avx2,       sgd_update_avx2,
                       affine_clamp_u8_avx2, mix_clamp_u8_avx2,
                       integral_step_avx2};
  return ops;
}

}  // namespace ddet::kernels

#endif  // x86_64
