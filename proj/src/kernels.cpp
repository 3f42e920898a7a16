#include "ddet/kernels.hpp"

#include <atomic>
#include <cmath>
#include <stdexcept>
#include <string>

namespace ddet::kernels {

namespace {

double dot_scalar(const double* a, const double* b, std::size_t n) {
  double l0 = 0, l1 = 0, l2 = 0, l3 = 0;
  std::size_t n4 = n & ~std::size_t{3};
  for (std::size_t i = 0; i < n4; i += 4) {
    l0 += a[i + 0] * b[i + 0];
    l1 += a[i + 1] * b[i + 1];
    l2 += a[i + 2] * b[i + 2];
    l3 += a[i + 3] * b[i + 3];
  }
  double total = (l0 + l2) + (l1 + l3);
  for (std::size_t i = n4; i < n; ++i) total += a[i] * b[i];
  return total;
}

double sum_scalar(const double* a, std::size_t n) {
  double l0 = 0, l1 = 0, l2 = 0, l3 = 0;
  std::size_t n4 = n & ~std::size_t{3};
  for (std::size_t i = 0; i < n4; i += 4) {
    l0 += a[i + 0];
    l1 += a[i + 1];
    l2 += a[i + 2];
    l3 += a[i + 3];
  }
  double total = (l0 + l2) + (l1 + l3);
  for (std::size_t i = n4; i < n; ++i) total += a[i];
  return total;
}

void axpy_scalar(double alpha, const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

void scale_scalar(const double* x, double s, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] = s * x[i];
}

void add_scalar(const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += x[i];
}

void sgd_update_scalar(double* w, const double* g, double* v, std::size_t n,
                       double lr, double momentum, double weight_decay) {
  for (std::size_t i = 0; i < n; ++i) {
    v[i] = (momentum * v[i] + g[i]) + weight_decay * w[i];
    w[i] = w[i] - lr * v[i];
  }
}

inline std::uint8_t clamp_round_u8(float x) {
  float r = std::nearbyintf(x);
  if (!(r >= 0.0f)) r = 0.0f;  // negatives and NaN
  if (r > 255.0f) r = 255.0f;
  return static_cast<std::uint8_t>(r);
}

void affine_clamp_u8_scalar(const std::uint8_t* src, std::uint8_t* dst,
                            std::size_t n, float scale, float offset) {
  for (std::size_t i = 0; i < n; ++i)
    dst[i] = clamp_round_u8(scale * static_cast<float>(src[i]) + offset);
}

void mix_clamp_u8_scalar(const std::uint8_t* a, const std::uint8_t* b,
                         std::uint8_t* dst, std::size_t n, float t) {
  for (std::size_t i = 0; i < n; ++i) {
    float fa = static_cast<float>(a[i]);
    float fb = static_cast<float>(b[i]);
    dst[i] = clamp_round_u8(fb + t * (fa - fb));
  }
}

void integral_step_scalar(double* dst, const double* left, const double* up,
                          const double* upleft, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) dst[i] = (left[i] + up[i]) - upleft[i];
}

std::atomic<const Ops*> g_active{nullptr};

const Ops* detect() {
#if defined(__x86_64__) || defined(_M_X64)
  if (__builtin_cpu_supports("avx2")) return &avx2_ops();
#endif
#if defined(__aarch64__)
  return &neon_ops();
#endif
  return &scalar_ops();
}

const Ops& active() {
  const Ops* ops = g_active.load(std::memory_order_acquire);
  if (!ops) {
    ops = detect();
    g_active.store(ops, std::memory_order_release);
  }
  return *ops;
}

}  // namespace

const Ops& scalar_ops() {
  static const Ops ops{dot_scalar,  sum_scalar,       axpy_scalar,
                       scale_scalar, add_scalar,      sgd_update_scalar,
                       affine_clamp_u8_scalar, mix_clamp_u8_scalar,
                       integral_step_scalar};
  return ops;
}

const char* variant_name(Variant v) {
  switch (v) {
    case Variant::scalar: return "scalar";
    case Variant::avx2: return "avx2";
    case Variant::neon: return "neon";
  }
  return "?";
}

bool variant_available(Variant v) {
  switch (v) {
    case Variant::scalar:
      return true;
    case Variant::avx2:
#if defined(__x86_64__) || defined(_M_X64)
      return __builtin_cpu_supports("avx2") != 0;
#else
      return false;
#endif
    case Variant::neon:
#if defined(__aarch64__)
      return true;
#else
      return false;
#endif
  }
  return false;
}

Variant active_variant() {
  const Ops* ops = &active();
  if (ops == &scalar_ops()) return Variant::scalar;
#if defined(__x86_64__) || defined(_M_X64)
  if (ops == &avx2_ops()) return Variant::avx2;
#endif
#if defined(__aarch64__)
  if (ops == &neon_ops()) return Variant::neon;
#endif
  return Variant::scalar;
}

void force_variant(Variant v) {
  if (!variant_available(v))
    throw std::runtime_error(std::string("kernel variant unavailable: ") + variant_name(v));
  switch (v) {
    case Variant::scalar:
      g_active.store(&scalar_ops(), std::memory_order_release);
      break;
    case Variant::avx2:
#if defined(__x86_64__) || defined(_M_X64)
      g_active.store(&avx2_ops(), std::memory_order_release);
#endif
      break;
    case Variant::neon:
#if defined(__aarch64__)
      g_active.store(&neon_ops(), std::memory_order_release);
#endif
      break;
  }
}

void reset_variant() { g_active.store(detect(), std::memory_order_release); }

double dot(const double* a, const double* b, std::size_t n) { return active().dot(a, b, n); }
double sum(const double* a, std::size_t n) { return active().sum(a, n); }
void axpy(double alpha, const double* x, double* y, std::size_t n) { active().axpy(alpha, x, y, n); }
void scale(const double* x, double s, double* y, std::size_t n) { active().scale(x, s, y, n); }
void add(const double* x, double* y, std::size_t n) { active().add(x, y, n); }
void sgd_update(double* w, const double* g, double* v, std::size_t n,
                double lr, double momentum, double weight_decay) {
  active().sgd_update(w, g, v, n, lr, momentum, weight_decay);
}
void affine_clamp_u8(const std::uint8_t* src, std::uint8_t* dst, std::size_t n,
                     float scale, float offset) {
  active().affine_clamp_u8(src, dst, n, scale, offset);
}
void mix_clamp_u8(const std::uint8_t* a, const std::uint8_t* b,
                  std::uint8_t* dst, std::size_t n, float t) {
  active().mix_clamp_u8(a, b, dst, n, t);
}
void integral_step(double* dst, const double* left, const double* up,
                   const double* upleft, std::size_t n) {
  active().integral_step(dst, left, up, upleft, n);
}

}  // namespace ddet::kernels
