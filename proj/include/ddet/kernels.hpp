#pragma once

#include <cstddef>
#include <cstdint>

// Data-parallel inner loops used by the descriptor, model and augmentation
// code. Each kernel has a scalar reference implementation and SIMD variants
// (AVX2 on x86-64, NEON on aarch64) selected once at startup.
//
// Equivalence contract: every variant produces bit-identical output to the
// scalar reference for identical input. To make that hold,
//   - reductions accumulate into four lanes (lane = i mod 4 over the blocked
//     prefix), reduce as (l0 + l2) + (l1 + l3), then fold the tail elements
//     in sequentially;
//   - no fused multiply-add anywhere (the build also disables contraction);
//   - u8 kernels work in float32 and round half-to-even.
// Equivalence is asserted by tests/test_kernels.cpp over all available
// variants, so runtime dispatch can never change a numeric result.

namespace ddet::kernels {

enum class Variant { scalar = 0, avx2 = 1, neon = 2 };

const char* variant_name(Variant v);
bool variant_available(Variant v);
Variant active_variant();
// Pin a variant (tests); throws std::runtime_error if unavailable on this CPU.
void force_variant(Variant v);
void reset_variant();

double dot(const double* a, const double* b, std::size_t n);
double sum(const double* a, std::size_t n);

// y[i] += alpha * x[i]
void axpy(double alpha, const double* x, double* y, std::size_t n);
// y[i] = s * x[i]
void scale(const double* x, double s, double* y, std::size_t n);
// y[i] += x[i]
void add(const double* x, double* y, std::size_t n);

// v[i] = (momentum * v[i] + g[i]) + weight_decay * w[i];  w[i] -= lr * v[i]
void sgd_update(double* w, const double* g, double* v, std::size_t n,
                double lr, double momentum, double weight_decay);

// dst[i] = clamp_u8(rint(scale * src[i] + offset)), float32 arithmetic
void affine_clamp_u8(const std::uint8_t* src, std::uint8_t* dst, std::size_t n,
                     float scale, float offset);
// dst[i] = clamp_u8(rint(b[i] + t * (a[i] - b[i]))), float32 arithmetic
void mix_clamp_u8(const std::uint8_t* a, const std::uint8_t* b,
                  std::uint8_t* dst, std::size_t n, float t);

// dst[i] = (left[i] + up[i]) - upleft[i]; the 2-D prefix-sum recurrence over
// n interleaved planes at one cell
void integral_step(double* dst, const double* left, const double* up,
                   const double* upleft, std::size_t n);

struct Ops {
  double (*dot)(const double*, const double*, std::size_t);
  double (*sum)(const double*, std::size_t);
  void (*axpy)(double, const double*, double*, std::size_t);
  void (*scale)(const double*, double, double*, std::size_t);
  void (*add)(const double*, double*, std::size_t);
  void (*sgd_update)(double*, const double*, double*, std::size_t, double, double, double);
  void (*affine_clamp_u8)(const std::uint8_t*, std::uint8_t*, std::size_t, float, float);
  void (*mix_clamp_u8)(const std::uint8_t*, const std::uint8_t*, std::uint8_t*, std::size_t, float);
  void (*integral_step)(double*, const double*, const double*, const double*, std::size_t);
};

const Ops& scalar_ops();
#if defined(__x86_64__) || defined(_M_X64)
const Ops& avx2_ops();
#endif
#if defined(__aarch64__)
const Ops& neon_ops();
#endif

}  // namespace ddet::kernels
