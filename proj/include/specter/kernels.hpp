#pragma once

// Low-level numeric kernels with scalar reference implementations and SIMD
// variants selected at runtime.  Elementwise kernels are bit-exact across
// implementations (same IEEE operations in the same order per lane), so the
// dispatcher never changes results.  Reductions may reassociate; their SIMD
// variants are equivalence-tested against scalar to a 1e-13 relative bound.
//
// Selection: auto-detect at first use, overridable with SPECTER_KERNELS=
// scalar|avx2|auto.  Requesting an ISA the CPU lacks is an error.

#include <cstddef>

namespace specter::kernels {

enum class Isa { scalar, avx2 };

const char* isa_name(Isa isa);

// The implementation the dispatcher resolved to (env override applied).
Isa active_isa();

// Table of kernel entry points; one instance per implementation.
struct Ops {
  // elementwise: out[i] = a[i] (op) b[i]; out may alias a or b
  void (*add)(const double* a, const double* b, double* out, size_t n);
  void (*sub)(const double* a, const double* b, double* out, size_t n);
  void (*mul)(const double* a, const double* b, double* out, size_t n);
  // division with the denominator clamped away from zero: denominators with
  // |d| < eps are replaced by copysign-ish eps (exact zero goes to +eps)
  void (*div_clamped)(const double* a, const double* b, double* out, size_t n,
                      double eps);
  // comparison indicators, 1.0 / 0.0
  void (*greater)(const double* a, const double* b, double* out, size_t n);
  void (*less)(const double* a, const double* b, double* out, size_t n);

  // reductions
  double (*sum)(const double* a, size_t n);
  double (*minimum)(const double* a, size_t n);   // n >= 1
  double (*maximum)(const double* a, size_t n);   // n >= 1
  double (*sum_squares)(const double* a, size_t n);
  double (*sum_sq_dev)(const double* a, size_t n, double mean);
  double (*dot)(const double* a, const double* b, size_t n);
};

// Active table (respects SPECTER_KERNELS).  Cached after first call.
const Ops& ops();

// Specific tables, for equivalence tests.  avx2_ops() is null when the build
// or the CPU lacks AVX2.
const Ops& scalar_ops();
const Ops* avx2_ops();

}  // namespace specter::kernels
