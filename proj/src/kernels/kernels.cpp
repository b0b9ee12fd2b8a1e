#include "specter/kernels.hpp"

#include <cmath>
#include <cstdlib>
#include <cstring>
#include <mutex>
#include <string>

#include "specter/common.hpp"

namespace specter::kernels {

namespace {

// ----------------------------------------------------------------- scalar

void s_add(const double* a, const double* b, double* out, size_t n) {
  for (size_t i = 0; i < n; ++i) out[i] = a[i] + b[i];
}

void s_sub(const double* a, const double* b, double* out, size_t n) {
  for (size_t i = 0; i < n; ++i) out[i] = a[i] - b[i];
}

void s_mul(const double* a, const double* b, double* out, size_t n) {
  for (size_t i = 0; i < n; ++i) out[i] = a[i] * b[i];
}

void s_div_clamped(const double* a, const double* b, double* out, size_t n,
                   double eps) {
  for (size_t i = 0; i < n; ++i) {
    double d = b[i];
    if (std::fabs(d) < eps) d = (d < 0.0) ? -eps : eps;  // -0.0 -> +eps
    out[i] = a[i] / d;
  }
}

void s_greater(const double* a, const double* b, double* out, size_t n) {
  for (size_t i = 0; i < n; ++i) out[i] = (a[i] > b[i]) ? 1.0 : 0.0;
}

void s_less(const double* a, const double* b, double* out, size_t n) {
  for (size_t i = 0; i < n; ++i) out[i] = (a[i] < b[i]) ? 1.0 : 0.0;
}

double s_sum(const double* a, size_t n) {
  double acc = 0.0;
  for (size_t i = 0; i < n; ++i) acc += a[i];
  return acc;
}

double s_minimum(const double* a, size_t n) {
  double m = a[0];
  for (size_t i = 1; i < n; ++i)
    if (a[i] < m) m = a[i];
  return m;
}

double s_maximum(const double* a, size_t n) {
  double m = a[0];
  for (size_t i = 1; i < n; ++i)
    if (a[i] > m) m = a[i];
  return m;
}

double s_sum_squares(const double* a, size_t n) {
  double acc = 0.0;
  for (size_t i = 0; i < n; ++i) acc += a[i] * a[i];
  return acc;
}

double s_sum_sq_dev(const double* a, size_t n, double mean) {
  double acc = 0.0;
  for (size_t i = 0; i < n; ++i) {
    double d = a[i] - mean;
    acc += d * d;
  }
  return acc;
}

double s_dot(const double* a, const double* b, size_t n) {
  double acc = 0.0;
  for (size_t i = 0; i < n; ++i) acc += a[i] * b[i];
  return acc;
}

const Ops kScalarOps = {
    s_add,     s_sub,       s_mul,       s_div_clamped,
    s_greater, s_less,      s_sum,       s_minimum,
    s_maximum, s_sum_squares, s_sum_sq_dev, s_dot,
};

[[maybe_unused]] bool cpu_has_avx2() {
#if defined(__x86_64__) || defined(_M_X64)
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

struct Resolved {
  Isa isa;
  const Ops* table;
};

Resolved resolve() {
  const Ops* avx2 = avx2_ops();
  const char* env = std::getenv("SPECTER_KERNELS");
  std::string want = env ? env : "auto";
  if (want == "scalar") return {Isa::scalar, &kScalarOps};
  if (want == "avx2") {
    if (!avx2)
      throw Error("SPECTER_KERNELS=avx2 but AVX2 is unavailable on this CPU/build");
    return {Isa::avx2, avx2};
  }
  if (want != "auto" && !want.empty())
    throw Error("SPECTER_KERNELS must be auto, scalar, or avx2 (got '" + want + "')");
  if (avx2) return {Isa::avx2, avx2};
  return {Isa::scalar, &kScalarOps};
}

const Resolved& resolved() {
  static const Resolved r = resolve();
  return r;
}

}  // namespace

const char* isa_name(Isa isa) {
  switch (isa) {
    case Isa::scalar: return "scalar";
    case Isa::avx2: return "avx2";
  }
  return "?";
}

Isa active_isa() { return resolved().isa; }

const Ops& ops() { return *resolved().table; }

const Ops& scalar_ops() { return kScalarOps; }

#if !defined(SPECTER_HAVE_AVX2_TU)
const Ops* avx2_ops() { return nullptr; }
#else
// defined in kernels_avx2.cpp; declared here to attach the CPU check
const Ops* avx2_table_raw();
const Ops* avx2_ops() { return cpu_has_avx2() ? avx2_table_raw() : nullptr; }
#endif

}  // namespace specter::kernels
