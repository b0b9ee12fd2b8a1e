// AVX2+FMA kernel variants.  This is the only translation unit compiled with
// -mavx2 -mfma; kernels.cpp gates it behind a runtime CPU check.
//
// Elementwise kernels perform the identical IEEE operation per lane as the
// scalar reference, so results are bit-exact.  Reductions use one vector
// accumulator with a fixed lane-combine order; they reassociate relative to
// scalar and are held to a relative tolerance by the equivalence tests.

#include <immintrin.h>

#include "specter/kernels.hpp"

namespace specter::kernels {
namespace {

void v_add(const double* a, const double* b, double* out, size_t n) {
  size_t i = 0;
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(out + i, _mm256_add_pd(_mm256_loadu_pd(a + i),
                                            _mm256_loadu_pd(b + i)));
  for (; i < n; ++i) out[i] = a[i] + b[i];
}

void v_sub(const double* a, const double* b, double* out, size_t n) {
  size_t i = 0;
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(out + i, _mm256_sub_pd(_mm256_loadu_pd(a + i),
                                            _mm256_loadu_pd(b + i)));
  for (; i < n; ++i) out[i] = a[i] - b[i];
}

void v_mul(const double* a, const double* b, double* out, size_t n) {
  size_t i = 0;
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(out + i, _mm256_mul_pd(_mm256_loadu_pd(a + i),
                                            _mm256_loadu_pd(b + i)));
  for (; i < n; ++i) out[i] = a[i] * b[i];
}

void v_div_clamped(const double* a, const double* b, double* out, size_t n,
                   double eps) {
  const __m256d veps = _mm256_set1_pd(eps);
  const __m256d vneg_eps = _mm256_set1_pd(-eps);
  const __m256d vzero = _mm256_setzero_pd();
  const __m256d sign_mask = _mm256_set1_pd(-0.0);
  size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    __m256d d = _mm256_loadu_pd(b + i);
    // strict d < 0 so -0.0 clamps to +eps, matching the scalar branch
    __m256d lt0 = _mm256_cmp_pd(d, vzero, _CMP_LT_OQ);
    __m256d clamp = _mm256_blendv_pd(veps, vneg_eps, lt0);
    __m256d mag = _mm256_andnot_pd(sign_mask, d);
    __m256d small = _mm256_cmp_pd(mag, veps, _CMP_LT_OQ);
    __m256d denom = _mm256_blendv_pd(d, clamp, small);
    _mm256_storeu_pd(out + i, _mm256_div_pd(_mm256_loadu_pd(a + i), denom));
  }
  for (; i < n; ++i) {
    double d = b[i];
    if ((d < 0.0 ? -d : d) < eps) d = (d < 0.0) ? -eps : eps;
    out[i] = a[i] / d;
  }
}

void v_greater(const double* a, const double* b, double* out, size_t n) {
  const __m256d one = _mm256_set1_pd(1.0);
  size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    __m256d m = _mm256_cmp_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i),
                              _CMP_GT_OQ);
    _mm256_storeu_pd(out + i, _mm256_and_pd(m, one));
  }
  for (; i < n; ++i) out[i] = (a[i] > b[i]) ? 1.0 : 0.0;
}

void v_less(const double* a, const double* b, double* out, size_t n) {
  const __m256d one = _mm256_set1_pd(1.0);
  size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    __m256d m = _mm256_cmp_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i),
                              _CMP_LT_OQ);
    _mm256_storeu_pd(out + i, _mm256_and_pd(m, one));
  }
  for (; i < n; ++i) out[i] = (a[i] < b[i]) ? 1.0 : 0.0;
}

double hsum(__m256d v) {
  __m128d lo = _mm256_castpd256_pd128(v);
  __m128d hi = _mm256_extractf128_pd(v, 1);
  __m128d s = _mm_add_pd(lo, hi);
  return _mm_cvtsd_f64(s) + _mm_cvtsd_f64(_mm_unpackhi_pd(s, s));
}

double v_sum(const double* a, size_t n) {
  __m256d acc = _mm256_setzero_pd();
  size_t i = 0;
  for (; i + 4 <= n; i += 4)
    acc = _mm256_add_pd(acc, _mm256_loadu_pd(a + i));
  double tail = 0.0;
  for (; i < n; ++i) tail += a[i];
  return hsum(acc) + tail;
}

double v_minimum(const double* a, size_t n) {
  if (n < 4) {
    double m = a[0];
    for (size_t i = 1; i < n; ++i)
      if (a[i] < m) m = a[i];
    return m;
  }
  __m256d acc = _mm256_loadu_pd(a);
  size_t i = 4;
  for (; i + 4 <= n; i += 4)
    acc = _mm256_min_pd(acc, _mm256_loadu_pd(a + i));
  __m128d lo = _mm256_castpd256_pd128(acc);
  __m128d hi = _mm256_extractf128_pd(acc, 1);
  __m128d s = _mm_min_pd(lo, hi);
  double m = _mm_cvtsd_f64(_mm_min_sd(s, _mm_unpackhi_pd(s, s)));
  for (; i < n; ++i)
    if (a[i] < m) m = a[i];
  return m;
}

double v_maximum(const double* a, size_t n) {
  if (n < 4) {
    double m = a[0];
    for (size_t i = 1; i < n; ++i)
      if (a[i] > m) m = a[i];
    return m;
  }
  __m256d acc = _mm256_loadu_pd(a);
  size_t i = 4;
  for (; i + 4 <= n; i += 4)
    acc = _mm256_max_pd(acc, _mm256_loadu_pd(a + i));
  __m128d lo = _mm256_castpd256_pd128(acc);
  __m128d hi = _mm256_extractf128_pd(acc, 1);
  __m128d s = _mm_max_pd(lo, hi);
  double m = _mm_cvtsd_f64(_mm_max_sd(s, _mm_unpackhi_pd(s, s)));
  for (; i < n; ++i)
    if (a[i] > m) m = a[i];
  return m;
}

double v_sum_squares(const double* a, size_t n) {
  __m256d acc = _mm256_setzero_pd();
  size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    __m256d x = _mm256_loadu_pd(a + i);
    acc = _mm256_fmadd_pd(x, x, acc);
  }
  double tail = 0.0;
  for (; i < n; ++i) tail += a[i] * a[i];
  return hsum(acc) + tail;
}

double v_sum_sq_dev(const double* a, size_t n, double mean) {
  const __m256d vm = _mm256_set1_pd(mean);
  __m256d acc = _mm256_setzero_pd();
  size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    __m256d d = _mm256_sub_pd(_mm256_loadu_pd(a + i), vm);
    acc = _mm256_fmadd_pd(d, d, acc);
  }
  double tail = 0.0;
  for (; i < n; ++i) {
    double d = a[i] - mean;
    tail += d * d;
  }
  return hsum(acc) + tail;
}

double v_dot(const double* a, const double* b, size_t n) {
  __m256d acc = _mm256_setzero_pd();
  size_t i = 0;
  for (; i + 4 <= n; i += 4)
    acc = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc);
  double tail = 0.0;
  for (; i < n; ++i) tail += a[i] * b[i];
  return hsum(acc) + tail;
}

const Ops kAvx2Ops = {
    v_add,     v_sub,         v_mul,        v_div_clamped,
    v_greater, v_less,        v_sum,        v_minimum,
    v_maximum, v_sum_squares, v_sum_sq_dev, v_dot,
};

}  // namespace

const Ops* avx2_table_raw() { return &kAvx2Ops; }

}  // namespace specter::kernels
