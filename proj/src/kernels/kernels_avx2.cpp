// AVX2+FMA kernel variants. This translation unit is compiled with
// -mavx2 -mfma and must only be entered after a runtime CPU check; dispatch
// lives in kernels_dispatch.cpp.

#if defined(__AVX2__) && defined(__FMA__)

#include <immintrin.h>

#include <cmath>

#include "ntk/kernels.hpp"

namespace ntk::kern::avx2 {

namespace {

inline double hsum(__m256d v) {
  __m128d lo = _mm256_castpd256_pd128(v);
  const __m128d hi = _mm256_extractf128_pd(v, 1);
  lo = _mm_add_pd(lo, hi);
  const __m128d swapped = _mm_unpackhi_pd(lo, lo);
  return _mm_cvtsd_f64(_mm_add_sd(lo, swapped));
}

}  // namespace

void gemm_nn(const double* a, const double* b, double* c, int m, int k, int n) {
  const int n4 = n & ~3;
  for (int i = 0; i < m; ++i) {
    const double* ai = a + static_cast<size_t>(i) * k;
    double* ci = c + static_cast<size_t>(i) * n;
    for (int l = 0; l < k; ++l) {
      const __m256d al = _mm256_set1_pd(ai[l]);
      const double* bl = b + static_cast<size_t>(l) * n;
      int j = 0;
      for (; j + 16 <= n; j += 16) {
        __m256d c0 = _mm256_loadu_pd(ci + j);
        __m256d c1 = _mm256_loadu_pd(ci + j + 4);
        __m256d c2 = _mm256_loadu_pd(ci + j + 8);
        __m256d c3 = _mm256_loadu_pd(ci + j + 12);
        c0 = _mm256_fmadd_pd(al, _mm256_loadu_pd(bl + j), c0);
        c1 = _mm256_fmadd_pd(al, _mm256_loadu_pd(bl + j + 4), c1);
        c2 = _mm256_fmadd_pd(al, _mm256_loadu_pd(bl + j + 8), c2);
        c3 = _mm256_fmadd_pd(al, _mm256_loadu_pd(bl + j + 12), c3);
        _mm256_storeu_pd(ci + j, c0);
        _mm256_storeu_pd(ci + j + 4, c1);
        _mm256_storeu_pd(ci + j + 8, c2);
        _mm256_storeu_pd(ci + j + 12, c3);
      }
      for (; j < n4; j += 4) {
        const __m256d cv = _mm256_fmadd_pd(al, _mm256_loadu_pd(bl + j), _mm256_loadu_pd(ci + j));
        _mm256_storeu_pd(ci + j, cv);
      }
      const double als = ai[l];
      for (; j < n; ++j) ci[j] += als * bl[j];
    }
  }
}

void gemm_nt(const double* a, const double* b, double* c, int m, int k, int n) {
  for (int i = 0; i < m; ++i) {
    const double* ai = a + static_cast<size_t>(i) * k;
    double* ci = c + static_cast<size_t>(i) * n;
    for (int j = 0; j < n; ++j) {
      const double* bj = b + static_cast<size_t>(j) * k;
      __m256d s0 = _mm256_setzero_pd();
      __m256d s1 = _mm256_setzero_pd();
      __m256d s2 = _mm256_setzero_pd();
      __m256d s3 = _mm256_setzero_pd();
      int l = 0;
      for (; l + 16 <= k; l += 16) {
        s0 = _mm256_fmadd_pd(_mm256_loadu_pd(ai + l), _mm256_loadu_pd(bj + l), s0);
        s1 = _mm256_fmadd_pd(_mm256_loadu_pd(ai + l + 4), _mm256_loadu_pd(bj + l + 4), s1);
        s2 = _mm256_fmadd_pd(_mm256_loadu_pd(ai + l + 8), _mm256_loadu_pd(bj + l + 8), s2);
        s3 = _mm256_fmadd_pd(_mm256_loadu_pd(ai + l + 12), _mm256_loadu_pd(bj + l + 12), s3);
      }
      for (; l + 4 <= k; l += 4) {
        s0 = _mm256_fmadd_pd(_mm256_loadu_pd(ai + l), _mm256_loadu_pd(bj + l), s0);
      }
      double acc = hsum(_mm256_add_pd(_mm256_add_pd(s0, s1), _mm256_add_pd(s2, s3)));
      for (; l < k; ++l) acc += ai[l] * bj[l];
      ci[j] += acc;
    }
  }
}

void gemm_tn(const double* a, const double* b, double* c, int m, int k, int n) {
  const int n4 = n & ~3;
  for (int l = 0; l < k; ++l) {
    const double* al = a + static_cast<size_t>(l) * m;
    const double* bl = b + static_cast<size_t>(l) * n;
    for (int i = 0; i < m; ++i) {
      const __m256d av = _mm256_set1_pd(al[i]);
      double* ci = c + static_cast<size_t>(i) * n;
      int j = 0;
      for (; j < n4; j += 4) {
        const __m256d cv = _mm256_fmadd_pd(av, _mm256_loadu_pd(bl + j), _mm256_loadu_pd(ci + j));
        _mm256_storeu_pd(ci + j, cv);
      }
      const double as = al[i];
      for (; j < n; ++j) ci[j] += as * bl[j];
    }
  }
}

void vadd(const double* x, const double* y, double* out, int n) {
  int i = 0;
  for (; i + 4 <= n; i += 4) {
    _mm256_storeu_pd(out + i, _mm256_add_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i)));
  }
  for (; i < n; ++i) out[i] = x[i] + y[i];
}

void vmul(const double* x, const double* y, double* out, int n) {
  int i = 0;
  for (; i + 4 <= n; i += 4) {
    _mm256_storeu_pd(out + i, _mm256_mul_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i)));
  }
  for (; i < n; ++i) out[i] = x[i] * y[i];
}

void axpy(double a, const double* x, double* y, int n) {
  const __m256d av = _mm256_set1_pd(a);
  int i = 0;
  for (; i + 4 <= n; i += 4) {
    _mm256_storeu_pd(y + i, _mm256_fmadd_pd(av, _mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i)));
  }
  for (; i < n; ++i) y[i] += a * x[i];
}

void vscale(double a, double* x, int n) {
  const __m256d av = _mm256_set1_pd(a);
  int i = 0;
  for (; i + 4 <= n; i += 4) {
    _mm256_storeu_pd(x + i, _mm256_mul_pd(av, _mm256_loadu_pd(x + i)));
  }
  for (; i < n; ++i) x[i] *= a;
}

void adamw(double* p, const double* g, double* m, double* v, int n, const AdamwArgs& args) {
  const double inv_bc1s = 1.0 / (1.0 - std::pow(args.beta1, static_cast<double>(args.step)));
  const double inv_bc2s = 1.0 / (1.0 - std::pow(args.beta2, static_cast<double>(args.step)));
  const __m256d b1 = _mm256_set1_pd(args.beta1);
  const __m256d b2 = _mm256_set1_pd(args.beta2);
  const __m256d omb1 = _mm256_set1_pd(1.0 - args.beta1);
  const __m256d omb2 = _mm256_set1_pd(1.0 - args.beta2);
  const __m256d inv_bc1 = _mm256_set1_pd(inv_bc1s);
  const __m256d inv_bc2 = _mm256_set1_pd(inv_bc2s);
  const __m256d lr = _mm256_set1_pd(args.lr);
  const __m256d lr_wd = _mm256_set1_pd(args.lr * args.weight_decay);
  const __m256d eps = _mm256_set1_pd(args.eps);
  int i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d gv = _mm256_loadu_pd(g + i);
    __m256d mv = _mm256_loadu_pd(m + i);
    __m256d vv = _mm256_loadu_pd(v + i);
    mv = _mm256_add_pd(_mm256_mul_pd(b1, mv), _mm256_mul_pd(omb1, gv));
    vv = _mm256_add_pd(_mm256_mul_pd(b2, vv), _mm256_mul_pd(omb2, _mm256_mul_pd(gv, gv)));
    _mm256_storeu_pd(m + i, mv);
    _mm256_storeu_pd(v + i, vv);
    const __m256d mhat = _mm256_mul_pd(mv, inv_bc1);
    const __m256d vhat = _mm256_mul_pd(vv, inv_bc2);
    const __m256d denom = _mm256_add_pd(_mm256_sqrt_pd(vhat), eps);
    __m256d pv = _mm256_loadu_pd(p + i);
    pv = _mm256_sub_pd(pv, _mm256_mul_pd(lr, _mm256_div_pd(mhat, denom)));
    pv = _mm256_sub_pd(pv, _mm256_mul_pd(lr_wd, _mm256_loadu_pd(p + i)));
    _mm256_storeu_pd(p + i, pv);
  }
  if (i < n) {
    const double b1s = args.beta1;
    const double b2s = args.beta2;
    const double lrs = args.lr;
    const double lr_wds = args.lr * args.weight_decay;
    for (; i < n; ++i) {
      m[i] = b1s * m[i] + (1.0 - b1s) * g[i];
      v[i] = b2s * v[i] + (1.0 - b2s) * (g[i] * g[i]);
      const double mhat = m[i] * inv_bc1s;
      const double vhat = v[i] * inv_bc2s;
      p[i] = p[i] - lrs * (mhat / (std::sqrt(vhat) + args.eps)) - lr_wds * p[i];
    }
  }
}

}  // namespace ntk::kern::avx2

#endif  // __AVX2__ && __FMA__
