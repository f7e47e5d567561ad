// Scalar reference kernels. These define the semantics; ISA variants must
// match them up to floating-point reassociation.

#include <cmath>

#include "ntk/kernels.hpp"

namespace ntk::kern::scalar {

void gemm_nn(const double* a, const double* b, double* c, int m, int k, int n) {
  for (int i = 0; i < m; ++i) {
    const double* ai = a + static_cast<size_t>(i) * k;
    double* ci = c + static_cast<size_t>(i) * n;
    for (int l = 0; l < k; ++l) {
      const double al = ai[l];
      const double* bl = b + static_cast<size_t>(l) * n;
      for (int j = 0; j < n; ++j) ci[j] += al * bl[j];
    }
  }
}

void gemm_nt(const double* a, const double* b, double* c, int m, int k, int n) {
  for (int i = 0; i < m; ++i) {
    const double* ai = a + static_cast<size_t>(i) * k;
    double* ci = c + static_cast<size_t>(i) * n;
    for (int j = 0; j < n; ++j) {
      const double* bj = b + static_cast<size_t>(j) * k;
      double acc = 0.0;
      for (int l = 0; l < k; ++l) acc += ai[l] * bj[l];
      ci[j] += acc;
    }
  }
}

void gemm_tn(const double* a, const double* b, double* c, int m, int k, int n) {
  for (int l = 0; l < k; ++l) {
    const double* al = a + static_cast<size_t>(l) * m;
    const double* bl = b + static_cast<size_t>(l) * n;
    for (int i = 0; i < m; ++i) {
      const double ali = al[i];
      double* ci = c + static_cast<size_t>(i) * n;
      for (int j = 0; j < n; ++j) ci[j] += ali * bl[j];
    }
  }
}

void vadd(const double* x, const double* y, double* out, int n) {
  for (int i = 0; i < n; ++i) out[i] = x[i] + y[i];
}

void vmul(const double* x, const double* y, double* out, int n) {
  for (int i = 0; i < n; ++i) out[i] = x[i] * y[i];
}

void axpy(double a, const double* x, double* y, int n) {
  for (int i = 0; i < n; ++i) y[i] += a * x[i];
}

void vscale(double a, double* x, int n) {
  for (int i = 0; i < n; ++i) x[i] *= a;
}

void adamw(double* p, const double* g, double* m, double* v, int n, const AdamwArgs& args) {
  const double b1 = args.beta1;
  const double b2 = args.beta2;
  const double inv_bc1 = 1.0 / (1.0 - std::pow(b1, static_cast<double>(args.step)));
  const double inv_bc2 = 1.0 / (1.0 - std::pow(b2, static_cast<double>(args.step)));
  const double lr = args.lr;
  const double lr_wd = args.lr * args.weight_decay;
  for (int i = 0; i < n; ++i) {
    m[i] = b1 * m[i] + (1.0 - b1) * g[i];
    v[i] = b2 * v[i] + (1.0 - b2) * (g[i] * g[i]);
    const double mhat = m[i] * inv_bc1;
    const double vhat = v[i] * inv_bc2;
    p[i] = p[i] - lr * (mhat / (std::sqrt(vhat) + args.eps)) - lr_wd * p[i];
  }
}

}  // namespace ntk::kern::scalar
