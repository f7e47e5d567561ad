#pragma once

#include <cstdint>

namespace ntk::kern {

// One decoupled-weight-decay adaptive step. `step` is 1-based and drives the
// bias correction.
struct AdamwArgs {
  double lr = 0.0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;
  int64_t step = 1;
};

// Dense kernels behind the tensor ops. All matrices are row-major and dense;
// GEMM variants accumulate into C. Every entry has a scalar reference
// implementation and may have ISA-specific variants; variants are equivalent
// up to floating-point reassociation, never semantically.
struct Ops {
  const char* name;

  // C(m x n) += A(m x k) * B(k x n)
  void (*gemm_nn)(const double* a, const double* b, double* c, int m, int k, int n);
  // C(m x n) += A(m x k) * B(n x k)^T
  void (*gemm_nt)(const double* a, const double* b, double* c, int m, int k, int n);
  // C(m x n) += A(k x m)^T * B(k x n)
  void (*gemm_tn)(const double* a, const double* b, double* c, int m, int k, int n);

  void (*vadd)(const double* x, const double* y, double* out, int n);
  void (*vmul)(const double* x, const double* y, double* out, int n);
  void (*axpy)(double a, const double* x, double* y, int n);
  void (*vscale)(double a, double* x, int n);

  void (*adamw)(double* p, const double* g, double* m, double* v, int n, const AdamwArgs& args);
};

enum class Backend { scalar, avx2 };

// Active table. Chosen once: the env var NTK_KERNELS (values "scalar",
// "avx2") wins, otherwise the widest backend the CPU supports.
const Ops& ops();

// Specific table; throws ntk::ConfigError if the backend was not compiled in
// or the CPU lacks it.
const Ops& table(Backend b);

Backend active_backend();
bool backend_available(Backend b);

// Test hook; throws ntk::ConfigError if unavailable.
void force_backend(Backend b);

const char* backend_name(Backend b);

}  // namespace ntk::kern
