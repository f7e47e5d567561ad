#include <atomic>
#include <cstdlib>
#include <cstring>
#include <string>

#include "ntk/common.hpp"
#include "ntk/kernels.hpp"

namespace ntk::kern {

namespace scalar {
void gemm_nn(const double*, const double*, double*, int, int, int);
void gemm_nt(const double*, const double*, double*, int, int, int);
void gemm_tn(const double*, const double*, double*, int, int, int);
void vadd(const double*, const double*, double*, int);
void vmul(const double*, const double*, double*, int);
void axpy(double, const double*, double*, int);
void vscale(double, double*, int);
void adamw(double*, const double*, double*, double*, int, const AdamwArgs&);
}  // namespace scalar

#ifdef NTK_HAVE_AVX2
namespace avx2 {
void gemm_nn(const double*, const double*, double*, int, int, int);
void gemm_nt(const double*, const double*, double*, int, int, int);
void gemm_tn(const double*, const double*, double*, int, int, int);
void vadd(const double*, const double*, double*, int);
void vmul(const double*, const double*, double*, int);
void axpy(double, const double*, double*, int);
void vscale(double, double*, int);
void adamw(double*, const double*, double*, double*, int, const AdamwArgs&);
}  // namespace avx2
#endif

namespace {

constexpr Ops kScalarOps = {
    "scalar",        scalar::gemm_nn, scalar::gemm_nt, scalar::gemm_tn, scalar::vadd,
    scalar::vmul,    scalar::axpy,    scalar::vscale,  scalar::adamw,
};

#ifdef NTK_HAVE_AVX2
constexpr Ops kAvx2Ops = {
    "avx2",        avx2::gemm_nn, avx2::gemm_nt, avx2::gemm_tn, avx2::vadd,
    avx2::vmul,    avx2::axpy,    avx2::vscale,  avx2::adamw,
};
#endif

bool cpu_has_avx2_fma() {
#if defined(NTK_HAVE_AVX2) && (defined(__x86_64__) || defined(_M_X64))
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

Backend pick_default() {
  if (const char* env = std::getenv("NTK_KERNELS")) {
    if (std::strcmp(env, "scalar") == 0) return Backend::scalar;
    if (std::strcmp(env, "avx2") == 0) {
      if (!backend_available(Backend::avx2))
        throw ConfigError("NTK_KERNELS=avx2 but this CPU/build has no avx2 kernels");
      return Backend::avx2;
    }
    throw ConfigError(std::string("unknown NTK_KERNELS value '") + env + "'");
  }
  return backend_available(Backend::avx2) ? Backend::avx2 : Backend::scalar;
}

std::atomic<const Ops*> g_active{nullptr};
std::atomic<Backend> g_backend{Backend::scalar};

void ensure_init() {
  if (g_active.load(std::memory_order_acquire) != nullptr) return;
  const Backend b = pick_default();
  g_backend.store(b, std::memory_order_relaxed);
  g_active.store(&table(b), std::memory_order_release);
}

}  // namespace

bool backend_available(Backend b) {
  switch (b) {
    case Backend::scalar:
      return true;
    case Backend::avx2:
      return cpu_has_avx2_fma();
  }
  return false;
}

const Ops& table(Backend b) {
  switch (b) {
    case Backend::scalar:
      return kScalarOps;
    case Backend::avx2:
#ifdef NTK_HAVE_AVX2
      if (cpu_has_avx2_fma()) return kAvx2Ops;
#endif
      throw ConfigError("avx2 kernels unavailable on this CPU/build");
  }
  throw ConfigError("unknown kernel backend");
}

const Ops& ops() {
  ensure_init();
  return *g_active.load(std::memory_order_acquire);
}

Backend active_backend() {
  ensure_init();
  return g_backend.load(std::memory_order_relaxed);
}

void force_backend(Backend b) {
  const Ops& t = table(b);
  g_backend.store(b, std::memory_order_relaxed);
  g_active.store(&t, std::memory_order_release);
}

const char* backend_name(Backend b) {
  return b == Backend::scalar ? "scalar" : "avx2";
}

}  // namespace ntk::kern
