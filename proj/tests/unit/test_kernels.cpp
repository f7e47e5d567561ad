#include <cmath>
#include <vector>

#include "doctest.h"
#include "ntk/common.hpp"
#include "ntk/kernels.hpp"
#include "ntk/rng.hpp"

namespace {

using ntk::Rng;
namespace kern = ntk::kern;

std::vector<double> random_vec(Rng& rng, int n, double lo = -2.0, double hi = 2.0) {
  std::vector<double> v(static_cast<size_t>(n));
  for (auto& x : v) x = rng.real(lo, hi);
  return v;
}

// Plain triple loops, written independently of the library kernels.
void ref_gemm_nn(const std::vector<double>& a, const std::vector<double>& b,
                 std::vector<double>& c, int m, int k, int n) {
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) {
      double acc = 0.0;
      for (int p = 0; p < k; ++p) acc += a[i * k + p] * b[p * n + j];
      c[i * n + j] += acc;
    }
}

void ref_gemm_nt(const std::vector<double>& a, const std::vector<double>& b,
                 std::vector<double>& c, int m, int k, int n) {
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) {
      double acc = 0.0;
      for (int p = 0; p < k; ++p) acc += a[i * k + p] * b[j * k + p];
      c[i * n + j] += acc;
    }
}

void ref_gemm_tn(const std::vector<double>& a, const std::vector<double>& b,
                 std::vector<double>& c, int m, int k, int n) {
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) {
      double acc = 0.0;
      for (int p = 0; p < k; ++p) acc += a[p * m + i] * b[p * n + j];
      c[i * n + j] += acc;
    }
}

double max_abs_diff(const std::vector<double>& x, const std::vector<double>& y) {
  REQUIRE(x.size() == y.size());
  double worst = 0.0;
  for (size_t i = 0; i < x.size(); ++i) worst = std::max(worst, std::abs(x[i] - y[i]));
  return worst;
}

struct Shape {
  int m, k, n;
};

const std::vector<Shape> kShapes = {{1, 1, 1}, {2, 3, 4},   {5, 7, 3},
                                    {8, 8, 8}, {17, 9, 33}, {32, 64, 16}};

}  // namespace

TEST_CASE("gemm variants accumulate into a preloaded C") {
  Rng rng(11);
  const auto& ops = kern::ops();
  for (const auto& s : kShapes) {
    auto a_nn = random_vec(rng, s.m * s.k);
    auto b_nn = random_vec(rng, s.k * s.n);
    auto c = random_vec(rng, s.m * s.n);
    auto c_ref = c;
    ops.gemm_nn(a_nn.data(), b_nn.data(), c.data(), s.m, s.k, s.n);
    ref_gemm_nn(a_nn, b_nn, c_ref, s.m, s.k, s.n);
    CHECK(max_abs_diff(c, c_ref) < 1e-11);

    auto b_nt = random_vec(rng, s.n * s.k);
    c = random_vec(rng, s.m * s.n);
    c_ref = c;
    ops.gemm_nt(a_nn.data(), b_nt.data(), c.data(), s.m, s.k, s.n);
    ref_gemm_nt(a_nn, b_nt, c_ref, s.m, s.k, s.n);
    CHECK(max_abs_diff(c, c_ref) < 1e-11);

    auto a_tn = random_vec(rng, s.k * s.m);
    c = random_vec(rng, s.m * s.n);
    c_ref = c;
    ops.gemm_tn(a_tn.data(), b_nn.data(), c.data(), s.m, s.k, s.n);
    ref_gemm_tn(a_tn, b_nn, c_ref, s.m, s.k, s.n);
    CHECK(max_abs_diff(c, c_ref) < 1e-11);
  }
}

TEST_CASE("elementwise kernels match direct arithmetic") {
  Rng rng(12);
  const auto& ops = kern::ops();
  for (int n : {1, 2, 3, 7, 64, 257}) {
    auto x = random_vec(rng, n);
    auto y = random_vec(rng, n);

    std::vector<double> out(static_cast<size_t>(n));
    ops.vadd(x.data(), y.data(), out.data(), n);
    for (int i = 0; i < n; ++i) CHECK(out[i] == x[i] + y[i]);

    ops.vmul(x.data(), y.data(), out.data(), n);
    for (int i = 0; i < n; ++i) CHECK(out[i] == x[i] * y[i]);

    auto y2 = y;
    ops.axpy(0.75, x.data(), y2.data(), n);
    for (int i = 0; i < n; ++i) CHECK(y2[i] == doctest::Approx(y[i] + 0.75 * x[i]).epsilon(1e-15));

    auto x2 = x;
    ops.vscale(-1.25, x2.data(), n);
    for (int i = 0; i < n; ++i) CHECK(x2[i] == doctest::Approx(-1.25 * x[i]).epsilon(1e-15));
  }
}

TEST_CASE("adamw step matches the hand-evaluated update") {
  const auto& ops = kern::ops();
  double p = 1.5, g = 0.5, m = 0.0, v = 0.0;
  kern::AdamwArgs args;
  args.lr = 1e-2;
  args.weight_decay = 0.1;
  args.step = 1;
  ops.adamw(&p, &g, &m, &v, 1, args);

  const double m1 = 0.1 * 0.5;                   // (1-beta1)*g
  const double v1 = 0.001 * 0.25;                // (1-beta2)*g^2
  const double mhat = m1 / (1.0 - 0.9);          // bias correction at t=1
  const double vhat = v1 / (1.0 - 0.999);
  const double expected =
      1.5 - 1e-2 * (mhat / (std::sqrt(vhat) + 1e-8)) - 1e-2 * 0.1 * 1.5;
  CHECK(p == doctest::Approx(expected).epsilon(1e-12));
  CHECK(m == doctest::Approx(m1).epsilon(1e-12));
  CHECK(v == doctest::Approx(v1).epsilon(1e-12));
}

TEST_CASE("adamw: zero gradient and zero decay leave parameters unchanged") {
  const auto& ops = kern::ops();
  std::vector<double> p = {0.5, -2.0, 0.0};
  auto orig = p;
  std::vector<double> g(3, 0.0), m(3, 0.0), v(3, 0.0);
  kern::AdamwArgs args;
  args.lr = 1e-2;
  args.step = 1;
  ops.adamw(p.data(), g.data(), m.data(), v.data(), 3, args);
  CHECK(p == orig);
}

TEST_CASE("adamw: nonzero gradient changes at least one parameter") {
  const auto& ops = kern::ops();
  std::vector<double> p = {0.5, -2.0};
  auto orig = p;
  std::vector<double> g = {0.0, 1.0}, m(2, 0.0), v(2, 0.0);
  kern::AdamwArgs args;
  args.lr = 1e-3;
  args.step = 1;
  ops.adamw(p.data(), g.data(), m.data(), v.data(), 2, args);
  CHECK(p != orig);
  CHECK(p[0] == orig[0]);
}

TEST_CASE("adamw: decay alone strictly shrinks nonzero weights") {
  const auto& ops = kern::ops();
  std::vector<double> p = {0.5, -2.0, 1e-3};
  auto orig = p;
  std::vector<double> g(3, 0.0), m(3, 0.0), v(3, 0.0);
  kern::AdamwArgs args;
  args.lr = 1e-2;
  args.weight_decay = 0.5;
  args.step = 1;
  ops.adamw(p.data(), g.data(), m.data(), v.data(), 3, args);
  for (int i = 0; i < 3; ++i) {
    CHECK(std::abs(p[i]) < std::abs(orig[i]));
    CHECK(p[i] * orig[i] > 0.0);  // decay never flips the sign at lr*wd < 1
  }
}

TEST_CASE("vector ISA backend agrees with the scalar reference") {
  if (!kern::backend_available(kern::Backend::avx2)) {
    MESSAGE("avx2 backend not available on this machine; skipping");
    return;
  }
  const auto& sc = kern::table(kern::Backend::scalar);
  const auto& vx = kern::table(kern::Backend::avx2);
  Rng rng(13);
  for (const auto& s : kShapes) {
    auto a = random_vec(rng, s.m * s.k);
    auto b = random_vec(rng, s.k * s.n);
    auto c0 = random_vec(rng, s.m * s.n);
    auto c1 = c0;
    sc.gemm_nn(a.data(), b.data(), c0.data(), s.m, s.k, s.n);
    vx.gemm_nn(a.data(), b.data(), c1.data(), s.m, s.k, s.n);
    CHECK(max_abs_diff(c0, c1) < 1e-11);

    auto bt = random_vec(rng, s.n * s.k);
    c0 = random_vec(rng, s.m * s.n);
    c1 = c0;
    sc.gemm_nt(a.data(), bt.data(), c0.data(), s.m, s.k, s.n);
    vx.gemm_nt(a.data(), bt.data(), c1.data(), s.m, s.k, s.n);
    CHECK(max_abs_diff(c0, c1) < 1e-11);

    auto at = random_vec(rng, s.k * s.m);
    c0 = random_vec(rng, s.m * s.n);
    c1 = c0;
    sc.gemm_tn(at.data(), b.data(), c0.data(), s.m, s.k, s.n);
    vx.gemm_tn(at.data(), b.data(), c1.data(), s.m, s.k, s.n);
    CHECK(max_abs_diff(c0, c1) < 1e-11);
  }

  for (int n : {1, 3, 8, 31, 200}) {
    auto x = random_vec(rng, n);
    auto y = random_vec(rng, n);
    std::vector<double> o0(static_cast<size_t>(n)), o1(static_cast<size_t>(n));
    sc.vadd(x.data(), y.data(), o0.data(), n);
    vx.vadd(x.data(), y.data(), o1.data(), n);
    CHECK(o0 == o1);
    sc.vmul(x.data(), y.data(), o0.data(), n);
    vx.vmul(x.data(), y.data(), o1.data(), n);
    CHECK(o0 == o1);

    auto p0 = random_vec(rng, n), g = random_vec(rng, n);
    auto m0 = random_vec(rng, n, 0.0, 1.0), v0 = random_vec(rng, n, 0.0, 1.0);
    auto p1 = p0, m1 = m0, v1 = v0;
    kern::AdamwArgs args;
    args.lr = 3e-4;
    args.weight_decay = 0.01;
    args.step = 7;
    sc.adamw(p0.data(), g.data(), m0.data(), v0.data(), n, args);
    vx.adamw(p1.data(), g.data(), m1.data(), v1.data(), n, args);
    CHECK(max_abs_diff(p0, p1) < 1e-14);
    CHECK(max_abs_diff(m0, m1) < 1e-14);
    CHECK(max_abs_diff(v0, v1) < 1e-14);
  }
}

TEST_CASE("force_backend switches the active table and back") {
  const kern::Backend original = kern::active_backend();
  kern::force_backend(kern::Backend::scalar);
  CHECK(kern::active_backend() == kern::Backend::scalar);
  CHECK(std::string(kern::ops().name) == "scalar");
  kern::force_backend(original);
  CHECK(kern::active_backend() == original);
}
