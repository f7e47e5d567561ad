#include <doctest.h>

#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "ntk/optim.hpp"
#include "ntk/tagger.hpp"
#include "ntk/tensor.hpp"

using namespace ntk;

TEST_CASE("cosine schedule hits the pinned anchor points") {
  const TaggerConfig cfg;  // lr_max 3e-4, t0 3, t_mult 2
  CHECK(lr_schedule(0.0, cfg) == doctest::Approx(3e-4).epsilon(1e-12));
  CHECK(lr_schedule(1.5, cfg) == doctest::Approx(1.5e-4).epsilon(1e-12));

  // Cycles restart at epochs 3 and 9 (lengths 3, 6, 12, ...).
  CHECK(lr_schedule(3.0, cfg) == doctest::Approx(3e-4).epsilon(1e-12));
  CHECK(lr_schedule(6.0, cfg) == doctest::Approx(1.5e-4).epsilon(1e-12));
  CHECK(lr_schedule(9.0, cfg) == doctest::Approx(3e-4).epsilon(1e-12));
  CHECK(lr_schedule(15.0, cfg) == doctest::Approx(1.5e-4).epsilon(1e-12));

  // End of a cycle approaches zero.
  CHECK(lr_schedule(2.999999, cfg) < 1e-9);
}

TEST_CASE("cosine schedule is bounded and falls within each cycle") {
  const TaggerConfig cfg;
  double prev = lr_schedule(0.0, cfg);
  for (double e = 0.1; e < 3.0; e += 0.1) {
    const double lr = lr_schedule(e, cfg);
    CHECK(lr < prev);
    prev = lr;
  }
  for (double e = 0.0; e < 25.0; e += 0.13) {
    const double lr = lr_schedule(e, cfg);
    CHECK(lr >= 0.0);
    CHECK(lr <= cfg.lr_max);
  }

  TaggerConfig flat;
  flat.t0_epochs = 1;
  flat.t_mult = 1;
  const double expect = 0.5 * flat.lr_max * (1.0 + std::cos(3.14159265358979323846 * 0.25));
  CHECK(lr_schedule(7.25, flat) == doctest::Approx(expect).epsilon(1e-12));

  CHECK_THROWS_AS(lr_schedule(-0.5, cfg), ConfigError);
}

TEST_CASE("adamw applies bias-corrected moments and decoupled decay") {
  Tensor w(1, 2), b(1, 2);
  w.v = {1.0, -2.0};
  b.v = {0.5, 0.5};
  AdamW opt({{"head.w", &w}, {"head.b", &b}}, 0.1);

  Tensor gw(1, 2), gb(1, 2);
  gw.v = {0.5, -0.5};
  gb.v = {0.5, 0.5};
  opt.step({&gw, &gb}, 1e-2);
  CHECK(opt.steps_done() == 1);

  // First step: mhat = g, vhat = g*g, so the Adam term is lr * g / (|g| + eps).
  const double adam = 1e-2 * 0.5 / (0.5 + 1e-8);
  CHECK(w.at(0, 0) == doctest::Approx(1.0 - adam - 1e-2 * 0.1 * 1.0).epsilon(1e-12));
  CHECK(w.at(0, 1) == doctest::Approx(-2.0 + adam - 1e-2 * 0.1 * (-2.0)).epsilon(1e-12));
  // *.b tensors skip the decay term entirely.
  CHECK(b.at(0, 0) == doctest::Approx(0.5 - adam).epsilon(1e-12));
}

TEST_CASE("decay-only steps shrink weights and leave biases alone") {
  Tensor w(1, 3), b(1, 3);
  w.v = {1.0, -4.0, 0.25};
  b.v = {0.7, -0.7, 0.0};
  const Tensor b_before = b;
  AdamW opt({{"l0.fwd.wx", &w}, {"l0.fwd.b", &b}}, 0.1);

  const Tensor zero(1, 3);
  opt.step({&zero, &zero}, 1e-2);

  CHECK(b == b_before);
  CHECK(w.at(0, 0) == doctest::Approx(1.0 * (1.0 - 1e-3)).epsilon(1e-12));
  CHECK(w.at(0, 1) == doctest::Approx(-4.0 * (1.0 - 1e-3)).epsilon(1e-12));
  CHECK(w.at(0, 2) == doctest::Approx(0.25 * (1.0 - 1e-3)).epsilon(1e-12));

  // Zero decay and zero gradient change nothing at all.
  Tensor u(1, 3);
  u.v = {3.0, -1.0, 0.5};
  const Tensor u_before = u;
  AdamW still({{"w", &u}}, 0.0);
  still.step({&zero}, 1e-2);
  CHECK(u == u_before);
}

TEST_CASE("adamw drives a quadratic toward its minimum") {
  Tensor w(1, 1);
  w.v = {1.0};
  AdamW opt({{"w", &w}}, 0.0);
  Tensor g(1, 1);
  for (int i = 0; i < 200; ++i) {
    g.v = {w.v[0]};  // gradient of w^2 / 2
    opt.step({&g}, 0.01);
  }
  CHECK(std::abs(w.v[0]) < 0.1);
  CHECK(opt.steps_done() == 200);
}

TEST_CASE("adamw validates its inputs") {
  Tensor w(2, 2);
  CHECK_THROWS_AS(AdamW({{"w", &w}}, -0.1), ConfigError);

  AdamW opt({{"w", &w}}, 0.01);
  const Tensor good(2, 2);
  const Tensor bad_shape(2, 3);
  CHECK_THROWS_AS(opt.step({}, 1e-3), StateError);
  CHECK_THROWS_AS(opt.step({&good, &good}, 1e-3), StateError);
  CHECK_THROWS_AS(opt.step({&bad_shape}, 1e-3), StateError);
  CHECK_THROWS_AS(opt.step({nullptr}, 1e-3), StateError);

  Tensor nan_grad(2, 2);
  nan_grad.v[1] = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(opt.step({&nan_grad}, 1e-3), StateError);
  Tensor inf_grad(2, 2);
  inf_grad.v[3] = std::numeric_limits<double>::infinity();
  CHECK_THROWS_AS(opt.step({&inf_grad}, 1e-3), StateError);

  // Failed steps do not advance the step counter.
  CHECK(opt.steps_done() == 0);
}

TEST_CASE("bias detection is a name suffix rule") {
  CHECK(is_bias_param("head.b"));
  CHECK(is_bias_param("l0.fwd.b"));
  CHECK_FALSE(is_bias_param("head.w"));
  CHECK_FALSE(is_bias_param("embedding"));
  CHECK_FALSE(is_bias_param("b"));
  CHECK_FALSE(is_bias_param("stab"));
}
