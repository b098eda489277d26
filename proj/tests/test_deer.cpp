#include <random>

#include "doctest.h"
#include "deermc/core/errors.hpp"
#include "deermc/deer/deer.hpp"
#include "test_systems.hpp"

using namespace deermc;

namespace {

bool within(const StateSequence& a, const StateSequence& b, double atol = 1e-4,
            double rtol = 1e-3) {
  return converged(b, a, atol, rtol).converged;
}

// J = M fixed matrix, f(s) = M s
class LinearMap final : public TransitionSystem {
 public:
  explicit LinearMap(std::vector<double> m, std::size_t dim) : m_(std::move(m)), dim_(dim) {}
  std::size_t dim() const noexcept override { return dim_; }
  std::size_t steps() const noexcept override { return 1; }
  void step(std::size_t, std::span<const double> prev, std::span<double> out) const override {
    for (std::size_t i = 0; i < dim_; ++i) {
      out[i] = 0;
      for (std::size_t j = 0; j < dim_; ++j) out[i] += m_[i * dim_ + j] * prev[j];
    }
  }
  void step_jvp(std::size_t t, std::span<const double> prev, std::span<double> out,
                std::span<const double> tangents, std::span<double> jv) const override {
    step(t, prev, out);
    for (std::size_t k = 0; k < tangents.size() / dim_; ++k)
      step(t, tangents.subspan(k * dim_, dim_), jv.subspan(k * dim_, dim_));
  }

 private:
  std::vector<double> m_;
  std::size_t dim_;
};

}  // namespace

TEST_CASE("converged arithmetic") {
  StateSequence a(4, 2, 0.0), b(4, 2, 2e-4);
  auto r = converged(a, b, 1e-4, 1e-3);
  CHECK_FALSE(r.converged);
  CHECK(r.delta_max == doctest::Approx(2e-4));
  r = converged(a, a, 1e-4, 1e-3);
  CHECK(r.converged);
  CHECK(r.delta_max == 0);
  StateSequence p(4, 2, 10.0), q(4, 2, 10.0 * (1 + 5e-4));
  CHECK(converged(p, q, 1e-4, 1e-3).converged);
  CHECK_THROWS_AS(converged(a, StateSequence(3, 2), 1e-4, 1e-3), StructuralError);
}

TEST_CASE("hutchinson on a diagonal matrix is exact for every probe") {
  LinearMap m({3, 0, 0, -2}, 2);
  const std::vector<double> x{0, 0};
  auto jvp = [&](std::span<const double> v, std::span<double> out) { m.jvp(0, x, v, out); };
  for (std::uint64_t it = 0; it < 20; ++it) {
    const auto d = hutchinson_diag(jvp, 2, 1, ProbeStream{9, it, 0});
    CHECK(d[0] == 3);
    CHECK(d[1] == -2);
  }
}

TEST_CASE("hutchinson on [[1,1],[0,1]] averages to the diagonal") {
  LinearMap m({1, 1, 0, 1}, 2);
  const std::vector<double> x{0, 0};
  auto jvp = [&](std::span<const double> v, std::span<double> out) { m.jvp(0, x, v, out); };
  // enumerate all four Rademacher vectors
  double s0 = 0, s1 = 0;
  for (double z0 : {-1.0, 1.0})
    for (double z1 : {-1.0, 1.0}) {
      std::vector<double> z{z0, z1}, jz(2);
      jvp(z, jz);
      s0 += z0 * jz[0];
      s1 += z1 * jz[1];
    }
  CHECK(s0 / 4 == 1.0);
  CHECK(s1 / 4 == 1.0);
  bool varies = false;
  for (std::uint64_t it = 0; it < 20; ++it)
    varies = varies || hutchinson_diag(jvp, 2, 1, ProbeStream{1, it, 0})[0] != 1.0;
  CHECK(varies);
}

TEST_CASE("hutchinson unbiasedness on a random 8x8 matrix") {
  std::mt19937_64 rng(17);
  std::normal_distribution<double> n;
  std::vector<double> mat(64);
  for (auto& v : mat) v = n(rng);
  LinearMap m(mat, 8);
  const std::vector<double> x(8, 0.0);
  auto jvp = [&](std::span<const double> v, std::span<double> out) { m.jvp(0, x, v, out); };
  const auto d = hutchinson_diag(jvp, 8, 100000, ProbeStream{5, 0, 0});
  for (int i = 0; i < 8; ++i) CHECK(std::abs(d[i] - mat[i * 9]) < 0.02);
}

TEST_CASE("affine systems converge in one Newton update in dense mode") {
  testsys::ScalarAffine sys(3, 500, 0.9, 0.3);
  const std::vector<double> s0{1, 2, 3};
  DeerConfig cfg;
  cfg.mode = JacobianMode::dense;
  const auto res = run_deer(sys, s0, cfg, 500);
  CHECK(res.converged);
  CHECK(res.iterations == 1);
  CHECK(within(res.trace, sequential_evaluate(sys, s0, 500), 1e-12, 0));
}

TEST_CASE("deer_iterate: affine exact and oracle is a fixed point") {
  testsys::TanhRecursion sys(3, 256, 0.9);
  const std::vector<double> s0{0.1, 0.2, 0.3};
  const auto oracle = sequential_evaluate(sys, s0, 256);
  DeerConfig cfg;
  cfg.mode = JacobianMode::dense;
  const auto next = deer_iterate(sys, oracle, s0, cfg);
  CHECK(converged(oracle, next, 1e-10, 0).converged);

  testsys::ScalarAffine aff(2, 50, -1.1, 0.5);
  const std::vector<double> a0{1, -1};
  const auto one = deer_iterate(aff, StateSequence::constant(50, a0), a0, cfg);
  CHECK(converged(sequential_evaluate(aff, a0, 50), one, 1e-9, 1e-12).converged);
}

TEST_CASE("nonlinear recursion converges to the oracle in every mode") {
  testsys::TanhRecursion sys(1, 256, 2.0);
  const std::vector<double> s0{0.0};
  const auto oracle = sequential_evaluate(sys, s0, 256);
  for (auto mode : {JacobianMode::dense, JacobianMode::diag_stochastic}) {
    DeerConfig cfg;
    cfg.mode = mode;
    cfg.full_trace = true;
    const auto res = run_deer(sys, s0, cfg, 256);
    CHECK(res.converged);
    CHECK(within(res.trace, oracle));
    CHECK(res.full_trace.size() == res.iterations);
    CHECK(res.delta_history.size() == res.iterations);
    CHECK(res.iterations <= default_max_iters(256));
    // monotone increments after burn-in
    for (std::size_t i = res.iterations / 2 + 1; i < res.iterations; ++i)
      CHECK(res.delta_history[i] <= res.delta_history[i - 1] * 1.0001);
    for (auto c : res.per_step_converged_at) CHECK(c >= 0);
  }
}

TEST_CASE("multivariate recursion in diag mode matches the oracle") {
  testsys::TanhRecursion sys(4, 2000, 0.7, 3);
  const std::vector<double> s0{0.5, 0.5, -0.5, 0};
  DeerConfig cfg;
  cfg.hutchinson_samples = 2;
  const auto res = run_deer(sys, s0, cfg, 2000);
  CHECK(res.converged);
  CHECK(within(res.trace, sequential_evaluate(sys, s0, 2000)));
}

TEST_CASE("early stopping returns the max_iters-th iterate") {
  testsys::TanhRecursion sys(2, 512, 1.5);
  const std::vector<double> s0{0.4, -0.1};
  DeerConfig cfg;
  cfg.max_iters = 3;
  cfg.full_trace = true;
  const auto res = run_deer(sys, s0, cfg, 512);
  CHECK_FALSE(res.converged);
  CHECK(res.iterations == 3);
  CHECK(res.full_trace.back() == res.trace);
}

TEST_CASE("sliding windows") {
  testsys::TanhRecursion sys(2, 600, 1.2, 7);
  const std::vector<double> s0{0.2, 0.1};
  const auto oracle = sequential_evaluate(sys, s0, 600);
  DeerConfig plain;
  const auto full = run_deer(sys, s0, plain, 600);
  SUBCASE("window = T equals plain") {
    DeerConfig w = plain;
    w.window = 600;
    const auto res = run_deer(sys, s0, w, 600);
    CHECK(res.trace == full.trace);
    CHECK(res.iterations == full.iterations);
  }
  SUBCASE("window = 1 is sequential evaluation") {
    DeerConfig w = plain;
    w.window = 1;
    w.max_iters = 10000;
    const auto res = run_deer(sys, s0, w, 600);
    CHECK(res.converged);
    CHECK(res.trace == oracle);
  }
  SUBCASE("window = 64") {
    DeerConfig w = plain;
    w.window = 64;
    w.max_iters = 1000;
    w.atol = 1e-9;
    w.rtol = 0;
    DeerSolver solver(sys, s0, w, 600);
    std::size_t last = 0;
    while (sliding_window_update(solver)) {
      CHECK(solver.window_start() >= last);
      last = solver.window_start();
    }
    CHECK(solver.result().converged);
    CHECK(within(solver.trace(), oracle));
  }
}

TEST_CASE("conditioning: damping, clipping and preconditioner") {
  DeerConfig cfg;
  cfg.damping = 0.5;
  cfg.clip = 1.0;
  cfg.preconditioner = {2.0, 1.0};
  std::vector<double> jac{3.0, -0.4};
  condition_jacobian(AffineKind::diag, 2, jac, cfg);
  CHECK(jac[0] == 1.0);
  CHECK(jac[1] == doctest::Approx(-0.2));
  std::vector<double> dense{5, -5, 0.1, 0.2};
  condition_jacobian(AffineKind::dense, 2, dense, cfg);
  for (double v : dense) CHECK(std::abs(v) <= 1.0);

  testsys::TanhRecursion sys(1, 300, 2.0);
  const std::vector<double> s0{0.0};
  DeerConfig damped;
  damped.damping = 0.5;
  damped.clip = 0.8;
  damped.max_iters = 1000;
  const auto res = run_deer(sys, s0, damped, 300);
  CHECK(res.converged);
  CHECK(within(res.trace, sequential_evaluate(sys, s0, 300)));
}

TEST_CASE("config validation") {
  DeerConfig cfg;
  cfg.atol = 0;
  CHECK_THROWS_AS(cfg.validate(2), ConfigError);
  cfg = {};
  cfg.damping = 1.5;
  CHECK_THROWS_AS(cfg.validate(2), ConfigError);
  cfg = {};
  cfg.preconditioner = {1.0};
  CHECK_THROWS_AS(cfg.validate(2), ConfigError);
  cfg = {};
  cfg.hutchinson_samples = 0;
  CHECK_THROWS_AS(cfg.validate(2), ConfigError);
  CHECK(default_max_iters(10000) == 55);
}

TEST_CASE("one jvp per step per sample per pass in diag mode") {
  testsys::TanhRecursion inner(3, 400, 0.8);
  CountingSystem sys(inner);
  const std::vector<double> s0{0.1, 0.1, 0.1};
  DeerConfig cfg;
  cfg.hutchinson_samples = 3;
  const auto res = run_deer(sys, s0, cfg, 400);
  CHECK(res.converged);
  CHECK(sys.jvp_calls() == 3 * res.evaluated_steps);
  CHECK(sys.forward_calls() == res.evaluated_steps);
}

TEST_CASE("divergence is reported") {
  testsys::ScalarAffine sys(1, 3000, 1e200, 0.0);
  const std::vector<double> s0{1.0};
  DeerConfig cfg;
  cfg.mode = JacobianMode::dense;
  CHECK_THROWS_AS(run_deer(sys, s0, cfg, 3000), DivergedError);
}
