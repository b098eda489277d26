#include <cmath>
#include <numeric>
#include <thread>
#include <algorithm>
#include <atomic>
#include <cstring>

#include "doctest.h"
#include "deermc/core/errors.hpp"
#include "deermc/core/noise.hpp"
#include "deermc/core/state_sequence.hpp"
#include "deermc/core/transition_system.hpp"
#include "deermc/core/worker_pool.hpp"
#include "test_systems.hpp"

using namespace deermc;

namespace {
NoiseLayout basic_layout() {
  NoiseLayout l;
  l.add("xi", 2, NoiseKind::standard_normal).add("u", 1, NoiseKind::uniform);
  return l;
}
}  // namespace

TEST_CASE("noise_at is pure") {
  const auto layout = basic_layout();
  const double a = noise_at(7, layout, 10, 3, "xi", 0);
  const double b = noise_at(7, layout, 10, 3, "xi", 0);
  CHECK(std::memcmp(&a, &b, sizeof a) == 0);
  CHECK(noise_at(7, layout, 10, 3, "xi", 1) != a);
  CHECK(noise_at(8, layout, 10, 3, "xi", 0) != a);
}

TEST_CASE("noise_at errors") {
  const auto layout = basic_layout();
  CHECK_THROWS_AS(noise_at(1, layout, 10, 0, "nope", 0), ConfigError);
  CHECK_THROWS_AS(noise_at(1, layout, 10, 0, "xi", 2), IndexError);
  CHECK_THROWS_AS(noise_at(1, layout, 10, 10, "xi", 0), IndexError);
  NoiseTable table(1, layout, 10);
  CHECK_THROWS_AS(table.at(0, "u", 1), IndexError);
  CHECK_THROWS_AS(table.at(0, "v", 0), ConfigError);
}

TEST_CASE("uniform draws lie in (0,1) and normals are standardized") {
  NoiseLayout layout;
  layout.add("u", 1, NoiseKind::uniform).add("xi", 1, NoiseKind::standard_normal);
  const std::size_t n = 1'000'000;
  NoiseTable table(42, layout, n);
  const auto u = table.slot("u"), xi = table.slot("xi");
  double sum = 0, sq = 0;
  bool in_range = true;
  for (std::size_t t = 0; t < n; ++t) {
    const double v = table.at(u, t, 0);
    in_range = in_range && v > 0.0 && v < 1.0;
    const double z = table.at(xi, t, 0);
    sum += z;
    sq += z * z;
  }
  CHECK(in_range);
  CHECK(std::abs(sum / n) < 0.005);
  CHECK(std::abs(sq / n - 1.0) < 0.01);
}

TEST_CASE("slot independence: draws are namespaced by slot name") {
  NoiseLayout a, b;
  a.add("xi", 3, NoiseKind::standard_normal).add("u", 1, NoiseKind::uniform);
  b.add("u", 1, NoiseKind::uniform);
  for (std::size_t t = 0; t < 50; ++t)
    CHECK(noise_at(5, a, 50, t, "u", 0) == noise_at(5, b, 50, t, "u", 0));
}

TEST_CASE("chi-squared draws") {
  CHECK(chi_squared_quantile(2.0, 0.5) == doctest::Approx(2.0 * std::log(2.0)).epsilon(1e-12));
  NoiseLayout layout;
  layout.add("g", 1, NoiseKind::chi_squared, 9.1);
  NoiseTable table(3, layout, 200000);
  double sum = 0;
  for (std::size_t t = 0; t < table.steps(); ++t) {
    const double g = table.at(t, "g", 0);
    REQUIRE(g > 0);
    sum += g;
  }
  CHECK(sum / table.steps() == doctest::Approx(9.1).epsilon(0.01));
  // fractional small dof stays positive
  NoiseLayout tiny;
  tiny.add("g", 1, NoiseKind::chi_squared, 0.1);
  NoiseTable tt(3, tiny, 1000);
  for (std::size_t t = 0; t < 1000; ++t) CHECK(tt.at(t, "g", 0) > 0.0);
}

TEST_CASE("materialized table matches on-demand draws bit for bit") {
  NoiseLayout layout;
  layout.add("xi", 4, NoiseKind::standard_normal)
      .add("u", 1, NoiseKind::uniform)
      .add("g", 2, NoiseKind::chi_squared, 20.1);
  NoiseTable lazy(11, layout, 500), eager(11, layout, 500);
  WorkerPool pool(3);
  eager.materialize(&pool);
  CHECK(eager.materialized());
  for (std::size_t s = 0; s < layout.size(); ++s)
    for (std::size_t t = 0; t < 500; ++t)
      for (std::size_t k = 0; k < layout.slot(s).per_step; ++k)
        CHECK(lazy.at(s, t, k) == eager.at(s, t, k));
}

TEST_CASE("StateSequence shape and errors") {
  CHECK_THROWS_AS(StateSequence(0, 2), StructuralError);
  CHECK_THROWS_AS(StateSequence(2, 0), StructuralError);
  StateSequence s(3, 2, 1.5);
  CHECK(s.steps() == 3);
  CHECK(s(2, 1) == 1.5);
  CHECK(s.first_non_finite() == 3);
  s(1, 0) = std::nan("");
  CHECK(s.first_non_finite() == 1);
}

TEST_CASE("sequential_evaluate oracles") {
  SUBCASE("identity") {
    testsys::ScalarAffine id(2, 5, 1.0, 0.0);
    const std::vector<double> s0{1, 2};
    const auto out = sequential_evaluate(id, s0, 5);
    for (std::size_t t = 0; t < 5; ++t) {
      CHECK(out(t, 0) == 1);
      CHECK(out(t, 1) == 2);
    }
  }
  SUBCASE("2s+1") {
    testsys::ScalarAffine f(1, 3, 2.0, 1.0);
    const std::vector<double> s0{1};
    const auto out = sequential_evaluate(f, s0, 3);
    CHECK(out(0, 0) == 3);
    CHECK(out(1, 0) == 7);
    CHECK(out(2, 0) == 15);
  }
  SUBCASE("divergence carries the step") {
    testsys::ScalarAffine f(1, 2000, 1e200, 0.0);
    const std::vector<double> s0{1};
    try {
      sequential_evaluate(f, s0, 2000);
      FAIL("expected divergence");
    } catch (const DivergedError& e) {
      CHECK(e.step() == 1);
    }
  }
  SUBCASE("too many steps") {
    testsys::ScalarAffine f(1, 2, 1.0, 0.0);
    const std::vector<double> s0{1};
    CHECK_THROWS_AS(sequential_evaluate(f, s0, 3), IndexError);
  }
}

TEST_CASE("default dense Jacobian matches tangents") {
  testsys::TanhRecursion sys(3, 4, 0.8);
  const std::vector<double> x{0.3, -0.2, 0.5};
  std::vector<double> out(3), jac(9), col(3);
  sys.step_dense_jacobian(1, x, out, jac);
  for (std::size_t j = 0; j < 3; ++j) {
    std::vector<double> e(3, 0.0);
    e[j] = 1;
    sys.jvp(1, x, e, col);
    for (std::size_t i = 0; i < 3; ++i) CHECK(jac[i * 3 + j] == doctest::Approx(col[i]));
  }
}

TEST_CASE("CountingSystem counts one jvp per tangent") {
  testsys::TanhRecursion inner(2, 4, 0.5);
  CountingSystem sys(inner);
  const std::vector<double> x{0.1, 0.2}, tangents{1, 0, 0, 1, 1, 1};
  std::vector<double> out(2), jv(6);
  sys.step_jvp(0, x, out, tangents, jv);
  CHECK(sys.forward_calls() == 1);
  CHECK(sys.jvp_calls() == 3);
  sys.reset();
  CHECK(sys.jvp_calls() == 0);
}

TEST_CASE("WorkerPool covers every index once and propagates errors") {
  WorkerPool pool(4);
  std::vector<int> hits(10007, 0);
  pool.parallel_for(hits.size(), 100, [&](std::size_t b, std::size_t e) {
    for (std::size_t i = b; i < e; ++i) hits[i]++;
  });
  CHECK(std::accumulate(hits.begin(), hits.end(), 0) == 10007);
  CHECK(std::ranges::all_of(hits, [](int h) { return h == 1; }));
  CHECK_THROWS_AS(pool.parallel_for(10, 1,
                                    [](std::size_t b, std::size_t) {
                                      if (b == 5) throw ContractError("boom");
                                    }),
                  ContractError);
  // nested calls run inline
  std::atomic<int> count{0};
  pool.run_tasks(4, [&](std::size_t) {
    pool.parallel_for(10, 1, [&](std::size_t b, std::size_t e) { count += int(e - b); });
  });
  CHECK(count == 40);
}

TEST_CASE("jacobian mode parsing") {
  CHECK(parse_jacobian_mode("dense") == JacobianMode::dense);
  CHECK(parse_jacobian_mode("diag-stochastic") == JacobianMode::diag_stochastic);
  CHECK(parse_jacobian_mode("block2x2-stochastic") == JacobianMode::block2x2_stochastic);
  CHECK_THROWS_AS(parse_jacobian_mode("full"), ConfigError);
}
