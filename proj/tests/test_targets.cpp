#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>

#include "doctest.h"
#include "deermc/core/errors.hpp"
#include "deermc/deer/deer.hpp"
#include "deermc/targets/basis.hpp"
#include "deermc/targets/dataset.hpp"
#include "deermc/targets/models.hpp"
#include "fd.hpp"
#include "test_systems.hpp"

using namespace deermc;

namespace {

std::vector<double> random_point(std::mt19937_64& rng, std::size_t d, double scale) {
  std::normal_distribution<double> n(0, scale);
  std::vector<double> x(d);
  for (auto& v : x) v = n(rng);
  return x;
}

Dataset toy_design() {
  Dataset d;
  d.rows = 3;
  d.cols = 2;
  d.x = {1.0, 0.5, -0.3, 2.0, 0.7, -1.2};
  d.y = {1, 0, 1};
  return d;
}

void check_derivatives(const TargetModel& m, double scale, unsigned seed) {
  std::mt19937_64 rng(seed);
  const std::size_t d = m.dim();
  double worst_g = 0, worst_h = 0;
  for (int rep = 0; rep < 100; ++rep) {
    const auto x = random_point(rng, d, scale);
    const auto v = random_point(rng, d, 1.0);
    std::vector<double> g(d), hv(d), g2(d), hv2(d);
    m.grad(x, g);
    const auto fdg = fd::gradient([&](std::span<const double> p) { return m.logp(p); }, x);
    worst_g = std::max(worst_g, fd::rel_error(g, fdg));
    const double lp = m.logp_grad(x, g2);
    CHECK(lp == doctest::Approx(m.logp(x)).epsilon(1e-12));
    CHECK(fd::rel_error(g2, g) < 1e-12);
    m.hvp(x, v, hv);
    const auto fdh = fd::directional([&](std::span<const double> p, std::span<double> o) { m.grad(p, o); },
                                     x, v, d);
    worst_h = std::max(worst_h, fd::rel_error(hv, fdh));
    // linear in v
    std::vector<double> v2(v), hv3(d);
    for (auto& e : v2) e *= -2.5;
    m.hvp(x, v2, hv3);
    for (std::size_t i = 0; i < d; ++i) CHECK(hv3[i] == doctest::Approx(-2.5 * hv[i]));
  }
  CHECK(worst_g <= 1e-5);
  CHECK(worst_h <= 1e-5);
}

}  // namespace

TEST_CASE("std-normal derivatives are analytic") {
  const auto m = make_model(std_normal_spec(3));
  const std::vector<double> x{1, -2, 0.5}, v{3, 1, -1};
  std::vector<double> g(3), h(3);
  m->grad(x, g);
  m->hvp(x, v, h);
  for (int i = 0; i < 3; ++i) {
    CHECK(g[i] == -x[i]);
    CHECK(h[i] == -v[i]);
  }
}

TEST_CASE("finite-difference checks for every model") {
  check_derivatives(*make_model(std_normal_spec(4)), 2.0, 1);
  check_derivatives(*make_model(rosenbrock_spec()), 1.5, 2);
  check_derivatives(*make_model(rosenbrock_spec(1.0, 2.0, 0.5, 0.3)), 1.5, 3);
  check_derivatives(*make_model(default_mog_spec()), 3.0, 4);
  check_derivatives(*make_model(gaussian_spec_from_covariance({1, -1, 0.5},
                                                               {2, 0.5, 0.1, 0.5, 1, 0.2, 0.1, 0.2, 0.5})),
                    1.0, 5);
  check_derivatives(*make_model(blr_spec(toy_design(), 1.0)), 1.0, 6);
  const auto syn = synthetic_logistic(200, 5, 3);
  check_derivatives(*make_model(blr_spec(syn.data, 1.0)), 0.5, 7);
}

TEST_CASE("blr hvp along e1 on a 3x2 design") {
  const auto m = make_model(blr_spec(toy_design(), 2.0));
  const std::vector<double> b{0.3, -0.7}, e1{1, 0};
  std::vector<double> h(2);
  m->hvp(b, e1, h);
  const auto f = fd::directional([&](std::span<const double> p, std::span<double> o) { m->grad(p, o); },
                                 b, e1, 2);
  CHECK(fd::rel_error(h, f) < 1e-6);
}

TEST_CASE("gaussian precision from covariance") {
  const auto spec = gaussian_spec_from_covariance({0, 0}, {2, 0, 0, 0.5});
  const auto m = make_model(spec);
  const std::vector<double> x{1, 1};
  std::vector<double> g(2);
  m->grad(x, g);
  CHECK(g[0] == doctest::Approx(-0.5));
  CHECK(g[1] == doctest::Approx(-2.0));
}

TEST_CASE("mog logp is finite and continuous far from the modes") {
  const auto m = make_model(default_mog_spec());
  double prev = m->logp(std::vector<double>{-13.0, -13.0});
  for (int i = 1; i <= 520; ++i) {
    const double x = -13.0 + i * 0.05;
    const double lp = m->logp(std::vector<double>{x, -13.0 + i * 0.05});
    CHECK(std::isfinite(lp));
    CHECK(std::abs(lp - prev) < 2.0);
    prev = lp;
  }
  std::vector<double> g(2);
  m->grad(std::vector<double>{40, -40}, g);
  CHECK(std::isfinite(g[0]));
}

TEST_CASE("spec validation") {
  auto s = default_mog_spec();
  s.weights = {0.5, 0.5, 0.5, 0.5};
  CHECK_THROWS_AS(make_model(s), ConfigError);
  s = default_mog_spec();
  s.variances[0] = 0;
  CHECK_THROWS_AS(make_model(s), ConfigError);
  auto r = rosenbrock_spec();
  r.dim = 3;
  CHECK_THROWS_AS(make_model(r), ConfigError);
  auto b = blr_spec(toy_design(), 0.0);
  CHECK_THROWS_AS(make_model(b), ConfigError);
  CHECK(parse_model_kind("mog") == ModelKind::mog);
  CHECK_THROWS_AS(parse_model_kind("banana"), ConfigError);
}

TEST_CASE("design matrix parsing") {
  SUBCASE("two rows") {
    const auto d = parse_design_matrix("1,0\n-1,1\n", false);
    CHECK(d.rows == 2);
    CHECK(d.cols == 1);
    CHECK(d.x == std::vector<double>{1, -1});
    CHECK(d.y == std::vector<double>{0, 1});
    const auto s = parse_design_matrix("1,0\n\xE2\x88\x92" "1,1\n", true);
    CHECK(s.x == std::vector<double>{1, -1});  // population sd of {1, -1} is 1
  }
  SUBCASE("header row is skipped") {
    const auto d = parse_design_matrix("a,b,label\n1,2,1\n3,4,0\n", false);
    CHECK(d.rows == 2);
    CHECK(d.cols == 2);
  }
  SUBCASE("errors name the line") {
    try {
      parse_design_matrix("1,2,0\n3,1\n", false);
      FAIL("ragged row accepted");
    } catch (const ParseError& e) {
      CHECK(e.line() == 2);
    }
    try {
      parse_design_matrix("1,2,0\n3,x,1\n", false);
      FAIL("non-numeric accepted");
    } catch (const ParseError& e) {
      CHECK(e.line() == 2);
    }
    try {
      parse_design_matrix("1,2,0\n3,4,2\n", false);
      FAIL("bad label accepted");
    } catch (const ParseError& e) {
      CHECK(e.line() == 2);
    }
  }
  SUBCASE("file round trip") {
    const auto syn = synthetic_logistic(50, 3, 9);
    const auto path = (std::filesystem::temp_directory_path() / "deermc_design.csv").string();
    write_design_matrix(syn.data, path);
    const auto back = load_design_matrix(path, false);
    CHECK(back.x == syn.data.x);
    CHECK(back.y == syn.data.y);
    std::filesystem::remove(path);
    CHECK_THROWS_AS(load_design_matrix(path, false), ConfigError);
  }
}

TEST_CASE("synthetic logistic data: MAP agrees in sign with the generating coefficients") {
  const auto syn = synthetic_logistic();
  CHECK(syn.data.rows == 1000);
  CHECK(syn.data.cols == 25);
  const auto m = make_model(blr_spec(syn.data, 1.0));
  std::vector<double> b(25, 0.0), g(25);
  for (int it = 0; it < 3000; ++it) {
    m->grad(b, g);
    for (int i = 0; i < 25; ++i) b[i] += 2e-3 * g[i];
  }
  int agree = 0;
  for (int i = 0; i < 25; ++i) agree += (b[i] > 0) == (syn.beta[i] > 0);
  CHECK(agree >= 23);  // 90% of 25
}

TEST_CASE("orthogonal basis") {
  SUBCASE("identity") {
    const auto b = orthogonal_basis({1, 0, 0, 0, 1, 0, 0, 0, 1}, 3);
    for (std::size_t i = 0; i < 3; ++i)
      for (std::size_t j = 0; j < 3; ++j) {
        double s = 0;
        for (std::size_t k = 0; k < 3; ++k) s += b(k, i) * b(k, j);
        CHECK(s == doctest::Approx(i == j ? 1.0 : 0.0));
      }
  }
  SUBCASE("2x2 closed form") {
    const auto b = orthogonal_basis({2, 1, 1, 2}, 2);
    CHECK(b.eigenvalues[0] == doctest::Approx(3));
    CHECK(b.eigenvalues[1] == doctest::Approx(1));
    CHECK(std::abs(b(0, 0)) == doctest::Approx(1 / std::sqrt(2.0)));
    CHECK(b(0, 0) * b(1, 0) > 0);
    CHECK(b(0, 1) * b(1, 1) < 0);
  }
  SUBCASE("random symmetric D=16 reconstructs") {
    std::mt19937_64 rng(3);
    std::normal_distribution<double> n;
    const std::size_t d = 16;
    std::vector<double> c(d * d);
    for (std::size_t i = 0; i < d; ++i)
      for (std::size_t j = 0; j <= i; ++j) c[i * d + j] = c[j * d + i] = n(rng);
    const auto b = orthogonal_basis(c, d);
    double worst = 0, ortho = 0;
    for (std::size_t i = 0; i < d; ++i)
      for (std::size_t j = 0; j < d; ++j) {
        double r = 0, o = 0;
        for (std::size_t k = 0; k < d; ++k) {
          r += b(i, k) * b.eigenvalues[k] * b(j, k);
          o += b(k, i) * b(k, j);
        }
        worst = std::max(worst, std::abs(r - c[i * d + j]));
        ortho = std::max(ortho, std::abs(o - (i == j ? 1.0 : 0.0)));
      }
    CHECK(worst < 1e-9);
    CHECK(ortho < 1e-10);
    for (std::size_t k = 1; k < d; ++k) CHECK(b.eigenvalues[k - 1] >= b.eigenvalues[k]);
  }
  SUBCASE("asymmetric input is rejected") {
    CHECK_THROWS_AS(orthogonal_basis({1, 2, 0, 1}, 2), StructuralError);
  }
}

TEST_CASE("transformed systems") {
  testsys::TanhRecursion sys(3, 200, 0.8);
  const std::vector<double> s0{0.2, -0.1, 0.4};
  const auto oracle = sequential_evaluate(sys, s0, 200);
  SUBCASE("identity basis leaves the system unchanged") {
    const auto ts = transform_system(sys, OrthogonalBasis::identity(3));
    CHECK(sequential_evaluate(*ts, s0, 200) == oracle);
  }
  SUBCASE("permutation relabels coordinates") {
    OrthogonalBasis p;
    p.dim = 3;
    p.q = {0, 1, 0, 0, 0, 1, 1, 0, 0};
    const auto ts = transform_system(sys, p);
    const auto z0 = ts->rotate(s0);
    const auto z = sequential_evaluate(*ts, z0, 200);
    for (std::size_t t = 0; t < 200; ++t) {
      CHECK(z(t, 0) == oracle(t, 2));
      CHECK(z(t, 1) == oracle(t, 0));
      CHECK(z(t, 2) == oracle(t, 1));
    }
  }
  SUBCASE("solve in rotated coordinates and map back") {
    const auto b = orthogonal_basis({2, 0.3, 0.1, 0.3, 1, 0.2, 0.1, 0.2, 0.7}, 3);
    const auto ts = transform_system(sys, b);
    DeerConfig cfg;
    cfg.mode = JacobianMode::dense;
    cfg.atol = 1e-12;
    cfg.rtol = 0;
    const auto z0 = ts->rotate(s0);
    const auto res = run_deer(*ts, z0, cfg, 200);
    CHECK(res.converged);
    const auto back = ts->unrotate(res.trace);
    double worst = 0;
    for (std::size_t i = 0; i < back.data().size(); ++i)
      worst = std::max(worst, std::abs(back.data()[i] - oracle.data()[i]));
    CHECK(worst < 1e-8);
    // jvp is Q^T J Q v
    const std::vector<double> z{0.1, 0.2, 0.3}, v{1, -1, 0.5};
    std::vector<double> jv(3);
    ts->jvp(5, z, v, jv);
    const auto f = fd::directional([&](std::span<const double> p, std::span<double> o) { ts->step(5, p, o); },
                                   z, v, 3);
    CHECK(fd::rel_error(jv, f) < 1e-6);
  }
  SUBCASE("dimension mismatch") {
    CHECK_THROWS_AS(transform_system(sys, OrthogonalBasis::identity(2)), StructuralError);
  }
}

TEST_CASE("exact samples match target moments") {
  const auto gauss = gaussian_spec_from_covariance({1.0, -1.0}, {1.0, 0.5, 0.5, 2.0});
  const auto s = exact_samples(gauss, 200000, 3);
  double m0 = 0, m1 = 0, c00 = 0, c01 = 0, c11 = 0;
  const double n = s.steps();
  for (std::size_t t = 0; t < s.steps(); ++t) {
    m0 += s(t, 0) / n;
    m1 += s(t, 1) / n;
  }
  for (std::size_t t = 0; t < s.steps(); ++t) {
    const double a = s(t, 0) - m0, b = s(t, 1) - m1;
    c00 += a * a / n;
    c01 += a * b / n;
    c11 += b * b / n;
  }
  CHECK(m0 == doctest::Approx(1.0).epsilon(0.01));
  CHECK(m1 == doctest::Approx(-1.0).epsilon(0.01));
  CHECK(c00 == doctest::Approx(1.0).epsilon(0.02));
  CHECK(c01 == doctest::Approx(0.5).epsilon(0.03));
  CHECK(c11 == doctest::Approx(2.0).epsilon(0.02));
  // rosenbrock: E[x2] = b (a^2 + var1)
  const auto r = exact_samples(rosenbrock_spec(), 200000, 4);
  double e2 = 0;
  for (std::size_t t = 0; t < r.steps(); ++t) e2 += r(t, 1) / r.steps();
  CHECK(e2 == doctest::Approx(1.0).epsilon(0.02));
  const auto mog = exact_samples(default_mog_spec(), 10, 1);
  CHECK(mog.steps() == 10);
  CHECK(exact_samples(default_mog_spec(), 10, 1) == mog);
  CHECK_THROWS_AS(exact_samples(blr_spec(synthetic_logistic(20, 2, 1).data), 5, 1), ConfigError);
}
