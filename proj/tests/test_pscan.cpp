#include <random>

#include "doctest.h"
#include "deermc/core/errors.hpp"
#include "deermc/core/worker_pool.hpp"
#include "deermc/pscan/affine.hpp"

using namespace deermc;

namespace {

AffineElement random_element(AffineKind kind, std::size_t dim, std::mt19937_64& rng,
                             double scale = 1.0) {
  std::uniform_real_distribution<double> u(-scale, scale);
  auto vec = [&](std::size_t n) {
    std::vector<double> v(n);
    for (auto& x : v) x = u(rng);
    return v;
  };
  switch (kind) {
    case AffineKind::dense:
      return DenseAffine{dim, vec(dim * dim), vec(dim)};
    case AffineKind::diag:
      return DiagAffine{vec(dim), vec(dim)};
    case AffineKind::block2x2:
      return Block2x2Affine{vec(dim / 2), vec(dim / 2), vec(dim / 2), vec(dim / 2), vec(dim)};
  }
  return {};
}

double max_diff(std::span<const double> a, std::span<const double> b) {
  REQUIRE(a.size() == b.size());
  double m = 0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

double element_diff(const AffineElement& a, const AffineElement& b) {
  const std::size_t d = state_dim(a);
  std::vector<double> zero(d, 0.0);
  return std::max(max_diff(dense_matrix(a), dense_matrix(b)), max_diff(deermc::apply(a, zero), deermc::apply(b, zero)));
}

AffineSequence random_sequence(AffineKind kind, std::size_t steps, std::size_t dim,
                               std::mt19937_64& rng, double scale) {
  AffineSequence seq(kind, steps, dim);
  for (std::size_t t = 0; t < steps; ++t) seq.set(t, random_element(kind, dim, rng, scale));
  return seq;
}

}  // namespace

TEST_CASE("identity element is a two-sided unit") {
  std::mt19937_64 rng(1);
  for (auto kind : {AffineKind::dense, AffineKind::diag, AffineKind::block2x2}) {
    const auto e = random_element(kind, 4, rng);
    const auto id = identity_element(kind, 4);
    CHECK(element_diff(compose(id, e), e) == 0.0);
    CHECK(element_diff(compose(e, id), e) == 0.0);
  }
}

TEST_CASE("dense compose example") {
  const AffineElement e2 = DenseAffine{2, {0, 1, 1, 0}, {1, 0}};
  const AffineElement e1 = DenseAffine{2, {2, 0, 0, 2}, {0, 1}};
  const auto c = std::get<DenseAffine>(compose(e2, e1));
  CHECK(c.jac == std::vector<double>{0, 2, 2, 0});
  CHECK(c.shift == std::vector<double>{2, 0});
}

TEST_CASE("block compose equals the dense product") {
  std::mt19937_64 rng(2);
  for (int rep = 0; rep < 50; ++rep) {
    const auto a = random_element(AffineKind::block2x2, 6, rng);
    const auto b = random_element(AffineKind::block2x2, 6, rng);
    const auto c = compose(a, b);
    const auto da = dense_matrix(a), db = dense_matrix(b);
    std::vector<double> prod(36, 0.0);
    for (int i = 0; i < 6; ++i)
      for (int k = 0; k < 6; ++k)
        for (int j = 0; j < 6; ++j) prod[i * 6 + j] += da[i * 6 + k] * db[k * 6 + j];
    CHECK(max_diff(dense_matrix(c), prod) < 1e-12);
    std::vector<double> x(6, 0.3);
    CHECK(max_diff(deermc::apply(c, x), deermc::apply(a, deermc::apply(b, x))) < 1e-12);
  }
}

TEST_CASE("compose rejects mismatches") {
  CHECK_THROWS_AS(compose(identity_element(AffineKind::diag, 2), identity_element(AffineKind::dense, 2)),
                  StructuralError);
  CHECK_THROWS_AS(compose(identity_element(AffineKind::diag, 2), identity_element(AffineKind::diag, 3)),
                  StructuralError);
}

TEST_CASE("associativity within 1e-12 for 1000 random triples per variant") {
  std::mt19937_64 rng(3);
  for (auto kind : {AffineKind::dense, AffineKind::diag, AffineKind::block2x2}) {
    double worst = 0;
    for (int rep = 0; rep < 1000; ++rep) {
      const auto a = random_element(kind, 4, rng), b = random_element(kind, 4, rng),
                 c = random_element(kind, 4, rng);
      worst = std::max(worst, element_diff(compose(c, compose(b, a)), compose(compose(c, b), a)));
    }
    CHECK(worst < 1e-12);
  }
}

TEST_CASE("diag scan example (3, 10, 41)") {
  AffineSequence seq(AffineKind::diag, 3, 1);
  const double j[] = {2, 3, 4};
  for (int t = 0; t < 3; ++t) seq.set(t, DiagAffine{{j[t]}, {1}});
  const std::vector<double> s0{1};
  for (bool blocked : {false, true}) {
    ScanOptions opts;
    opts.force_blocked = blocked;
    opts.chunk = 1;
    const auto out = parallel_affine_solve(seq, s0, opts);
    CHECK(out(0, 0) == 3);
    CHECK(out(1, 0) == 10);
    CHECK(out(2, 0) == 41);
  }
  const auto seqout = sequential_affine_solve(seq, s0);
  CHECK(seqout(2, 0) == 41);
}

TEST_CASE("identity scan keeps s0") {
  AffineSequence seq(AffineKind::block2x2, 1000, 4);
  for (std::size_t t = 0; t < 1000; ++t) seq.set(t, identity_element(AffineKind::block2x2, 4));
  const std::vector<double> s0{1, -2, 3, 0.5};
  ScanOptions opts;
  opts.force_blocked = true;
  opts.chunk = 37;
  const auto out = parallel_affine_solve(seq, s0, opts);
  for (std::size_t t = 0; t < 1000; ++t)
    for (std::size_t d = 0; d < 4; ++d) CHECK(out(t, d) == s0[d]);
}

TEST_CASE("parallel scan matches sequential for every variant and worker count") {
  std::mt19937_64 rng(4);
  for (auto kind : {AffineKind::dense, AffineKind::diag, AffineKind::block2x2}) {
    // scale keeps the spectral radius below one
    const double scale = kind == AffineKind::dense ? 0.45 : 0.9;
    const auto seq = random_sequence(kind, 1024, 4, rng, scale);
    const std::vector<double> s0{0.5, -1, 2, 1};
    const auto ref = sequential_affine_solve(seq, s0);
    for (std::size_t workers : {1u, 2u, 3u, 8u}) {
      WorkerPool pool(workers);
      for (std::size_t chunk : {0u, 1u, 7u, 256u, 5000u}) {
        ScanOptions opts{&pool, chunk, true};
        ScanStats stats;
        const auto out = parallel_affine_solve(seq, s0, opts, &stats);
        CHECK(max_diff(out.data(), ref.data()) < 1e-10);
        const auto again = parallel_affine_solve(seq, s0, opts);
        CHECK(again == out);
      }
    }
  }
}

TEST_CASE("block scan matches the dense-expanded loop") {
  std::mt19937_64 rng(5);
  const auto seq = random_sequence(AffineKind::block2x2, 64, 6, rng, 0.9);
  std::vector<double> s(6, 1.0);
  ScanOptions opts;
  opts.force_blocked = true;
  opts.chunk = 5;
  const auto out = parallel_affine_solve(seq, s, opts);
  for (std::size_t t = 0; t < 64; ++t) {
    s = deermc::apply(seq.element(t), s);
    for (std::size_t d = 0; d < 6; ++d) CHECK(out(t, d) == doctest::Approx(s[d]).epsilon(1e-12));
  }
}

TEST_CASE("scratch accounting scales as T*D, T*4n and T*D^2") {
  const std::size_t steps = 4096, dim = 6;
  AffineSequence diag(AffineKind::diag, steps, dim), block(AffineKind::block2x2, steps, dim),
      dense(AffineKind::dense, steps, dim);
  CHECK(diag.jacobian_bytes() == steps * dim * sizeof(double));
  CHECK(block.jacobian_bytes() == steps * 4 * (dim / 2) * sizeof(double));
  CHECK(dense.jacobian_bytes() == steps * dim * dim * sizeof(double));
  const std::vector<double> s0(dim, 0.0);
  ScanStats sd, sb, sx;
  ScanOptions opts;
  opts.force_blocked = true;
  parallel_affine_solve(diag, s0, opts, &sd);
  parallel_affine_solve(block, s0, opts, &sb);
  parallel_affine_solve(dense, s0, opts, &sx);
  CHECK(sd.scratch_bytes > 0);
  CHECK(sb.scratch_bytes >= sd.scratch_bytes);
  CHECK(sx.scratch_bytes >= sd.scratch_bytes * (dim / 2));
}

TEST_CASE("solve rejects a wrong initial state") {
  AffineSequence seq(AffineKind::diag, 3, 2);
  const std::vector<double> s0{1};
  CHECK_THROWS_AS(parallel_affine_solve(seq, s0), StructuralError);
}

TEST_CASE("drop_front shifts elements") {
  AffineSequence seq(AffineKind::diag, 3, 1);
  for (int t = 0; t < 3; ++t) seq.set(t, DiagAffine{{double(t)}, {double(10 + t)}});
  seq.drop_front(1);
  CHECK(seq.steps() == 2);
  CHECK(seq.jac(0)[0] == 1);
  CHECK(seq.shift(1)[0] == 12);
}
