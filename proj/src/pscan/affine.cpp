#include "deermc/pscan/affine.hpp"

#include <algorithm>
#include <string>

#include "deermc/core/errors.hpp"
#include "deermc/core/worker_pool.hpp"

namespace deermc {

namespace {

std::size_t stride_for(AffineKind kind, std::size_t dim) {
  switch (kind) {
    case AffineKind::dense:
      return dim * dim;
    case AffineKind::diag:
      return dim;
    case AffineKind::block2x2:
      return 2 * dim;  // four vectors of length dim / 2
  }
  return 0;
}

// out = J x + u; out must not alias x.
void apply_flat(AffineKind kind, std::size_t dim, const double* jac, const double* u,
                const double* x, double* out) noexcept {
  switch (kind) {
    case AffineKind::dense:
      for (std::size_t i = 0; i < dim; ++i) {
        const double* row = jac + i * dim;
        double acc = u[i];
        for (std::size_t j = 0; j < dim; ++j) acc += row[j] * x[j];
        out[i] = acc;
      }
      return;
    case AffineKind::diag:
      for (std::size_t i = 0; i < dim; ++i) out[i] = jac[i] * x[i] + u[i];
      return;
    case AffineKind::block2x2: {
      const std::size_t n = dim / 2;
      const double *a = jac, *b = jac + n, *c = jac + 2 * n, *d = jac + 3 * n;
      for (std::size_t i = 0; i < n; ++i) {
        const double xi = x[i], vi = x[n + i];
        out[i] = a[i] * xi + b[i] * vi + u[i];
        out[n + i] = c[i] * xi + d[i] * vi + u[n + i];
      }
      return;
    }
  }
}

// (Jo, uo) = (J2, u2) o (J1, u1). Outputs must not alias inputs.
void compose_flat(AffineKind kind, std::size_t dim, const double* j2, const double* u2,
                  const double* j1, const double* u1, double* jo, double* uo) noexcept {
  apply_flat(kind, dim, j2, u2, u1, uo);
  switch (kind) {
    case AffineKind::dense:
      for (std::size_t i = 0; i < dim; ++i) {
        double* orow = jo + i * dim;
        std::fill(orow, orow + dim, 0.0);
        for (std::size_t k = 0; k < dim; ++k) {
          const double s = j2[i * dim + k];
          const double* r1 = j1 + k * dim;
          for (std::size_t j = 0; j < dim; ++j) orow[j] += s * r1[j];
        }
      }
      return;
    case AffineKind::diag:
      for (std::size_t i = 0; i < dim; ++i) jo[i] = j2[i] * j1[i];
      return;
    case AffineKind::block2x2: {
      const std::size_t n = dim / 2;
      const double *a = j2, *b = j2 + n, *c = j2 + 2 * n, *d = j2 + 3 * n;
      const double *e = j1, *f = j1 + n, *g = j1 + 2 * n, *h = j1 + 3 * n;
      double *oa = jo, *ob = jo + n, *oc = jo + 2 * n, *od = jo + 3 * n;
      for (std::size_t i = 0; i < n; ++i) {
        oa[i] = a[i] * e[i] + b[i] * g[i];
        ob[i] = a[i] * f[i] + b[i] * h[i];
        oc[i] = c[i] * e[i] + d[i] * g[i];
        od[i] = c[i] * f[i] + d[i] * h[i];
      }
      return;
    }
  }
}

struct FlatView {
  AffineKind kind;
  std::size_t dim;
  std::vector<double> jac;
  std::vector<double> shift;
};

FlatView flatten(const AffineElement& e) {
  FlatView v{kind_of(e), state_dim(e), {}, {}};
  std::visit(
      [&](const auto& x) {
        using T = std::decay_t<decltype(x)>;
        if constexpr (std::is_same_v<T, Block2x2Affine>) {
          v.jac.reserve(4 * x.a.size());
          for (const auto* part : {&x.a, &x.b, &x.c, &x.d})
            v.jac.insert(v.jac.end(), part->begin(), part->end());
        } else {
          v.jac = x.jac;
        }
        v.shift = x.shift;
      },
      e);
  return v;
}

AffineElement unflatten(AffineKind kind, std::size_t dim, std::span<const double> jac,
                        std::span<const double> shift) {
  std::vector<double> u(shift.begin(), shift.end());
  switch (kind) {
    case AffineKind::dense:
      return DenseAffine{dim, std::vector<double>(jac.begin(), jac.end()), std::move(u)};
    case AffineKind::diag:
      return DiagAffine{std::vector<double>(jac.begin(), jac.end()), std::move(u)};
    case AffineKind::block2x2: {
      const std::size_t n = dim / 2;
      auto part = [&](std::size_t k) {
        return std::vector<double>(jac.begin() + k * n, jac.begin() + (k + 1) * n);
      };
      return Block2x2Affine{part(0), part(1), part(2), part(3), std::move(u)};
    }
  }
  return DiagAffine{};
}

void validate(const AffineElement& e) {
  std::visit(
      [](const auto& x) {
        using T = std::decay_t<decltype(x)>;
        if constexpr (std::is_same_v<T, DenseAffine>) {
          if (x.jac.size() != x.dim * x.dim || x.shift.size() != x.dim)
            throw StructuralError("dense affine element has inconsistent sizes");
        } else if constexpr (std::is_same_v<T, DiagAffine>) {
          if (x.jac.size() != x.shift.size())
            throw StructuralError("diagonal affine element has inconsistent sizes");
        } else {
          const std::size_t n = x.a.size();
          if (x.b.size() != n || x.c.size() != n || x.d.size() != n || x.shift.size() != 2 * n)
            throw StructuralError("block affine element has inconsistent sizes");
        }
      },
      e);
}

}  // namespace

AffineKind kind_of(const AffineElement& e) noexcept {
  return static_cast<AffineKind>(e.index());
}

std::size_t state_dim(const AffineElement& e) noexcept {
  return std::visit([](const auto& x) { return x.shift.size(); }, e);
}

AffineElement identity_element(AffineKind kind, std::size_t dim) {
  if (kind == AffineKind::block2x2 && dim % 2 != 0)
    throw StructuralError("block 2x2 elements need an even state dimension");
  std::vector<double> zero(dim, 0.0);
  switch (kind) {
    case AffineKind::dense: {
      std::vector<double> eye(dim * dim, 0.0);
      for (std::size_t i = 0; i < dim; ++i) eye[i * dim + i] = 1.0;
      return DenseAffine{dim, std::move(eye), std::move(zero)};
    }
    case AffineKind::diag:
      return DiagAffine{std::vector<double>(dim, 1.0), std::move(zero)};
    case AffineKind::block2x2: {
      const std::size_t n = dim / 2;
      return Block2x2Affine{std::vector<double>(n, 1.0), std::vector<double>(n, 0.0),
                            std::vector<double>(n, 0.0), std::vector<double>(n, 1.0),
                            std::move(zero)};
    }
  }
  return DiagAffine{};
}

AffineElement compose(const AffineElement& later, const AffineElement& earlier) {
  validate(later);
  validate(earlier);
  if (later.index() != earlier.index())
    throw StructuralError("cannot compose affine elements of different variants");
  if (state_dim(later) != state_dim(earlier))
    throw StructuralError("cannot compose affine elements of different dimensions");
  const FlatView l = flatten(later), e = flatten(earlier);
  std::vector<double> jac(l.jac.size()), shift(l.dim);
  compose_flat(l.kind, l.dim, l.jac.data(), l.shift.data(), e.jac.data(), e.shift.data(),
               jac.data(), shift.data());
  return unflatten(l.kind, l.dim, jac, shift);
}

std::vector<double> apply(const AffineElement& e, std::span<const double> x) {
  validate(e);
  const FlatView v = flatten(e);
  if (x.size() != v.dim) throw StructuralError("affine apply: dimension mismatch");
  std::vector<double> out(v.dim);
  apply_flat(v.kind, v.dim, v.jac.data(), v.shift.data(), x.data(), out.data());
  return out;
}

std::vector<double> dense_matrix(const AffineElement& e) {
  validate(e);
  const FlatView v = flatten(e);
  const std::size_t n = v.dim;
  std::vector<double> m(n * n, 0.0);
  switch (v.kind) {
    case AffineKind::dense:
      m = v.jac;
      break;
    case AffineKind::diag:
      for (std::size_t i = 0; i < n; ++i) m[i * n + i] = v.jac[i];
      break;
    case AffineKind::block2x2: {
      const std::size_t h = n / 2;
      for (std::size_t i = 0; i < h; ++i) {
        m[i * n + i] = v.jac[i];
        m[i * n + h + i] = v.jac[h + i];
        m[(h + i) * n + i] = v.jac[2 * h + i];
        m[(h + i) * n + h + i] = v.jac[3 * h + i];
      }
      break;
    }
  }
  return m;
}

AffineSequence::AffineSequence(AffineKind kind, std::size_t steps, std::size_t state_dim)
    : kind_(kind), steps_(steps), dim_(state_dim), stride_(stride_for(kind, state_dim)) {
  if (state_dim == 0) throw StructuralError("affine sequence needs D >= 1");
  if (kind == AffineKind::block2x2 && state_dim % 2 != 0)
    throw StructuralError("block 2x2 elements need an even state dimension");
  jac_.resize(steps * stride_);
  shift_.resize(steps * dim_);
}

void AffineSequence::resize(std::size_t steps) {
  steps_ = steps;
  jac_.resize(steps * stride_);
  shift_.resize(steps * dim_);
}

void AffineSequence::drop_front(std::size_t count) {
  count = std::min(count, steps_);
  std::copy(jac_.begin() + count * stride_, jac_.end(), jac_.begin());
  std::copy(shift_.begin() + count * dim_, shift_.end(), shift_.begin());
  resize(steps_ - count);
}

AffineElement AffineSequence::element(std::size_t t) const {
  return unflatten(kind_, dim_, jac(t), shift(t));
}

void AffineSequence::set(std::size_t t, const AffineElement& e) {
  validate(e);
  if (kind_of(e) != kind_ || deermc::state_dim(e) != dim_)
    throw StructuralError("affine element does not match the sequence variant or dimension");
  const FlatView v = flatten(e);
  std::ranges::copy(v.jac, jac(t).begin());
  std::ranges::copy(v.shift, shift(t).begin());
}

void sequential_affine_solve(const AffineSequence& elements, std::span<const double> s0,
                             std::span<double> out) {
  const std::size_t dim = elements.state_dim();
  if (s0.size() != dim) throw StructuralError("affine solve: initial state dimension mismatch");
  if (out.size() != elements.steps() * dim)
    throw StructuralError("affine solve: output buffer has the wrong size");
  const double* prev = s0.data();
  for (std::size_t t = 0; t < elements.steps(); ++t) {
    double* cur = out.data() + t * dim;
    apply_flat(elements.kind(), dim, elements.jac(t).data(), elements.shift(t).data(), prev, cur);
    prev = cur;
  }
}

StateSequence sequential_affine_solve(const AffineSequence& elements,
                                      std::span<const double> s0) {
  StateSequence out(elements.steps(), elements.state_dim());
  sequential_affine_solve(elements, s0, out.data());
  return out;
}

void parallel_affine_solve(const AffineSequence& elements, std::span<const double> s0,
                           std::span<double> out, const ScanOptions& options, ScanStats* stats) {
  const std::size_t dim = elements.state_dim();
  const std::size_t steps = elements.steps();
  if (s0.size() != dim) throw StructuralError("affine solve: initial state dimension mismatch");
  if (out.size() != steps * dim)
    throw StructuralError("affine solve: output buffer has the wrong size");
  WorkerPool& pool = options.pool ? *options.pool : default_pool();
  const std::size_t workers = pool.size();

  std::size_t chunk = options.chunk;
  if (chunk == 0) chunk = std::max<std::size_t>(steps / (8 * workers), 256);
  chunk = std::max<std::size_t>(chunk, 1);
  const std::size_t chunks = (steps + chunk - 1) / chunk;
  if (stats) *stats = {chunks, chunk, 0};

  if (chunks <= 1 || (workers == 1 && !options.force_blocked && options.chunk == 0)) {
    sequential_affine_solve(elements, s0, out);
    if (stats) *stats = {1, steps, 0};
    return;
  }

  const AffineKind kind = elements.kind();
  const std::size_t stride = elements.jac_stride();
  std::vector<double> sum_jac(chunks * stride), sum_shift(chunks * dim);
  if (stats) stats->scratch_bytes = (sum_jac.size() + sum_shift.size() + dim) * sizeof(double);

  // Pass 1: reduce each chunk to one element.
  pool.run_tasks(chunks, [&](std::size_t c) {
    const std::size_t begin = c * chunk, end = std::min(steps, begin + chunk);
    double* acc_j = sum_jac.data() + c * stride;
    double* acc_u = sum_shift.data() + c * dim;
    std::ranges::copy(elements.jac(begin), acc_j);
    std::ranges::copy(elements.shift(begin), acc_u);
    std::vector<double> tmp_j(stride), tmp_u(dim);
    for (std::size_t t = begin + 1; t < end; ++t) {
      compose_flat(kind, dim, elements.jac(t).data(), elements.shift(t).data(), acc_j, acc_u,
                   tmp_j.data(), tmp_u.data());
      std::ranges::copy(tmp_j, acc_j);
      std::ranges::copy(tmp_u, acc_u);
    }
  });

  // Pass 2: chunk boundary states, serial over chunks.
  std::vector<double> boundary(chunks * dim);
  std::ranges::copy(s0, boundary.begin());
  for (std::size_t c = 0; c + 1 < chunks; ++c)
    apply_flat(kind, dim, sum_jac.data() + c * stride, sum_shift.data() + c * dim,
               boundary.data() + c * dim, boundary.data() + (c + 1) * dim);

  // Pass 3: replay each chunk from its boundary state.
  pool.run_tasks(chunks, [&](std::size_t c) {
    const std::size_t begin = c * chunk, end = std::min(steps, begin + chunk);
    const double* prev = boundary.data() + c * dim;
    for (std::size_t t = begin; t < end; ++t) {
      double* cur = out.data() + t * dim;
      apply_flat(kind, dim, elements.jac(t).data(), elements.shift(t).data(), prev, cur);
      prev = cur;
    }
  });
}

StateSequence parallel_affine_solve(const AffineSequence& elements, std::span<const double> s0,
                                    const ScanOptions& options, ScanStats* stats) {
  StateSequence out(elements.steps(), elements.state_dim());
  parallel_affine_solve(elements, s0, out.data(), options, stats);
  return out;
}

}  // namespace deermc
