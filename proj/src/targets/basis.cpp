#include "deermc/targets/basis.hpp"

#include <Eigen/Eigenvalues>
#include <cmath>
#include <numeric>

#include "deermc/core/errors.hpp"

namespace deermc {

OrthogonalBasis OrthogonalBasis::identity(std::size_t dim) {
  OrthogonalBasis b;
  b.dim = dim;
  b.q.assign(dim * dim, 0.0);
  b.eigenvalues.assign(dim, 1.0);
  for (std::size_t i = 0; i < dim; ++i) b.q[i * dim + i] = 1.0;
  return b;
}

void OrthogonalBasis::to_original(std::span<const double> z, std::span<double> s) const {
  for (std::size_t i = 0; i < dim; ++i) {
    double acc = 0;
    for (std::size_t j = 0; j < dim; ++j) acc += q[i * dim + j] * z[j];
    s[i] = acc;
  }
}

void OrthogonalBasis::to_rotated(std::span<const double> s, std::span<double> z) const {
  for (std::size_t j = 0; j < dim; ++j) z[j] = 0;
  for (std::size_t i = 0; i < dim; ++i)
    for (std::size_t j = 0; j < dim; ++j) z[j] += q[i * dim + j] * s[i];
}

OrthogonalBasis orthogonal_basis(const std::vector<double>& c, std::size_t dim) {
  if (c.size() != dim * dim) throw StructuralError("orthogonal_basis: matrix is not D x D");
  Eigen::MatrixXd m(dim, dim);
  for (std::size_t i = 0; i < dim; ++i)
    for (std::size_t j = 0; j < dim; ++j) {
      if (std::abs(c[i * dim + j] - c[j * dim + i]) > 1e-10)
        throw StructuralError("orthogonal_basis: matrix is not symmetric");
      m(i, j) = c[i * dim + j];
    }
  const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(m);
  if (solver.info() != Eigen::Success) throw ContractError("eigendecomposition failed");
  std::vector<std::size_t> order(dim);
  std::iota(order.begin(), order.end(), 0);
  std::ranges::sort(order, [&](std::size_t a, std::size_t b) {
    return solver.eigenvalues()(a) > solver.eigenvalues()(b);
  });
  OrthogonalBasis out;
  out.dim = dim;
  out.q.resize(dim * dim);
  for (std::size_t k = 0; k < dim; ++k) {
    out.eigenvalues.push_back(solver.eigenvalues()(order[k]));
    for (std::size_t i = 0; i < dim; ++i) out.q[i * dim + k] = solver.eigenvectors()(i, order[k]);
  }
  return out;
}

std::vector<double> feature_covariance(const std::vector<double>& x, std::size_t rows,
                                       std::size_t cols) {
  std::vector<double> mean(cols, 0.0), cov(cols * cols, 0.0);
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < cols; ++j) mean[j] += x[i * cols + j] / rows;
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t a = 0; a < cols; ++a)
      for (std::size_t b = 0; b <= a; ++b)
        cov[a * cols + b] += (x[i * cols + a] - mean[a]) * (x[i * cols + b] - mean[b]);
  for (std::size_t a = 0; a < cols; ++a)
    for (std::size_t b = 0; b <= a; ++b) {
      cov[a * cols + b] /= static_cast<double>(rows > 1 ? rows - 1 : 1);
      cov[b * cols + a] = cov[a * cols + b];
    }
  return cov;
}

TransformedSystem::TransformedSystem(const TransitionSystem& inner, OrthogonalBasis basis)
    : inner_(inner), basis_(std::move(basis)) {
  if (basis_.dim != inner.dim())
    throw StructuralError("transform_system: basis dimension " + std::to_string(basis_.dim) +
                          " != system dimension " + std::to_string(inner.dim()));
}

void TransformedSystem::step(std::size_t t, std::span<const double> prev,
                             std::span<double> out) const {
  const std::size_t d = dim();
  std::vector<double> s(d), f(d);
  basis_.to_original(prev, s);
  inner_.step(t, s, f);
  basis_.to_rotated(f, out);
}

void TransformedSystem::step_jvp(std::size_t t, std::span<const double> prev,
                                 std::span<double> out, std::span<const double> tangents,
                                 std::span<double> jv) const {
  const std::size_t d = dim();
  const std::size_t k = tangents.size() / d;
  std::vector<double> s(d), f(d), tv(k * d), jtv(k * d);
  basis_.to_original(prev, s);
  for (std::size_t i = 0; i < k; ++i)
    basis_.to_original(tangents.subspan(i * d, d), {tv.data() + i * d, d});
  inner_.step_jvp(t, s, f, tv, jtv);
  basis_.to_rotated(f, out);
  for (std::size_t i = 0; i < k; ++i)
    basis_.to_rotated({jtv.data() + i * d, d}, jv.subspan(i * d, d));
}

std::optional<bool> TransformedSystem::accepted(std::size_t t, std::span<const double> prev) const {
  std::vector<double> s(dim());
  basis_.to_original(prev, s);
  return inner_.accepted(t, s);
}

std::vector<double> TransformedSystem::rotate(std::span<const double> s) const {
  std::vector<double> z(dim());
  basis_.to_rotated(s, z);
  return z;
}

StateSequence TransformedSystem::unrotate(const StateSequence& z) const {
  StateSequence s(z.steps(), z.dim());
  for (std::size_t t = 0; t < z.steps(); ++t) basis_.to_original(z.row(t), s.row(t));
  return s;
}

std::unique_ptr<TransformedSystem> transform_system(const TransitionSystem& system,
                                                    OrthogonalBasis basis) {
  return std::make_unique<TransformedSystem>(system, std::move(basis));
}

}  // namespace deermc
