#pragma once

#include <cstddef>
#include <memory>
#include <vector>

#include "deermc/core/transition_system.hpp"

namespace deermc {

/// Orthogonal D x D matrix Q (row-major) whose columns are eigenvectors of a
/// symmetric matrix, ordered by descending eigenvalue.
struct OrthogonalBasis {
  std::size_t dim = 0;
  std::vector<double> q;
  std::vector<double> eigenvalues;

  static OrthogonalBasis identity(std::size_t dim);
  double operator()(std::size_t i, std::size_t j) const { return q[i * dim + j]; }
  void to_original(std::span<const double> z, std::span<double> s) const;  // s = Q z
  void to_rotated(std::span<const double> s, std::span<double> z) const;   // z = Q^T s
};

/// Throws StructuralError when `c` is not symmetric within 1e-10.
OrthogonalBasis orthogonal_basis(const std::vector<double>& c, std::size_t dim);

/// Covariance of the feature columns of a row-major rows x cols matrix.
std::vector<double> feature_covariance(const std::vector<double>& x, std::size_t rows,
                                       std::size_t cols);

/// f_hat_t(z) = Q^T f_t(Q z).
class TransformedSystem final : public TransitionSystem {
 public:
  TransformedSystem(const TransitionSystem& inner, OrthogonalBasis basis);

  std::size_t dim() const noexcept override { return inner_.dim(); }
  std::size_t steps() const noexcept override { return inner_.steps(); }
  void step(std::size_t t, std::span<const double> prev, std::span<double> out) const override;
  void step_jvp(std::size_t t, std::span<const double> prev, std::span<double> out,
                std::span<const double> tangents, std::span<double> jv) const override;
  std::optional<bool> accepted(std::size_t t, std::span<const double> prev) const override;

  const OrthogonalBasis& basis() const noexcept { return basis_; }

  std::vector<double> rotate(std::span<const double> s) const;
  StateSequence unrotate(const StateSequence& z) const;

 private:
  const TransitionSystem& inner_;
  OrthogonalBasis basis_;
};

std::unique_ptr<TransformedSystem> transform_system(const TransitionSystem& system,
                                                    OrthogonalBasis basis);

}  // namespace deermc
