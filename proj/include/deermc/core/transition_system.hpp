#pragma once

#include <atomic>
#include <cstddef>
#include <optional>
#include <span>
#include <string_view>

#include "deermc/core/state_sequence.hpp"

namespace deermc {

enum class JacobianMode { dense, diag_stochastic, block2x2_stochastic };

std::string_view to_string(JacobianMode mode) noexcept;
JacobianMode parse_jacobian_mode(std::string_view text);

/// A sequence of maps s_{t+1} = f_t(s_t), t = 0..steps()-1, each a deterministic
/// function of the previous state once the input noise is fixed.
///
/// All member functions are const and must be safe to call concurrently.
class TransitionSystem {
 public:
  virtual ~TransitionSystem() = default;

  virtual std::size_t dim() const noexcept = 0;
  virtual std::size_t steps() const noexcept = 0;

  /// Exact forward map f_t(prev).
  virtual void step(std::size_t t, std::span<const double> prev, std::span<double> out) const = 0;

  /// Writes f_t(prev) to `out` and J_t * v for each of the k = tangents.size() / dim()
  /// row-major tangents into the matching rows of `jv`. J_t is the Jacobian of the
  /// differentiable relaxation of f_t.
  virtual void step_jvp(std::size_t t, std::span<const double> prev, std::span<double> out,
                        std::span<const double> tangents, std::span<double> jv) const = 0;

  /// Single Jacobian-vector product (forward value discarded).
  void jvp(std::size_t t, std::span<const double> prev, std::span<const double> v,
           std::span<double> out) const;

  /// Row-major D x D Jacobian; the default takes one tangent per basis column.
  virtual void step_dense_jacobian(std::size_t t, std::span<const double> prev,
                                   std::span<double> out, std::span<double> jac) const;

  virtual bool supports_block_jacobian() const noexcept { return false; }

  /// For systems whose state is [x, v] with dim() = 2n: writes f_t(prev) and a block
  /// estimate (a, b, c, d; n entries each, concatenated) built from `probes`, which
  /// holds n_probes Rademacher vectors of length n.
  virtual void step_block_jacobian(std::size_t t, std::span<const double> prev,
                                   std::span<double> out, std::span<const double> probes,
                                   std::span<double> abcd) const;

  /// Hard accept decision of a Metropolis-type kernel at step t, if the kernel has one.
  virtual std::optional<bool> accepted(std::size_t t, std::span<const double> prev) const;
};

/// Ground-truth sequential evaluation s_{t+1} = f_t(s_t) for t < steps.
/// Throws DivergedError at the first non-finite state.
StateSequence sequential_evaluate(const TransitionSystem& system, std::span<const double> s0,
                                  std::size_t steps);

/// Decorator counting forward evaluations and tangent products.
class CountingSystem final : public TransitionSystem {
 public:
  explicit CountingSystem(const TransitionSystem& inner) : inner_(inner) {}

  std::size_t dim() const noexcept override { return inner_.dim(); }
  std::size_t steps() const noexcept override { return inner_.steps(); }
  void step(std::size_t t, std::span<const double> prev, std::span<double> out) const override;
  void step_jvp(std::size_t t, std::span<const double> prev, std::span<double> out,
                std::span<const double> tangents, std::span<double> jv) const override;
  void step_dense_jacobian(std::size_t t, std::span<const double> prev, std::span<double> out,
                           std::span<double> jac) const override;
  bool supports_block_jacobian() const noexcept override {
    return inner_.supports_block_jacobian();
  }
  void step_block_jacobian(std::size_t t, std::span<const double> prev, std::span<double> out,
                           std::span<const double> probes, std::span<double> abcd) const override;
  std::optional<bool> accepted(std::size_t t, std::span<const double> prev) const override {
    return inner_.accepted(t, prev);
  }

  /// Forward passes (each step/step_* call is one).
  std::size_t forward_calls() const noexcept { return forward_.load(); }
  /// Jacobian-vector products (one per tangent).
  std::size_t jvp_calls() const noexcept { return jvps_.load(); }
  /// Hessian-vector probes spent on block estimates.
  std::size_t block_probes() const noexcept { return probes_.load(); }
  void reset() noexcept;

 private:
  const TransitionSystem& inner_;
  mutable std::atomic<std::size_t> forward_{0};
  mutable std::atomic<std::size_t> jvps_{0};
  mutable std::atomic<std::size_t> probes_{0};
};

}  // namespace deermc
