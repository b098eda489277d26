#pragma once

#include <cstddef>
#include <memory>
#include <span>

namespace deermc {

/// Log-density with analytic gradient and Hessian-vector product.
/// Implementations are immutable and safe to call concurrently.
class TargetModel {
 public:
  virtual ~TargetModel() = default;

  virtual std::size_t dim() const noexcept = 0;
  virtual double logp(std::span<const double> x) const = 0;
  virtual void grad(std::span<const double> x, std::span<double> out) const = 0;
  /// out = (Hessian of log p at x) * v
  virtual void hvp(std::span<const double> x, std::span<const double> v,
                   std::span<double> out) const = 0;

  /// log p(x) with its gradient written to `out`; override when the two share work.
  virtual double logp_grad(std::span<const double> x, std::span<double> out) const {
    grad(x, out);
    return logp(x);
  }

  /// log p(x), its gradient, and H(x) v for each of the tangents.size() / dim()
  /// row-major tangents. Must give the same log p and gradient bits as logp_grad.
  virtual double logp_grad_hvp(std::span<const double> x, std::span<double> grad_out,
                               std::span<const double> tangents, std::span<double> hv) const {
    const std::size_t d = dim();
    for (std::size_t k = 0; k < tangents.size() / d; ++k)
      hvp(x, tangents.subspan(k * d, d), hv.subspan(k * d, d));
    return logp_grad(x, grad_out);
  }
};

using TargetModelPtr = std::shared_ptr<const TargetModel>;

}  // namespace deermc
