#pragma once

#include <cstdint>
#include <span>

#include "deermc/core/noise.hpp"
#include "deermc/core/target_model.hpp"
#include "deermc/core/transition_system.hpp"

namespace deermc {

struct MalaKernel {
  TargetModelPtr model;
  double eps = 0.1;

  void validate() const;
};

/// "xi": D standard normals, "u": one uniform per step.
NoiseLayout mala_noise_layout(std::size_t dim);

struct GateOutcome {
  bool accepted = false;
  /// g~ = log alpha - log u; accepted iff g~ > 0.
  double gate_logit = 0.0;
  /// log-density difference including the proposal correction.
  double log_ratio = 0.0;
};

/// Exact MALA update x -> g x~ + (1 - g) x with the hard gate g.
GateOutcome mala_step(const MalaKernel& kernel, std::span<const double> x,
                      std::span<const double> xi, double u, std::span<double> out);

/// mala_step plus J v for each row-major tangent, J being the Jacobian of the
/// straight-through relaxation (hard gate forward, sigma'(g~) in the derivative).
GateOutcome mala_jvp(const MalaKernel& kernel, std::span<const double> x,
                     std::span<const double> xi, double u, std::span<const double> tangents,
                     std::span<double> out, std::span<double> jv);

class MalaSystem final : public TransitionSystem {
 public:
  MalaSystem(MalaKernel kernel, std::uint64_t seed, std::size_t steps);

  std::size_t dim() const noexcept override { return dim_; }
  std::size_t steps() const noexcept override { return noise_.steps(); }
  void step(std::size_t t, std::span<const double> prev, std::span<double> out) const override;
  void step_jvp(std::size_t t, std::span<const double> prev, std::span<double> out,
                std::span<const double> tangents, std::span<double> jv) const override;
  std::optional<bool> accepted(std::size_t t, std::span<const double> prev) const override;

  const MalaKernel& kernel() const noexcept { return kernel_; }
  const NoiseTable& noise() const noexcept { return noise_; }
  /// Copies slot draws for step t.
  void draws(std::size_t t, std::span<double> xi, double& u) const;

 private:
  MalaKernel kernel_;
  std::size_t dim_;
  NoiseTable noise_;
  std::size_t xi_slot_, u_slot_;
};

}  // namespace deermc
