#pragma once

#include <atomic>
#include <cstdint>
#include <span>
#include <vector>

#include "deermc/core/noise.hpp"
#include "deermc/core/target_model.hpp"
#include "deermc/core/transition_system.hpp"
#include "deermc/deer/deer.hpp"
#include "deermc/samplers/mala.hpp"

namespace deermc {

struct HmcKernel {
  TargetModelPtr model;
  double eps = 0.1;
  std::size_t leapfrog_steps = 8;
  /// Diagonal mass; empty means unit mass.
  std::vector<double> mass;

  void validate() const;
  double inv_mass(std::size_t i) const noexcept { return mass.empty() ? 1.0 : 1.0 / mass[i]; }
};

/// "momentum": D standard normals, "u": one uniform per step.
NoiseLayout hmc_noise_layout(std::size_t dim);

/// s = [x, v] -> [x + eps v / m, v + eps grad(x + eps v / m)].
void leapfrog_step(const HmcKernel& kernel, std::span<const double> s, std::span<double> out);

/// Block 2x2 estimate of the leapfrog Jacobian at s: a = 1, b = eps / m, c = eps d,
/// d = 1 + eps^2 d / m, with d the Hutchinson estimate of diag(H(x')) from the
/// n_probes Rademacher vectors in `probes` (n_probes x D). Writes f(s) to `out`.
void leapfrog_block_jacobian(const HmcKernel& kernel, std::span<const double> s,
                             std::span<const double> probes, std::span<double> out,
                             std::span<double> abcd);

/// L leapfrog steps as a transition system over [x, v] (dim 2D).
class LeapfrogSystem final : public TransitionSystem {
 public:
  explicit LeapfrogSystem(HmcKernel kernel);

  std::size_t dim() const noexcept override { return 2 * n_; }
  std::size_t steps() const noexcept override { return kernel_.leapfrog_steps; }
  void step(std::size_t t, std::span<const double> prev, std::span<double> out) const override;
  void step_jvp(std::size_t t, std::span<const double> prev, std::span<double> out,
                std::span<const double> tangents, std::span<double> jv) const override;
  bool supports_block_jacobian() const noexcept override { return true; }
  void step_block_jacobian(std::size_t t, std::span<const double> prev, std::span<double> out,
                           std::span<const double> probes, std::span<double> abcd) const override;

 private:
  HmcKernel kernel_;
  std::size_t n_;
};

enum class LeapfrogMode { sequential, parallel };

struct HmcStepOptions {
  LeapfrogMode mode = LeapfrogMode::sequential;
  /// Solver settings for parallel leapfrog (mode block2x2_stochastic by default).
  DeerConfig deer = [] {
    DeerConfig c;
    c.mode = JacobianMode::block2x2_stochastic;
    return c;
  }();
};

struct HmcOutcome {
  GateOutcome gate;
  /// Newton iterations spent on parallel leapfrog.
  std::size_t leapfrog_iterations = 0;
  /// Parallel leapfrog failed to converge and the proposal was integrated sequentially.
  bool fell_back = false;
};

/// One HMC transition with momentum p = sqrt(m) xi: half momentum step, L leapfrog
/// steps, reverse half step, Metropolis test log u < H0 - H_L.
HmcOutcome hmc_step(const HmcKernel& kernel, std::span<const double> x,
                    std::span<const double> xi, double u, std::span<double> out,
                    const HmcStepOptions& options = {});

/// hmc_step (sequential leapfrog) plus J v for each tangent through the relaxed gate.
HmcOutcome hmc_jvp(const HmcKernel& kernel, std::span<const double> x, std::span<const double> xi,
                   double u, std::span<const double> tangents, std::span<double> out,
                   std::span<double> jv);

/// HMC chain: f_t runs one full HMC transition.
class HmcSystem final : public TransitionSystem {
 public:
  HmcSystem(HmcKernel kernel, std::uint64_t seed, std::size_t steps, HmcStepOptions options = {});

  std::size_t dim() const noexcept override { return dim_; }
  std::size_t steps() const noexcept override { return noise_.steps(); }
  void step(std::size_t t, std::span<const double> prev, std::span<double> out) const override;
  void step_jvp(std::size_t t, std::span<const double> prev, std::span<double> out,
                std::span<const double> tangents, std::span<double> jv) const override;
  std::optional<bool> accepted(std::size_t t, std::span<const double> prev) const override;

  const HmcKernel& kernel() const noexcept { return kernel_; }
  void draws(std::size_t t, std::span<double> xi, double& u) const;

  std::size_t leapfrog_iterations() const noexcept { return lf_iterations_.load(); }
  std::size_t leapfrog_solves() const noexcept { return lf_solves_.load(); }
  std::size_t fallbacks() const noexcept { return fallbacks_.load(); }

 private:
  HmcKernel kernel_;
  std::size_t dim_;
  NoiseTable noise_;
  HmcStepOptions options_;
  std::size_t xi_slot_, u_slot_;
  mutable std::atomic<std::size_t> lf_iterations_{0}, lf_solves_{0}, fallbacks_{0};
};

}  // namespace deermc
