#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "deermc/core/noise.hpp"
#include "deermc/core/transition_system.hpp"

namespace deermc {

/// Per-school summaries: mean and sum of squares about the mean of N observations.
struct EightSchoolsData {
  std::size_t schools = 8;
  std::size_t per_school = 20;
  std::vector<double> mean;
  std::vector<double> sum_sq;

  /// Observations with school means (28, 8, -3, 7, -1, 1, 18, 12) and per-observation
  /// standard deviations se * sqrt(N), se = (15, 10, 16, 11, 9, 11, 10, 18).
  static EightSchoolsData synthetic(std::uint64_t seed = 8, std::size_t per_school = 20);
  static EightSchoolsData from_observations(const std::vector<std::vector<double>>& x);

  /// sum_n (x_{s,n} - theta)^2
  double residual_sq(std::size_t s, double theta) const noexcept;
};

struct GibbsHyper {
  double nu0 = 0.1;
  double tau0_sq = 100.0;
  double mu0 = 0.0;
  double kappa0 = 0.1;
  double alpha0 = 0.1;
  double sigma0_sq = 10.0;

  void validate() const;
};

/// Flat state layout: (tau^2, mu, theta_1..S, sigma^2_1..S).
struct GibbsIndex {
  std::size_t schools;
  std::size_t dim() const noexcept { return 2 * schools + 2; }
  static constexpr std::size_t tau_sq = 0;
  static constexpr std::size_t mu = 1;
  std::size_t theta(std::size_t s) const noexcept { return 2 + s; }
  std::size_t sigma_sq(std::size_t s) const noexcept { return 2 + schools + s; }
};

/// Fixed per-step input randomness of one sweep.
struct GibbsNoise {
  std::span<const double> xi;     // 1 + S normals: mu, then theta_s
  double chi_tau = 1.0;           // chi^2(nu0 + S + 1)
  std::span<const double> chi_sigma;  // S draws of chi^2(alpha0 + N)
};

/// Diagonal quasi-DEER scaling: 1 on mu and theta, ~0 on the variance coordinates.
std::vector<double> gibbs_default_preconditioner(std::size_t schools);

/// "xi": 1 + S normals, "chi_tau": chi^2(nu0 + S + 1), "chi_sigma": S draws of chi^2(alpha0 + N).
NoiseLayout gibbs_noise_layout(const EightSchoolsData& data, const GibbsHyper& hyper);

/// tau^2 -> mu -> theta_s -> sigma^2_s, each drawn from its conditional given the
/// latest values, with scaled-inverse-chi^2 draws written as (df * scale) / g.
void gibbs_sweep(const EightSchoolsData& data, const GibbsHyper& hyper,
                 std::span<const double> state, const GibbsNoise& noise, std::span<double> out);

/// gibbs_sweep plus the directional derivative for each row-major tangent.
void gibbs_jvp(const EightSchoolsData& data, const GibbsHyper& hyper, std::span<const double> state,
               const GibbsNoise& noise, std::span<const double> tangents, std::span<double> out,
               std::span<double> jv);

/// Unnormalized log joint density of (state, data).
double gibbs_joint_logp(const EightSchoolsData& data, const GibbsHyper& hyper,
                        std::span<const double> state);

/// Log density of the full conditional of coordinate `index` at `value`, given the
/// other coordinates of `state`.
double gibbs_conditional_logpdf(const EightSchoolsData& data, const GibbsHyper& hyper,
                                std::span<const double> state, std::size_t index, double value);

/// Data-driven starting point: theta = school means, sigma^2 = per-school variances,
/// mu and tau^2 the mean and variance of the school means.
std::vector<double> gibbs_initial_state(const EightSchoolsData& data);

class GibbsSystem final : public TransitionSystem {
 public:
  GibbsSystem(EightSchoolsData data, GibbsHyper hyper, std::uint64_t seed, std::size_t steps);

  std::size_t dim() const noexcept override { return index_.dim(); }
  std::size_t steps() const noexcept override { return noise_.steps(); }
  void step(std::size_t t, std::span<const double> prev, std::span<double> out) const override;
  void step_jvp(std::size_t t, std::span<const double> prev, std::span<double> out,
                std::span<const double> tangents, std::span<double> jv) const override;

  /// Precompute all draws (chi-squared inversion is the costly part of a sweep).
  void materialize(WorkerPool* pool = nullptr) { noise_.materialize(pool); }

  const EightSchoolsData& data() const noexcept { return data_; }
  const GibbsHyper& hyper() const noexcept { return hyper_; }

 private:
  EightSchoolsData data_;
  GibbsHyper hyper_;
  GibbsIndex index_;
  NoiseTable noise_;
  std::size_t xi_slot_, tau_slot_, sigma_slot_;
};

}  // namespace deermc
