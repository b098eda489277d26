#include "deermc/samplers/hmc.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "deermc/core/errors.hpp"
#include "deermc/samplers/common.hpp"

namespace deermc {

namespace {

double kinetic(const HmcKernel& k, std::span<const double> p) {
  double s = 0;
  for (std::size_t i = 0; i < p.size(); ++i) s += p[i] * p[i] * k.inv_mass(i);
  return 0.5 * s;
}

void check_finite(std::span<const double> v, const char* what) {
  for (double e : v)
    if (!std::isfinite(e)) throw DivergedError(what, 0);
}

bool all_finite(std::span<const double> v) {
  return std::ranges::all_of(v, [](double e) { return std::isfinite(e); });
}

GateOutcome rejected_gate() {
  GateOutcome g;
  g.log_ratio = -std::numeric_limits<double>::infinity();
  g.gate_logit = g.log_ratio;
  g.accepted = false;
  return g;
}

GateOutcome metropolis(double h0, double hl, double u) {
  GateOutcome g;
  g.log_ratio = h0 - hl;
  g.gate_logit = std::min(0.0, g.log_ratio) - std::log(u);
  g.accepted = g.gate_logit > 0;
  return g;
}

}  // namespace

void HmcKernel::validate() const {
  if (!model) throw ConfigError("HMC kernel needs a target model");
  if (!(eps > 0) || !std::isfinite(eps)) throw ConfigError("HMC step size must be positive");
  if (leapfrog_steps < 1) throw ConfigError("HMC needs at least one leapfrog step");
  if (!mass.empty()) {
    if (mass.size() != model->dim()) throw ConfigError("mass vector length differs from the target dimension");
    for (double m : mass)
      if (!(m > 0)) throw ConfigError("mass entries must be positive");
  }
}

NoiseLayout hmc_noise_layout(std::size_t dim) {
  NoiseLayout l;
  l.add("momentum", dim, NoiseKind::standard_normal).add("u", 1, NoiseKind::uniform);
  return l;
}

void leapfrog_step(const HmcKernel& k, std::span<const double> s, std::span<double> out) {
  const std::size_t n = s.size() / 2;
  std::vector<double> g(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = s[i] + k.eps * s[n + i] * k.inv_mass(i);
  k.model->grad(out.first(n), g);
  for (std::size_t i = 0; i < n; ++i) out[n + i] = s[n + i] + k.eps * g[i];
  check_finite(out, "leapfrog produced a non-finite state");
}

void leapfrog_block_jacobian(const HmcKernel& k, std::span<const double> s,
                             std::span<const double> probes, std::span<double> out,
                             std::span<double> abcd) {
  const std::size_t n = s.size() / 2;
  const std::size_t n_probes = probes.size() / n;
  if (n_probes == 0) throw ConfigError("block Jacobian needs at least one probe");
  std::vector<double> g(n), hz(n_probes * n);
  for (std::size_t i = 0; i < n; ++i) out[i] = s[i] + k.eps * s[n + i] * k.inv_mass(i);
  k.model->logp_grad_hvp(out.first(n), g, probes, hz);
  for (std::size_t i = 0; i < n; ++i) out[n + i] = s[n + i] + k.eps * g[i];
  check_finite(out, "leapfrog produced a non-finite state");
  for (std::size_t i = 0; i < n; ++i) {
    double dhat = 0;
    for (std::size_t p = 0; p < n_probes; ++p) dhat += probes[p * n + i] * hz[p * n + i];
    dhat /= static_cast<double>(n_probes);
    const double im = k.inv_mass(i);
    abcd[i] = 1.0;
    abcd[n + i] = k.eps * im;
    abcd[2 * n + i] = k.eps * dhat;
    abcd[3 * n + i] = 1.0 + k.eps * k.eps * dhat * im;
  }
}

LeapfrogSystem::LeapfrogSystem(HmcKernel kernel) : kernel_(std::move(kernel)) {
  kernel_.validate();
  n_ = kernel_.model->dim();
}

void LeapfrogSystem::step(std::size_t t, std::span<const double> prev, std::span<double> out) const {
  try {
    leapfrog_step(kernel_, prev, out);
  } catch (const DivergedError& e) {
    throw DivergedError("leapfrog produced a non-finite state", t);
  }
}

void LeapfrogSystem::step_jvp(std::size_t t, std::span<const double> prev, std::span<double> out,
                              std::span<const double> tangents, std::span<double> jv) const {
  const std::size_t n = n_, d = 2 * n;
  const std::size_t k = tangents.size() / d;
  std::vector<double> dx(k * n), hdx(k * n), g(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = prev[i] + kernel_.eps * prev[n + i] * kernel_.inv_mass(i);
  for (std::size_t j = 0; j < k; ++j)
    for (std::size_t i = 0; i < n; ++i)
      dx[j * n + i] = tangents[j * d + i] + kernel_.eps * tangents[j * d + n + i] * kernel_.inv_mass(i);
  kernel_.model->logp_grad_hvp(out.first(n), g, dx, hdx);
  for (std::size_t i = 0; i < n; ++i) out[n + i] = prev[n + i] + kernel_.eps * g[i];
  for (double e : out)
    if (!std::isfinite(e)) throw DivergedError("leapfrog produced a non-finite state", t);
  for (std::size_t j = 0; j < k; ++j)
    for (std::size_t i = 0; i < n; ++i) {
      jv[j * d + i] = dx[j * n + i];
      jv[j * d + n + i] = tangents[j * d + n + i] + kernel_.eps * hdx[j * n + i];
    }
}

void LeapfrogSystem::step_block_jacobian(std::size_t t, std::span<const double> prev,
                                         std::span<double> out, std::span<const double> probes,
                                         std::span<double> abcd) const {
  try {
    leapfrog_block_jacobian(kernel_, prev, probes, out, abcd);
  } catch (const DivergedError&) {
    throw DivergedError("leapfrog produced a non-finite state", t);
  }
}

namespace {

// Integrates from (x0, p0) and returns (x_L, p_L) after the closing half step.
// With tangents, dx/dp carry the tangent trajectory.
struct Trajectory {
  std::vector<double> x, p, g;
  double lp = 0;
};

void integrate_sequential(const HmcKernel& k, std::span<const double> x0, std::span<const double> g0,
                          std::span<const double> p0, Trajectory& tr) {
  const std::size_t n = x0.size();
  tr.x.assign(x0.begin(), x0.end());
  tr.p.resize(n);
  tr.g.resize(n);
  for (std::size_t i = 0; i < n; ++i) tr.p[i] = p0[i] + 0.5 * k.eps * g0[i];
  for (std::size_t l = 0; l < k.leapfrog_steps; ++l) {
    for (std::size_t i = 0; i < n; ++i) tr.x[i] += k.eps * tr.p[i] * k.inv_mass(i);
    tr.lp = k.model->logp_grad(tr.x, tr.g);
    for (std::size_t i = 0; i < n; ++i) tr.p[i] += k.eps * tr.g[i];
  }
  for (std::size_t i = 0; i < n; ++i) tr.p[i] -= 0.5 * k.eps * tr.g[i];
}

}  // namespace

HmcOutcome hmc_step(const HmcKernel& k, std::span<const double> x, std::span<const double> xi,
                    double u, std::span<double> out, const HmcStepOptions& options) {
  const std::size_t n = x.size();
  HmcOutcome res;
  std::vector<double> p0(n), g0(n);
  for (std::size_t i = 0; i < n; ++i) p0[i] = (k.mass.empty() ? 1.0 : std::sqrt(k.mass[i])) * xi[i];
  const double lp0 = k.model->logp_grad(x, g0);
  const double h0 = kinetic(k, p0) - lp0;

  Trajectory tr;
  bool done = false;
  try {
    if (options.mode == LeapfrogMode::parallel) {
      const LeapfrogSystem system(k);
      std::vector<double> s0(2 * n);
      for (std::size_t i = 0; i < n; ++i) {
        s0[i] = x[i];
        s0[n + i] = p0[i] + 0.5 * k.eps * g0[i];
      }
      const DeerResult r = run_deer(system, s0, options.deer, k.leapfrog_steps);
      res.leapfrog_iterations = r.iterations;
      if (r.converged) {
        const auto last = r.trace.row(k.leapfrog_steps - 1);
        tr.x.assign(last.begin(), last.begin() + n);
        tr.p.assign(last.begin() + n, last.end());
        tr.g.resize(n);
        tr.lp = k.model->logp_grad(tr.x, tr.g);
        for (std::size_t i = 0; i < n; ++i) tr.p[i] -= 0.5 * k.eps * tr.g[i];
        done = true;
      } else {
        res.fell_back = true;
      }
    }
    if (!done) integrate_sequential(k, x, g0, p0, tr);
    check_finite(tr.x, "HMC proposal is not finite");
    check_finite(tr.p, "HMC proposal is not finite");
    check_finite({&tr.lp, 1}, "HMC proposal is not finite");
  } catch (const DivergedError&) {
    // overflowing trajectory: H_L = +inf, reject
    res.gate = rejected_gate();
    std::ranges::copy(x, out.begin());
    return res;
  }

  res.gate = metropolis(h0, kinetic(k, tr.p) - tr.lp, u);
  std::ranges::copy(res.gate.accepted ? std::span<const double>(tr.x) : x, out.begin());
  return res;
}

HmcOutcome hmc_jvp(const HmcKernel& k, std::span<const double> x, std::span<const double> xi,
                   double u, std::span<const double> tangents, std::span<double> out,
                   std::span<double> jv) {
  const std::size_t n = x.size();
  const std::size_t nt = tangents.size() / n;
  const double eps = k.eps;
  HmcOutcome res;
  std::vector<double> p(n), g(n), hv(nt * n);
  for (std::size_t i = 0; i < n; ++i) p[i] = (k.mass.empty() ? 1.0 : std::sqrt(k.mass[i])) * xi[i];
  std::vector<double> x0(x.begin(), x.end()), g0(n);
  const double lp0 = k.model->logp_grad_hvp(x, g0, tangents, hv);
  const double h0 = kinetic(k, p) - lp0;

  // tangent state: dx = v, dp = (eps/2) H(x0) v
  std::vector<double> dx(tangents.begin(), tangents.end()), dp(nt * n);
  for (std::size_t j = 0; j < nt * n; ++j) dp[j] = 0.5 * eps * hv[j];
  std::vector<double> xs(x.begin(), x.end());
  for (std::size_t i = 0; i < n; ++i) p[i] += 0.5 * eps * g0[i];
  double lp = lp0;
  for (std::size_t l = 0; l < k.leapfrog_steps; ++l) {
    for (std::size_t i = 0; i < n; ++i) xs[i] += eps * p[i] * k.inv_mass(i);
    for (std::size_t j = 0; j < nt; ++j)
      for (std::size_t i = 0; i < n; ++i) dx[j * n + i] += eps * dp[j * n + i] * k.inv_mass(i);
    lp = k.model->logp_grad_hvp(xs, g, dx, hv);
    const double scale = l + 1 == k.leapfrog_steps ? 0.5 * eps : eps;
    for (std::size_t i = 0; i < n; ++i) p[i] += eps * g[i];
    for (std::size_t j = 0; j < nt * n; ++j) dp[j] += scale * hv[j];
  }
  for (std::size_t i = 0; i < n; ++i) p[i] -= 0.5 * eps * g[i];
  if (!all_finite(xs) || !all_finite(p) || !std::isfinite(lp)) {
    res.gate = rejected_gate();
    std::ranges::copy(x, out.begin());
    std::ranges::copy(tangents, jv.begin());
    return res;
  }

  res.gate = metropolis(h0, kinetic(k, p) - lp, u);
  const bool acc = res.gate.accepted;
  std::ranges::copy(acc ? std::span<const double>(xs) : x, out.begin());
  const double slope = res.gate.log_ratio < 0 ? sigmoid_slope(res.gate.gate_logit) : 0.0;
  for (std::size_t j = 0; j < nt; ++j) {
    const auto v = tangents.subspan(j * n, n);
    double dratio = 0;
    if (slope != 0.0) {
      // d(H0 - H_L) = -grad(x0).v - p_L.(dp_L / m) + grad(x_L).dx_L
      for (std::size_t i = 0; i < n; ++i)
        dratio += -g0[i] * v[i] - p[i] * dp[j * n + i] * k.inv_mass(i) + g[i] * dx[j * n + i];
    }
    for (std::size_t i = 0; i < n; ++i)
      jv[j * n + i] = (acc ? dx[j * n + i] : v[i]) + (xs[i] - x0[i]) * slope * dratio;
  }
  return res;
}

HmcSystem::HmcSystem(HmcKernel kernel, std::uint64_t seed, std::size_t steps,
                     HmcStepOptions options)
    : kernel_(std::move(kernel)),
      dim_((kernel_.validate(), kernel_.model->dim())),
      noise_(seed, hmc_noise_layout(dim_), steps),
      options_(std::move(options)),
      xi_slot_(noise_.slot("momentum")),
      u_slot_(noise_.slot("u")) {}

void HmcSystem::draws(std::size_t t, std::span<double> xi, double& u) const {
  noise_.fill(xi_slot_, t, xi);
  u = noise_.at(u_slot_, t, 0);
}

void HmcSystem::step(std::size_t t, std::span<const double> prev, std::span<double> out) const {
  std::vector<double> xi(dim_);
  double u;
  draws(t, xi, u);
  try {
    const auto r = hmc_step(kernel_, prev, xi, u, out, options_);
    if (options_.mode == LeapfrogMode::parallel) {
      lf_iterations_ += r.leapfrog_iterations;
      ++lf_solves_;
      fallbacks_ += r.fell_back;
    }
  } catch (const DivergedError&) {
    throw DivergedError("HMC proposal is not finite", t);
  }
}

void HmcSystem::step_jvp(std::size_t t, std::span<const double> prev, std::span<double> out,
                         std::span<const double> tangents, std::span<double> jv) const {
  if (options_.mode == LeapfrogMode::parallel)
    throw ConfigError("chain-parallel HMC needs sequential leapfrog integration");
  std::vector<double> xi(dim_);
  double u;
  draws(t, xi, u);
  try {
    hmc_jvp(kernel_, prev, xi, u, tangents, out, jv);
  } catch (const DivergedError&) {
    throw DivergedError("HMC proposal is not finite", t);
  }
}

std::optional<bool> HmcSystem::accepted(std::size_t t, std::span<const double> prev) const {
  std::vector<double> xi(dim_), out(dim_);
  double u;
  draws(t, xi, u);
  return hmc_step(kernel_, prev, xi, u, out, options_).gate.accepted;
}

}  // namespace deermc
