#include "deermc/samplers/mala.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "deermc/core/errors.hpp"
#include "deermc/samplers/common.hpp"

namespace deermc {

namespace {

double sq_norm(std::span<const double> a) {
  double s = 0;
  for (double v : a) s += v * v;
  return s;
}

struct Proposal {
  std::vector<double> g0, prop, g1;
  double lp0 = 0, lp1 = 0;
  GateOutcome gate;
  double log_alpha = 0;
};

// Forward pass shared by mala_step and mala_jvp; hv0/hv1 receive H(x) v and
// H(x~) dx~ for the tangents when given.
void propose(const MalaKernel& k, std::span<const double> x, std::span<const double> xi, double u,
             Proposal& p, std::span<const double> tangents, std::span<double> hv0,
             std::vector<double>& dprop, std::span<double> hv1) {
  const std::size_t d = x.size();
  const double eps = k.eps;
  const double noise_scale = std::sqrt(2 * eps);
  p.g0.resize(d);
  p.prop.resize(d);
  p.g1.resize(d);
  p.lp0 = k.model->logp_grad_hvp(x, p.g0, tangents, hv0);
  for (std::size_t i = 0; i < d; ++i) p.prop[i] = x[i] + eps * p.g0[i] + noise_scale * xi[i];
  for (double v : p.prop)
    if (!std::isfinite(v)) throw DivergedError("MALA proposal is not finite", 0);
  const std::size_t n_tan = tangents.size() / d;
  dprop.resize(n_tan * d);
  for (std::size_t j = 0; j < n_tan * d; ++j) dprop[j] = tangents[j] + eps * hv0[j];
  p.lp1 = k.model->logp_grad_hvp(p.prop, p.g1, dprop, hv1);

  // log q(x | x~) - log q(x~ | x); the second term is -|xi|^2 / 2
  double w2 = 0;
  for (std::size_t i = 0; i < d; ++i) {
    const double w = x[i] - p.prop[i] - eps * p.g1[i];
    w2 += w * w;
  }
  p.gate.log_ratio = p.lp1 - p.lp0 - w2 / (4 * eps) + 0.5 * sq_norm(xi);
  p.log_alpha = std::min(0.0, p.gate.log_ratio);
  p.gate.gate_logit = p.log_alpha - std::log(u);
  p.gate.accepted = p.gate.gate_logit > 0;
}

}  // namespace

void MalaKernel::validate() const {
  if (!model) throw ConfigError("MALA kernel needs a target model");
  if (!(eps > 0) || !std::isfinite(eps)) throw ConfigError("MALA step size must be positive");
}

NoiseLayout mala_noise_layout(std::size_t dim) {
  NoiseLayout l;
  l.add("xi", dim, NoiseKind::standard_normal).add("u", 1, NoiseKind::uniform);
  return l;
}

GateOutcome mala_step(const MalaKernel& kernel, std::span<const double> x,
                      std::span<const double> xi, double u, std::span<double> out) {
  Proposal p;
  std::vector<double> dprop;
  propose(kernel, x, xi, u, p, {}, {}, dprop, {});
  std::ranges::copy(p.gate.accepted ? std::span<const double>(p.prop) : x, out.begin());
  return p.gate;
}

GateOutcome mala_jvp(const MalaKernel& kernel, std::span<const double> x,
                     std::span<const double> xi, double u, std::span<const double> tangents,
                     std::span<double> out, std::span<double> jv) {
  const std::size_t d = x.size();
  const std::size_t n_tan = tangents.size() / d;
  const double eps = kernel.eps;
  std::vector<double> hv0(n_tan * d), hv1(n_tan * d), dprop;
  Proposal p;
  propose(kernel, x, xi, u, p, tangents, hv0, dprop, hv1);
  const bool g = p.gate.accepted;
  std::ranges::copy(g ? std::span<const double>(p.prop) : x, out.begin());

  const double slope = p.gate.log_ratio < 0 ? sigmoid_slope(p.gate.gate_logit) : 0.0;
  std::vector<double> w(d);
  for (std::size_t i = 0; i < d; ++i) w[i] = x[i] - p.prop[i] - eps * p.g1[i];
  for (std::size_t k = 0; k < n_tan; ++k) {
    const auto v = tangents.subspan(k * d, d);
    const auto dx = std::span<const double>(dprop).subspan(k * d, d);
    const auto h1 = std::span<const double>(hv1).subspan(k * d, d);
    auto jk = jv.subspan(k * d, d);
    double dratio = 0;
    if (slope != 0.0) {
      double wdw = 0;
      for (std::size_t i = 0; i < d; ++i) {
        const double dw = v[i] - dx[i] - eps * h1[i];
        wdw += w[i] * dw;
        dratio += p.g1[i] * dx[i] - p.g0[i] * v[i];
      }
      dratio -= wdw / (2 * eps);
    }
    for (std::size_t i = 0; i < d; ++i)
      jk[i] = (g ? dx[i] : v[i]) + (p.prop[i] - x[i]) * slope * dratio;
  }
  return p.gate;
}

MalaSystem::MalaSystem(MalaKernel kernel, std::uint64_t seed, std::size_t steps)
    : kernel_(std::move(kernel)),
      dim_((kernel_.validate(), kernel_.model->dim())),
      noise_(seed, mala_noise_layout(dim_), steps),
      xi_slot_(noise_.slot("xi")),
      u_slot_(noise_.slot("u")) {}

void MalaSystem::draws(std::size_t t, std::span<double> xi, double& u) const {
  noise_.fill(xi_slot_, t, xi);
  u = noise_.at(u_slot_, t, 0);
}

void MalaSystem::step(std::size_t t, std::span<const double> prev, std::span<double> out) const {
  std::vector<double> xi(dim_);
  double u;
  draws(t, xi, u);
  try {
    mala_step(kernel_, prev, xi, u, out);
  } catch (const DivergedError&) {
    throw DivergedError("MALA proposal is not finite", t);
  }
}

void MalaSystem::step_jvp(std::size_t t, std::span<const double> prev, std::span<double> out,
                          std::span<const double> tangents, std::span<double> jv) const {
  std::vector<double> xi(dim_);
  double u;
  draws(t, xi, u);
  try {
    mala_jvp(kernel_, prev, xi, u, tangents, out, jv);
  } catch (const DivergedError&) {
    throw DivergedError("MALA proposal is not finite", t);
  }
}

std::optional<bool> MalaSystem::accepted(std::size_t t, std::span<const double> prev) const {
  std::vector<double> xi(dim_), out(dim_);
  double u;
  draws(t, xi, u);
  return mala_step(kernel_, prev, xi, u, out).accepted;
}

}  // namespace deermc
