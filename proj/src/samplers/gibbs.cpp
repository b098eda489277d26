#include "deermc/samplers/gibbs.hpp"

#include <cmath>
#include <numbers>

#include "deermc/core/errors.hpp"

namespace deermc {

namespace {

constexpr double kSchoolMean[] = {28, 8, -3, 7, -1, 1, 18, 12};
constexpr double kSchoolSe[] = {15, 10, 16, 11, 9, 11, 10, 18};

// log density of scaled-inv-chi^2(nu, s2) at x
double scaled_inv_chi2_logpdf(double x, double nu, double s2) {
  const double h = nu / 2;
  return h * std::log(h * s2) - std::lgamma(h) - (h + 1) * std::log(x) - nu * s2 / (2 * x);
}

double normal_logpdf(double x, double mean, double var) {
  return -0.5 * std::log(2 * std::numbers::pi * var) - (x - mean) * (x - mean) / (2 * var);
}

}  // namespace

EightSchoolsData EightSchoolsData::synthetic(std::uint64_t seed, std::size_t per_school) {
  NoiseLayout layout;
  layout.add("obs", per_school, NoiseKind::standard_normal);
  const NoiseTable noise(seed, layout, 8);
  std::vector<std::vector<double>> x(8);
  for (std::size_t s = 0; s < 8; ++s) {
    const double sd = kSchoolSe[s] * std::sqrt(static_cast<double>(per_school));
    for (std::size_t n = 0; n < per_school; ++n)
      x[s].push_back(kSchoolMean[s] + sd * noise.at(s, "obs", n));
  }
  return from_observations(x);
}

EightSchoolsData EightSchoolsData::from_observations(const std::vector<std::vector<double>>& x) {
  if (x.empty() || x.front().size() < 2) throw ConfigError("need at least two observations per school");
  EightSchoolsData d;
  d.schools = x.size();
  d.per_school = x.front().size();
  for (const auto& row : x) {
    if (row.size() != d.per_school) throw ConfigError("schools must have equal observation counts");
    double m = 0;
    for (double v : row) m += v;
    m /= static_cast<double>(row.size());
    double ss = 0;
    for (double v : row) ss += (v - m) * (v - m);
    d.mean.push_back(m);
    d.sum_sq.push_back(ss);
  }
  return d;
}

double EightSchoolsData::residual_sq(std::size_t s, double theta) const noexcept {
  const double d = mean[s] - theta;
  return sum_sq[s] + static_cast<double>(per_school) * d * d;
}

void GibbsHyper::validate() const {
  if (!(nu0 > 0 && tau0_sq > 0 && kappa0 > 0 && alpha0 > 0 && sigma0_sq > 0))
    throw ConfigError("Gibbs hyperparameters nu0, tau0^2, kappa0, alpha0, sigma0^2 must be positive");
}

NoiseLayout gibbs_noise_layout(const EightSchoolsData& data, const GibbsHyper& hyper) {
  const double s = static_cast<double>(data.schools);
  NoiseLayout l;
  l.add("xi", 1 + data.schools, NoiseKind::standard_normal)
      .add("chi_tau", 1, NoiseKind::chi_squared, hyper.nu0 + s + 1)
      .add("chi_sigma", data.schools, NoiseKind::chi_squared,
           hyper.alpha0 + static_cast<double>(data.per_school));
  return l;
}

std::vector<double> gibbs_default_preconditioner(std::size_t schools) {
  const GibbsIndex ix{schools};
  std::vector<double> p(ix.dim(), 1.0);
  p[ix.tau_sq] = 1e-12;
  for (std::size_t s = 0; s < schools; ++s) p[ix.sigma_sq(s)] = 1e-12;
  return p;
}

void gibbs_sweep(const EightSchoolsData& data, const GibbsHyper& h, std::span<const double> state,
                 const GibbsNoise& noise, std::span<double> out) {
  gibbs_jvp(data, h, state, noise, {}, out, {});
}

void gibbs_jvp(const EightSchoolsData& data, const GibbsHyper& h, std::span<const double> state,
               const GibbsNoise& noise, std::span<const double> tangents, std::span<double> out,
               std::span<double> jv) {
  const std::size_t S = data.schools;
  const GibbsIndex ix{S};
  const std::size_t d = ix.dim();
  const std::size_t k = tangents.size() / d;
  const double N = static_cast<double>(data.per_school);
  const double Sd = static_cast<double>(S);
  const double mu_old = state[ix.mu];

  // tau^2 | mu, theta
  double num = h.nu0 * h.tau0_sq + h.kappa0 * (mu_old - h.mu0) * (mu_old - h.mu0);
  double theta_sum = 0;
  for (std::size_t s = 0; s < S; ++s) {
    const double r = state[ix.theta(s)] - mu_old;
    num += r * r;
    theta_sum += state[ix.theta(s)];
  }
  const double tau2 = num / noise.chi_tau;
  for (std::size_t j = 0; j < k; ++j) {
    const auto v = tangents.subspan(j * d, d);
    double dnum = 2 * h.kappa0 * (mu_old - h.mu0) * v[ix.mu];
    for (std::size_t s = 0; s < S; ++s)
      dnum += 2 * (state[ix.theta(s)] - mu_old) * (v[ix.theta(s)] - v[ix.mu]);
    jv[j * d + ix.tau_sq] = dnum / noise.chi_tau;
  }

  // mu | theta, tau^2
  const double prec_mu = h.kappa0 + Sd;
  const double sd_mu = std::sqrt(tau2 / prec_mu);
  const double mu = (h.kappa0 * h.mu0 + theta_sum) / prec_mu + sd_mu * noise.xi[0];
  for (std::size_t j = 0; j < k; ++j) {
    const auto v = tangents.subspan(j * d, d);
    double dsum = 0;
    for (std::size_t s = 0; s < S; ++s) dsum += v[ix.theta(s)];
    const double dtau2 = jv[j * d + ix.tau_sq];
    jv[j * d + ix.mu] = dsum / prec_mu + noise.xi[0] * dtau2 / (2 * prec_mu * sd_mu);
  }

  // theta_s | mu, tau^2, sigma^2_s, then sigma^2_s | theta_s
  const double chi_df_scale = h.alpha0 * h.sigma0_sq;
  for (std::size_t s = 0; s < S; ++s) {
    const double sig2 = state[ix.sigma_sq(s)];
    const double xbar = data.mean[s];
    const double p = 1 / tau2 + N / sig2;
    const double m = (mu / tau2 + N * xbar / sig2) / p;
    const double z = noise.xi[1 + s];
    const double theta = m + z / std::sqrt(p);
    const double sig2_new = (chi_df_scale + data.residual_sq(s, theta)) / noise.chi_sigma[s];
    out[ix.theta(s)] = theta;
    out[ix.sigma_sq(s)] = sig2_new;
    for (std::size_t j = 0; j < k; ++j) {
      const auto v = tangents.subspan(j * d, d);
      const double dtau2 = jv[j * d + ix.tau_sq];
      const double dmu = jv[j * d + ix.mu];
      const double dsig2 = v[ix.sigma_sq(s)];
      const double dp = -dtau2 / (tau2 * tau2) - N * dsig2 / (sig2 * sig2);
      const double dnum_m = dmu / tau2 - mu * dtau2 / (tau2 * tau2) - N * xbar * dsig2 / (sig2 * sig2);
      const double dm = (dnum_m - m * dp) / p;
      const double dtheta = dm - 0.5 * z * dp / (p * std::sqrt(p));
      jv[j * d + ix.theta(s)] = dtheta;
      jv[j * d + ix.sigma_sq(s)] = -2 * N * (xbar - theta) * dtheta / noise.chi_sigma[s];
    }
  }
  out[ix.tau_sq] = tau2;
  out[ix.mu] = mu;
  for (std::size_t i = 0; i < d; ++i)
    if (!std::isfinite(out[i])) throw DivergedError("Gibbs sweep produced a non-finite state", 0);
  if (!(tau2 > 0)) throw ContractError("Gibbs sweep produced a non-positive tau^2");
}

double gibbs_joint_logp(const EightSchoolsData& data, const GibbsHyper& h,
                        std::span<const double> st) {
  const GibbsIndex ix{data.schools};
  const double tau2 = st[ix.tau_sq], mu = st[ix.mu];
  if (!(tau2 > 0)) return -std::numeric_limits<double>::infinity();
  double lp = scaled_inv_chi2_logpdf(tau2, h.nu0, h.tau0_sq) +
              normal_logpdf(mu, h.mu0, tau2 / h.kappa0);
  const double N = static_cast<double>(data.per_school);
  for (std::size_t s = 0; s < data.schools; ++s) {
    const double th = st[ix.theta(s)], sig2 = st[ix.sigma_sq(s)];
    if (!(sig2 > 0)) return -std::numeric_limits<double>::infinity();
    lp += normal_logpdf(th, mu, tau2) + scaled_inv_chi2_logpdf(sig2, h.alpha0, h.sigma0_sq) -
          0.5 * N * std::log(2 * std::numbers::pi * sig2) - data.residual_sq(s, th) / (2 * sig2);
  }
  return lp;
}

double gibbs_conditional_logpdf(const EightSchoolsData& data, const GibbsHyper& h,
                                std::span<const double> st, std::size_t index, double value) {
  const std::size_t S = data.schools;
  const GibbsIndex ix{S};
  const double Sd = static_cast<double>(S), N = static_cast<double>(data.per_school);
  const double tau2 = st[ix.tau_sq], mu = st[ix.mu];
  if (index == ix.tau_sq) {
    double num = h.nu0 * h.tau0_sq + h.kappa0 * (mu - h.mu0) * (mu - h.mu0);
    for (std::size_t s = 0; s < S; ++s) num += (st[ix.theta(s)] - mu) * (st[ix.theta(s)] - mu);
    const double nu = h.nu0 + Sd + 1;
    return scaled_inv_chi2_logpdf(value, nu, num / nu);
  }
  if (index == ix.mu) {
    double sum = 0;
    for (std::size_t s = 0; s < S; ++s) sum += st[ix.theta(s)];
    return normal_logpdf(value, (h.kappa0 * h.mu0 + sum) / (h.kappa0 + Sd), tau2 / (h.kappa0 + Sd));
  }
  if (index < ix.sigma_sq(0)) {
    const std::size_t s = index - 2;
    const double sig2 = st[ix.sigma_sq(s)];
    const double p = 1 / tau2 + N / sig2;
    return normal_logpdf(value, (mu / tau2 + N * data.mean[s] / sig2) / p, 1 / p);
  }
  if (index < ix.dim()) {
    const std::size_t s = index - 2 - S;
    const double nu = h.alpha0 + N;
    return scaled_inv_chi2_logpdf(value, nu,
                                  (h.alpha0 * h.sigma0_sq + data.residual_sq(s, st[ix.theta(s)])) / nu);
  }
  throw IndexError("Gibbs coordinate " + std::to_string(index) + " out of range");
}

std::vector<double> gibbs_initial_state(const EightSchoolsData& data) {
  const std::size_t S = data.schools;
  const GibbsIndex ix{S};
  std::vector<double> st(ix.dim());
  double m = 0;
  for (double v : data.mean) m += v;
  m /= static_cast<double>(S);
  double var = 0;
  for (double v : data.mean) var += (v - m) * (v - m);
  var /= static_cast<double>(S - 1 > 0 ? S - 1 : 1);
  st[ix.tau_sq] = var > 0 ? var : 1.0;
  st[ix.mu] = m;
  for (std::size_t s = 0; s < S; ++s) {
    st[ix.theta(s)] = data.mean[s];
    st[ix.sigma_sq(s)] = data.sum_sq[s] / static_cast<double>(data.per_school - 1);
  }
  return st;
}

GibbsSystem::GibbsSystem(EightSchoolsData data, GibbsHyper hyper, std::uint64_t seed,
                         std::size_t steps)
    : data_(std::move(data)),
      hyper_((hyper.validate(), hyper)),
      index_{data_.schools},
      noise_(seed, gibbs_noise_layout(data_, hyper_), steps),
      xi_slot_(noise_.slot("xi")),
      tau_slot_(noise_.slot("chi_tau")),
      sigma_slot_(noise_.slot("chi_sigma")) {}

void GibbsSystem::step(std::size_t t, std::span<const double> prev, std::span<double> out) const {
  step_jvp(t, prev, out, {}, {});
}

void GibbsSystem::step_jvp(std::size_t t, std::span<const double> prev, std::span<double> out,
                           std::span<const double> tangents, std::span<double> jv) const {
  const std::size_t S = data_.schools;
  double xi[64], chi[64];
  std::vector<double> big_xi, big_chi;
  std::span<double> xs(xi, S + 1), cs(chi, S);
  if (S + 1 > 64) {
    big_xi.resize(S + 1);
    big_chi.resize(S);
    xs = big_xi;
    cs = big_chi;
  }
  noise_.fill(xi_slot_, t, xs);
  noise_.fill(sigma_slot_, t, cs);
  const GibbsNoise noise{xs, noise_.at(tau_slot_, t, 0), cs};
  try {
    gibbs_jvp(data_, hyper_, prev, noise, tangents, out, jv);
  } catch (const DivergedError&) {
    throw DivergedError("Gibbs sweep produced a non-finite state", t);
  }
}

}  // namespace deermc
