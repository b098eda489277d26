#include "deermc/deer/deer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <string>

#include "deermc/core/errors.hpp"
#include "deermc/core/noise.hpp"
#include "deermc/core/worker_pool.hpp"

namespace deermc {

namespace {

constexpr std::uint64_t kProbeStream = 0x48757463'68696e73ULL;  // "Hutchins"
constexpr std::size_t kGrain = 64;

AffineKind affine_kind(JacobianMode mode) {
  switch (mode) {
    case JacobianMode::dense:
      return AffineKind::dense;
    case JacobianMode::diag_stochastic:
      return AffineKind::diag;
    case JacobianMode::block2x2_stochastic:
      return AffineKind::block2x2;
  }
  return AffineKind::diag;
}

WorkerPool& pool_of(const DeerConfig& cfg) {
  return cfg.scan.pool ? *cfg.scan.pool : default_pool();
}

// Writes f_t(prev) and the conditioned Jacobian data of step t.
void linearize_step(const TransitionSystem& system, const DeerConfig& cfg, std::size_t t,
                    std::size_t iteration, std::span<const double> prev, std::span<double> f,
                    std::span<double> jac, std::vector<double>& probes,
                    std::vector<double>& products) {
  const std::size_t dim = system.dim();
  const ProbeStream stream{cfg.probe_seed, iteration, t};
  switch (cfg.mode) {
    case JacobianMode::dense:
      system.step_dense_jacobian(t, prev, f, jac);
      break;
    case JacobianMode::diag_stochastic: {
      const std::size_t k = cfg.hutchinson_samples;
      probes.resize(k * dim);
      products.resize(k * dim);
      for (std::size_t s = 0; s < k; ++s) stream.fill(s, {probes.data() + s * dim, dim});
      system.step_jvp(t, prev, f, probes, products);
      std::ranges::fill(jac, 0.0);
      for (std::size_t s = 0; s < k; ++s)
        for (std::size_t i = 0; i < dim; ++i) jac[i] += probes[s * dim + i] * products[s * dim + i];
      for (double& v : jac) v /= static_cast<double>(k);
      break;
    }
    case JacobianMode::block2x2_stochastic: {
      const std::size_t n = dim / 2;
      const std::size_t k = cfg.hutchinson_samples;
      probes.resize(k * n);
      for (std::size_t s = 0; s < k; ++s) stream.fill(s, {probes.data() + s * n, n});
      system.step_block_jacobian(t, prev, f, probes, jac);
      break;
    }
  }
  for (double v : f)
    if (!std::isfinite(v)) throw DivergedError("transition produced a non-finite state", t);
  for (double v : jac)
    if (!std::isfinite(v)) throw DivergedError("non-finite Jacobian estimate", t);
  condition_jacobian(affine_kind(cfg.mode), dim, jac, cfg);
}

// shift = f - J prev
void affine_shift(AffineKind kind, std::size_t dim, std::span<const double> jac,
                  std::span<const double> f, std::span<const double> prev,
                  std::span<double> shift) {
  switch (kind) {
    case AffineKind::dense:
      for (std::size_t i = 0; i < dim; ++i) {
        double acc = f[i];
        for (std::size_t j = 0; j < dim; ++j) acc -= jac[i * dim + j] * prev[j];
        shift[i] = acc;
      }
      return;
    case AffineKind::diag:
      for (std::size_t i = 0; i < dim; ++i) shift[i] = f[i] - jac[i] * prev[i];
      return;
    case AffineKind::block2x2: {
      const std::size_t n = dim / 2;
      for (std::size_t i = 0; i < n; ++i) {
        const double x = prev[i], v = prev[n + i];
        shift[i] = f[i] - jac[i] * x - jac[n + i] * v;
        shift[n + i] = f[n + i] - jac[2 * n + i] * x - jac[3 * n + i] * v;
      }
      return;
    }
  }
}

bool within_tolerance(std::span<const double> prev, std::span<const double> next, double atol,
                      double rtol, double& delta) {
  bool ok = true;
  for (std::size_t i = 0; i < prev.size(); ++i) {
    const double diff = std::abs(next[i] - prev[i]);
    delta = std::max(delta, diff);
    if (!(diff <= atol + rtol * std::abs(next[i]))) ok = false;
  }
  return ok;
}

}  // namespace

void DeerConfig::validate(std::size_t dim) const {
  if (!(atol > 0.0)) throw ConfigError("atol must be positive");
  if (!(rtol >= 0.0)) throw ConfigError("rtol must be non-negative");
  if (hutchinson_samples < 1) throw ConfigError("hutchinson_samples must be >= 1");
  if (!(damping > 0.0 && damping <= 1.0)) throw ConfigError("damping must lie in (0, 1]");
  if (!(clip > 0.0)) throw ConfigError("clip must be positive");
  if (!(divergence_factor > 1.0)) throw ConfigError("divergence_factor must exceed 1");
  if (!preconditioner.empty()) {
    if (preconditioner.size() != dim)
      throw ConfigError("preconditioner length " + std::to_string(preconditioner.size()) +
                        " != state dimension " + std::to_string(dim));
    for (double p : preconditioner)
      if (!(p > 0.0) || !std::isfinite(p))
        throw ConfigError("preconditioner entries must be positive");
  }
  if (mode == JacobianMode::block2x2_stochastic && dim % 2 != 0)
    throw ConfigError("block2x2 mode needs an even state dimension");
}

std::size_t default_max_iters(std::size_t steps) {
  return static_cast<std::size_t>(std::ceil(50.0 + 5.0 * static_cast<double>(steps) * 1e-4));
}

ConvergenceCheck converged(std::span<const double> prev, std::span<const double> next,
                           double atol, double rtol) {
  if (prev.size() != next.size()) throw StructuralError("converged: shape mismatch");
  ConvergenceCheck out;
  out.converged = within_tolerance(prev, next, atol, rtol, out.delta_max);
  return out;
}

ConvergenceCheck converged(const StateSequence& prev, const StateSequence& next, double atol,
                           double rtol) {
  require_same_shape(prev, next, "converged");
  return converged(prev.data(), next.data(), atol, rtol);
}

void ProbeStream::fill(std::size_t sample, std::span<double> out) const noexcept {
  for (std::size_t k = 0; k < out.size(); ++k)
    out[k] = rademacher(seed ^ kProbeStream, iteration, step, sample, k);
}

std::vector<double> hutchinson_diag(const JvpFunction& jvp, std::size_t dim,
                                    std::size_t n_samples, const ProbeStream& probes) {
  if (n_samples < 1) throw ConfigError("hutchinson_diag needs at least one sample");
  std::vector<double> z(dim), jz(dim), est(dim, 0.0);
  for (std::size_t s = 0; s < n_samples; ++s) {
    probes.fill(s, z);
    jvp(z, jz);
    for (std::size_t i = 0; i < dim; ++i) est[i] += z[i] * jz[i];
  }
  for (double& v : est) v /= static_cast<double>(n_samples);
  return est;
}

void condition_jacobian(AffineKind kind, std::size_t dim, std::span<double> jac,
                        const DeerConfig& cfg) {
  const auto& p = cfg.preconditioner;
  if (!p.empty()) {
    switch (kind) {
      case AffineKind::dense:
        for (std::size_t i = 0; i < dim; ++i)
          for (std::size_t j = 0; j < dim; ++j) jac[i * dim + j] *= p[i];
        break;
      case AffineKind::diag:
        for (std::size_t i = 0; i < dim; ++i) jac[i] *= p[i];
        break;
      case AffineKind::block2x2: {
        const std::size_t n = dim / 2;
        for (std::size_t i = 0; i < n; ++i) {
          jac[i] *= p[i];
          jac[n + i] *= p[i];
          jac[2 * n + i] *= p[n + i];
          jac[3 * n + i] *= p[n + i];
        }
        break;
      }
    }
  }
  if (cfg.damping != 1.0)
    for (double& v : jac) v *= cfg.damping;
  if (std::isfinite(cfg.clip))
    for (double& v : jac) v = std::clamp(v, -cfg.clip, cfg.clip);
}

StateSequence deer_iterate(const TransitionSystem& system, const StateSequence& guess,
                           std::span<const double> s0, const DeerConfig& cfg,
                           std::size_t iteration) {
  const std::size_t dim = system.dim();
  const std::size_t steps = guess.steps();
  if (guess.dim() != dim || s0.size() != dim)
    throw StructuralError("deer_iterate: guess or s0 dimension differs from the system");
  cfg.validate(dim);
  const AffineKind kind = affine_kind(cfg.mode);
  AffineSequence elements(kind, steps, dim);
  std::vector<double> fvals(steps * dim);
  pool_of(cfg).parallel_for(steps, kGrain, [&](std::size_t begin, std::size_t end) {
    std::vector<double> probes, products;
    for (std::size_t t = begin; t < end; ++t) {
      const auto prev = previous_state(guess, s0, t);
      std::span<double> f{fvals.data() + t * dim, dim};
      linearize_step(system, cfg, t, iteration, prev, f, elements.jac(t), probes, products);
      affine_shift(kind, dim, elements.jac(t), f, prev, elements.shift(t));
    }
  });
  StateSequence next(steps, dim);
  parallel_affine_solve(elements, s0, next.data(), cfg.scan);
  if (const std::size_t bad = next.first_non_finite(); bad < steps)
    throw DivergedError("Newton update produced a non-finite state", bad);
  return next;
}

DeerSolver::DeerSolver(const TransitionSystem& system, std::span<const double> s0,
                       DeerConfig cfg, std::size_t steps)
    : DeerSolver(system, s0, std::move(cfg), StateSequence::constant(steps, s0)) {}

DeerSolver::DeerSolver(const TransitionSystem& system, std::span<const double> s0,
                       DeerConfig cfg, StateSequence guess)
    : system_(system),
      s0_(s0.begin(), s0.end()),
      cfg_(std::move(cfg)),
      steps_(guess.steps()),
      dim_(system.dim()) {
  if (s0.size() != dim_ || guess.dim() != dim_)
    throw StructuralError("DeerSolver: initial state or guess dimension differs from the system");
  if (steps_ > system.steps())
    throw IndexError("system defines " + std::to_string(system.steps()) + " steps, asked for " +
                     std::to_string(steps_));
  cfg_.validate(dim_);
  window_len_ = cfg_.window == 0 ? steps_ : std::min(cfg_.window, steps_);
  max_iters_ = cfg_.max_iters == 0 ? default_max_iters(steps_) : cfg_.max_iters;
  result_.trace = std::move(guess);
  result_.per_step_converged_at.assign(steps_, -1);
  jac_ = AffineSequence(affine_kind(cfg_.mode), window_len_, dim_);
  fvals_.resize(window_len_ * dim_);
  next_.resize(window_len_ * dim_);
  if (window_len_ == steps_) settled_.assign(steps_, 0);
}

void DeerSolver::evaluate_window(std::size_t begin, std::size_t end) {
  jac_.resize(end - begin);
  const std::size_t iteration = result_.passes;
  const auto& trace = result_.trace;
  pool_of(cfg_).parallel_for(end - begin, kGrain, [&](std::size_t lo, std::size_t hi) {
    std::vector<double> probes, products;
    for (std::size_t i = lo; i < hi; ++i) {
      const std::size_t t = begin + i;
      linearize_step(system_, cfg_, t, iteration, previous_state(trace, s0_, t),
                     {fvals_.data() + i * dim_, dim_}, jac_.jac(i), probes, products);
    }
  });
  ++result_.passes;
  result_.evaluated_steps += end - begin;
}

void DeerSolver::solve_window(std::size_t begin, std::size_t end) {
  const auto& trace = result_.trace;
  const AffineKind kind = jac_.kind();
  pool_of(cfg_).parallel_for(end - begin, kGrain, [&](std::size_t lo, std::size_t hi) {
    for (std::size_t i = lo; i < hi; ++i)
      affine_shift(kind, dim_, jac_.jac(i), {fvals_.data() + i * dim_, dim_},
                   previous_state(trace, s0_, begin + i), jac_.shift(i));
  });
  const std::span<double> out{next_.data(), (end - begin) * dim_};
  parallel_affine_solve(jac_, previous_state(trace, s0_, begin), out, cfg_.scan);
  // the window's first step is linearized at its exact predecessor
  std::copy_n(fvals_.begin(), dim_, next_.begin());
  for (std::size_t i = 0; i < out.size(); ++i)
    if (!std::isfinite(out[i]))
      throw DivergedError("Newton update produced a non-finite state", begin + i / dim_);
}

bool DeerSolver::advance() {
  if (done_) return false;
  const std::size_t begin = window_start_;
  const std::size_t end = std::min(steps_, begin + window_len_);
  evaluate_window(begin, end);
  solve_window(begin, end);

  auto& trace = result_.trace;
  std::size_t first_bad = end;
  double residual = 0.0, delta = 0.0;
  for (std::size_t t = begin; t < end; ++t) {
    const std::span<const double> next{next_.data() + (t - begin) * dim_, dim_};
    const std::span<const double> f{fvals_.data() + (t - begin) * dim_, dim_};
    for (std::size_t d = 0; d < dim_; ++d) residual = std::max(residual, std::abs(trace(t, d) - f[d]));
    const bool ok = within_tolerance(trace.row(t), next, cfg_.atol, cfg_.rtol, delta);
    if (window_len_ == steps_) settled_[t] = ok;
    if (!ok && first_bad == end) first_bad = t;
  }
  std::copy_n(next_.begin(), (end - begin) * dim_, trace.row(begin).begin());
  result_.residual_history.push_back(residual);

  if (window_len_ < steps_) {
    // freeze the converged prefix of the window
    for (std::size_t t = begin; t < first_bad; ++t)
      result_.per_step_converged_at[t] = static_cast<std::int64_t>(result_.iterations);
    window_start_ = first_bad;
  } else {
    for (std::size_t t = begin; t < end; ++t) {
      auto& at = result_.per_step_converged_at[t];
      if (!settled_[t]) at = -1;
      else if (at < 0) at = static_cast<std::int64_t>(result_.iterations);
    }
  }

  if (first_bad == end) {
    // the update moved nothing beyond tolerance: a confirming pass
    if (end == steps_) {
      result_.converged = true;
      done_ = true;
    }
    return !done_;
  }

  ++result_.iterations;
  result_.delta_history.push_back(delta);
  if (cfg_.full_trace) result_.full_trace.push_back(trace);
  const double first = result_.delta_history.front();
  if (first > 0.0 && delta > cfg_.divergence_factor * first) {
    char msg[96];
    std::snprintf(msg, sizeof msg, "Newton increment grew by more than %gx its initial value", cfg_.divergence_factor);
    throw DivergedError(msg, first_bad);
  }
  if (result_.iterations >= max_iters_) done_ = true;
  return !done_;
}

bool sliding_window_update(DeerSolver& solver) { return solver.advance(); }

DeerResult run_deer(const TransitionSystem& system, std::span<const double> s0,
                    const DeerConfig& cfg, std::size_t steps) {
  return run_deer(system, s0, cfg, StateSequence::constant(steps, s0));
}

DeerResult run_deer(const TransitionSystem& system, std::span<const double> s0,
                    const DeerConfig& cfg, StateSequence guess) {
  DeerSolver solver(system, s0, cfg, std::move(guess));
  while (solver.advance()) {
  }
  return solver.take_result();
}

}  // namespace deermc
