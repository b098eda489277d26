#include "deermc/core/transition_system.hpp"

#include <cmath>
#include <string>
#include <vector>

#include "deermc/core/errors.hpp"

namespace deermc {

std::string_view to_string(JacobianMode mode) noexcept {
  switch (mode) {
    case JacobianMode::dense:
      return "dense";
    case JacobianMode::diag_stochastic:
      return "diag-stochastic";
    case JacobianMode::block2x2_stochastic:
      return "block2x2-stochastic";
  }
  return "?";
}

JacobianMode parse_jacobian_mode(std::string_view text) {
  if (text == "dense") return JacobianMode::dense;
  if (text == "diag-stochastic" || text == "diag") return JacobianMode::diag_stochastic;
  if (text == "block2x2-stochastic" || text == "block") return JacobianMode::block2x2_stochastic;
  throw ConfigError("unknown jacobian mode '" + std::string(text) + "'");
}

void TransitionSystem::jvp(std::size_t t, std::span<const double> prev,
                           std::span<const double> v, std::span<double> out) const {
  std::vector<double> f(dim());
  step_jvp(t, prev, f, v, out);
}

void TransitionSystem::step_dense_jacobian(std::size_t t, std::span<const double> prev,
                                           std::span<double> out, std::span<double> jac) const {
  const std::size_t d = dim();
  std::vector<double> basis(d * d, 0.0);
  for (std::size_t i = 0; i < d; ++i) basis[i * d + i] = 1.0;
  std::vector<double> cols(d * d);
  step_jvp(t, prev, out, basis, cols);
  // cols row i is J e_i, i.e. column i of J
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t j = 0; j < d; ++j) jac[j * d + i] = cols[i * d + j];
}

void TransitionSystem::step_block_jacobian(std::size_t, std::span<const double>,
                                           std::span<double>, std::span<const double>,
                                           std::span<double>) const {
  throw ConfigError("transition system has no block 2x2 Jacobian estimator");
}

std::optional<bool> TransitionSystem::accepted(std::size_t, std::span<const double>) const {
  return std::nullopt;
}

StateSequence sequential_evaluate(const TransitionSystem& system, std::span<const double> s0,
                                  std::size_t steps) {
  if (s0.size() != system.dim())
    throw StructuralError("initial state length " + std::to_string(s0.size()) +
                          " != system dimension " + std::to_string(system.dim()));
  if (steps > system.steps())
    throw IndexError("system defines " + std::to_string(system.steps()) + " steps, asked for " +
                     std::to_string(steps));
  StateSequence out(steps, system.dim());
  for (std::size_t t = 0; t < steps; ++t) {
    system.step(t, previous_state(out, s0, t), out.row(t));
    for (double v : out.row(t))
      if (!std::isfinite(v)) throw DivergedError("sequential chain produced a non-finite state", t);
  }
  return out;
}

void CountingSystem::step(std::size_t t, std::span<const double> prev,
                          std::span<double> out) const {
  forward_.fetch_add(1, std::memory_order_relaxed);
  inner_.step(t, prev, out);
}

void CountingSystem::step_jvp(std::size_t t, std::span<const double> prev, std::span<double> out,
                              std::span<const double> tangents, std::span<double> jv) const {
  forward_.fetch_add(1, std::memory_order_relaxed);
  jvps_.fetch_add(tangents.size() / dim(), std::memory_order_relaxed);
  inner_.step_jvp(t, prev, out, tangents, jv);
}

void CountingSystem::step_dense_jacobian(std::size_t t, std::span<const double> prev,
                                         std::span<double> out, std::span<double> jac) const {
  forward_.fetch_add(1, std::memory_order_relaxed);
  jvps_.fetch_add(dim(), std::memory_order_relaxed);
  inner_.step_dense_jacobian(t, prev, out, jac);
}

void CountingSystem::step_block_jacobian(std::size_t t, std::span<const double> prev,
                                         std::span<double> out, std::span<const double> probes,
                                         std::span<double> abcd) const {
  forward_.fetch_add(1, std::memory_order_relaxed);
  probes_.fetch_add(probes.size() / (dim() / 2), std::memory_order_relaxed);
  inner_.step_block_jacobian(t, prev, out, probes, abcd);
}

void CountingSystem::reset() noexcept {
  forward_ = 0;
  jvps_ = 0;
  probes_ = 0;
}

}  // namespace deermc
