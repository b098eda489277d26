#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <span>
#include <vector>

#include "deermc/core/state_sequence.hpp"
#include "deermc/core/transition_system.hpp"
#include "deermc/pscan/affine.hpp"

namespace deermc {

/// Solver settings for parallel Newton / quasi-Newton evaluation of a chain.
struct DeerConfig {
  JacobianMode mode = JacobianMode::diag_stochastic;
  double atol = 1e-4;
  double rtol = 1e-3;
  /// 0 selects default_max_iters(T).
  std::size_t max_iters = 0;
  std::size_t hutchinson_samples = 1;
  /// J <- damping * J, in (0, 1].
  double damping = 1.0;
  /// Entrywise |J| <= clip after damping.
  double clip = std::numeric_limits<double>::infinity();
  /// Sliding window length; 0 means the whole sequence.
  std::size_t window = 0;
  bool full_trace = false;
  /// Positive per-coordinate left scaling J <- diag(p) J; empty means identity.
  std::vector<double> preconditioner;
  /// Seeds the Rademacher probe stream, keyed further by (iteration, t).
  std::uint64_t probe_seed = 0x5eed'9e37'79b9ULL;
  /// Abort when the Newton increment grows past this multiple of the first one.
  double divergence_factor = 1e6;
  ScanOptions scan;

  /// Throws ConfigError for out-of-range settings.
  void validate(std::size_t dim) const;
};

/// ceil(50 + 5 * T * 1e-4).
std::size_t default_max_iters(std::size_t steps);

struct DeerResult {
  StateSequence trace;
  /// Newton updates applied.
  std::size_t iterations = 0;
  /// max |s^(i+1) - s^(i)| for each update.
  std::vector<double> delta_history;
  /// max |s_t - f_t(s_{t-1})| at the start of each pass.
  std::vector<double> residual_history;
  bool converged = false;
  /// Updates applied before step t was frozen as converged; -1 if it never was.
  std::vector<std::int64_t> per_step_converged_at;
  /// Iterate after every update when DeerConfig::full_trace is set.
  std::vector<StateSequence> full_trace;
  /// Forward passes (updates plus confirming passes).
  std::size_t passes = 0;
  /// Sum over passes of the number of steps evaluated.
  std::size_t evaluated_steps = 0;
};

struct ConvergenceCheck {
  bool converged = true;
  double delta_max = 0.0;
};

/// Elementwise |next - prev| <= atol + rtol * |next|; delta_max = max |next - prev|.
ConvergenceCheck converged(const StateSequence& prev, const StateSequence& next, double atol,
                           double rtol);
ConvergenceCheck converged(std::span<const double> prev, std::span<const double> next,
                           double atol, double rtol);

/// Deterministic Rademacher probes for one (iteration, step).
struct ProbeStream {
  std::uint64_t seed = 0;
  std::uint64_t iteration = 0;
  std::uint64_t step = 0;

  /// Writes probe `sample` (length out.size()) to `out`.
  void fill(std::size_t sample, std::span<double> out) const noexcept;
};

using JvpFunction = std::function<void(std::span<const double>, std::span<double>)>;

/// Mean over n_samples of z (.) (J z) with Rademacher z: one jvp call per sample.
std::vector<double> hutchinson_diag(const JvpFunction& jvp, std::size_t dim,
                                    std::size_t n_samples, const ProbeStream& probes);

/// Applies preconditioning, damping and clipping to one step's Jacobian data laid
/// out as in AffineSequence::jac().
void condition_jacobian(AffineKind kind, std::size_t dim, std::span<double> jac,
                        const DeerConfig& cfg);

/// One Newton / quasi-Newton update over the whole sequence: linearize every f_t
/// at guess_{t-1} in parallel and solve the resulting affine recursion by scan.
StateSequence deer_iterate(const TransitionSystem& system, const StateSequence& guess,
                           std::span<const double> s0, const DeerConfig& cfg,
                           std::size_t iteration = 0);

/// Iterative driver. Holds the current iterate and the sliding-window start; states
/// before the window start have converged and are frozen.
class DeerSolver {
 public:
  DeerSolver(const TransitionSystem& system, std::span<const double> s0, DeerConfig cfg,
             std::size_t steps);
  DeerSolver(const TransitionSystem& system, std::span<const double> s0, DeerConfig cfg,
             StateSequence guess);

  /// One pass: linearizes and solves on the active window. With a window shorter than
  /// the chain, freezes the prefix whose update stayed within tolerance and moves the
  /// window start to the first step that did not; otherwise every step is refined.
  /// A pass in which every step stayed within tolerance is a confirmation and does
  /// not count as an iteration. Returns false when done.
  bool advance();

  bool done() const noexcept { return done_; }
  std::size_t window_start() const noexcept { return window_start_; }
  const StateSequence& trace() const noexcept { return result_.trace; }
  const DeerResult& result() const noexcept { return result_; }
  DeerResult take_result() { return std::move(result_); }

 private:
  void evaluate_window(std::size_t begin, std::size_t end);
  void solve_window(std::size_t begin, std::size_t end);

  const TransitionSystem& system_;
  std::vector<double> s0_;
  DeerConfig cfg_;
  std::size_t steps_;
  std::size_t dim_;
  std::size_t window_len_;
  std::size_t max_iters_;
  std::size_t window_start_ = 0;
  bool done_ = false;
  DeerResult result_;
  std::vector<double> fvals_;  // f_t(s_{t-1}) over the evaluated window
  AffineSequence jac_;         // Jacobian data over the evaluated window
  std::vector<double> next_;
  std::vector<char> settled_;  // unwindowed: step passed on the latest pass
};

/// Sliding-window step on an existing solver; equivalent to solver.advance().
bool sliding_window_update(DeerSolver& solver);

/// Runs the solver from s^(0)_t = s0 for all t (or from `guess`) until converged or
/// max_iters updates have been applied.
DeerResult run_deer(const TransitionSystem& system, std::span<const double> s0,
                    const DeerConfig& cfg, std::size_t steps);
DeerResult run_deer(const TransitionSystem& system, std::span<const double> s0,
                    const DeerConfig& cfg, StateSequence guess);

}  // namespace deermc
