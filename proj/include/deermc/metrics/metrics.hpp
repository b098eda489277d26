#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "deermc/core/state_sequence.hpp"
#include "deermc/core/transition_system.hpp"

namespace deermc {

class WorkerPool;

/// Sample sets are M x D arrays held as StateSequence rows.
using SampleSet = StateSequence;

/// Unbiased MMD^2 with k(x, y) = exp(-|x - y|^2 / (2 sigma^2)). Evaluated in
/// tile x tile blocks whose partial sums are reduced in a fixed order.
double mmd_unbiased(const SampleSet& x, const SampleSet& y, double sigma,
                    WorkerPool* pool = nullptr, std::size_t tile = 256);

/// Mean over `reps` subsamples of the median pairwise Euclidean distance.
double median_heuristic(const SampleSet& y, std::size_t max_subsample = 1000,
                        std::size_t reps = 10, std::uint64_t seed = 0);

/// Standard deviation of mmd_unbiased over row resamples (with replacement) of x.
double mmd_bootstrap_se(const SampleSet& x, const SampleSet& y, double sigma, std::size_t reps,
                        std::uint64_t seed, WorkerPool* pool = nullptr);

/// Rows t = 0, stride, 2 stride, ... of a trace.
SampleSet thin(const StateSequence& trace, std::size_t stride, std::size_t burn_in = 0);

struct EssResult {
  std::vector<double> per_dim;
  double min = 0.0;
  double mean = 0.0;
};

/// Geyer initial monotone sequence on direct autocovariances, per dimension.
EssResult ess(const StateSequence& chain, WorkerPool* pool = nullptr);

struct TraceError {
  double max_abs = 0.0;
  std::size_t argmax_step = 0;
  std::vector<double> per_step;
};

TraceError trace_error(const StateSequence& a, const StateSequence& b);

double acceptance_rate(const std::vector<bool>& gates);

/// Steps whose state differs from its predecessor (s0 for t = 0); for continuous
/// proposals this recovers accept decisions from a trace alone.
std::vector<bool> moved_steps(const StateSequence& trace, std::span<const double> s0);

/// Gate decision of every step evaluated at the trace's own predecessor states.
/// Systems without a gate yield all-true.
std::vector<bool> accept_decisions(const TransitionSystem& system, const StateSequence& trace,
                                   std::span<const double> s0);

}  // namespace deermc
