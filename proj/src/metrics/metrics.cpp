#include "deermc/metrics/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

#include "deermc/core/errors.hpp"
#include "deermc/core/worker_pool.hpp"

namespace deermc {
namespace {

WorkerPool& pick(WorkerPool* pool) { return pool ? *pool : default_pool(); }

double sq_dist(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return s;
}

// Sum of k(a_i, b_j) over all pairs, skipping i == j when `self`.
double kernel_sum(const SampleSet& a, const SampleSet& b, bool self, double inv2s2, WorkerPool& pool,
                  std::size_t tile) {
  const std::size_t na = a.steps(), nb = b.steps();
  const std::size_t ta = (na + tile - 1) / tile, tb = (nb + tile - 1) / tile;
  std::vector<double> partial(ta * tb, 0.0);
  pool.parallel_for(ta * tb, 1, [&](std::size_t lo, std::size_t hi) {
    for (std::size_t k = lo; k < hi; ++k) {
      const std::size_t bi = k / tb, bj = k % tb;
      if (self && bj < bi) continue;  // symmetric: upper tiles only
      const std::size_t i_end = std::min(na, (bi + 1) * tile), j_end = std::min(nb, (bj + 1) * tile);
      double s = 0.0;
      for (std::size_t i = bi * tile; i < i_end; ++i) {
        const auto ai = a.row(i);
        std::size_t j0 = bj * tile;
        if (self && bi == bj) j0 = i + 1;
        for (std::size_t j = j0; j < j_end; ++j) s += std::exp(-sq_dist(ai, b.row(j)) * inv2s2);
      }
      partial[k] = self ? 2.0 * s : s;
    }
  });
  double total = 0.0;
  for (double p : partial) total += p;
  return total;
}

}  // namespace

double mmd_unbiased(const SampleSet& x, const SampleSet& y, double sigma, WorkerPool* pool,
                    std::size_t tile) {
  if (x.steps() < 2 || y.steps() < 2) throw ContractError("mmd_unbiased needs at least two points per set");
  if (!(sigma > 0.0)) throw ContractError("mmd_unbiased bandwidth must be positive");
  if (x.dim() != y.dim()) throw StructuralError("mmd_unbiased: sample dimensions differ");
  if (tile == 0) tile = 256;
  auto& p = pick(pool);
  const double inv = 1.0 / (2.0 * sigma * sigma);
  const double n = static_cast<double>(x.steps()), m = static_cast<double>(y.steps());
  const double kxx = kernel_sum(x, x, true, inv, p, tile);
  const double kyy = kernel_sum(y, y, true, inv, p, tile);
  const double kxy = kernel_sum(x, y, false, inv, p, tile);
  return kxx / (n * (n - 1)) + kyy / (m * (m - 1)) - 2.0 * kxy / (n * m);
}

double median_heuristic(const SampleSet& y, std::size_t max_subsample, std::size_t reps,
                        std::uint64_t seed) {
  if (y.steps() < 2) throw ContractError("median_heuristic needs at least two points");
  if (reps == 0) reps = 1;
  const std::size_t m = std::min(y.steps(), std::max<std::size_t>(max_subsample, 2));
  std::mt19937_64 rng(seed);
  std::vector<std::size_t> idx(y.steps());
  std::vector<double> dists;
  double total = 0.0;
  for (std::size_t r = 0; r < reps; ++r) {
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    // partial Fisher-Yates for the first m positions
    for (std::size_t i = 0; i < m && m < y.steps(); ++i) {
      std::uniform_int_distribution<std::size_t> pick_j(i, y.steps() - 1);
      std::swap(idx[i], idx[pick_j(rng)]);
    }
    dists.clear();
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = i + 1; j < m; ++j) dists.push_back(std::sqrt(sq_dist(y.row(idx[i]), y.row(idx[j]))));
    const std::size_t half = dists.size() / 2;
    std::nth_element(dists.begin(), dists.begin() + half, dists.end());
    double med = dists[half];
    if (dists.size() % 2 == 0) med = 0.5 * (med + *std::max_element(dists.begin(), dists.begin() + half));
    total += med;
  }
  const double sigma = total / static_cast<double>(reps);
  if (!(sigma > 0.0)) throw ContractError("median_heuristic: all sampled points coincide");
  return sigma;
}

double mmd_bootstrap_se(const SampleSet& x, const SampleSet& y, double sigma, std::size_t reps,
                        std::uint64_t seed, WorkerPool* pool) {
  if (reps < 2) throw ContractError("mmd_bootstrap_se needs at least two resamples");
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> row(0, x.steps() - 1);
  std::vector<double> vals;
  SampleSet xb(x.steps(), x.dim());
  for (std::size_t r = 0; r < reps; ++r) {
    for (std::size_t i = 0; i < x.steps(); ++i) {
      const auto src = x.row(row(rng));
      std::copy(src.begin(), src.end(), xb.row(i).begin());
    }
    vals.push_back(mmd_unbiased(xb, y, sigma, pool));
  }
  const double mean = std::accumulate(vals.begin(), vals.end(), 0.0) / static_cast<double>(reps);
  double var = 0.0;
  for (double v : vals) var += (v - mean) * (v - mean);
  return std::sqrt(var / static_cast<double>(reps - 1));
}

SampleSet thin(const StateSequence& trace, std::size_t stride, std::size_t burn_in) {
  if (stride == 0) throw ConfigError("thin: stride must be positive");
  if (burn_in >= trace.steps()) throw ConfigError("thin: burn-in covers the whole trace");
  const std::size_t n = (trace.steps() - burn_in + stride - 1) / stride;
  SampleSet out(n, trace.dim());
  for (std::size_t i = 0; i < n; ++i) {
    const auto src = trace.row(burn_in + i * stride);
    std::copy(src.begin(), src.end(), out.row(i).begin());
  }
  return out;
}

EssResult ess(const StateSequence& chain, WorkerPool* pool) {
  const std::size_t T = chain.steps(), D = chain.dim();
  if (T < 8) throw ContractError("ess needs at least 8 steps");
  EssResult res;
  res.per_dim.assign(D, 0.0);
  std::vector<char> degenerate(D, 0);
  pick(pool).parallel_for(D, 1, [&](std::size_t lo, std::size_t hi) {
    std::vector<double> x(T);
    for (std::size_t d = lo; d < hi; ++d) {
      double mean = 0.0;
      for (std::size_t t = 0; t < T; ++t) mean += (x[t] = chain(t, d));
      mean /= static_cast<double>(T);
      for (auto& v : x) v -= mean;
      auto autocov = [&](std::size_t k) {
        double s = 0.0;
        for (std::size_t t = 0; t + k < T; ++t) s += x[t] * x[t + k];
        return s / static_cast<double>(T);
      };
      const double g0 = autocov(0);
      if (!(g0 > 0.0)) {
        degenerate[d] = 1;
        continue;
      }
      double sum = 0.0, prev_pair = std::numeric_limits<double>::infinity();
      for (std::size_t k = 0; 2 * k + 1 < T; ++k) {
        double pair = (autocov(2 * k) + autocov(2 * k + 1)) / g0;
        if (!(pair > 0.0)) break;
        pair = std::min(pair, prev_pair);
        sum += pair;
        prev_pair = pair;
      }
      const double tau = std::max(-1.0 + 2.0 * sum, 1.0 / std::log10(static_cast<double>(T)));
      res.per_dim[d] = static_cast<double>(T) / tau;
    }
  });
  for (std::size_t d = 0; d < D; ++d)
    if (degenerate[d]) throw ContractError("ess undefined for a constant dimension " + std::to_string(d));
  res.min = *std::min_element(res.per_dim.begin(), res.per_dim.end());
  res.mean = std::accumulate(res.per_dim.begin(), res.per_dim.end(), 0.0) / static_cast<double>(D);
  return res;
}

TraceError trace_error(const StateSequence& a, const StateSequence& b) {
  require_same_shape(a, b, "trace_error");
  TraceError e;
  e.per_step.assign(a.steps(), 0.0);
  for (std::size_t t = 0; t < a.steps(); ++t) {
    double m = 0.0;
    for (std::size_t d = 0; d < a.dim(); ++d) m = std::max(m, std::abs(a(t, d) - b(t, d)));
    e.per_step[t] = m;
    if (m > e.max_abs) {
      e.max_abs = m;
      e.argmax_step = t;
    }
  }
  return e;
}

double acceptance_rate(const std::vector<bool>& gates) {
  if (gates.empty()) throw ContractError("acceptance_rate of an empty sequence");
  const auto n = std::count(gates.begin(), gates.end(), true);
  return static_cast<double>(n) / static_cast<double>(gates.size());
}

std::vector<bool> moved_steps(const StateSequence& trace, std::span<const double> s0) {
  if (!s0.empty() && s0.size() != trace.dim()) throw StructuralError("moved_steps: initial state dimension differs");
  std::vector<bool> out(trace.steps());
  for (std::size_t t = 0; t < trace.steps(); ++t) {
    if (t == 0 && s0.empty()) {
      out[t] = true;
      continue;
    }
    const auto prev = previous_state(trace, s0, t), row = trace.row(t);
    out[t] = !std::equal(row.begin(), row.end(), prev.begin());
  }
  return out;
}

std::vector<bool> accept_decisions(const TransitionSystem& system, const StateSequence& trace,
                                   std::span<const double> s0) {
  std::vector<char> flags(trace.steps(), 1);
  default_pool().parallel_for(trace.steps(), 512, [&](std::size_t lo, std::size_t hi) {
    for (std::size_t t = lo; t < hi; ++t) flags[t] = system.accepted(t, previous_state(trace, s0, t)).value_or(true);
  });
  return {flags.begin(), flags.end()};
}

}  // namespace deermc
