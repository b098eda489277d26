#pragma once

#include <cstddef>
#include <cstdint>
#include <array>
#include <memory>
#include <optional>
#include <span>
#include <ostream>
#include <string>
#include <vector>

#include "json.hpp"
#include "deermc/cli/config.hpp"
#include "deermc/cli/trace_file.hpp"
#include "deermc/core/transition_system.hpp"
#include "deermc/core/worker_pool.hpp"
#include "deermc/targets/basis.hpp"
#include "deermc/targets/models.hpp"

namespace deermc::cli {

std::string resolved_target(const RunConfig& cfg);

/// Model for mala/hmc targets; UsageError("target") otherwise.
ModelSpec resolve_model(const RunConfig& cfg);

/// Per-chain seed: seed xor chain index.
inline std::uint64_t chain_seed(std::uint64_t seed, std::size_t chain) { return seed ^ chain; }

/// One chain's transition system, initial state, and optional rotation.
class ChainSetup {
 public:
  ChainSetup(const RunConfig& cfg, const ModelSpec* spec, std::size_t chain, WorkerPool* pool);

  /// System the solver runs on (rotated when the orthogonal flag is set).
  const TransitionSystem& system() const;
  /// Initial state in solver coordinates.
  std::span<const double> s0() const noexcept { return s0_; }
  /// Initial state in original coordinates.
  const std::vector<double>& init() const noexcept { return init_; }
  /// Maps a solver-coordinate trace back to original coordinates.
  StateSequence to_output(StateSequence trace) const;
  /// Leapfrog solver counters for hmc-parallel-leapfrog, else zeros.
  std::array<std::size_t, 3> leapfrog_counters() const;

 private:
  std::unique_ptr<TransitionSystem> base_;
  std::unique_ptr<TransformedSystem> rotated_;
  std::vector<double> s0_, init_;
};

struct ChainOutcome {
  StateSequence trace;  // original coordinates
  bool converged = true;
  std::size_t iterations = 0;
  std::size_t passes = 0;
  std::vector<double> delta_history;
  std::vector<StateSequence> full_trace;  // solver coordinates
  std::optional<double> acceptance;
  std::size_t leapfrog_solves = 0, leapfrog_iterations = 0, leapfrog_fallbacks = 0;
};

struct RunOutcome {
  std::vector<ChainOutcome> chains;
  std::vector<double> rep_seconds;  // wall time of each timed repetition (all B chains)
  double median_seconds = 0.0;
  std::vector<double> init;
};

/// Runs warmups + reps batches of B chains; outcomes come from the last batch.
RunOutcome execute_run(const RunConfig& cfg, WorkerPool& pool);

nlohmann::json config_echo(const RunConfig& cfg);
RunConfig config_from_echo(const nlohmann::json& echo);

nlohmann::json run_report(const RunConfig& cfg, const RunOutcome& run);
TraceFile to_trace_file(const RunConfig& cfg, const RunOutcome& run);

/// Writes `<out>` + sidecar (+ `<out>.csv` with csv=true) + `<out>.report.json` when
/// cfg.out is set; prints the report. Returns the exit code.
int cmd_run(const RunConfig& cfg, std::ostream& out);

struct BenchGrid {
  std::vector<std::size_t> T;
  std::vector<std::size_t> B;
  std::vector<Method> methods;
};

inline const char* kBenchHeader = "sampler,method,B,T,median_seconds,iterations,converged_fraction,status";

/// One CSV row per grid cell; failures become rows with a status message.
int cmd_bench(const RunConfig& base, const BenchGrid& grid, std::ostream& csv);

struct MetricsRequest {
  std::string trace;
  std::string reference;         // trace file; empty: see reference_target
  std::string reference_target;  // "exact": exact draws from the trace's target
  std::size_t reference_n = 2000;
  std::vector<std::string> which{"mmd", "ess", "acceptance"};
  std::size_t max_subsample = 1000;
  std::size_t mh_reps = 10;
  std::size_t thin = 1;
  std::size_t burn_in = 0;
  std::size_t bootstrap = 0;
  std::uint64_t seed = 0;
};

nlohmann::json compute_metrics(const MetricsRequest& req, WorkerPool* pool = nullptr);
int cmd_metrics(const MetricsRequest& req, std::ostream& out, const std::string& out_path = {});

struct DiffReport {
  bool pass = true;
  double max_abs = 0.0;
  bool has_failure = false;
  std::size_t first_chain = 0, first_step = 0, first_dim = 0;
  double first_a = 0.0, first_b = 0.0;
  std::vector<double> per_step;  // chain-major max |a - b|
  nlohmann::json to_json() const;
};

/// Throws StructuralError on shape mismatch.
DiffReport diff_traces(const TraceFile& a, const TraceFile& b, double atol, double rtol);

/// Exit 0 when every element passes, 3 otherwise.
int cmd_diff(const std::string& a, const std::string& b, double atol, double rtol, std::ostream& out,
             const std::string& per_step_csv = {});

}  // namespace deermc::cli
