#pragma once

#include <cstddef>
#include <cstdint>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "deermc/core/errors.hpp"
#include "deermc/deer/deer.hpp"

namespace deermc::cli {

/// Bad command line or config setting; exit code 1.
class UsageError : public ConfigError {
 public:
  UsageError(const std::string& field, const std::string& what)
      : ConfigError(field + ": " + what), field_(field) {}
  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

enum class SamplerKind { mala, hmc, hmc_parallel_leapfrog, gibbs };
enum class Method { sequential, deer_dense, quasi_deer, block_quasi_deer };

std::string to_string(SamplerKind s);
std::string to_string(Method m);

struct RunConfig {
  SamplerKind sampler = SamplerKind::mala;
  /// std-normal, gaussian, rosenbrock, mog, blr-synthetic, eight-schools, or a CSV
  /// path; empty picks eight-schools for gibbs and std-normal otherwise.
  std::string target;
  Method method = Method::quasi_deer;
  std::size_t T = 1000;
  std::size_t B = 1;
  std::uint64_t seed = 0;

  double eps = 0.1;
  std::size_t leapfrog_steps = 8;
  std::vector<double> mass;
  bool orthogonal = false;

  // target details
  std::size_t dim = 2;
  double prior_precision = 1.0;
  std::vector<double> rosenbrock{0.0, 1.0, 1.0, 0.1};  // a, b, var1, var2
  std::vector<double> init;

  // solver
  double atol = 1e-4;
  double rtol = 1e-3;
  std::size_t max_iters = 0;
  std::size_t hutchinson_samples = 1;
  double damping = 1.0;
  double clip = std::numeric_limits<double>::infinity();
  std::size_t window = 0;
  bool full_trace = false;
  std::vector<double> preconditioner;

  std::size_t warmups = 0;
  std::size_t reps = 1;
  std::size_t threads = 0;  // 0: DEERMC_THREADS or hardware
  std::string out;
  bool csv = false;

  /// Throws UsageError naming the field.
  void validate() const;
  DeerConfig deer_config() const;
};

/// Keys are flag names without the leading dashes; '_' and '-' are interchangeable.
void apply_setting(RunConfig& cfg, std::string key, const std::string& value);

/// key=value lines; '#' starts a comment; blank lines ignored.
void load_config_file(RunConfig& cfg, const std::string& path);

/// Every setting in canonical text form; applying them to a default config
/// reproduces `cfg` exactly.
std::vector<std::pair<std::string, std::string>> settings(const RunConfig& cfg);

/// Names accepted by apply_setting.
const std::vector<std::string>& setting_names();

}  // namespace deermc::cli
