#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "deermc/core/state_sequence.hpp"
#include "deermc/core/target_model.hpp"

namespace deermc {

/// Design matrix (row-major N x D) with binary labels.
struct Dataset {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> x;
  std::vector<double> y;
};

enum class ModelKind { std_normal, gaussian, rosenbrock, mog, blr };

std::string to_string(ModelKind kind);
ModelKind parse_model_kind(const std::string& text);

struct ModelSpec {
  ModelKind kind = ModelKind::std_normal;
  std::size_t dim = 2;

  // gaussian: mean and lower Cholesky factor L of the precision, P = L L^T
  std::vector<double> mean;
  std::vector<double> precision_chol;

  // rosenbrock: log p = -(x1-a)^2/(2 s1) - (x2 - b x1^2)^2/(2 s2)
  double rosen_a = 0.0;
  double rosen_b = 1.0;
  double rosen_var1 = 1.0;
  double rosen_var2 = 0.1;

  // mog: K weights, K*D means, K isotropic variances
  std::vector<double> weights;
  std::vector<double> means;
  std::vector<double> variances;

  // blr
  Dataset data;
  double prior_precision = 1.0;

  /// Throws ConfigError.
  void validate() const;
};

/// 4 unit-variance components at (+-3, +-3) with equal weights.
ModelSpec default_mog_spec();
ModelSpec std_normal_spec(std::size_t dim);
ModelSpec rosenbrock_spec(double a = 0.0, double b = 1.0, double var1 = 1.0, double var2 = 0.1);
/// Gaussian with covariance `cov` (row-major, symmetric positive definite).
ModelSpec gaussian_spec_from_covariance(std::vector<double> mean, const std::vector<double>& cov);
ModelSpec blr_spec(Dataset data, double prior_precision = 1.0);

TargetModelPtr make_model(const ModelSpec& spec);

/// Independent exact draws (std-normal, gaussian, rosenbrock, mog); ConfigError for blr.
StateSequence exact_samples(const ModelSpec& spec, std::size_t n, std::uint64_t seed);

}  // namespace deermc
