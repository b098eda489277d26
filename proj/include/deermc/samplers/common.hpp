#pragma once

#include <cmath>

namespace deermc {

/// log sigma(z), stable for large |z|.
inline double log_sigmoid(double z) noexcept {
  return z >= 0 ? -std::log1p(std::exp(-z)) : z - std::log1p(std::exp(z));
}

/// sigma'(z) = sigma(z) sigma(-z), evaluated in log space.
inline double sigmoid_slope(double z) noexcept {
  return std::exp(log_sigmoid(z) + log_sigmoid(-z));
}

inline double sigmoid(double z) noexcept { return std::exp(log_sigmoid(z)); }

}  // namespace deermc
