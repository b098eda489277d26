#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "deermc/targets/models.hpp"

namespace deermc {

/// Reads an N x (D+1) CSV whose last column is a 0/1 label. An optional first
/// row of non-numeric column names is skipped. Throws ParseError with the line.
Dataset load_design_matrix(const std::string& path, bool standardize);
Dataset parse_design_matrix(const std::string& text, bool standardize);

/// Centers every column and scales it to unit (population) variance.
void standardize_columns(Dataset& data);

struct SyntheticLogistic {
  Dataset data;
  std::vector<double> beta;
};

/// X ~ N(0, I), beta ~ N(0, I), y ~ Bernoulli(sigmoid(X beta)); deterministic in seed.
SyntheticLogistic synthetic_logistic(std::size_t rows = 1000, std::size_t cols = 25,
                                     std::uint64_t seed = 20240917);

void write_design_matrix(const Dataset& data, const std::string& path);

}  // namespace deermc
