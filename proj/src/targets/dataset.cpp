#include "deermc/targets/dataset.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "deermc/core/errors.hpp"
#include "deermc/core/noise.hpp"

namespace deermc {

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split_cells(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, ',')) cells.push_back(trim(cell));
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

bool to_double(std::string text, double& out) {
  // typographic minus sign
  for (std::size_t p; (p = text.find("\xE2\x88\x92")) != std::string::npos;) text.replace(p, 3, "-");
  if (!text.empty() && text.front() == '+') text.erase(0, 1);
  const char* end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(text.data(), end, out);
  return ec == std::errc() && ptr == end && std::isfinite(out);
}

}  // namespace

Dataset parse_design_matrix(const std::string& text, bool standardize) {
  Dataset data;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  bool first_row = true;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    const auto cells = split_cells(line);
    std::vector<double> values(cells.size());
    std::size_t numeric = 0;
    for (std::size_t i = 0; i < cells.size(); ++i) numeric += to_double(cells[i], values[i]);
    if (first_row && numeric == 0) {  // header
      first_row = false;
      continue;
    }
    if (cells.size() < 2) throw ParseError("expected at least one feature and a label", lineno);
    if (data.rows == 0) {
      data.cols = cells.size() - 1;
    } else if (cells.size() != data.cols + 1) {
      throw ParseError("ragged row: expected " + std::to_string(data.cols + 1) + " cells, found " +
                           std::to_string(cells.size()),
                       lineno);
    }
    for (std::size_t i = 0; i < cells.size(); ++i)
      if (!to_double(cells[i], values[i]))
        throw ParseError("non-numeric cell '" + cells[i] + "' in column " + std::to_string(i + 1),
                         lineno);
    const double label = values.back();
    if (label != 0.0 && label != 1.0)
      throw ParseError("label must be 0 or 1, found " + cells.back(), lineno);
    data.x.insert(data.x.end(), values.begin(), values.end() - 1);
    data.y.push_back(label);
    ++data.rows;
    first_row = false;
  }
  if (data.rows == 0) throw ParseError("no data rows", lineno);
  if (standardize) standardize_columns(data);
  return data;
}

Dataset load_design_matrix(const std::string& path, bool standardize) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open design matrix '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_design_matrix(buf.str(), standardize);
}

void standardize_columns(Dataset& data) {
  const std::size_t n = data.rows, d = data.cols;
  for (std::size_t j = 0; j < d; ++j) {
    double mean = 0;
    for (std::size_t i = 0; i < n; ++i) mean += data.x[i * d + j];
    mean /= n;
    double var = 0;
    for (std::size_t i = 0; i < n; ++i) var += (data.x[i * d + j] - mean) * (data.x[i * d + j] - mean);
    var /= n;
    const double sd = var > 0 ? std::sqrt(var) : 1.0;
    for (std::size_t i = 0; i < n; ++i) data.x[i * d + j] = (data.x[i * d + j] - mean) / sd;
  }
}

SyntheticLogistic synthetic_logistic(std::size_t rows, std::size_t cols, std::uint64_t seed) {
  NoiseLayout coef;
  coef.add("beta", cols, NoiseKind::standard_normal);
  const NoiseTable beta_noise(seed, coef, 1);
  NoiseLayout layout;
  layout.add("x", cols, NoiseKind::standard_normal).add("u", 1, NoiseKind::uniform);
  const NoiseTable noise(seed + 1, layout, rows);

  SyntheticLogistic out;
  out.beta.resize(cols);
  for (std::size_t j = 0; j < cols; ++j) out.beta[j] = beta_noise.at(0, "beta", j);
  Dataset& data = out.data;
  data.rows = rows;
  data.cols = cols;
  data.x.resize(rows * cols);
  data.y.resize(rows);
  const auto xs = noise.slot("x"), us = noise.slot("u");
  for (std::size_t i = 0; i < rows; ++i) {
    double z = 0;
    for (std::size_t j = 0; j < cols; ++j) {
      data.x[i * cols + j] = noise.at(xs, i, j);
      z += data.x[i * cols + j] * out.beta[j];
    }
    data.y[i] = noise.at(us, i, 0) < 1.0 / (1.0 + std::exp(-z)) ? 1.0 : 0.0;
  }
  return out;
}

void write_design_matrix(const Dataset& data, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write '" + path + "'");
  out.precision(17);
  for (std::size_t i = 0; i < data.rows; ++i) {
    for (std::size_t j = 0; j < data.cols; ++j) out << data.x[i * data.cols + j] << ',';
    out << static_cast<int>(data.y[i]) << '\n';
  }
}

}  // namespace deermc
