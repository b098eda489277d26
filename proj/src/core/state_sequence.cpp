#include "deermc/core/state_sequence.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace deermc {

StateSequence::StateSequence(std::size_t steps, std::size_t dim, double fill)
    : steps_(steps), dim_(dim), data_(steps * dim, fill) {
  if (steps == 0 || dim == 0) throw StructuralError("StateSequence needs T >= 1 and D >= 1");
}

StateSequence::StateSequence(std::size_t steps, std::size_t dim, std::vector<double> data)
    : steps_(steps), dim_(dim), data_(std::move(data)) {
  if (steps == 0 || dim == 0) throw StructuralError("StateSequence needs T >= 1 and D >= 1");
  if (data_.size() != steps * dim)
    throw StructuralError("StateSequence data length " + std::to_string(data_.size()) +
                          " != T*D = " + std::to_string(steps * dim));
}

StateSequence StateSequence::constant(std::size_t steps, std::span<const double> state) {
  StateSequence seq(steps, state.size());
  for (std::size_t t = 0; t < steps; ++t) std::ranges::copy(state, seq.row(t).begin());
  return seq;
}

std::size_t StateSequence::first_non_finite() const noexcept {
  for (std::size_t t = 0; t < steps_; ++t) {
    for (double v : row(t))
      if (!std::isfinite(v)) return t;
  }
  return steps_;
}

void require_same_shape(const StateSequence& a, const StateSequence& b, const char* what) {
  if (a.steps() != b.steps() || a.dim() != b.dim())
    throw StructuralError(std::string(what) + ": shape mismatch (" + std::to_string(a.steps()) +
                          "x" + std::to_string(a.dim()) + " vs " + std::to_string(b.steps()) +
                          "x" + std::to_string(b.dim()) + ")");
}

}  // namespace deermc
