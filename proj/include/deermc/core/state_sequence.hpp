#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "deermc/core/errors.hpp"

namespace deermc {

/// Time-major T x D array of chain states. Row t holds s_{t+1}; the initial
/// state s_0 is kept outside the sequence.
class StateSequence {
 public:
  StateSequence() = default;
  StateSequence(std::size_t steps, std::size_t dim, double fill = 0.0);
  StateSequence(std::size_t steps, std::size_t dim, std::vector<double> data);

  /// Every row set to `state`.
  static StateSequence constant(std::size_t steps, std::span<const double> state);

  std::size_t steps() const noexcept { return steps_; }
  std::size_t dim() const noexcept { return dim_; }
  bool empty() const noexcept { return steps_ == 0; }

  std::span<double> row(std::size_t t) noexcept { return {data_.data() + t * dim_, dim_}; }
  std::span<const double> row(std::size_t t) const noexcept {
    return {data_.data() + t * dim_, dim_};
  }
  double& operator()(std::size_t t, std::size_t d) noexcept { return data_[t * dim_ + d]; }
  double operator()(std::size_t t, std::size_t d) const noexcept { return data_[t * dim_ + d]; }

  std::span<double> data() noexcept { return data_; }
  std::span<const double> data() const noexcept { return data_; }
  std::vector<double>& storage() noexcept { return data_; }

  /// Index of the first row holding a NaN or Inf, or steps() if all finite.
  std::size_t first_non_finite() const noexcept;

  bool operator==(const StateSequence&) const = default;

 private:
  std::size_t steps_ = 0;
  std::size_t dim_ = 0;
  std::vector<double> data_;
};

/// State preceding row t of `seq`: s0 for t == 0, otherwise row t - 1.
inline std::span<const double> previous_state(const StateSequence& seq,
                                              std::span<const double> s0, std::size_t t) {
  return t == 0 ? s0 : seq.row(t - 1);
}

void require_same_shape(const StateSequence& a, const StateSequence& b, const char* what);

}  // namespace deermc
