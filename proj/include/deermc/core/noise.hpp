#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace deermc {

class WorkerPool;

enum class NoiseKind { standard_normal, uniform, chi_squared };

struct NoiseSlot {
  std::string name;
  std::size_t per_step = 1;
  NoiseKind kind = NoiseKind::standard_normal;
  double dof = 0.0;  // chi_squared only
};

/// Named noise slots consumed by one transition kernel.
class NoiseLayout {
 public:
  NoiseLayout& add(std::string name, std::size_t per_step, NoiseKind kind, double dof = 0.0);

  std::size_t index_of(std::string_view name) const;  // throws ConfigError
  const NoiseSlot& slot(std::size_t index) const { return slots_.at(index); }
  std::size_t size() const noexcept { return slots_.size(); }

 private:
  std::vector<NoiseSlot> slots_;
};

/// Stateless 64-bit counter hash. Equal arguments give equal output.
std::uint64_t counter_hash(std::uint64_t seed, std::uint64_t a, std::uint64_t b, std::uint64_t c,
                           std::uint64_t d) noexcept;

/// Maps 53 random bits to the open interval (0, 1).
double bits_to_open_unit(std::uint64_t bits) noexcept;

/// Stable per-name key; slots are namespaced by this rather than by layout position.
std::uint64_t slot_key(std::string_view name) noexcept;

/// Draw k of slot `slot` at step t. Pure in (seed, t, slot, k).
double noise_at(std::uint64_t seed, const NoiseLayout& layout, std::size_t steps, std::size_t t,
                std::string_view slot, std::size_t k);

/// +1 or -1 from the counter hash; used for Hutchinson probes.
inline double rademacher(std::uint64_t seed, std::uint64_t a, std::uint64_t b, std::uint64_t c,
                         std::uint64_t d) noexcept {
  return (counter_hash(seed, a, b, c, d) >> 63) ? 1.0 : -1.0;
}

/// Chi-squared(dof) quantile at probability u in (0, 1).
double chi_squared_quantile(double dof, double u);

/// Seed-addressable input randomness for T steps. Values are computed on demand
/// from the counter hash, or read from a cache after materialize(); both paths
/// return bit-identical numbers.
class NoiseTable {
 public:
  NoiseTable(std::uint64_t seed, NoiseLayout layout, std::size_t steps);

  std::uint64_t seed() const noexcept { return seed_; }
  std::size_t steps() const noexcept { return steps_; }
  const NoiseLayout& layout() const noexcept { return layout_; }

  std::size_t slot(std::string_view name) const { return layout_.index_of(name); }

  /// Checked access by slot name.
  double at(std::size_t t, std::string_view slot, std::size_t k) const;

  /// Unchecked access by resolved slot index.
  double at(std::size_t slot_index, std::size_t t, std::size_t k) const noexcept;

  /// Copies the per_step draws of one slot at step t into `out`.
  void fill(std::size_t slot_index, std::size_t t, std::span<double> out) const noexcept;

  /// Precomputes every draw. Must finish before the table is shared across threads.
  void materialize(WorkerPool* pool = nullptr);
  bool materialized() const noexcept { return !cache_.empty(); }

 private:
  double compute(std::size_t slot_index, std::size_t t, std::size_t k) const noexcept;

  std::uint64_t seed_;
  NoiseLayout layout_;
  std::size_t steps_;
  std::vector<std::uint64_t> keys_;
  std::vector<std::vector<double>> cache_;
};

}  // namespace deermc
