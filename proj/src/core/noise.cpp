#include "deermc/core/noise.hpp"

#include <boost/math/special_functions/gamma.hpp>
#include <cmath>
#include <numbers>

#include "deermc/core/errors.hpp"
#include "deermc/core/worker_pool.hpp"

namespace deermc {

namespace {

constexpr std::uint64_t splitmix(std::uint64_t z) noexcept {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace

std::uint64_t counter_hash(std::uint64_t seed, std::uint64_t a, std::uint64_t b, std::uint64_t c,
                           std::uint64_t d) noexcept {
  std::uint64_t h = splitmix(seed);
  h = splitmix(h ^ a);
  h = splitmix(h ^ b);
  h = splitmix(h ^ c);
  return splitmix(h ^ d);
}

double bits_to_open_unit(std::uint64_t bits) noexcept {
  return (static_cast<double>(bits >> 11) + 0.5) * 0x1.0p-53;
}

std::uint64_t slot_key(std::string_view name) noexcept {
  std::uint64_t h = 0xcbf29ce484222325ULL;  // FNV-1a
  for (unsigned char c : name) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return splitmix(h);
}

double chi_squared_quantile(double dof, double u) {
  if (!(dof > 0.0)) throw ConfigError("chi-squared degrees of freedom must be positive");
  if (!(u > 0.0 && u < 1.0)) throw ContractError("chi-squared quantile needs u in (0, 1)");
  return 2.0 * boost::math::gamma_p_inv(0.5 * dof, u);
}

NoiseLayout& NoiseLayout::add(std::string name, std::size_t per_step, NoiseKind kind, double dof) {
  for (const auto& s : slots_)
    if (s.name == name) throw ConfigError("duplicate noise slot '" + name + "'");
  if (per_step == 0) throw ConfigError("noise slot '" + name + "' has zero draws per step");
  if (kind == NoiseKind::chi_squared && !(dof > 0.0))
    throw ConfigError("chi-squared slot '" + name + "' needs dof > 0");
  slots_.push_back({std::move(name), per_step, kind, dof});
  return *this;
}

std::size_t NoiseLayout::index_of(std::string_view name) const {
  for (std::size_t i = 0; i < slots_.size(); ++i)
    if (slots_[i].name == name) return i;
  throw ConfigError("undeclared noise slot '" + std::string(name) + "'");
}

NoiseTable::NoiseTable(std::uint64_t seed, NoiseLayout layout, std::size_t steps)
    : seed_(seed), layout_(std::move(layout)), steps_(steps) {
  keys_.reserve(layout_.size());
  for (std::size_t i = 0; i < layout_.size(); ++i) keys_.push_back(slot_key(layout_.slot(i).name));
}

double NoiseTable::compute(std::size_t slot_index, std::size_t t, std::size_t k) const noexcept {
  const NoiseSlot& s = layout_.slot(slot_index);
  const std::uint64_t key = keys_[slot_index];
  switch (s.kind) {
    case NoiseKind::uniform:
      return bits_to_open_unit(counter_hash(seed_, key, t, k, 0));
    case NoiseKind::standard_normal: {
      const double u1 = bits_to_open_unit(counter_hash(seed_, key, t, k, 1));
      const double u2 = bits_to_open_unit(counter_hash(seed_, key, t, k, 2));
      return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
    }
    case NoiseKind::chi_squared: {
      const double u = bits_to_open_unit(counter_hash(seed_, key, t, k, 0));
      return 2.0 * boost::math::gamma_p_inv(0.5 * s.dof, u);
    }
  }
  return 0.0;
}

double NoiseTable::at(std::size_t t, std::string_view slot, std::size_t k) const {
  const std::size_t i = layout_.index_of(slot);
  if (t >= steps_)
    throw IndexError("noise step " + std::to_string(t) + " >= T = " + std::to_string(steps_));
  if (k >= layout_.slot(i).per_step)
    throw IndexError("noise index " + std::to_string(k) + " out of range for slot '" +
                     std::string(slot) + "'");
  return at(i, t, k);
}

double NoiseTable::at(std::size_t slot_index, std::size_t t, std::size_t k) const noexcept {
  if (!cache_.empty()) return cache_[slot_index][t * layout_.slot(slot_index).per_step + k];
  return compute(slot_index, t, k);
}

void NoiseTable::fill(std::size_t slot_index, std::size_t t, std::span<double> out) const noexcept {
  const std::size_t n = layout_.slot(slot_index).per_step;
  if (!cache_.empty()) {
    const double* src = cache_[slot_index].data() + t * n;
    for (std::size_t k = 0; k < n; ++k) out[k] = src[k];
    return;
  }
  for (std::size_t k = 0; k < n; ++k) out[k] = compute(slot_index, t, k);
}

void NoiseTable::materialize(WorkerPool* pool) {
  if (materialized()) return;
  std::vector<std::vector<double>> cache(layout_.size());
  for (std::size_t i = 0; i < layout_.size(); ++i) {
    const std::size_t n = layout_.slot(i).per_step;
    cache[i].resize(steps_ * n);
    auto body = [&, i, n](std::size_t begin, std::size_t end) {
      for (std::size_t t = begin; t < end; ++t)
        for (std::size_t k = 0; k < n; ++k) cache[i][t * n + k] = compute(i, t, k);
    };
    if (pool) {
      pool->parallel_for(steps_, 4096, body);
    } else {
      body(0, steps_);
    }
  }
  cache_ = std::move(cache);
}

double noise_at(std::uint64_t seed, const NoiseLayout& layout, std::size_t steps, std::size_t t,
                std::string_view slot, std::size_t k) {
  return NoiseTable(seed, layout, steps).at(t, slot, k);
}

}  // namespace deermc
