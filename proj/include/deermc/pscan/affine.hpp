#pragma once

#include <cstddef>
#include <span>
#include <variant>
#include <vector>

#include "deermc/core/state_sequence.hpp"

namespace deermc {

class WorkerPool;

/// x -> J x + u with a full row-major D x D matrix.
struct DenseAffine {
  std::size_t dim = 0;
  std::vector<double> jac;
  std::vector<double> shift;
};

/// x -> j (.) x + u.
struct DiagAffine {
  std::vector<double> jac;
  std::vector<double> shift;
};

/// [x; v] -> [[diag(a), diag(b)], [diag(c), diag(d)]] [x; v] + u, with a..d of
/// length n and u of length 2n.
struct Block2x2Affine {
  std::vector<double> a, b, c, d;
  std::vector<double> shift;
};

using AffineElement = std::variant<DenseAffine, DiagAffine, Block2x2Affine>;

enum class AffineKind { dense, diag, block2x2 };

AffineKind kind_of(const AffineElement& e) noexcept;

/// State dimension the element acts on.
std::size_t state_dim(const AffineElement& e) noexcept;

AffineElement identity_element(AffineKind kind, std::size_t state_dim);

/// The element for x -> later(earlier(x)). Throws StructuralError on variant or
/// dimension mismatch.
AffineElement compose(const AffineElement& later, const AffineElement& earlier);

std::vector<double> apply(const AffineElement& e, std::span<const double> x);

/// Row-major dense expansion of the linear part.
std::vector<double> dense_matrix(const AffineElement& e);

/// T affine elements of one kind, stored structure-of-arrays so that the
/// Jacobian data of step t is one contiguous block.
class AffineSequence {
 public:
  AffineSequence() = default;
  AffineSequence(AffineKind kind, std::size_t steps, std::size_t state_dim);

  AffineKind kind() const noexcept { return kind_; }
  std::size_t steps() const noexcept { return steps_; }
  std::size_t state_dim() const noexcept { return dim_; }
  /// Doubles of Jacobian data per step: D*D, D, or 4n = 2D.
  std::size_t jac_stride() const noexcept { return stride_; }

  std::span<double> jac(std::size_t t) noexcept { return {jac_.data() + t * stride_, stride_}; }
  std::span<const double> jac(std::size_t t) const noexcept {
    return {jac_.data() + t * stride_, stride_};
  }
  std::span<double> shift(std::size_t t) noexcept { return {shift_.data() + t * dim_, dim_}; }
  std::span<const double> shift(std::size_t t) const noexcept {
    return {shift_.data() + t * dim_, dim_};
  }

  AffineElement element(std::size_t t) const;
  void set(std::size_t t, const AffineElement& e);

  /// Bytes held for Jacobian data, excluding the shifts.
  std::size_t jacobian_bytes() const noexcept { return jac_.size() * sizeof(double); }

  /// Resizes to `steps` while keeping kind and dimension; contents unspecified.
  void resize(std::size_t steps);

  /// Removes the first `count` elements.
  void drop_front(std::size_t count);

 private:
  AffineKind kind_ = AffineKind::diag;
  std::size_t steps_ = 0;
  std::size_t dim_ = 0;
  std::size_t stride_ = 0;
  std::vector<double> jac_;
  std::vector<double> shift_;
};

struct ScanOptions {
  WorkerPool* pool = nullptr;  // nullptr: default_pool()
  std::size_t chunk = 0;       // 0: max(T / (8 * workers), 256)
  /// Force the blocked scan even with one worker (tests).
  bool force_blocked = false;
};

struct ScanStats {
  std::size_t chunks = 0;
  std::size_t chunk_size = 0;
  std::size_t scratch_bytes = 0;
};

/// s_t = (e_t o ... o e_1)(s0) for every t, written time-major into `out`
/// (steps * D doubles). Blocked two-pass scan: per-chunk reduction, a serial pass
/// over chunk summaries, then per-chunk replay.
void parallel_affine_solve(const AffineSequence& elements, std::span<const double> s0,
                           std::span<double> out, const ScanOptions& options = {},
                           ScanStats* stats = nullptr);

StateSequence parallel_affine_solve(const AffineSequence& elements, std::span<const double> s0,
                                    const ScanOptions& options = {}, ScanStats* stats = nullptr);

/// Plain loop s_t = J_t s_{t-1} + u_t.
void sequential_affine_solve(const AffineSequence& elements, std::span<const double> s0,
                             std::span<double> out);

StateSequence sequential_affine_solve(const AffineSequence& elements,
                                      std::span<const double> s0);

}  // namespace deermc
