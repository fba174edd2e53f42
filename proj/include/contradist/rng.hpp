#pragma once

#include <cstddef>
#include <cstdint>
#include <span>

namespace contradist {

// Portable counter-based generator. Output i of a stream is
// splitmix64_finalize(key + i * golden_gamma), so a (seed, stream) pair fixes
// the whole sequence on every platform. Normals use Box-Muller.
class Rng {
 public:
  explicit Rng(std::uint64_t seed, std::uint64_t stream = 0);

  std::uint64_t next_u64() noexcept;
  // Uniform on [0, 1) with 53 random bits.
  double uniform() noexcept;
  double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform(); }
  // Standard normal. Draws come in Box-Muller pairs; the sine half is cached.
  double normal() noexcept;
  // Uniform integer in [0, n); n > 0. Rejection-sampled, unbiased.
  std::uint64_t below(std::uint64_t n) noexcept;

  // Fisher-Yates.
  void shuffle(std::span<std::size_t> items) noexcept;

  // Independent child stream derived from this generator's key.
  Rng fork(std::uint64_t stream) const noexcept;

  std::uint64_t counter() const noexcept { return counter_; }

 private:
  Rng() = default;

  std::uint64_t key_ = 0;
  std::uint64_t counter_ = 0;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

std::uint64_t splitmix64_finalize(std::uint64_t z) noexcept;

}  // namespace contradist
