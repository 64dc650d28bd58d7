#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>

#include "c2hm/tensor.hpp"

namespace c2hm {

/// xoshiro256** seeded through splitmix64.
///
/// Normals come from Box-Muller; both outputs of a pair are consumed in
/// order (cosine branch first), so streams are reproducible in any port
/// that follows the same recipe.
class SeededRng {
 public:
  explicit SeededRng(std::uint64_t seed = 0);

  std::uint64_t seed() const { return seed_; }
  std::uint64_t next_u64();
  // Uniform on [0, 1) with 53 random bits.
  double uniform();
  // Uniform integer on [0, n) by rejection; n > 0.
  std::uint64_t uniform_index(std::uint64_t n);
  double standard_normal();

  // Independent child stream derived from this generator's seed and a tag.
  SeededRng fork(std::uint64_t tag) const;

 private:
  std::uint64_t seed_;
  std::array<std::uint64_t, 4> s_{};
  bool has_spare_ = false;
  double spare_ = 0.0;
};

Tensor rng_standard_normal(SeededRng& rng, const Shape& shape);
Tensor rng_uniform(SeededRng& rng, const Shape& shape, double lo, double hi);

// Fisher-Yates with SeededRng::uniform_index, portable across standard libraries.
void shuffle_indices(std::span<std::size_t> indices, SeededRng& rng);

}  // namespace c2hm
