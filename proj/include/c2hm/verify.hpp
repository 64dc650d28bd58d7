#pragma once

#include <cstdint>

#include "c2hm/report.hpp"

namespace c2hm {

struct VerifyOptions {
  std::uint64_t seed = 1;
  // Replaces one checked function by a variant whose tape gradient is
  // missing a path, so the gradient criterion must fail.
  bool inject_grad_bug = false;
  std::size_t mc_samples = 100000;
};

/// Property suite: gradient checks, KL and entropy oracles, contraction and
/// fixed-point properties, descent properties, BFS against enumeration and
/// IDX round-trips. One verdict per criterion.
ExperimentReport run_verify(const VerifyOptions& options);

// Length (moves) of the shortest start -> goal path by enumerating every
// simple path; -1 when none exists. Exponential, intended for grids <= 6x6.
int enumerate_shortest_path(const GridWorld& grid);

}  // namespace c2hm
