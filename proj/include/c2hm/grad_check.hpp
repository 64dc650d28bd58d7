#pragma once

#include <functional>
#include <span>
#include <vector>

#include "c2hm/tape.hpp"

namespace c2hm {

// Builds a scalar on the tape from leaves holding the evaluation point.
using ScalarFunction = std::function<Var(Tape&, std::span<const Var>)>;

struct GradCheckResult {
  double max_relative_error = 0.0;
  std::size_t worst_input = 0;
  std::size_t worst_index = 0;
  std::size_t coordinates = 0;
};

/// Compares reverse-mode gradients with central differences.
///
/// Error per coordinate is |analytic - numeric| / max(1, |numeric|). The
/// function must be deterministic and differentiable at the point; if
/// `max_coordinates_per_input` is nonzero, only an evenly strided subset of
/// each input is probed.
GradCheckResult grad_check(const ScalarFunction& f, std::span<const Tensor> point, double step = 1e-5,
                           std::size_t max_coordinates_per_input = 0);

double grad_check(const std::function<Var(Tape&, Var)>& f, const Tensor& point, double step = 1e-5);

}  // namespace c2hm
