#include "c2hm/grad_check.hpp"

#include <algorithm>
#include <cmath>

#include "c2hm/errors.hpp"

namespace c2hm {

namespace {

double evaluate(const ScalarFunction& f, std::span<const Tensor> point) {
  Tape tape;
  std::vector<Var> leaves;
  leaves.reserve(point.size());
  for (const auto& t : point) leaves.push_back(tape.leaf(t));
  return f(tape, leaves).value().item();
}

}  // namespace

GradCheckResult grad_check(const ScalarFunction& f, std::span<const Tensor> point, double step,
                           std::size_t max_coordinates_per_input) {
  if (!(step > 0.0)) throw ContractError("grad_check: step must be positive");

  Tape tape;
  std::vector<Var> leaves;
  for (const auto& t : point) leaves.push_back(tape.leaf(t));
  const Var out = f(tape, leaves);
  const Gradients grads = tape.backward(out);

  GradCheckResult result;
  std::vector<Tensor> probe(point.begin(), point.end());
  for (std::size_t k = 0; k < probe.size(); ++k) {
    const Tensor analytic = grads[leaves[k]];
    const std::size_t n = probe[k].size();
    std::size_t stride = 1;
    if (max_coordinates_per_input > 0 && n > max_coordinates_per_input) {
      stride = (n + max_coordinates_per_input - 1) / max_coordinates_per_input;
    }
    for (std::size_t i = 0; i < n; i += stride) {
      const double x0 = probe[k][i];
      probe[k][i] = x0 + step;
      const double fp = evaluate(f, probe);
      probe[k][i] = x0 - step;
      const double fm = evaluate(f, probe);
      probe[k][i] = x0;
      const double numeric = (fp - fm) / (2.0 * step);
      const double err = std::abs(analytic[i] - numeric) / std::max(1.0, std::abs(numeric));
      ++result.coordinates;
      if (err > result.max_relative_error) {
        result.max_relative_error = err;
        result.worst_input = k;
        result.worst_index = i;
      }
    }
  }
  return result;
}

double grad_check(const std::function<Var(Tape&, Var)>& f, const Tensor& point, double step) {
  const ScalarFunction wrapped = [&f](Tape& t, std::span<const Var> xs) { return f(t, xs[0]); };
  const Tensor pts[] = {point};
  return grad_check(wrapped, pts, step).max_relative_error;
}

}  // namespace c2hm
