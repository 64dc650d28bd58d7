#pragma once

#include "c2hm/rng.hpp"
#include "c2hm/tape.hpp"
#include "c2hm/tensor.hpp"

namespace c2hm {

inline constexpr double kLogVarMin = -10.0;
inline constexpr double kLogVarMax = 10.0;

/// Gaussian with diagonal covariance; log_var is clamped to
/// [kLogVarMin, kLogVarMax] at construction. All entries of the tensors form
/// one joint distribution, so a [B x k] pair is treated as B*k independent
/// dimensions by the scalar functions below.
class DiagonalGaussian {
 public:
  DiagonalGaussian(Tensor mean, Tensor log_var);

  const Tensor& mean() const { return mean_; }
  const Tensor& log_var() const { return log_var_; }
  std::size_t dim() const { return mean_.size(); }
  Tensor variance() const;
  DiagonalGaussian row(std::size_t r) const;

 private:
  Tensor mean_;
  Tensor log_var_;
};

class CategoricalPrior {
 public:
  explicit CategoricalPrior(Tensor logits) : logits_(std::move(logits)) {}
  const Tensor& logits() const { return logits_; }
  Tensor probabilities() const;

 private:
  Tensor logits_;
};

Tensor sample_reparam(const DiagonalGaussian& g, SeededRng& rng);
double kl_to_standard(const DiagonalGaussian& g);
// KL(a || b); throws ShapeError on dimension mismatch.
double kl_between(const DiagonalGaussian& a, const DiagonalGaussian& b);
// Differential entropy in nats.
double entropy(const DiagonalGaussian& g);
double gaussian_log_prob(const DiagonalGaussian& g, const Tensor& x);

// Differentiable counterparts. Rows are samples; each function returns the
// mean over rows of the per-row quantity.
struct GaussianVar {
  Var mean;
  Var log_var;

  DiagonalGaussian value() const { return {mean.value(), log_var.value()}; }
};

Var sample_reparam(const GaussianVar& g, SeededRng& rng);
Var kl_to_standard(const GaussianVar& g);
Var kl_between(const GaussianVar& a, const GaussianVar& b);
Var entropy(const GaussianVar& g);
// Negative log-density of x under N(mean, obs_var * I).
Var gaussian_nll(Var mean, Var x, double obs_var);
// Negative log-density of x under the (learned) diagonal Gaussian g.
Var gaussian_nll(const GaussianVar& g, Var x);

}  // namespace c2hm
