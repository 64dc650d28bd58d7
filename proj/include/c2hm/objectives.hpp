#pragma once

#include "c2hm/model.hpp"

namespace c2hm {

// Observation noise of the Gaussian context likelihood used by vb_loss and
// the entropy-steering proxy.
inline constexpr double kObsSd = 0.1;

struct LossWeights {
  double lambda_cyc = 0.1;
  double lambda_z = 0.01;
  double beta = 1.0;
};

struct LossBreakdown {
  double rec = 0.0;
  double loop = 0.0;
  double latent = 0.0;
  double total = 0.0;
};

// total = rec + lambda_cyc * loop + lambda_z * latent
LossBreakdown combine(double rec, double loop, double latent, const LossWeights& w);

struct CompositeLoss {
  Var rec;
  Var loop;
  Var latent;
  Var total;

  LossBreakdown values() const;
};

// Squared error averaged over the batch and over pixels.
Var rec_loss(Var x, Var x_hat);
Var loop_loss(Var x, Var x_loop);
// Mean squared difference of first-pass and re-encoded latent means.
Var latent_align_loss(Var z_mean, Var z_cycle_mean);

CompositeLoss composite_loss(const CycleOutputs& c, Var x, const LossWeights& w);

/// ||Phi - cycle_decode(Z')||^2 with Phi and Z' detached, so only the cycle
/// decoder receives gradient. Kept out of the composite total.
Var content_cycle_loss(const BoundC2hm& m, const CycleOutputs& c);

/// Single-sample reparameterized estimate of
///   E[-log p(Psi | Z)] + beta * KL(p(Z | Phi) || N(0, I))
/// with p(Psi | Z) = N(decode(Z), obs_var * I); batch mean.
Var vb_loss(const BoundC2hm& m, Var phi, Var psi, double beta, SeededRng& rng, double obs_var = kObsSd * kObsSd);

/// Expected negative log-likelihood of a context observed with N(0, obs_var)
/// noise under the predictive N(prediction, obs_var * I):
///   D/2 log(2 pi e obs_var) + ||psi - prediction||^2 / (2 obs_var)
/// Equals the differential entropy of the predictive when the residual is 0.
double context_entropy_proxy(double residual_sq, std::size_t dims, double obs_var = kObsSd * kObsSd);

struct SteeringProxy {
  double h_context_given_latent = 0.0;  // H(Psi | Z)
  double h_latent_given_content = 0.0;  // H(Z | Phi)
  double total = 0.0;
};

// Batch means over rows of phi [B x d] and psi [B x D].
SteeringProxy entropy_steer_proxy(const C2hmParams& params, const Tensor& phi, const Tensor& psi, SeededRng& rng,
                                  double obs_var = kObsSd * kObsSd);

}  // namespace c2hm
