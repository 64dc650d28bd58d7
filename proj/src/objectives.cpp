#include "c2hm/objectives.hpp"

#include <cmath>
#include <numbers>

#include "c2hm/errors.hpp"

namespace c2hm {

LossBreakdown combine(double rec, double loop, double latent, const LossWeights& w) {
  return {rec, loop, latent, rec + w.lambda_cyc * loop + w.lambda_z * latent};
}

LossBreakdown CompositeLoss::values() const {
  return {rec.value().item(), loop.value().item(), latent.value().item(), total.value().item()};
}

Var rec_loss(Var x, Var x_hat) { return ad::squared_error(x, x_hat); }

Var loop_loss(Var x, Var x_loop) { return ad::squared_error(x, x_loop); }

Var latent_align_loss(Var z_mean, Var z_cycle_mean) { return ad::squared_error(z_mean, z_cycle_mean); }

CompositeLoss composite_loss(const CycleOutputs& c, Var x, const LossWeights& w) {
  if (w.lambda_cyc < 0.0 || w.lambda_z < 0.0) throw ContractError("composite_loss: negative loss weight");
  CompositeLoss l;
  l.rec = rec_loss(x, c.psi_hat);
  l.loop = loop_loss(x, c.psi_loop);
  l.latent = latent_align_loss(c.z_dist.mean, c.z2_dist.mean);
  l.total = ad::add(ad::add(l.rec, ad::scale(l.loop, w.lambda_cyc)), ad::scale(l.latent, w.lambda_z));
  return l;
}

Var content_cycle_loss(const BoundC2hm& m, const CycleOutputs& c) {
  const Var phi_hat = cycle_decode(m, ad::detach(c.z2));
  return ad::squared_error(phi_hat, ad::detach(c.phi));
}

Var vb_loss(const BoundC2hm& m, Var phi, Var psi, double beta, SeededRng& rng, double obs_var) {
  if (beta < 0.0) throw ContractError("vb_loss: beta must be non-negative");
  const GaussianVar q = simulate_latent(m, phi);
  const Var z = sample_reparam(q, rng);
  const Var nll = gaussian_nll(decode(m, z), psi, obs_var);
  if (beta == 0.0) return nll;
  return ad::add(nll, ad::scale(kl_to_standard(q), beta));
}

double context_entropy_proxy(double residual_sq, std::size_t dims, double obs_var) {
  const double per_dim = 0.5 * std::log(2.0 * std::numbers::pi * std::numbers::e * obs_var);
  return static_cast<double>(dims) * per_dim + residual_sq / (2.0 * obs_var);
}

SteeringProxy entropy_steer_proxy(const C2hmParams& params, const Tensor& phi, const Tensor& psi, SeededRng& rng,
                                  double obs_var) {
  if (phi.rows() != psi.rows()) throw ShapeError("entropy_steer_proxy: phi and psi batch sizes differ");
  Tape t;
  const auto m = bind(t, params, false);
  const GaussianVar q = simulate_latent(m, t.constant(phi));
  const Var psi_hat = decode(m, sample_reparam(q, rng));
  const Tensor resid = psi - psi_hat.value();
  const double rows = static_cast<double>(psi.rows());
  SteeringProxy s;
  s.h_context_given_latent = context_entropy_proxy(squared_norm(resid) / rows, params.D, obs_var);
  s.h_latent_given_content = entropy(q).value().item();
  s.total = s.h_context_given_latent + s.h_latent_given_content;
  return s;
}

}  // namespace c2hm
