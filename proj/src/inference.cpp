#include "c2hm/inference.hpp"

#include <cmath>
#include <numbers>
#include <numeric>
#include <sstream>

#include "c2hm/errors.hpp"
#include "c2hm/training.hpp"

namespace c2hm {

namespace {

void check_inputs(const C2hmParams& params, const Tensor& phi, const Tensor& psi_obs) {
  if (phi.cols() != params.d) {
    throw ShapeError("phi has shape " + phi.shape_string() + ", expected " + std::to_string(params.d) + " columns");
  }
  if (psi_obs.cols() != params.D) {
    throw ShapeError("psi_obs has shape " + psi_obs.shape_string() + ", expected " + std::to_string(params.D) +
                     " columns");
  }
  if (phi.rows() != psi_obs.rows()) throw ShapeError("phi and psi_obs row counts differ");
}

struct PointStats {
  double residual = 0.0;  // summed over rows
  double kl = 0.0;        // mean over rows
  double latent_var_mean = 0.0;
};

PointStats point_stats(const C2hmParams& params, const Tensor& phi, const Tensor& psi_obs) {
  const DiagonalGaussian q = simulate_latent(params, phi);
  const Tensor psi_hat = decode(params, q.mean());
  PointStats s;
  s.residual = squared_norm(psi_obs - psi_hat);
  s.kl = kl_to_standard(q) / static_cast<double>(phi.rows());
  s.latent_var_mean = mean(q.variance());
  return s;
}

void fill_model_record(const C2hmParams& params, const Tensor& phi_before, const Tensor& psi_obs, TraceRecord& r) {
  constexpr double obs_var = kObsSd * kObsSd;
  const auto s = point_stats(params, phi_before, psi_obs);
  const double rows = static_cast<double>(phi_before.rows());
  const double per_row = s.residual / rows;
  r.entropy_proxy = context_entropy_proxy(per_row, params.D, obs_var);
  r.vb_value = per_row / (2.0 * obs_var) +
               0.5 * static_cast<double>(params.D) * std::log(2.0 * std::numbers::pi * obs_var) + s.kl;
  r.latent_var_mean = s.latent_var_mean;
}

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(10);
  os << v;
  return os.str();
}

}  // namespace

std::string InferenceTrace::to_csv() const {
  std::string out = "# schema: trace-v1\niter,step_norm,entropy_proxy,vb_value,latent_var_mean\n";
  for (std::size_t i = 0; i < iterations.size(); ++i) {
    const auto& r = iterations[i];
    out += std::to_string(i + 1) + "," + fmt(r.step_norm) + "," + fmt(r.entropy_proxy) + "," + fmt(r.vb_value) +
           "," + fmt(r.latent_var_mean) + "\n";
  }
  return out;
}

double half_cycle_residual(const C2hmParams& params, const Tensor& phi, const Tensor& psi_obs, Tensor* grad_phi) {
  check_inputs(params, phi, psi_obs);
  Tape t;
  const auto m = bind(t, params, false);
  const Var p = t.leaf(phi);
  const Var psi_hat = decode(m, simulate_latent(m, p).mean);
  const Var r = ad::sum(ad::square(ad::sub(t.constant(psi_obs), psi_hat)));
  if (grad_phi) *grad_phi = t.backward(r)[p];
  return r.value().item();
}

Tensor half_cycle_step(const C2hmParams& params, const Tensor& phi, const Tensor& psi_obs, double eta,
                       SeededRng& rng, bool sample) {
  if (!(eta >= 0.0)) throw ContractError("half_cycle_step: eta must be non-negative");
  Tensor grad;
  if (sample) {
    check_inputs(params, phi, psi_obs);
    Tape t;
    const auto m = bind(t, params, false);
    const Var p = t.leaf(phi);
    const Var psi_hat = decode(m, sample_reparam(simulate_latent(m, p), rng));
    const Var r = ad::sum(ad::square(ad::sub(t.constant(psi_obs), psi_hat)));
    grad = t.backward(r)[p];
  } else {
    half_cycle_residual(params, phi, psi_obs, &grad);
  }
  return phi - eta * grad;
}

DescentStep half_cycle_descent_step(const C2hmParams& params, const Tensor& phi, const Tensor& psi_obs, double eta,
                                    int max_halvings) {
  if (!(eta > 0.0)) throw ContractError("half_cycle_descent_step: eta must be positive");
  Tensor grad;
  DescentStep out;
  out.residual_before = half_cycle_residual(params, phi, psi_obs, &grad);
  for (int i = 0; i <= max_halvings; ++i, eta *= 0.5) {
    Tensor candidate = phi - eta * grad;
    const double r = half_cycle_residual(params, candidate, psi_obs);
    if (r <= out.residual_before) {
      out.phi = std::move(candidate);
      out.eta = eta;
      out.residual_after = r;
      return out;
    }
  }
  out.phi = phi;
  out.residual_after = out.residual_before;
  return out;
}

Tensor amortized_cycle_step(const C2hmParams& params, const Tensor& phi, const Tensor& psi_obs, SeededRng&,
                            double kappa) {
  check_inputs(params, phi, psi_obs);
  const Tensor psi_hat = decode(params, simulate_latent(params, phi).mean());
  const Tensor anchored = psi_hat + kappa * (psi_obs - psi_hat);
  return cycle_decode(params, cycle_encode(params, anchored).mean());
}

double estimate_gamma(const InferenceTrace& trace, std::size_t window) {
  const auto& it = trace.iterations;
  if (it.size() < 2) return 0.0;
  const std::size_t ratios = it.size() - 1;
  const std::size_t first = ratios > window ? ratios - window : 0;
  double gamma = 0.0;
  for (std::size_t i = first; i < ratios; ++i) {
    if (it[i].step_norm > 0.0) gamma = std::max(gamma, it[i + 1].step_norm / it[i].step_norm);
  }
  return gamma;
}

std::pair<FixedPointReport, InferenceTrace> run_fixed_point(const PhiOperator& op, const Tensor& phi0,
                                                            const FixedPointOptions& options, const TraceHook& hook) {
  if (!(options.tol > 0.0)) throw ContractError("run_fixed_point: tol must be positive");
  if (options.max_iter < 1) throw ContractError("run_fixed_point: max_iter must be >= 1");
  FixedPointReport report;
  InferenceTrace trace;
  Tensor phi = phi0;
  for (std::size_t i = 0; i < options.max_iter; ++i) {
    TraceRecord rec;
    rec.phi = op(phi);
    if (!rec.phi.same_shape(phi)) throw ShapeError("run_fixed_point: operator changed the shape of phi");
    rec.step_norm = std::sqrt(squared_norm(rec.phi - phi));
    const bool diverged = !std::isfinite(rec.step_norm) || rec.step_norm > kDivergenceNorm;
    if (hook && !diverged) hook(phi, rec);
    trace.iterations.push_back(rec);
    if (diverged) {
      throw DivergenceError("fixed-point iteration diverged at step " + std::to_string(i + 1) +
                                " (step norm " + fmt(rec.step_norm) + ")",
                            std::move(trace));
    }
    phi = rec.phi;
    if (rec.step_norm < options.tol) {
      report.converged = true;
      break;
    }
  }
  report.iterations_used = trace.size();
  report.final_phi = phi;
  report.estimated_gamma = estimate_gamma(trace, options.gamma_window);
  return {report, trace};
}

std::pair<FixedPointReport, InferenceTrace> run_to_fixed_point(const C2hmParams& params, const Tensor& phi0,
                                                               const Tensor& psi_obs, const ModelLoopOptions& options,
                                                               SeededRng& rng) {
  check_inputs(params, phi0, psi_obs);
  double last_eta = 0.0;
  PhiOperator op;
  if (options.kind == StepKind::HalfCycle) {
    op = [&](const Tensor& phi) {
      auto step = half_cycle_descent_step(params, phi, psi_obs, options.eta);
      last_eta = step.eta;
      return std::move(step.phi);
    };
  } else {
    op = [&](const Tensor& phi) { return amortized_cycle_step(params, phi, psi_obs, rng, options.kappa); };
  }
  const TraceHook hook = [&](const Tensor& before, TraceRecord& r) {
    fill_model_record(params, before, psi_obs, r);
    r.eta = last_eta;
  };
  return run_fixed_point(op, phi0, options.fixed_point, hook);
}

namespace {

double descent_fraction(const InferenceTrace& trace, std::size_t burn_in, double TraceRecord::*field) {
  const auto& it = trace.iterations;
  if (it.size() < burn_in + 2) throw ContractError("trace too short for a descent check");
  std::size_t ok = 0, total = 0;
  for (std::size_t i = burn_in; i + 1 < it.size(); ++i, ++total) {
    if (it[i + 1].*field <= it[i].*field + 1e-9) ++ok;
  }
  return static_cast<double>(ok) / static_cast<double>(total);
}

}  // namespace

double entropy_descent_check(const InferenceTrace& trace) {
  return descent_fraction(trace, 0, &TraceRecord::entropy_proxy);
}

double variance_descent_fraction(const InferenceTrace& trace, std::size_t burn_in) {
  return descent_fraction(trace, burn_in, &TraceRecord::latent_var_mean);
}

InferenceTrace delta_convergence_run(const DeltaConfig& config, const SyntheticLinearGaussian& data) {
  if (config.beta < 0.0) throw ContractError("delta run: beta must be non-negative");
  if (config.iterations < 1) throw ContractError("delta run: iterations must be >= 1");
  const std::size_t n = data.size();
  const std::size_t d = data.phi_true.cols();
  const std::size_t D = data.psi.cols();

  ModelConfig mc;
  mc.d = d;
  mc.k = config.k;
  mc.D = D;
  mc.num_classes = n;
  mc.hidden = config.hidden;
  mc.hidden_layers = 1;
  mc.decoder_output = Activation::Identity;
  SeededRng init_rng = SeededRng(config.seed).fork(1);
  SeededRng noise_rng = SeededRng(config.seed).fork(2);
  C2hmParams params = init_c2hm(mc, init_rng);
  params.goal_embed = data.phi_true;

  std::vector<std::size_t> all(n);
  std::iota(all.begin(), all.end(), 0);
  const double obs_var = config.obs_sd * config.obs_sd;

  auto tensors = parameter_tensors(params, ParamGroup::Generative);
  auto names = parameter_names(params, ParamGroup::Generative);
  // goal_embed (the codes) comes first in the generative group.
  std::vector<Tensor*> code_tensor{tensors.front()};
  std::vector<Tensor*> net_tensors(tensors.begin() + 1, tensors.end());
  std::vector<std::string> code_name{names.front()};
  std::vector<std::string> net_names(names.begin() + 1, names.end());
  Adam net_opt({config.lr});
  Adam code_opt({config.lr});

  InferenceTrace trace;
  for (std::size_t it = 0; it < config.iterations; ++it) {
    TraceRecord rec;
    {
      Tape t;
      const auto m = bind(t, params, true);
      const Var phi = embed_goal(m, all);
      const Var loss = vb_loss(m, phi, t.constant(data.psi), config.beta, noise_rng, obs_var);
      const GaussianVar q = simulate_latent(m, phi);
      rec.vb_value = loss.value().item();
      rec.latent_var_mean = mean(q.value().variance());
      const auto grads = parameter_gradients(t.backward(loss), m, ParamGroup::Generative);
      net_opt.step(net_tensors, std::span(grads).subspan(1), net_names);
    }
    const Tensor before = params.goal_embed;
    {
      Tape t;
      const auto m = bind(t, params, true);
      const Var loss = vb_loss(m, embed_goal(m, all), t.constant(data.psi), config.beta, noise_rng, obs_var);
      const auto grads = parameter_gradients(t.backward(loss), m, ParamGroup::Generative);
      code_opt.step(code_tensor, std::span(grads).first(1), code_name);
    }
    rec.step_norm = std::sqrt(squared_norm(params.goal_embed - before));
    const auto s = point_stats(params, before, data.psi);
    rec.entropy_proxy = context_entropy_proxy(s.residual / static_cast<double>(n), D, obs_var);
    rec.phi = params.goal_embed.row(0);
    trace.iterations.push_back(std::move(rec));
  }
  return trace;
}

}  // namespace c2hm
