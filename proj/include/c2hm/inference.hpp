#pragma once

#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "c2hm/data_io.hpp"
#include "c2hm/model.hpp"
#include "c2hm/objectives.hpp"

namespace c2hm {

struct TraceRecord {
  Tensor phi;  // iterate after the step
  double step_norm = 0.0;
  double entropy_proxy = 0.0;    // H(Psi | Phi) at the iterate before the step
  double vb_value = 0.0;         // deterministic variational objective at the same point
  double latent_var_mean = 0.0;  // mean per-dim variance of p(Z | Phi)
  double eta = 0.0;              // accepted step size (gradient steps only)
};

struct InferenceTrace {
  std::vector<TraceRecord> iterations;

  std::size_t size() const { return iterations.size(); }
  // `# schema: trace-v1` header, then `iter,step_norm,entropy_proxy,vb_value,latent_var_mean` rows.
  std::string to_csv() const;
};

struct FixedPointReport {
  bool converged = false;
  std::size_t iterations_used = 0;
  Tensor final_phi;
  double estimated_gamma = 0.0;
};

class DivergenceError : public std::runtime_error {
 public:
  DivergenceError(const std::string& what, InferenceTrace trace)
      : std::runtime_error(what), trace_(std::move(trace)) {}
  const InferenceTrace& trace() const { return trace_; }

 private:
  InferenceTrace trace_;
};

inline constexpr double kDivergenceNorm = 1e6;

/// Squared residual ||psi_obs - decode(mean of p(Z | phi))||^2 summed over
/// all entries, and its gradient with respect to phi.
double half_cycle_residual(const C2hmParams& params, const Tensor& phi, const Tensor& psi_obs,
                           Tensor* grad_phi = nullptr);

/// phi - eta * grad of the squared residual, mean latent (no sampling).
/// `rng` is only drawn from when `sample` is set.
Tensor half_cycle_step(const C2hmParams& params, const Tensor& phi, const Tensor& psi_obs, double eta,
                       SeededRng& rng, bool sample = false);

struct DescentStep {
  Tensor phi;
  double eta = 0.0;  // accepted step size, 0 when stationary
  double residual_before = 0.0;
  double residual_after = 0.0;
};

/// Gradient step with backtracking: eta is halved up to `max_halvings`
/// times until the residual does not increase.
DescentStep half_cycle_descent_step(const C2hmParams& params, const Tensor& phi, const Tensor& psi_obs, double eta,
                                    int max_halvings = 20);

/// cycle_decode(mean of cycle_encode(psi_hat + kappa * (psi_obs - psi_hat)))
/// with psi_hat = decode(mean of p(Z | phi)).
Tensor amortized_cycle_step(const C2hmParams& params, const Tensor& phi, const Tensor& psi_obs, SeededRng& rng,
                            double kappa = 0.5);

using PhiOperator = std::function<Tensor(const Tensor&)>;
// Called after each step with (phi_before, record); fills the diagnostic fields.
using TraceHook = std::function<void(const Tensor&, TraceRecord&)>;

struct FixedPointOptions {
  double tol = 1e-5;
  std::size_t max_iter = 500;
  std::size_t gamma_window = 10;
};

/// Iterates phi <- op(phi) until the step norm drops below tol or max_iter
/// steps were taken. Throws DivergenceError once a step exceeds 1e6.
std::pair<FixedPointReport, InferenceTrace> run_fixed_point(const PhiOperator& op, const Tensor& phi0,
                                                            const FixedPointOptions& options,
                                                            const TraceHook& hook = {});

// Max of step_norm(t+1) / step_norm(t) over the last `window` ratios.
double estimate_gamma(const InferenceTrace& trace, std::size_t window = 10);

enum class StepKind { HalfCycle, Amortized };

struct ModelLoopOptions {
  StepKind kind = StepKind::HalfCycle;
  double eta = 0.01;
  double kappa = 0.5;
  FixedPointOptions fixed_point;
};

/// Model-driven loop with a full trace (entropy proxy, variational value,
/// latent variance) at every iterate.
std::pair<FixedPointReport, InferenceTrace> run_to_fixed_point(const C2hmParams& params, const Tensor& phi0,
                                                               const Tensor& psi_obs, const ModelLoopOptions& options,
                                                               SeededRng& rng);

// Fraction of consecutive pairs with entropy_proxy(t+1) <= entropy_proxy(t) + 1e-9.
double entropy_descent_check(const InferenceTrace& trace);
// Same rule on latent_var_mean, skipping the first `burn_in` records.
double variance_descent_fraction(const InferenceTrace& trace, std::size_t burn_in);

struct DeltaConfig {
  double beta = 1.0;
  std::size_t iterations = 300;
  std::size_t k = 2;
  std::size_t hidden = 32;
  double lr = 1e-2;
  double obs_sd = kObsSd;
  std::uint64_t seed = 1;
};

/// Variational bottleneck training on the delta dataset. The encoder
/// p(Z | Phi) is conditioned on per-sample codes Phi (initialized at the true
/// structure); each iteration takes one full-batch Adam step on the networks
/// and one on the codes. Records latent_var_mean and vb_value per iteration.
InferenceTrace delta_convergence_run(const DeltaConfig& config, const SyntheticLinearGaussian& data);

}  // namespace c2hm
