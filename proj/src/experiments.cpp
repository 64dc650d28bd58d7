#include "c2hm/experiments.hpp"

#include <Eigen/Dense>
#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>

#include "c2hm/errors.hpp"
#include "c2hm/report.hpp"

namespace c2hm {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

Tensor row_block(const Tensor& t, std::size_t begin, std::size_t count) {
  Tensor out({count, t.cols()});
  std::copy(t.data() + begin * t.cols(), t.data() + (begin + count) * t.cols(), out.data());
  return out;
}

Tensor gather(const Tensor& t, std::span<const std::size_t> rows) {
  Tensor out({rows.size(), t.cols()});
  for (std::size_t i = 0; i < rows.size(); ++i) {
    std::copy(t.data() + rows[i] * t.cols(), t.data() + (rows[i] + 1) * t.cols(), out.data() + i * t.cols());
  }
  return out;
}

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

Eigen::Map<const RowMatrix> as_mat(const Tensor& t) {
  return {t.data(), static_cast<Eigen::Index>(t.rows()), static_cast<Eigen::Index>(t.cols())};
}

}  // namespace

Tensor least_squares_recovery(const SyntheticLinearGaussian& data, const Tensor& psi) {
  if (data.tanh_structure) throw ContractError("least-squares recovery needs a linear structure map");
  const RowMatrix G = as_mat(data.mixing) * as_mat(data.structure);  // D x d
  if (psi.cols() != static_cast<std::size_t>(G.rows())) throw ShapeError("least_squares_recovery: psi width");
  const RowMatrix sol = G.colPivHouseholderQr().solve(as_mat(psi).transpose()).transpose();
  Tensor out({psi.rows(), static_cast<std::size_t>(G.cols())});
  std::copy(sol.data(), sol.data() + sol.size(), out.data());
  return out;
}

CurseResult run_curse_experiment(const CurseConfig& config) {
  if (!(config.train_fraction > 0.0 && config.train_fraction < 1.0)) {
    throw ContractError("curse: train_fraction must lie in (0, 1)");
  }
  const auto t0 = Clock::now();
  const auto data = make_linear_gaussian(config.D, config.d, config.k, config.N, config.sigma, config.seed);
  const auto n_train = static_cast<std::size_t>(config.train_fraction * static_cast<double>(config.N));
  if (n_train == 0 || n_train >= config.N) throw ContractError("curse: empty train or test split");
  const std::size_t n_test = config.N - n_train;
  const Tensor phi_train = row_block(data.phi_true, 0, n_train), psi_train = row_block(data.psi, 0, n_train);
  const Tensor phi_test = row_block(data.phi_true, n_train, n_test), psi_test = row_block(data.psi, n_train, n_test);

  SeededRng init_rng = SeededRng(config.seed).fork(21);
  SeededRng order_rng = SeededRng(config.seed).fork(22);

  // (a) bottom-up: linear Psi -> Phi.
  const std::size_t bu_widths[] = {config.D, config.d};
  MlpParams bottom_up = init_mlp(bu_widths, Activation::Identity, Activation::Identity, init_rng);
  // (b) generator Phi -> Z -> Psi, linear, fitted on the same pairs.
  ModelConfig mc;
  mc.d = config.d;
  mc.k = config.k;
  mc.D = config.D;
  mc.num_classes = 1;
  mc.hidden_layers = 0;
  mc.decoder_output = Activation::Identity;
  C2hmParams gen = init_c2hm(mc, init_rng);

  Adam bu_opt({config.lr}), gen_opt({config.lr});
  const auto bu_tensors = mlp_tensors(bottom_up);
  auto gen_tensors = parameter_tensors(gen, ParamGroup::Generative);
  const std::vector<Tensor*> gen_nets(gen_tensors.begin() + 1, gen_tensors.end());
  for (std::size_t e = 0; e < config.epochs; ++e) {
    for (const auto& batch : make_batches(n_train, config.batch_size, order_rng)) {
      const Tensor phi = gather(phi_train, batch), psi = gather(psi_train, batch);
      {
        Tape t;
        const BoundMlp m = bind_mlp(t, bottom_up);
        const Var loss = ad::squared_error(mlp_forward(m, t.constant(psi)), t.constant(phi));
        bu_opt.step(bu_tensors, mlp_gradients(t.backward(loss), m));
      }
      {
        Tape t;
        const auto m = bind(t, gen, true);
        const Var psi_hat = decode(m, simulate_latent(m, t.constant(phi)).mean);
        const Var loss = ad::squared_error(psi_hat, t.constant(psi));
        const auto grads = parameter_gradients(t.backward(loss), m, ParamGroup::Generative);
        gen_opt.step(gen_nets, std::span(grads).subspan(1));
      }
    }
  }

  CurseResult res;
  res.train_size = n_train;
  res.test_size = n_test;
  {
    Tape t;
    const Tensor pred = mlp_forward(bind_mlp(t, bottom_up, false), t.constant(psi_test)).value();
    res.mse_bottom_up = squared_norm(pred - phi_test) / static_cast<double>(phi_test.size());
  }
  ModelLoopOptions lo;
  lo.kind = StepKind::HalfCycle;
  lo.eta = config.eta;
  lo.fixed_point = config.loop;
  SeededRng loop_rng = SeededRng(config.seed).fork(23);
  const auto [report, trace] = run_to_fixed_point(gen, Tensor({n_test, config.d}), psi_test, lo, loop_rng);
  res.mse_inverted = squared_norm(report.final_phi - phi_test) / static_cast<double>(phi_test.size());
  res.converged = report.converged;
  res.iterations = report.iterations_used;
  res.mse_least_squares =
      squared_norm(least_squares_recovery(data, psi_test) - phi_test) / static_cast<double>(phi_test.size());
  res.ratio = res.mse_inverted > 0.0 ? res.mse_bottom_up / res.mse_inverted : std::numeric_limits<double>::infinity();
  res.seconds = seconds_since(t0);
  return res;
}

DeltaSweepResult run_delta_sweep(const DeltaConfig& base, const std::vector<double>& betas,
                                 const SyntheticLinearGaussian& data, std::size_t burn_in) {
  if (betas.empty()) throw ContractError("delta sweep needs at least one beta");
  DeltaSweepResult out;
  out.burn_in = burn_in;
  for (double beta : betas) {
    const auto t0 = Clock::now();
    DeltaConfig c = base;
    c.beta = beta;
    DeltaSweepEntry e;
    e.beta = beta;
    e.trace = delta_convergence_run(c, data);
    e.initial_var = e.trace.iterations.front().latent_var_mean;
    e.final_var = e.trace.iterations.back().latent_var_mean;
    e.descent_fraction = variance_descent_fraction(e.trace, burn_in);
    e.seconds = seconds_since(t0);
    out.entries.push_back(std::move(e));
  }
  bool up = true, down = true;
  for (std::size_t i = 1; i < out.entries.size(); ++i) {
    const double a = out.entries[i - 1].final_var / out.entries[i - 1].initial_var;
    const double b = out.entries[i].final_var / out.entries[i].initial_var;
    if (b > a) down = false;
    if (b < a) up = false;
  }
  out.monotone = up || down;
  // Deeper collapse means a smaller final ratio.
  out.direction = up && !down ? -1 : down && !up ? 1 : 0;
  return out;
}

const char* model_kind_name(ModelKind kind) { return kind == ModelKind::C2hm ? "c2hm" : "wakesleep"; }

ModelKind parse_model_kind(const std::string& name) {
  if (name == "c2hm") return ModelKind::C2hm;
  if (name == "wakesleep" || name == "wake-sleep") return ModelKind::WakeSleep;
  throw ConfigError("unknown model '" + name + "' (expected c2hm or wakesleep)");
}

MnistSplits make_mnist_splits(const LabeledDataset& all, std::size_t train_count, std::size_t test_count,
                              double validation_fraction) {
  if (train_count + test_count > all.size()) {
    throw ContractError("dataset has " + std::to_string(all.size()) + " images, need " +
                        std::to_string(train_count + test_count));
  }
  MnistSplits s;
  auto [train, val] = split_validation(all.slice(0, train_count, "train"), validation_fraction);
  s.train = std::move(train);
  s.validation = std::move(val);
  s.test = all.slice(all.size() - test_count, test_count, "test");
  return s;
}

TrainRun train_and_evaluate(ModelKind kind, const TrainConfig& train, const ModelConfig& model,
                            const LossWeights& weights, const MnistSplits& splits, const ProbeClassifier& probe,
                            std::size_t gf_per_class, const EpochCallback& on_epoch) {
  const auto t0 = Clock::now();
  TrainRun run;
  run.result = kind == ModelKind::C2hm
                   ? train_c2hm(train, model, weights, splits.train, splits.validation, on_epoch)
                   : train_wakesleep(train, model, splits.train, splits.validation, on_epoch);
  SeededRng re_rng = SeededRng(train.seed).fork(31);
  SeededRng gf_rng = SeededRng(train.seed).fork(32);
  MetricsRecord& m = run.metrics;
  m.model = model_kind_name(kind);
  m.seed = train.seed;
  m.re = metric_re(run.result.params, splits.test, re_rng);
  m.cc = metric_cc(run.result.params, splits.test);
  m.gf = metric_gf(run.result.params, probe, gf_per_class, gf_rng);
  m.lc = metric_lc(run.result.params);
  m.timestamp = utc_now();
  run.seconds = seconds_since(t0);
  return run;
}

LoopStudy run_loop_study(const C2hmParams& params, const Tensor& images, std::size_t count,
                         const ModelLoopOptions& options, std::uint64_t seed) {
  if (count > images.rows()) throw ContractError("loop study: not enough images");
  LoopStudy s;
  for (std::size_t i = 0; i < count; ++i) {
    const Tensor psi = row_block(images, i, 1);
    const Tensor phi0({1, params.d});
    for (StepKind kind : {StepKind::Amortized, StepKind::HalfCycle}) {
      ModelLoopOptions o = options;
      o.kind = kind;
      SeededRng rng = SeededRng(seed).fork(40 + i);
      auto [report, trace] = run_to_fixed_point(params, phi0, psi, o, rng);
      if (kind == StepKind::Amortized) {
        s.amortized.push_back(std::move(report));
        s.amortized_traces.push_back(std::move(trace));
      } else {
        s.gradient.push_back(std::move(report));
        s.gradient_traces.push_back(std::move(trace));
      }
    }
  }
  return s;
}

PlanReport run_plan(const GridWorld& grid, const PlannerConfig& config) {
  const auto t0 = Clock::now();
  PlanReport r;
  r.plan = plan_half_cycle(grid, config);
  r.ratio = r.plan.oracle_length > 0 ? static_cast<double>(r.plan.length) / static_cast<double>(r.plan.oracle_length)
                                     : (r.plan.length == 0 ? 1.0 : std::numeric_limits<double>::infinity());
  r.pass = r.plan.collision_free && r.ratio <= 1.5;
  r.seconds = seconds_since(t0);
  return r;
}

}  // namespace c2hm
