#include "c2hm/training.hpp"

#include <chrono>
#include <cmath>
#include <numeric>

#include "c2hm/errors.hpp"

namespace c2hm {

namespace {

constexpr std::size_t kEvalBatch = 500;

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

Tensor rows_of(const Tensor& m, std::span<const std::size_t> rows) {
  const auto cols = m.cols();
  Tensor out({rows.size(), cols});
  for (std::size_t i = 0; i < rows.size(); ++i) std::copy_n(m.data() + rows[i] * cols, cols, out.data() + i * cols);
  return out;
}

void check_dataset(const LabeledDataset& ds, const ModelConfig& model, const char* what) {
  if (ds.size() == 0) throw ContractError(std::string(what) + " dataset is empty");
  if (ds.dim() != model.D) {
    throw ShapeError(std::string(what) + " dataset has dimension " + std::to_string(ds.dim()) + ", model expects " +
                     std::to_string(model.D));
  }
  for (auto l : ds.labels) {
    if (l >= model.num_classes) throw ContractError(std::string(what) + " dataset label out of range");
  }
}

// Tracks the best validation score and decides when to stop.
class EarlyStopper {
 public:
  EarlyStopper(std::size_t patience, double min_delta) : patience_(patience), min_delta_(min_delta) {}

  // True when the score is a new best.
  bool update(double score) {
    if (score < best_ - min_delta_) {
      best_ = score;
      wait_ = 0;
      return true;
    }
    ++wait_;
    return false;
  }
  bool should_stop() const { return wait_ >= patience_; }

 private:
  std::size_t patience_;
  double min_delta_;
  double best_ = std::numeric_limits<double>::infinity();
  std::size_t wait_ = 0;
};

}  // namespace

void Adam::step(std::span<Tensor* const> params, std::span<const Tensor> grads, std::span<const std::string> names) {
  if (params.size() != grads.size()) throw ContractError("adam: parameter and gradient counts differ");
  for (std::size_t i = 0; i < grads.size(); ++i) {
    if (!params[i]->same_shape(grads[i])) {
      throw ShapeError("adam: gradient " + grads[i].shape_string() + " for parameter " + params[i]->shape_string());
    }
    if (!grads[i].all_finite()) {
      const std::string name = i < names.size() ? names[i] : "#" + std::to_string(i);
      throw NonFiniteGradientError("adam: non-finite gradient for tensor " + name);
    }
  }
  if (m_.empty()) {
    for (const Tensor* p : params) {
      m_.emplace_back(p->shape());
      v_.emplace_back(p->shape());
    }
  } else if (m_.size() != params.size()) {
    throw ContractError("adam: parameter list changed between steps");
  }
  ++t_;
  const double b1 = opt_.beta1, b2 = opt_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor& p = *params[i];
    Tensor& m = m_[i];
    Tensor& v = v_[i];
    if (!m.same_shape(p)) throw ShapeError("adam: parameter shape changed between steps");
    const Tensor& g = grads[i];
    for (std::size_t j = 0; j < p.size(); ++j) {
      m[j] = b1 * m[j] + (1.0 - b1) * g[j];
      v[j] = b2 * v[j] + (1.0 - b2) * g[j] * g[j];
      p[j] -= opt_.lr * (m[j] / c1) / (std::sqrt(v[j] / c2) + opt_.eps);
    }
  }
}

void TrainConfig::validate() const {
  if (batch_size < 1) throw ContractError("batch_size must be >= 1");
  if (patience < 1) throw ContractError("patience must be >= 1");
  if (epochs < 1) throw ContractError("epochs must be >= 1");
  if (!(lr >= 0.0)) throw ContractError("learning rate must be non-negative");
}

std::vector<std::vector<std::size_t>> make_batches(std::size_t n, std::size_t batch_size, SeededRng& rng) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  shuffle_indices(order, rng);
  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t i = 0; i < n; i += batch_size) {
    batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(i),
                         order.begin() + static_cast<std::ptrdiff_t>(std::min(n, i + batch_size)));
  }
  return batches;
}

LossBreakdown evaluate_composite(const C2hmParams& params, const LossWeights& weights, const LabeledDataset& data,
                                 std::uint64_t noise_seed) {
  SeededRng rng(noise_seed);
  LossBreakdown acc;
  for (std::size_t start = 0; start < data.size(); start += kEvalBatch) {
    const auto count = std::min(kEvalBatch, data.size() - start);
    std::vector<std::size_t> rows(count);
    std::iota(rows.begin(), rows.end(), start);
    Tape t;
    const auto m = bind(t, params, false);
    const Var x = t.constant(rows_of(data.images, rows));
    std::vector<std::size_t> labels(count);
    for (std::size_t i = 0; i < count; ++i) labels[i] = data.labels[start + i];
    const auto c = full_cycle(m, embed_goal(m, labels), rng);
    const auto l = composite_loss(c, x, weights).values();
    const double w = static_cast<double>(count);
    acc.rec += w * l.rec;
    acc.loop += w * l.loop;
    acc.latent += w * l.latent;
  }
  const double n = static_cast<double>(data.size());
  return combine(acc.rec / n, acc.loop / n, acc.latent / n, weights);
}

TrainResult train_c2hm(const TrainConfig& config, const ModelConfig& model, const LossWeights& weights,
                       const LabeledDataset& train, const LabeledDataset& validation, const EpochCallback& on_epoch) {
  config.validate();
  check_dataset(train, model, "training");
  check_dataset(validation, model, "validation");

  SeededRng init_rng = SeededRng(config.seed).fork(1);
  SeededRng order_rng = SeededRng(config.seed).fork(2);
  SeededRng noise_rng = SeededRng(config.seed).fork(3);
  const std::uint64_t val_seed = SeededRng(config.seed).fork(4).next_u64();

  TrainResult result;
  C2hmParams params = init_c2hm(model, init_rng);
  const auto names = parameter_names(params);
  Adam opt({config.lr});
  EarlyStopper stopper(config.patience, config.min_delta);
  result.params = params;

  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    const auto start = std::chrono::steady_clock::now();
    LossBreakdown sum;
    for (const auto& batch : make_batches(train.size(), config.batch_size, order_rng)) {
      Tape t;
      const auto m = bind(t, params, true);
      const Var x = t.constant(rows_of(train.images, batch));
      std::vector<std::size_t> labels(batch.size());
      for (std::size_t i = 0; i < batch.size(); ++i) labels[i] = train.labels[batch[i]];
      const auto c = full_cycle(m, embed_goal(m, labels), noise_rng);
      const auto loss = composite_loss(c, x, weights);
      const Var objective = ad::add(loss.total, content_cycle_loss(m, c));
      const auto grads = parameter_gradients(t.backward(objective), m);
      auto tensors = parameter_tensors(params);
      opt.step(tensors, grads, names);
      ++result.optimizer_steps;
      const auto v = loss.values();
      const double w = static_cast<double>(batch.size());
      sum.rec += w * v.rec;
      sum.loop += w * v.loop;
      sum.latent += w * v.latent;
    }
    const double n = static_cast<double>(train.size());
    EpochLog log;
    log.epoch = epoch;
    log.train = combine(sum.rec / n, sum.loop / n, sum.latent / n, weights);
    log.validation_total = evaluate_composite(params, weights, validation, val_seed).total;
    if (!std::isfinite(log.validation_total)) throw std::runtime_error("validation loss is not finite");
    log.seconds = seconds_since(start);
    result.logs.push_back(log);
    if (on_epoch) on_epoch(log);
    if (stopper.update(log.validation_total)) {
      result.params = params;
      result.best_epoch = epoch;
    }
    if (stopper.should_stop()) break;
  }
  return result;
}

namespace {

// Recognition samples for a batch, as constants on the tape.
Var recognized_latents(const BoundC2hm& m, Var x, SeededRng& rng) {
  const GaussianVar q = cycle_encode(m, x);
  return ad::detach(sample_reparam(q, rng));
}

}  // namespace

WakeStats wake_phase(C2hmParams& params, const LabeledDataset& batch, SeededRng& rng, Adam& generative_opt) {
  if (batch.size() == 0) throw ContractError("wake_phase: empty batch");
  Tape t;
  const auto m = bind(t, params, true);
  const Var x = t.constant(batch.images);
  const Var z = recognized_latents(m, x, rng);
  const Var reconstruction = rec_loss(x, decode(m, z));
  const Var prior_nll = gaussian_nll(simulate_latent(m, embed_goal(m, batch.labels)), z);
  const Var objective = ad::add(reconstruction, prior_nll);
  const auto grads = parameter_gradients(t.backward(objective), m, ParamGroup::Generative);
  auto tensors = parameter_tensors(params, ParamGroup::Generative);
  const auto names = parameter_names(params, ParamGroup::Generative);
  generative_opt.step(tensors, grads, names);
  return {reconstruction.value().item(), prior_nll.value().item()};
}

Tensor dream_batch(const C2hmParams& params, SeededRng& rng, std::size_t batch_size, Tensor* latents) {
  if (batch_size == 0) throw ContractError("dream_batch: batch_size must be positive");
  Tensor z = rng_standard_normal(rng, {batch_size, params.k});
  Tensor dreams = decode(params, z);
  if (latents) *latents = std::move(z);
  return dreams;
}

double sleep_phase(C2hmParams& params, SeededRng& rng, Adam& recognition_opt, std::size_t batch_size) {
  Tensor z;
  Tensor dreams = dream_batch(params, rng, batch_size, &z);
  Tape t;
  const auto m = bind(t, params, true);
  const GaussianVar q = cycle_encode(m, t.constant(std::move(dreams)));
  const Var err = ad::squared_error(q.mean, t.constant(std::move(z)));
  const auto grads = parameter_gradients(t.backward(err), m, ParamGroup::Recognition);
  auto tensors = parameter_tensors(params, ParamGroup::Recognition);
  const auto names = parameter_names(params, ParamGroup::Recognition);
  recognition_opt.step(tensors, grads, names);
  return err.value().item();
}

double evaluate_wake_reconstruction(const C2hmParams& params, const LabeledDataset& data, std::uint64_t noise_seed) {
  SeededRng rng(noise_seed);
  double acc = 0.0;
  for (std::size_t start = 0; start < data.size(); start += kEvalBatch) {
    const auto count = std::min(kEvalBatch, data.size() - start);
    std::vector<std::size_t> rows(count);
    std::iota(rows.begin(), rows.end(), start);
    Tape t;
    const auto m = bind(t, params, false);
    const Var x = t.constant(rows_of(data.images, rows));
    const Var z = recognized_latents(m, x, rng);
    acc += static_cast<double>(count) * rec_loss(x, decode(m, z)).value().item();
  }
  return acc / static_cast<double>(data.size());
}

TrainResult train_wakesleep(const TrainConfig& config, const ModelConfig& model, const LabeledDataset& train,
                            const LabeledDataset& validation, const EpochCallback& on_epoch) {
  config.validate();
  check_dataset(train, model, "training");
  check_dataset(validation, model, "validation");

  SeededRng init_rng = SeededRng(config.seed).fork(1);
  SeededRng order_rng = SeededRng(config.seed).fork(2);
  SeededRng noise_rng = SeededRng(config.seed).fork(3);
  const std::uint64_t val_seed = SeededRng(config.seed).fork(4).next_u64();
  SeededRng dream_rng = SeededRng(config.seed).fork(5);

  TrainResult result;
  C2hmParams params = init_c2hm(model, init_rng);
  Adam gen_opt({config.lr});
  Adam rec_opt({config.lr});
  EarlyStopper stopper(config.patience, config.min_delta);
  result.params = params;

  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    const auto start = std::chrono::steady_clock::now();
    double rec = 0.0, prior = 0.0, sleep = 0.0;
    for (const auto& batch : make_batches(train.size(), config.batch_size, order_rng)) {
      const auto wake = wake_phase(params, train.gather(batch), noise_rng, gen_opt);
      ++result.wake_steps;
      const double sleep_err = sleep_phase(params, dream_rng, rec_opt, batch.size());
      ++result.sleep_steps;
      const double w = static_cast<double>(batch.size());
      rec += w * wake.reconstruction;
      prior += w * wake.prior_nll;
      sleep += w * sleep_err;
    }
    result.optimizer_steps = result.wake_steps + result.sleep_steps;
    const double n = static_cast<double>(train.size());
    EpochLog log;
    log.epoch = epoch;
    log.train = {rec / n, prior / n, sleep / n, rec / n};
    log.validation_total = evaluate_wake_reconstruction(params, validation, val_seed);
    if (!std::isfinite(log.validation_total)) throw std::runtime_error("validation loss is not finite");
    log.seconds = seconds_since(start);
    result.logs.push_back(log);
    if (on_epoch) on_epoch(log);
    if (stopper.update(log.validation_total)) {
      result.params = params;
      result.best_epoch = epoch;
    }
    if (stopper.should_stop()) break;
  }
  return result;
}

}  // namespace c2hm
