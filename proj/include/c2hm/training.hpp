#pragma once

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "c2hm/data_io.hpp"
#include "c2hm/model.hpp"
#include "c2hm/objectives.hpp"

namespace c2hm {

class NonFiniteGradientError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct AdamOptions {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Bias-corrected Adam. Moment buffers are created on the first step and
/// must keep the parameter shapes afterwards.
class Adam {
 public:
  explicit Adam(AdamOptions options = {}) : opt_(options) {}

  // `names`, when given, labels tensors in non-finite gradient diagnostics.
  void step(std::span<Tensor* const> params, std::span<const Tensor> grads,
            std::span<const std::string> names = {});

  std::size_t steps() const { return t_; }
  const AdamOptions& options() const { return opt_; }
  const std::vector<Tensor>& first_moments() const { return m_; }
  const std::vector<Tensor>& second_moments() const { return v_; }

 private:
  AdamOptions opt_;
  std::vector<Tensor> m_;
  std::vector<Tensor> v_;
  std::size_t t_ = 0;
};

struct TrainConfig {
  std::size_t epochs = 20;
  std::size_t batch_size = 64;
  double lr = 1e-3;
  std::size_t patience = 5;
  double min_delta = 1e-5;
  std::uint64_t seed = 1;

  void validate() const;
};

/// One row of the training log. For wake-sleep runs `train.rec` is the wake
/// reconstruction error, `train.loop` the wake prior NLL of recognized
/// latents, `train.latent` the sleep recognition error and `train.total` the
/// wake reconstruction error; `validation_total` is the wake reconstruction
/// error on the validation split.
struct EpochLog {
  std::size_t epoch = 0;
  LossBreakdown train;
  double validation_total = 0.0;
  double seconds = 0.0;
};

struct TrainResult {
  C2hmParams params;  // best-validation checkpoint
  std::vector<EpochLog> logs;
  std::size_t best_epoch = 0;
  std::size_t optimizer_steps = 0;
  std::size_t wake_steps = 0;
  std::size_t sleep_steps = 0;
};

using EpochCallback = std::function<void(const EpochLog&)>;

// Batches of `batch_size` row indices from a seeded permutation; the last
// batch may be short.
std::vector<std::vector<std::size_t>> make_batches(std::size_t n, std::size_t batch_size, SeededRng& rng);

/// Composite-loss training with early stopping on the validation total.
/// The cycle decoder is fitted alongside through content_cycle_loss.
TrainResult train_c2hm(const TrainConfig& config, const ModelConfig& model, const LossWeights& weights,
                       const LabeledDataset& train, const LabeledDataset& validation,
                       const EpochCallback& on_epoch = {});

// Composite loss (batch mean) of a labeled set under fixed sampling noise.
LossBreakdown evaluate_composite(const C2hmParams& params, const LossWeights& weights, const LabeledDataset& data,
                                 std::uint64_t noise_seed);

struct WakeStats {
  double reconstruction = 0.0;
  double prior_nll = 0.0;
};

/// Wake phase: Z ~ q(Z | Psi) from the recognition network (no gradient),
/// then the generative networks (goal_embed, sim, dec) ascend
/// log p(Z | Phi) + log p(Psi | Z), the latter as squared error.
WakeStats wake_phase(C2hmParams& params, const LabeledDataset& batch, SeededRng& rng, Adam& generative_opt);

/// Sleep phase: Z ~ N(0, I), dreams Psi = dec(Z) (no gradient), and the
/// recognition mean head is regressed onto Z. Returns the squared error.
double sleep_phase(C2hmParams& params, SeededRng& rng, Adam& recognition_opt, std::size_t batch_size);

// Dream batch a sleep step with this rng state would train on.
Tensor dream_batch(const C2hmParams& params, SeededRng& rng, std::size_t batch_size, Tensor* latents = nullptr);

/// One wake step and one sleep step per batch, same early stopping rule.
TrainResult train_wakesleep(const TrainConfig& config, const ModelConfig& model, const LabeledDataset& train,
                            const LabeledDataset& validation, const EpochCallback& on_epoch = {});

// Wake reconstruction error of a labeled set under fixed sampling noise.
double evaluate_wake_reconstruction(const C2hmParams& params, const LabeledDataset& data, std::uint64_t noise_seed);

}  // namespace c2hm
