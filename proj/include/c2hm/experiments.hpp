#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "c2hm/data_io.hpp"
#include "c2hm/inference.hpp"
#include "c2hm/metrics.hpp"
#include "c2hm/planner.hpp"
#include "c2hm/training.hpp"

namespace c2hm {

struct CurseConfig {
  std::size_t D = 100;
  std::size_t d = 4;
  std::size_t k = 8;
  std::size_t N = 10000;
  double sigma = 0.1;
  double train_fraction = 0.8;
  std::size_t epochs = 20;
  std::size_t batch_size = 100;
  double lr = 1e-2;
  double eta = 0.01;
  FixedPointOptions loop;
  std::uint64_t seed = 1;
};

struct CurseResult {
  double mse_bottom_up = 0.0;
  double mse_inverted = 0.0;
  double mse_least_squares = 0.0;  // inversion with the true generator
  double ratio = 0.0;              // mse_bottom_up / mse_inverted
  bool converged = false;
  std::size_t iterations = 0;
  std::size_t train_size = 0;
  std::size_t test_size = 0;
  double seconds = 0.0;
};

/// Bottom-up regression Psi -> Phi against inversion of a learned linear
/// generator Phi -> Z -> Psi by the half-cycle gradient loop. Both models see
/// the same training pairs and optimizer budget; recovery MSE is measured on
/// the held-out tail of the dataset.
CurseResult run_curse_experiment(const CurseConfig& config);

// Least-squares inverse of psi rows under the true generator A * B.
Tensor least_squares_recovery(const SyntheticLinearGaussian& data, const Tensor& psi);

struct DeltaSweepEntry {
  double beta = 0.0;
  InferenceTrace trace;
  double initial_var = 0.0;
  double final_var = 0.0;
  double descent_fraction = 0.0;  // post burn-in
  double seconds = 0.0;
};

struct DeltaSweepResult {
  std::vector<DeltaSweepEntry> entries;
  std::size_t burn_in = 10;
  // Final variance ratios over the betas in order are monotone (either direction).
  bool monotone = false;
  // +1 when collapse deepens with beta, -1 when it weakens, 0 when flat or mixed.
  int direction = 0;
};

DeltaSweepResult run_delta_sweep(const DeltaConfig& base, const std::vector<double>& betas,
                                 const SyntheticLinearGaussian& data, std::size_t burn_in = 10);

enum class ModelKind { C2hm, WakeSleep };

const char* model_kind_name(ModelKind kind);
ModelKind parse_model_kind(const std::string& name);

struct MnistSplits {
  LabeledDataset train;
  LabeledDataset validation;
  LabeledDataset test;
};

/// First `train_count` images form the training subset (its last
/// `validation_fraction` is validation); the final `test_count` images are
/// the held-out test split.
MnistSplits make_mnist_splits(const LabeledDataset& all, std::size_t train_count, std::size_t test_count,
                              double validation_fraction = 0.1);

struct TrainRun {
  TrainResult result;
  MetricsRecord metrics;
  double seconds = 0.0;
};

/// Trains one model and evaluates RE, CC, LC on the test split and GF with
/// the given probe (64 samples per class unless changed).
TrainRun train_and_evaluate(ModelKind kind, const TrainConfig& train, const ModelConfig& model,
                            const LossWeights& weights, const MnistSplits& splits, const ProbeClassifier& probe,
                            std::size_t gf_per_class = 64, const EpochCallback& on_epoch = {});

/// Half-cycle loops from phi = 0 on the first `count` rows of `images`:
/// the amortized operator and the gradient step, each with a full trace.
struct LoopStudy {
  std::vector<FixedPointReport> amortized;
  std::vector<InferenceTrace> amortized_traces;
  std::vector<FixedPointReport> gradient;
  std::vector<InferenceTrace> gradient_traces;
};

LoopStudy run_loop_study(const C2hmParams& params, const Tensor& images, std::size_t count,
                         const ModelLoopOptions& options, std::uint64_t seed);

struct PlanReport {
  PlanResult plan;
  double ratio = 0.0;  // length / oracle_length
  bool pass = false;   // collision free and ratio <= 1.5
  double seconds = 0.0;
};

PlanReport run_plan(const GridWorld& grid, const PlannerConfig& config);

}  // namespace c2hm
