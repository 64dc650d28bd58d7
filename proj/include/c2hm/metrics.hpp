#pragma once

#include <string>
#include <vector>

#include "c2hm/data_io.hpp"
#include "c2hm/model.hpp"

namespace c2hm {

struct MetricsRecord {
  std::string model;
  std::uint64_t seed = 0;
  double re = 0.0;
  double cc = 0.0;
  double gf = 0.0;
  double lc = 0.0;
  std::string timestamp;  // informational, not written to CSV
};

// `# schema: metrics-v1` header, then `model,seed,re,cc,gf,lc` rows at 6 significant digits.
std::string metrics_csv(const std::vector<MetricsRecord>& records);
std::vector<MetricsRecord> parse_metrics_csv(const std::string& text);

/// Mean per-pixel squared error between x and
/// decode(sample of p(Z | Phi = embed(label))).
double metric_re(const C2hmParams& params, const LabeledDataset& data, SeededRng& rng);

/// Mean over the set of KL(p(Z | embed(label)) || q(Z | x)).
double metric_cc(const C2hmParams& params, const LabeledDataset& data);

/// Mean over classes of the entropy of p(Z | embed(c)), in nats.
double metric_lc(const C2hmParams& params);

class ProbeQualityError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct ProbeConfig {
  std::size_t hidden = 128;
  std::size_t epochs = 10;
  std::size_t batch_size = 64;
  double lr = 1e-3;
  double accuracy_floor = 0.92;
  std::uint64_t seed = 1;
};

struct ProbeClassifier {
  MlpParams mlp;  // D -> hidden (tanh) -> classes, logits
  double accuracy = 0.0;
};

// Trains on real images only; throws ProbeQualityError below the floor.
ProbeClassifier train_probe(const LabeledDataset& train, const LabeledDataset& test, const ProbeConfig& config);
std::vector<std::size_t> probe_predict(const ProbeClassifier& probe, const Tensor& images);
double probe_accuracy(const ProbeClassifier& probe, const LabeledDataset& data);

// Images decoded from sampled latents for a class.
Tensor generate_for_class(const C2hmParams& params, std::size_t label, std::size_t count, SeededRng& rng);

/// Fraction of generated samples (per_class for every class) that the probe
/// assigns to the seeding class.
double metric_gf(const C2hmParams& params, const ProbeClassifier& probe, std::size_t per_class, SeededRng& rng);

}  // namespace c2hm
