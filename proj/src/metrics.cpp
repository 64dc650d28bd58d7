#include "c2hm/metrics.hpp"

#include <cstdio>
#include <numeric>
#include <sstream>

#include "c2hm/errors.hpp"
#include "c2hm/training.hpp"

namespace c2hm {

namespace {

constexpr std::size_t kChunk = 500;

void require_nonempty(const LabeledDataset& data, const char* what) {
  if (data.size() == 0) throw ContractError(std::string(what) + ": empty dataset");
}

template <typename F>
void for_chunks(const LabeledDataset& data, F f) {
  for (std::size_t start = 0; start < data.size(); start += kChunk) {
    const auto count = std::min(kChunk, data.size() - start);
    std::vector<std::size_t> rows(count);
    std::iota(rows.begin(), rows.end(), start);
    f(data.gather(rows));
  }
}

std::string g6(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

}  // namespace

std::string metrics_csv(const std::vector<MetricsRecord>& records) {
  std::string out = "# schema: metrics-v1\nmodel,seed,re,cc,gf,lc\n";
  for (const auto& r : records) {
    out += r.model + "," + std::to_string(r.seed) + "," + g6(r.re) + "," + g6(r.cc) + "," + g6(r.gf) + "," +
           g6(r.lc) + "\n";
  }
  return out;
}

std::vector<MetricsRecord> parse_metrics_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  std::vector<MetricsRecord> out;
  std::size_t lineno = 0;
  bool header = false;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    if (!header) {
      if (line != "model,seed,re,cc,gf,lc") throw FormatError("metrics csv: unexpected header on line " + std::to_string(lineno));
      header = true;
      continue;
    }
    std::vector<std::string> f;
    std::istringstream ls(line);
    for (std::string cell; std::getline(ls, cell, ',');) f.push_back(cell);
    if (f.size() != 6) throw FormatError("metrics csv: expected 6 fields on line " + std::to_string(lineno));
    MetricsRecord r;
    r.model = f[0];
    r.seed = std::stoull(f[1]);
    r.re = std::stod(f[2]);
    r.cc = std::stod(f[3]);
    r.gf = std::stod(f[4]);
    r.lc = std::stod(f[5]);
    out.push_back(r);
  }
  return out;
}

double metric_re(const C2hmParams& params, const LabeledDataset& data, SeededRng& rng) {
  require_nonempty(data, "metric_re");
  double acc = 0.0;
  for_chunks(data, [&](const LabeledDataset& chunk) {
    Tape t;
    const auto m = bind(t, params, false);
    const auto q = simulate_latent(m, embed_goal(m, chunk.labels));
    const Var x_hat = decode(m, sample_reparam(q, rng));
    acc += static_cast<double>(chunk.size()) * ad::squared_error(t.constant(chunk.images), x_hat).value().item();
  });
  return acc / static_cast<double>(data.size());
}

double metric_cc(const C2hmParams& params, const LabeledDataset& data) {
  require_nonempty(data, "metric_cc");
  double acc = 0.0;
  for_chunks(data, [&](const LabeledDataset& chunk) {
    Tape t;
    const auto m = bind(t, params, false);
    const auto p = simulate_latent(m, embed_goal(m, chunk.labels)).value();
    const auto q = cycle_encode(m, t.constant(chunk.images)).value();
    acc += kl_between(p, q);
  });
  return acc / static_cast<double>(data.size());
}

double metric_lc(const C2hmParams& params) {
  Tape t;
  const auto m = bind(t, params, false);
  std::vector<std::size_t> classes(params.num_classes);
  std::iota(classes.begin(), classes.end(), 0);
  const auto q = simulate_latent(m, embed_goal(m, classes)).value();
  return entropy(q) / static_cast<double>(params.num_classes);
}

ProbeClassifier train_probe(const LabeledDataset& train, const LabeledDataset& test, const ProbeConfig& config) {
  require_nonempty(train, "train_probe");
  require_nonempty(test, "train_probe");
  std::size_t classes = 0;
  for (auto l : train.labels) classes = std::max(classes, l + 1);
  SeededRng init_rng = SeededRng(config.seed).fork(11);
  SeededRng order_rng = SeededRng(config.seed).fork(12);
  const std::size_t widths[] = {train.dim(), config.hidden, classes};
  ProbeClassifier probe;
  probe.mlp = init_mlp(widths, Activation::Tanh, Activation::Identity, init_rng);
  Adam opt({config.lr});
  const auto tensors = mlp_tensors(probe.mlp);
  for (std::size_t e = 0; e < config.epochs; ++e) {
    for (const auto& batch : make_batches(train.size(), config.batch_size, order_rng)) {
      const auto b = train.gather(batch);
      Tape t;
      const BoundMlp bm = bind_mlp(t, probe.mlp);
      const Var loss = ad::softmax_cross_entropy(mlp_forward(bm, t.constant(b.images)), b.labels);
      opt.step(tensors, mlp_gradients(t.backward(loss), bm));
    }
  }
  probe.accuracy = probe_accuracy(probe, test);
  if (probe.accuracy < config.accuracy_floor) {
    throw ProbeQualityError("probe accuracy " + g6(probe.accuracy) + " below floor " + g6(config.accuracy_floor));
  }
  return probe;
}

std::vector<std::size_t> probe_predict(const ProbeClassifier& probe, const Tensor& images) {
  Tape t;
  const BoundMlp bm = bind_mlp(t, probe.mlp, false);
  const Tensor logits = mlp_forward(bm, t.constant(images)).value();
  std::vector<std::size_t> out(logits.rows());
  for (std::size_t r = 0; r < logits.rows(); ++r) {
    std::size_t best = 0;
    for (std::size_t c = 1; c < logits.cols(); ++c) {
      if (logits.at(r, c) > logits.at(r, best)) best = c;
    }
    out[r] = best;
  }
  return out;
}

double probe_accuracy(const ProbeClassifier& probe, const LabeledDataset& data) {
  require_nonempty(data, "probe_accuracy");
  std::size_t hits = 0;
  for_chunks(data, [&](const LabeledDataset& chunk) {
    const auto pred = probe_predict(probe, chunk.images);
    for (std::size_t i = 0; i < pred.size(); ++i) hits += pred[i] == chunk.labels[i];
  });
  return static_cast<double>(hits) / static_cast<double>(data.size());
}

Tensor generate_for_class(const C2hmParams& params, std::size_t label, std::size_t count, SeededRng& rng) {
  Tape t;
  const auto m = bind(t, params, false);
  const std::vector<std::size_t> labels(count, label);
  const auto q = simulate_latent(m, embed_goal(m, labels));
  return decode(m, sample_reparam(q, rng)).value();
}

double metric_gf(const C2hmParams& params, const ProbeClassifier& probe, std::size_t per_class, SeededRng& rng) {
  if (per_class == 0) throw ContractError("metric_gf: per_class must be positive");
  std::size_t hits = 0;
  for (std::size_t c = 0; c < params.num_classes; ++c) {
    const auto pred = probe_predict(probe, generate_for_class(params, c, per_class, rng));
    for (auto p : pred) hits += p == c;
  }
  return static_cast<double>(hits) / static_cast<double>(per_class * params.num_classes);
}

}  // namespace c2hm
