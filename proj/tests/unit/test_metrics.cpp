#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <numbers>

#include "c2hm/errors.hpp"
#include "c2hm/metrics.hpp"

using namespace c2hm;

namespace {

const std::string kData = std::string(C2HM_SOURCE_DIR) + "/data/mnist-subset/";

// d = k = D = classes = 3, no hidden layers, identity decoder, all weights zero.
C2hmParams flat_model() {
  ModelConfig c;
  c.d = 3;
  c.k = 3;
  c.D = 3;
  c.num_classes = 3;
  c.hidden_layers = 0;
  c.decoder_output = Activation::Identity;
  SeededRng rng(1);
  C2hmParams p = init_c2hm(c, rng);
  for (auto* mlp : {&p.sim, &p.dec, &p.cyc_enc, &p.cyc_dec})
    for (auto& l : mlp->layers) {
      for (double& w : l.weight.values()) w = 0.0;
      for (double& b : l.bias.values()) b = 0.0;
    }
  return p;
}

LabeledDataset tiny_data() {
  LabeledDataset ds;
  ds.images = Tensor::matrix(4, 3, {0.1, 0.2, 0.3, 0.9, 0.8, 0.7, 0.0, 1.0, 0.5, 0.4, 0.4, 0.4});
  ds.labels = {2, 1, 0, 1};
  return ds;
}

// Linear probe whose logits are the pixels themselves.
ProbeClassifier argmax_probe() {
  ProbeClassifier probe;
  DenseLayer l;
  l.weight = Tensor::identity(3);
  l.bias = Tensor({3}, 0.0);
  probe.mlp.layers.push_back(l);
  return probe;
}

}  // namespace

TEST_CASE("metrics csv is versioned and round trips") {
  std::vector<MetricsRecord> rows{{"c2hm", 1, 0.0435, 12.5, 0.9, -3.25, "t"}, {"wakesleep", 2, 0.0583, 400, 0.5, 70, ""}};
  const std::string csv = metrics_csv(rows);
  CHECK(csv ==
        "# schema: metrics-v1\nmodel,seed,re,cc,gf,lc\nc2hm,1,0.0435,12.5,0.9,-3.25\nwakesleep,2,0.0583,400,0.5,70\n");
  const auto back = parse_metrics_csv(csv);
  REQUIRE(back.size() == 2);
  CHECK(back[1].model == "wakesleep");
  CHECK(back[1].seed == 2);
  CHECK(back[0].lc == -3.25);
  CHECK_THROWS_AS(parse_metrics_csv("model,seed\n"), FormatError);
}

TEST_CASE("RE of a constant decoder") {
  C2hmParams p = flat_model();
  const double bias[3] = {0.3, 0.5, 0.2};
  for (std::size_t i = 0; i < 3; ++i) p.dec.layers[0].bias[i] = bias[i];
  const LabeledDataset ds = tiny_data();
  double expect = 0.0;
  for (std::size_t n = 0; n < 4; ++n)
    for (std::size_t i = 0; i < 3; ++i) expect += std::pow(ds.images.at(n, i) - bias[i], 2) / 12.0;
  SeededRng rng(2);
  CHECK(metric_re(p, ds, rng) == doctest::Approx(expect).epsilon(1e-12));
}

TEST_CASE("CC is the KL between simulator and recognition Gaussians") {
  C2hmParams p = flat_model();
  // sim: mean 0.5, log variance -1 per dim; recognition: mean -0.5, log variance 0.5.
  for (std::size_t i = 0; i < 3; ++i) {
    p.sim.layers[0].bias[i] = 0.5;
    p.sim.layers[0].bias[3 + i] = -1.0;
    p.cyc_enc.layers[0].bias[i] = -0.5;
    p.cyc_enc.layers[0].bias[3 + i] = 0.5;
  }
  const double v1 = std::exp(-1.0), v2 = std::exp(0.5);
  const double per_dim = 0.5 * (std::log(v2 / v1) + (v1 + 1.0) / v2 - 1.0);
  CHECK(metric_cc(p, tiny_data()) == doctest::Approx(3 * per_dim).epsilon(1e-12));
  for (std::size_t i = 0; i < 6; ++i) p.cyc_enc.layers[0].bias[i] = p.sim.layers[0].bias[i];
  CHECK(metric_cc(p, tiny_data()) == doctest::Approx(0.0));
}

TEST_CASE("LC is the simulator entropy averaged over classes") {
  C2hmParams p = flat_model();
  for (std::size_t i = 0; i < 3; ++i) p.sim.layers[0].weight.at(3 + i, i) = 1.0;
  p.goal_embed = Tensor::matrix(3, 3, {-1, 0, 0, 0, 0, 0, 0, 0, 2});
  // Per class the log variances sum to -1, 0 and 2.
  const double base = 1.5 * std::log(2 * std::numbers::pi * std::numbers::e);
  const double expect = base + 0.5 * (-1.0 + 0.0 + 2.0) / 3.0;
  CHECK(metric_lc(p) == doctest::Approx(expect).epsilon(1e-12));
  // Halving every variance lowers LC by k/2 log 2.
  for (std::size_t i = 0; i < 3; ++i) p.sim.layers[0].bias[3 + i] = -std::log(2.0);
  CHECK(metric_lc(p) == doctest::Approx(expect - 1.5 * std::log(2.0)).epsilon(1e-12));
}

TEST_CASE("GF counts probe agreement with the seeding class") {
  C2hmParams p = flat_model();
  for (std::size_t i = 0; i < 3; ++i) {
    p.sim.layers[0].weight.at(i, i) = 1.0;
    p.sim.layers[0].bias[3 + i] = -10.0;
    p.dec.layers[0].weight.at(i, i) = 1.0;
  }
  p.goal_embed = 5.0 * Tensor::identity(3);
  const ProbeClassifier probe = argmax_probe();
  SeededRng rng(3);
  CHECK(metric_gf(p, probe, 20, rng) == 1.0);
  // Every class generates the same picture, so only class 0 is recognised.
  p.goal_embed = Tensor::matrix(3, 3, {5, 0, 0, 5, 0, 0, 5, 0, 0});
  CHECK(metric_gf(p, probe, 20, rng) == doctest::Approx(1.0 / 3.0));
  const Tensor imgs = generate_for_class(p, 1, 7, rng);
  CHECK(imgs.shape() == Shape{7, 3});
}

TEST_CASE("probe prediction and accuracy") {
  const ProbeClassifier probe = argmax_probe();
  const LabeledDataset ds = tiny_data();
  const auto pred = probe_predict(probe, ds.images);
  CHECK(pred == std::vector<std::size_t>{2, 0, 1, 0});
  CHECK(probe_accuracy(probe, ds) == doctest::Approx(0.25));
}

TEST_CASE("probe trained on real digits clears the quality floor") {
  const LabeledDataset all = load_mnist_idx(kData + "images-idx3-ubyte.gz", kData + "labels-idx1-ubyte.gz");
  const LabeledDataset train = all.slice(0, 8000, "train");
  const LabeledDataset test = all.slice(8000, 2000, "test");
  ProbeConfig cfg;
  const ProbeClassifier probe = train_probe(train, test, cfg);
  CHECK(probe.accuracy >= 0.92);
  CHECK(probe_accuracy(probe, test) == doctest::Approx(probe.accuracy));

  // Shuffled labels carry no signal, so accuracy falls to chance and the floor trips.
  LabeledDataset shuffled = train.slice(0, 2000, "train");
  SeededRng rng(4);
  shuffle_indices(shuffled.labels, rng);
  ProbeConfig quick = cfg;
  quick.epochs = 2;
  quick.accuracy_floor = 0.5;
  CHECK_THROWS_AS(train_probe(shuffled, test, quick), ProbeQualityError);
}
