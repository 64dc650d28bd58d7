#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>

#include "c2hm/errors.hpp"
#include "c2hm/model.hpp"

using namespace c2hm;

namespace {

ModelConfig small_config() {
  ModelConfig c;
  c.d = 3;
  c.k = 4;
  c.D = 10;
  c.num_classes = 5;
  c.hidden = 6;
  c.hidden_layers = 1;
  return c;
}

double act(Activation a, double v) {
  switch (a) {
    case Activation::Sigmoid:
      return 1.0 / (1.0 + std::exp(-v));
    case Activation::Tanh:
      return std::tanh(v);
    default:
      return v;
  }
}

// Plain loop forward pass of an MLP on one input row.
std::vector<double> ref_forward(const MlpParams& mlp, std::vector<double> x) {
  for (const auto& layer : mlp.layers) {
    std::vector<double> y(layer.weight.rows());
    for (std::size_t o = 0; o < y.size(); ++o) {
      double s = layer.bias[o];
      for (std::size_t i = 0; i < x.size(); ++i) s += layer.weight.at(o, i) * x[i];
      y[o] = act(layer.activation, s);
    }
    x = y;
  }
  return x;
}

}  // namespace

TEST_CASE("network shapes follow the config") {
  SeededRng rng(1);
  const ModelConfig c = small_config();
  const C2hmParams p = init_c2hm(c, rng);
  CHECK(p.goal_embed.shape() == Shape{5, 3});
  CHECK(p.sim.in_dim() == 3);
  CHECK(p.sim.out_dim() == 8);
  CHECK(p.dec.in_dim() == 4);
  CHECK(p.dec.out_dim() == 10);
  CHECK(p.cyc_enc.in_dim() == 10);
  CHECK(p.cyc_enc.out_dim() == 8);
  CHECK(p.cyc_dec.in_dim() == 4);
  CHECK(p.cyc_dec.out_dim() == 3);
  CHECK(p.sim.layers.size() == 2);
  CHECK(p.dec.layers.back().activation == Activation::Sigmoid);
  CHECK_NOTHROW(p.validate());
  std::size_t count = 0;
  for (const Tensor* t : parameter_tensors(p)) count += t->size();
  CHECK(count == p.parameter_count());
}

TEST_CASE("initialization statistics") {
  SeededRng rng(2);
  ModelConfig c;
  c.num_classes = 400;
  c.d = 50;
  c.k = 64;
  const C2hmParams p = init_c2hm(c, rng);
  double s2 = 0;
  for (double v : p.goal_embed.values()) s2 += v * v;
  CHECK(s2 / p.goal_embed.size() == doctest::Approx(0.01).epsilon(0.05));
  const DenseLayer& first = p.dec.layers.front();
  const double limit = std::sqrt(6.0 / (first.weight.rows() + first.weight.cols()));
  double maxabs = 0;
  for (double v : first.weight.values()) maxabs = std::max(maxabs, std::abs(v));
  CHECK(maxabs <= limit);
  CHECK(maxabs > 0.9 * limit);
  for (double v : first.bias.values()) CHECK(v == 0.0);
}

TEST_CASE("mlp forward matches a loop implementation") {
  SeededRng rng(3);
  const std::vector<std::size_t> widths{4, 7, 3};
  MlpParams mlp = init_mlp(widths, Activation::Tanh, Activation::Sigmoid, rng);
  for (auto& l : mlp.layers)
    for (double& b : l.bias.values()) b = rng.standard_normal();
  const std::vector<double> x{0.2, -0.4, 1.1, 0.05};
  Tape tape;
  const Tensor y = mlp_forward(bind_mlp(tape, mlp), tape.constant(Tensor::vector(x))).value();
  const auto ref = ref_forward(mlp, x);
  REQUIRE(y.size() == ref.size());
  for (std::size_t i = 0; i < ref.size(); ++i) CHECK(y[i] == doctest::Approx(ref[i]).epsilon(1e-12));
}

TEST_CASE("simulate_latent splits mean and log variance") {
  SeededRng rng(4);
  const C2hmParams p = init_c2hm(small_config(), rng);
  const Tensor phi = embed_goal(p, 2);
  CHECK(phi == p.goal_embed.row(2));
  const auto out = ref_forward(p.sim, {phi.values().begin(), phi.values().end()});
  const DiagonalGaussian z = simulate_latent(p, phi);
  for (std::size_t i = 0; i < 4; ++i) {
    CHECK(z.mean()[i] == doctest::Approx(out[i]));
    CHECK(z.log_var()[i] == doctest::Approx(std::clamp(out[4 + i], kLogVarMin, kLogVarMax)));
  }
  const Tensor psi = decode(p, z.mean());
  for (double v : psi.values()) CHECK((v > 0.0 && v < 1.0));
}

TEST_CASE("full cycle shapes and embedding lookups") {
  SeededRng rng(5);
  const C2hmParams p = init_c2hm(small_config(), rng);
  Tape tape;
  const BoundC2hm m = bind(tape, p);
  const std::vector<std::size_t> labels{0, 4, 4};
  const Var phi = embed_goal(m, labels);
  CHECK(phi.value().row(1) == p.goal_embed.row(4));
  SeededRng noise(6);
  const CycleOutputs c = full_cycle(m, phi, noise);
  CHECK(c.z.shape() == Shape{3, 4});
  CHECK(c.psi_hat.shape() == Shape{3, 10});
  CHECK(c.z2.shape() == Shape{3, 4});
  CHECK(c.psi_loop.shape() == Shape{3, 10});
  CHECK(c.phi_hat.shape() == Shape{3, 3});
  const std::vector<std::size_t> bad{5};
  CHECK_THROWS(embed_goal(m, bad));
}

TEST_CASE("parameter groups partition the parameters") {
  SeededRng rng(7);
  C2hmParams p = init_c2hm(small_config(), rng);
  const auto all = parameter_tensors(p, ParamGroup::All);
  const auto gen = parameter_tensors(p, ParamGroup::Generative);
  const auto rec = parameter_tensors(p, ParamGroup::Recognition);
  CHECK(gen.size() + rec.size() == all.size());
  CHECK(parameter_names(p, ParamGroup::All).size() == all.size());
  const auto cd = parameter_tensors(p, ParamGroup::CycleDecoder);
  CHECK(cd.size() == 2 * p.cyc_dec.layers.size());

  const auto before_gen = checksum(p, ParamGroup::Generative);
  const auto before_rec = checksum(p, ParamGroup::Recognition);
  (*rec.front())[0] += 1.0;
  CHECK(checksum(p, ParamGroup::Generative) == before_gen);
  CHECK(checksum(p, ParamGroup::Recognition) != before_rec);
}

TEST_CASE("parameter gradients line up with tensors") {
  SeededRng rng(8);
  const C2hmParams p = init_c2hm(small_config(), rng);
  Tape tape;
  const BoundC2hm m = bind(tape, p);
  const std::vector<std::size_t> labels{1};
  const Var out = ad::sum(decode(m, simulate_latent(m, embed_goal(m, labels)).mean));
  const Gradients g = tape.backward(out);
  const auto grads = parameter_gradients(g, m, ParamGroup::All);
  const auto tensors = parameter_tensors(p, ParamGroup::All);
  REQUIRE(grads.size() == tensors.size());
  for (std::size_t i = 0; i < grads.size(); ++i) CHECK(grads[i].shape() == tensors[i]->shape());
  // Recognition networks do not take part in this output.
  const auto rec = parameter_gradients(g, m, ParamGroup::Recognition);
  for (const auto& t : rec) CHECK(squared_norm(t) == 0.0);
}

TEST_CASE("checkpoint round trip is bit exact") {
  SeededRng rng(9);
  const C2hmParams p = init_c2hm(small_config(), rng);
  const std::string text = serialize_checkpoint(p);
  CHECK(text.rfind("C2HM-CKPT v1", 0) == 0);
  const C2hmParams q = parse_checkpoint(text);
  const auto a = parameter_tensors(p), b = parameter_tensors(q);
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    REQUIRE(a[i]->size() == b[i]->size());
    CHECK(std::memcmp(a[i]->data(), b[i]->data(), a[i]->size() * sizeof(double)) == 0);
  }
  CHECK(serialize_checkpoint(q) == text);

  const auto path = std::filesystem::temp_directory_path() / "c2hm_test_model.ckpt";
  save_checkpoint(p, path.string());
  CHECK(serialize_checkpoint(load_checkpoint(path.string())) == text);
  std::filesystem::remove(path);
}

TEST_CASE("damaged checkpoints are rejected") {
  SeededRng rng(10);
  const std::string text = serialize_checkpoint(init_c2hm(small_config(), rng));
  CHECK_THROWS_AS(parse_checkpoint("C2HM-CKPT v9\n"), FormatError);
  CHECK_THROWS_AS(parse_checkpoint(text.substr(0, text.size() / 2)), FormatError);
  CHECK_THROWS(load_checkpoint("/nonexistent/c2hm.ckpt"));
}

TEST_CASE("activation names round trip") {
  for (Activation a : {Activation::Identity, Activation::Sigmoid, Activation::Tanh})
    CHECK(parse_activation(activation_name(a)) == a);
  CHECK_THROWS(parse_activation("relu6"));
}
