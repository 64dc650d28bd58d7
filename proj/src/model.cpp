#include "c2hm/model.hpp"

#include <cmath>
#include <cstring>

#include "c2hm/errors.hpp"

namespace c2hm {

const char* activation_name(Activation a) {
  switch (a) {
    case Activation::Identity: return "identity";
    case Activation::Sigmoid: return "sigmoid";
    case Activation::Tanh: return "tanh";
  }
  return "identity";
}

Activation parse_activation(const std::string& name) {
  if (name == "identity") return Activation::Identity;
  if (name == "sigmoid") return Activation::Sigmoid;
  if (name == "tanh") return Activation::Tanh;
  throw FormatError("unknown activation '" + name + "'");
}

void MlpParams::validate(const std::string& name) const {
  if (layers.empty()) throw ShapeError(name + ": network has no layers");
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const auto& l = layers[i];
    if (l.weight.rank() != 2 || l.bias.rank() != 1 || l.bias.size() != l.weight.rows()) {
      throw ShapeError(name + ": layer " + std::to_string(i) + " weight " + l.weight.shape_string() + " bias " +
                       l.bias.shape_string());
    }
    if (i > 0 && layers[i - 1].weight.rows() != l.weight.cols()) {
      throw ShapeError(name + ": layer " + std::to_string(i) + " input " + std::to_string(l.weight.cols()) +
                       " does not chain with previous output " + std::to_string(layers[i - 1].weight.rows()));
    }
  }
}

void C2hmParams::validate() const {
  if (!(d <= k && k <= D)) {
    throw ShapeError("dimensions must satisfy d <= k <= D, got d=" + std::to_string(d) + " k=" + std::to_string(k) +
                     " D=" + std::to_string(D));
  }
  if (num_classes == 0) throw ShapeError("num_classes must be positive");
  if (goal_embed.rank() != 2 || goal_embed.rows() != num_classes || goal_embed.cols() != d) {
    throw ShapeError("goal_embed must be [num_classes x d], got " + goal_embed.shape_string());
  }
  sim.validate("sim");
  dec.validate("dec");
  cyc_enc.validate("cyc_enc");
  cyc_dec.validate("cyc_dec");
  auto expect = [](const MlpParams& m, const char* name, std::size_t in, std::size_t out) {
    if (m.in_dim() != in || m.out_dim() != out) {
      throw ShapeError(std::string(name) + ": expected " + std::to_string(in) + " -> " + std::to_string(out) +
                       ", got " + std::to_string(m.in_dim()) + " -> " + std::to_string(m.out_dim()));
    }
  };
  expect(sim, "sim", d, 2 * k);
  expect(dec, "dec", k, D);
  expect(cyc_enc, "cyc_enc", D, 2 * k);
  expect(cyc_dec, "cyc_dec", k, d);
}

std::size_t C2hmParams::parameter_count() const {
  std::size_t n = 0;
  for (const Tensor* t : parameter_tensors(*this)) n += t->size();
  return n;
}

namespace {

template <typename P, typename T>
void collect(P& params, ParamGroup group, std::vector<T*>& out) {
  const bool gen = group == ParamGroup::All || group == ParamGroup::Generative;
  const bool rec = group == ParamGroup::All || group == ParamGroup::Recognition;
  auto add_mlp = [&out](auto& mlp) {
    for (auto& l : mlp.layers) {
      out.push_back(&l.weight);
      out.push_back(&l.bias);
    }
  };
  if (gen) {
    out.push_back(&params.goal_embed);
    add_mlp(params.sim);
    add_mlp(params.dec);
  }
  if (rec) add_mlp(params.cyc_enc);
  if (rec || group == ParamGroup::CycleDecoder) add_mlp(params.cyc_dec);
}

template <typename F>
void for_each_bound(const BoundC2hm& b, ParamGroup group, F f) {
  const bool gen = group == ParamGroup::All || group == ParamGroup::Generative;
  const bool rec = group == ParamGroup::All || group == ParamGroup::Recognition;
  auto add_mlp = [&f](const BoundMlp& mlp) {
    for (std::size_t i = 0; i < mlp.weights.size(); ++i) {
      f(mlp.weights[i]);
      f(mlp.biases[i]);
    }
  };
  if (gen) {
    f(b.goal_embed);
    add_mlp(b.sim);
    add_mlp(b.dec);
  }
  if (rec) add_mlp(b.cyc_enc);
  if (rec || group == ParamGroup::CycleDecoder) add_mlp(b.cyc_dec);
}

Var activate(Var x, Activation a) {
  switch (a) {
    case Activation::Identity: return x;
    case Activation::Sigmoid: return ad::sigmoid(x);
    case Activation::Tanh: return ad::tanh(x);
  }
  return x;
}

void check_cols(Var x, std::size_t expected, const char* op) {
  if (x.value().cols() != expected) {
    throw ShapeError(std::string(op) + ": expected input dimension " + std::to_string(expected) + ", got " +
                     x.value().shape_string());
  }
}

GaussianVar gaussian_head(Var out, std::size_t k) {
  return {ad::slice_cols(out, 0, k), ad::clamp(ad::slice_cols(out, k, k), kLogVarMin, kLogVarMax)};
}

}  // namespace

BoundMlp bind_mlp(Tape& tape, const MlpParams& mlp, bool trainable) {
  BoundMlp b;
  for (const auto& l : mlp.layers) {
    b.weights.push_back(trainable ? tape.leaf(l.weight) : tape.constant(l.weight));
    b.biases.push_back(trainable ? tape.leaf(l.bias) : tape.constant(l.bias));
    b.activations.push_back(l.activation);
  }
  return b;
}

std::vector<Tensor*> mlp_tensors(MlpParams& mlp) {
  std::vector<Tensor*> out;
  for (auto& l : mlp.layers) {
    out.push_back(&l.weight);
    out.push_back(&l.bias);
  }
  return out;
}

std::vector<Tensor> mlp_gradients(const Gradients& grads, const BoundMlp& mlp) {
  std::vector<Tensor> out;
  for (std::size_t i = 0; i < mlp.weights.size(); ++i) {
    out.push_back(grads[mlp.weights[i]]);
    out.push_back(grads[mlp.biases[i]]);
  }
  return out;
}

std::vector<Tensor*> parameter_tensors(C2hmParams& params, ParamGroup group) {
  std::vector<Tensor*> out;
  collect(params, group, out);
  return out;
}

std::vector<const Tensor*> parameter_tensors(const C2hmParams& params, ParamGroup group) {
  std::vector<const Tensor*> out;
  collect(params, group, out);
  return out;
}

std::vector<std::string> parameter_names(const C2hmParams& params, ParamGroup group) {
  std::vector<std::string> names;
  const bool gen = group == ParamGroup::All || group == ParamGroup::Generative;
  const bool rec = group == ParamGroup::All || group == ParamGroup::Recognition;
  auto add_mlp = [&names](const MlpParams& mlp, const std::string& name) {
    for (std::size_t i = 0; i < mlp.layers.size(); ++i) {
      names.push_back(name + ".layer" + std::to_string(i) + ".weight");
      names.push_back(name + ".layer" + std::to_string(i) + ".bias");
    }
  };
  if (gen) {
    names.emplace_back("goal_embed");
    add_mlp(params.sim, "sim");
    add_mlp(params.dec, "dec");
  }
  if (rec) add_mlp(params.cyc_enc, "cyc_enc");
  if (rec || group == ParamGroup::CycleDecoder) add_mlp(params.cyc_dec, "cyc_dec");
  return names;
}

std::uint64_t checksum(const C2hmParams& params, ParamGroup group) {
  std::uint64_t h = 1469598103934665603ULL;
  for (const Tensor* t : parameter_tensors(params, group)) {
    for (double v : t->values()) {
      std::uint64_t bits;
      std::memcpy(&bits, &v, sizeof bits);
      for (int i = 0; i < 8; ++i) {
        h ^= (bits >> (8 * i)) & 0xff;
        h *= 1099511628211ULL;
      }
    }
  }
  return h;
}

MlpParams init_mlp(std::span<const std::size_t> widths, Activation hidden, Activation output, SeededRng& rng) {
  if (widths.size() < 2) throw ContractError("init_mlp: need at least input and output widths");
  MlpParams mlp;
  for (std::size_t i = 0; i + 1 < widths.size(); ++i) {
    const auto in = widths[i], out = widths[i + 1];
    const double a = std::sqrt(6.0 / static_cast<double>(in + out));
    DenseLayer layer{rng_uniform(rng, {out, in}, -a, a), Tensor({out}),
                     i + 2 == widths.size() ? output : hidden};
    mlp.layers.push_back(std::move(layer));
  }
  return mlp;
}

C2hmParams init_c2hm(const ModelConfig& c, SeededRng& rng) {
  auto widths = [&c](std::size_t in, std::size_t out) {
    std::vector<std::size_t> w{in};
    for (std::size_t i = 0; i < c.hidden_layers; ++i) w.push_back(c.hidden);
    w.push_back(out);
    return w;
  };
  C2hmParams p;
  p.d = c.d;
  p.k = c.k;
  p.D = c.D;
  p.num_classes = c.num_classes;
  p.goal_embed = 0.1 * rng_standard_normal(rng, {c.num_classes, c.d});
  p.sim = init_mlp(widths(c.d, 2 * c.k), c.hidden_activation, Activation::Identity, rng);
  p.dec = init_mlp(widths(c.k, c.D), c.hidden_activation, c.decoder_output, rng);
  p.cyc_enc = init_mlp(widths(c.D, 2 * c.k), c.hidden_activation, Activation::Identity, rng);
  p.cyc_dec = init_mlp(widths(c.k, c.d), c.hidden_activation, Activation::Identity, rng);
  p.validate();
  return p;
}

BoundC2hm bind(Tape& tape, const C2hmParams& params, bool trainable) {
  BoundC2hm b;
  b.params = &params;
  b.goal_embed = trainable ? tape.leaf(params.goal_embed) : tape.constant(params.goal_embed);
  b.sim = bind_mlp(tape, params.sim, trainable);
  b.dec = bind_mlp(tape, params.dec, trainable);
  b.cyc_enc = bind_mlp(tape, params.cyc_enc, trainable);
  b.cyc_dec = bind_mlp(tape, params.cyc_dec, trainable);
  return b;
}

std::vector<Tensor> parameter_gradients(const Gradients& grads, const BoundC2hm& bound, ParamGroup group) {
  std::vector<Tensor> out;
  for_each_bound(bound, group, [&](Var v) { out.push_back(grads[v]); });
  return out;
}

Var mlp_forward(const BoundMlp& mlp, Var x) {
  for (std::size_t i = 0; i < mlp.weights.size(); ++i) {
    x = activate(ad::linear(x, mlp.weights[i], mlp.biases[i]), mlp.activations[i]);
  }
  return x;
}

Var embed_goal(const BoundC2hm& m, std::span<const std::size_t> labels) {
  for (auto l : labels) {
    if (l >= m.params->num_classes) {
      throw ContractError("embed_goal: label " + std::to_string(l) + " outside [0, " +
                          std::to_string(m.params->num_classes) + ")");
    }
  }
  return ad::gather_rows(m.goal_embed, labels);
}

GaussianVar simulate_latent(const BoundC2hm& m, Var phi) {
  check_cols(phi, m.params->d, "simulate_latent");
  return gaussian_head(mlp_forward(m.sim, phi), m.params->k);
}

Var decode(const BoundC2hm& m, Var z) {
  check_cols(z, m.params->k, "decode");
  return mlp_forward(m.dec, z);
}

GaussianVar cycle_encode(const BoundC2hm& m, Var psi) {
  check_cols(psi, m.params->D, "cycle_encode");
  return gaussian_head(mlp_forward(m.cyc_enc, psi), m.params->k);
}

Var cycle_decode(const BoundC2hm& m, Var z2) {
  check_cols(z2, m.params->k, "cycle_decode");
  return mlp_forward(m.cyc_dec, z2);
}

CycleOutputs full_cycle(const BoundC2hm& m, Var phi, SeededRng& rng) {
  CycleOutputs c;
  c.phi = phi;
  c.z_dist = simulate_latent(m, phi);
  c.z = sample_reparam(c.z_dist, rng);
  c.psi_hat = decode(m, c.z);
  c.z2_dist = cycle_encode(m, c.psi_hat);
  c.z2 = sample_reparam(c.z2_dist, rng);
  c.psi_loop = decode(m, c.z2);
  c.phi_hat = cycle_decode(m, c.z2);
  return c;
}

Tensor embed_goal(const C2hmParams& params, std::size_t label) {
  if (label >= params.num_classes) {
    throw ContractError("embed_goal: label " + std::to_string(label) + " outside [0, " +
                        std::to_string(params.num_classes) + ")");
  }
  return params.goal_embed.row(label);
}

DiagonalGaussian simulate_latent(const C2hmParams& params, const Tensor& phi) {
  Tape t;
  const auto b = bind(t, params, false);
  return simulate_latent(b, t.constant(phi)).value();
}

Tensor decode(const C2hmParams& params, const Tensor& z) {
  Tape t;
  const auto b = bind(t, params, false);
  return decode(b, t.constant(z)).value();
}

DiagonalGaussian cycle_encode(const C2hmParams& params, const Tensor& psi) {
  Tape t;
  const auto b = bind(t, params, false);
  return cycle_encode(b, t.constant(psi)).value();
}

Tensor cycle_decode(const C2hmParams& params, const Tensor& z2) {
  Tape t;
  const auto b = bind(t, params, false);
  return cycle_decode(b, t.constant(z2)).value();
}

}  // namespace c2hm
