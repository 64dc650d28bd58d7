#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "c2hm/distributions.hpp"
#include "c2hm/rng.hpp"
#include "c2hm/tape.hpp"

namespace c2hm {

enum class Activation { Identity, Sigmoid, Tanh };

const char* activation_name(Activation a);
Activation parse_activation(const std::string& name);

struct DenseLayer {
  Tensor weight;  // [out x in]
  Tensor bias;    // [out]
  Activation activation = Activation::Identity;
};

struct MlpParams {
  std::vector<DenseLayer> layers;

  std::size_t in_dim() const { return layers.front().weight.cols(); }
  std::size_t out_dim() const { return layers.back().weight.rows(); }
  // Throws ShapeError unless consecutive layer dimensions chain.
  void validate(const std::string& name) const;
};

struct ModelConfig {
  std::size_t d = 16;
  std::size_t k = 32;
  std::size_t D = 784;
  std::size_t num_classes = 10;
  std::size_t hidden = 256;
  std::size_t hidden_layers = 2;
  Activation hidden_activation = Activation::Tanh;
  Activation decoder_output = Activation::Sigmoid;
};

/// Parameters of the five networks.
///
///   goal_embed : class label -> content Phi            [num_classes x d]
///   sim        : Phi -> (mean, log_var) of Z           d -> 2k
///   dec        : Z -> mean context Psi                 k -> D
///   cyc_enc    : Psi -> (mean, log_var) of Z'          D -> 2k
///   cyc_dec    : Z' -> reconstructed content Phi_hat   k -> d
struct C2hmParams {
  std::size_t d = 0;
  std::size_t k = 0;
  std::size_t D = 0;
  std::size_t num_classes = 0;
  Tensor goal_embed;
  MlpParams sim;
  MlpParams dec;
  MlpParams cyc_enc;
  MlpParams cyc_dec;

  void validate() const;
  std::size_t parameter_count() const;
};

enum class ParamGroup {
  All,
  Generative,   // goal_embed, sim, dec
  Recognition,  // cyc_enc, cyc_dec
  CycleDecoder,
};

// Pointers into `params` in a fixed order, restricted to a group.
std::vector<Tensor*> parameter_tensors(C2hmParams& params, ParamGroup group = ParamGroup::All);
std::vector<const Tensor*> parameter_tensors(const C2hmParams& params, ParamGroup group = ParamGroup::All);
std::vector<std::string> parameter_names(const C2hmParams& params, ParamGroup group = ParamGroup::All);
// Order-sensitive FNV-1a over the bit patterns of a group; for phase-isolation checks.
std::uint64_t checksum(const C2hmParams& params, ParamGroup group);

// Glorot-uniform weights, zero biases, goal embeddings drawn from N(0, 0.01) (variance).
MlpParams init_mlp(std::span<const std::size_t> widths, Activation hidden, Activation output, SeededRng& rng);
C2hmParams init_c2hm(const ModelConfig& config, SeededRng& rng);

struct BoundMlp {
  std::vector<Var> weights;
  std::vector<Var> biases;
  std::vector<Activation> activations;
};

/// Parameters placed on a tape, either as differentiable leaves or constants.
struct BoundC2hm {
  const C2hmParams* params = nullptr;
  Var goal_embed;
  BoundMlp sim;
  BoundMlp dec;
  BoundMlp cyc_enc;
  BoundMlp cyc_dec;

  Tape& tape() const { return goal_embed.tape(); }
};

BoundC2hm bind(Tape& tape, const C2hmParams& params, bool trainable = true);
// Gradients for parameter_tensors(params, group), in the same order.
std::vector<Tensor> parameter_gradients(const Gradients& grads, const BoundC2hm& bound,
                                        ParamGroup group = ParamGroup::All);

BoundMlp bind_mlp(Tape& tape, const MlpParams& mlp, bool trainable = true);
Var mlp_forward(const BoundMlp& mlp, Var x);
// Weight and bias of every layer in order; gradients in the same order.
std::vector<Tensor*> mlp_tensors(MlpParams& mlp);
std::vector<Tensor> mlp_gradients(const Gradients& grads, const BoundMlp& mlp);

Var embed_goal(const BoundC2hm& m, std::span<const std::size_t> labels);
GaussianVar simulate_latent(const BoundC2hm& m, Var phi);
Var decode(const BoundC2hm& m, Var z);
GaussianVar cycle_encode(const BoundC2hm& m, Var psi);
Var cycle_decode(const BoundC2hm& m, Var z2);

/// Intermediates of one pass Phi -> Z -> Psi_hat -> Z' -> Phi_hat.
/// psi_loop re-decodes Z', the second reconstruction used by the loop loss.
struct CycleOutputs {
  Var phi;
  GaussianVar z_dist;
  Var z;
  Var psi_hat;
  GaussianVar z2_dist;
  Var z2;
  Var psi_loop;
  Var phi_hat;
};

CycleOutputs full_cycle(const BoundC2hm& m, Var phi, SeededRng& rng);

// Tape-free conveniences for single inputs.
Tensor embed_goal(const C2hmParams& params, std::size_t label);
DiagonalGaussian simulate_latent(const C2hmParams& params, const Tensor& phi);
Tensor decode(const C2hmParams& params, const Tensor& z);
DiagonalGaussian cycle_encode(const C2hmParams& params, const Tensor& psi);
Tensor cycle_decode(const C2hmParams& params, const Tensor& z2);

// Text checkpoint `C2HM-CKPT v1`; doubles are written with 17 significant
// digits so parse(serialize(p)) reproduces p bit for bit.
std::string serialize_checkpoint(const C2hmParams& params);
C2hmParams parse_checkpoint(const std::string& text);
void save_checkpoint(const C2hmParams& params, const std::string& path);
C2hmParams load_checkpoint(const std::string& path);

}  // namespace c2hm
