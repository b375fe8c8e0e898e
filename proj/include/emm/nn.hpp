#pragma once

// Minimal dense network substrate: multilayer perceptrons with an explicit
// activation tape, hand-written backward passes, a softmax cross-entropy head
// and an adaptive-moment optimizer.

#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "emm/matrix.hpp"
#include "emm/rng.hpp"

namespace emm::nn {

enum class Activation { relu, identity, softplus };

std::string_view activation_name(Activation a);
Activation parse_activation(std::string_view name);

// y = act(x * weight + bias); weight is (in_dim x out_dim).
struct DenseLayer {
  Matrix weight;
  std::vector<double> bias;
  Activation activation = Activation::identity;

  std::size_t in_dim() const noexcept { return weight.rows(); }
  std::size_t out_dim() const noexcept { return weight.cols(); }

  friend bool operator==(const DenseLayer&, const DenseLayer&) = default;
};

struct Mlp {
  std::vector<DenseLayer> layers;

  std::size_t input_dim() const;
  std::size_t output_dim() const;
  std::size_t parameter_count() const;

  // Throws ShapeError when consecutive layers do not chain.
  void validate() const;

  friend bool operator==(const Mlp&, const Mlp&) = default;
};

// dims = {in, hidden..., out}; hidden layers use `hidden`, the last `output`.
// Weights are drawn He-scaled for relu layers and Glorot-scaled otherwise.
Mlp make_mlp(std::span<const std::size_t> dims, Activation hidden, Activation output,
             Rng& rng);

// Per-layer inputs and pre-activations recorded by a forward pass.
struct Tape {
  std::vector<Matrix> inputs;
  std::vector<Matrix> preactivations;
};

struct ForwardResult {
  Matrix output;
  Tape tape;
};

ForwardResult mlp_forward(const Mlp& net, const Matrix& input);

// Forward pass without recording a tape.
Matrix mlp_predict(const Mlp& net, const Matrix& input);

struct LayerGradient {
  Matrix weight;
  std::vector<double> bias;

  friend bool operator==(const LayerGradient&, const LayerGradient&) = default;
};

// Shaped exactly like the parameters of one Mlp.
struct MlpGradients {
  std::vector<LayerGradient> layers;

  static MlpGradients zeros_like(const Mlp& net);
  void add_scaled(const MlpGradients& other, double scale);
  bool all_finite() const;
  bool matches(const Mlp& net) const;

  friend bool operator==(const MlpGradients&, const MlpGradients&) = default;
};

struct BackwardResult {
  MlpGradients params;
  Matrix input_grad;
};

// input_grad is left empty when want_input_grad is false.
BackwardResult mlp_backward(const Mlp& net, const Tape& tape, const Matrix& output_grad,
                            bool want_input_grad = true);

struct CrossEntropyResult {
  double loss = 0.0;  // mean over rows
  Matrix grad;        // d loss / d logits
};

CrossEntropyResult softmax_cross_entropy(const Matrix& logits, std::span<const int> labels);

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  friend bool operator==(const AdamConfig&, const AdamConfig&) = default;
};

struct AdamState {
  AdamConfig config;
  MlpGradients first;
  MlpGradients second;
  std::uint64_t step = 0;

  static AdamState for_params(const Mlp& net, AdamConfig config = {});

  friend bool operator==(const AdamState&, const AdamState&) = default;
};

// One optimizer step. Throws TrainingError without touching anything if a
// gradient entry is non-finite, and ShapeError on mismatched shapes.
void adam_step(Mlp& net, const MlpGradients& grads, AdamState& state);

}  // namespace emm::nn
