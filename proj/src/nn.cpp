#include "emm/nn.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "emm/errors.hpp"
#include "emm/simd.hpp"

namespace emm::nn {

namespace {

double softplus(double z) {
  return z > 0.0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z));
}

double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

void apply_activation(Activation act, std::span<double> values) {
  switch (act) {
    case Activation::identity:
      return;
    case Activation::relu:
      for (double& v : values) v = v > 0.0 ? v : 0.0;
      return;
    case Activation::softplus:
      for (double& v : values) v = softplus(v);
      return;
  }
}

// x * W + b with the bias broadcast over rows.
Matrix affine(const DenseLayer& layer, const Matrix& x) {
  Matrix z(x.rows(), layer.out_dim());
  for (std::size_t r = 0; r < z.rows(); ++r)
    std::copy(layer.bias.begin(), layer.bias.end(), z.row(r).begin());
  if (x.rows() > 0 && layer.in_dim() > 0) {
    simd::active().gemm_nn(x.rows(), layer.out_dim(), layer.in_dim(), x.data(), x.cols(),
                           layer.weight.data(), layer.weight.cols(), z.data(), z.cols());
  }
  return z;
}

void check_input(const Mlp& net, const Matrix& input) {
  if (net.layers.empty()) throw ShapeError("network has no layers");
  if (input.cols() != net.input_dim()) {
    throw ShapeError("network expects input width " + std::to_string(net.input_dim()) +
                     ", got " + std::to_string(input.cols()));
  }
}

}  // namespace

std::string_view activation_name(Activation a) {
  switch (a) {
    case Activation::relu: return "relu";
    case Activation::identity: return "identity";
    case Activation::softplus: return "softplus";
  }
  return "identity";
}

Activation parse_activation(std::string_view name) {
  if (name == "relu") return Activation::relu;
  if (name == "identity") return Activation::identity;
  if (name == "softplus") return Activation::softplus;
  throw InputError("unknown activation '" + std::string(name) + "'");
}

std::size_t Mlp::input_dim() const { return layers.empty() ? 0 : layers.front().in_dim(); }

std::size_t Mlp::output_dim() const { return layers.empty() ? 0 : layers.back().out_dim(); }

std::size_t Mlp::parameter_count() const {
  std::size_t n = 0;
  for (const auto& l : layers) n += l.weight.size() + l.bias.size();
  return n;
}

void Mlp::validate() const {
  for (std::size_t i = 0; i < layers.size(); ++i) {
    if (layers[i].bias.size() != layers[i].out_dim())
      throw ShapeError("layer " + std::to_string(i) + " bias length does not match width");
    if (i > 0 && layers[i].in_dim() != layers[i - 1].out_dim())
      throw ShapeError("layer " + std::to_string(i) + " input does not chain with layer " +
                       std::to_string(i - 1));
  }
}

Mlp make_mlp(std::span<const std::size_t> dims, Activation hidden, Activation output, Rng& rng) {
  if (dims.size() < 2) throw InputError("an MLP needs at least input and output widths");
  Mlp net;
  for (std::size_t i = 0; i + 1 < dims.size(); ++i) {
    const std::size_t fan_in = dims[i];
    const std::size_t fan_out = dims[i + 1];
    const Activation act = i + 2 == dims.size() ? output : hidden;
    const double scale = act == Activation::relu
                             ? std::sqrt(2.0 / static_cast<double>(fan_in))
                             : std::sqrt(2.0 / static_cast<double>(fan_in + fan_out));
    DenseLayer layer{rng.normal_matrix(fan_in, fan_out), std::vector<double>(fan_out, 0.0), act};
    for (double& w : layer.weight.values()) w *= scale;
    net.layers.push_back(std::move(layer));
  }
  return net;
}

ForwardResult mlp_forward(const Mlp& net, const Matrix& input) {
  check_input(net, input);
  ForwardResult result;
  result.tape.inputs.reserve(net.layers.size());
  result.tape.preactivations.reserve(net.layers.size());
  Matrix x = input;
  for (const auto& layer : net.layers) {
    Matrix z = affine(layer, x);
    Matrix y = z;
    apply_activation(layer.activation, y.values());
    result.tape.inputs.push_back(std::move(x));
    result.tape.preactivations.push_back(std::move(z));
    x = std::move(y);
  }
  result.output = std::move(x);
  return result;
}

Matrix mlp_predict(const Mlp& net, const Matrix& input) {
  check_input(net, input);
  Matrix x = affine(net.layers.front(), input);
  apply_activation(net.layers.front().activation, x.values());
  for (std::size_t i = 1; i < net.layers.size(); ++i) {
    x = affine(net.layers[i], x);
    apply_activation(net.layers[i].activation, x.values());
  }
  return x;
}

MlpGradients MlpGradients::zeros_like(const Mlp& net) {
  MlpGradients g;
  g.layers.reserve(net.layers.size());
  for (const auto& l : net.layers) {
    g.layers.push_back({Matrix(l.weight.rows(), l.weight.cols()),
                        std::vector<double>(l.bias.size(), 0.0)});
  }
  return g;
}

void MlpGradients::add_scaled(const MlpGradients& other, double scale) {
  if (other.layers.size() != layers.size()) throw ShapeError("gradient layer counts differ");
  const auto& k = simd::active();
  for (std::size_t i = 0; i < layers.size(); ++i) {
    if (layers[i].weight.size() != other.layers[i].weight.size() ||
        layers[i].bias.size() != other.layers[i].bias.size())
      throw ShapeError("gradient shapes differ at layer " + std::to_string(i));
    k.axpy(scale, other.layers[i].weight.data(), layers[i].weight.data(),
           layers[i].weight.size());
    k.axpy(scale, other.layers[i].bias.data(), layers[i].bias.data(), layers[i].bias.size());
  }
}

bool MlpGradients::all_finite() const {
  for (const auto& l : layers) {
    if (!l.weight.all_finite()) return false;
    if (!std::all_of(l.bias.begin(), l.bias.end(), [](double v) { return std::isfinite(v); }))
      return false;
  }
  return true;
}

bool MlpGradients::matches(const Mlp& net) const {
  if (layers.size() != net.layers.size()) return false;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    if (layers[i].weight.rows() != net.layers[i].weight.rows() ||
        layers[i].weight.cols() != net.layers[i].weight.cols() ||
        layers[i].bias.size() != net.layers[i].bias.size())
      return false;
  }
  return true;
}

BackwardResult mlp_backward(const Mlp& net, const Tape& tape, const Matrix& output_grad,
                            bool want_input_grad) {
  const std::size_t n_layers = net.layers.size();
  if (tape.inputs.size() != n_layers || tape.preactivations.size() != n_layers)
    throw ShapeError("tape does not belong to this network");
  const std::size_t batch = output_grad.rows();
  for (std::size_t i = 0; i < n_layers; ++i) {
    const auto& l = net.layers[i];
    if (tape.inputs[i].cols() != l.in_dim() || tape.preactivations[i].cols() != l.out_dim() ||
        tape.inputs[i].rows() != batch || tape.preactivations[i].rows() != batch)
      throw ShapeError("stale tape at layer " + std::to_string(i));
  }
  if (output_grad.cols() != net.output_dim())
    throw ShapeError("output gradient width does not match network output");

  BackwardResult result;
  result.params.layers.resize(n_layers);
  const auto& k = simd::active();
  Matrix grad = output_grad;
  for (std::size_t li = n_layers; li-- > 0;) {
    const auto& layer = net.layers[li];
    const Matrix& z = tape.preactivations[li];
    switch (layer.activation) {
      case Activation::identity:
        break;
      case Activation::relu:
        for (std::size_t i = 0; i < grad.size(); ++i)
          if (!(z.data()[i] > 0.0)) grad.data()[i] = 0.0;
        break;
      case Activation::softplus:
        for (std::size_t i = 0; i < grad.size(); ++i) grad.data()[i] *= sigmoid(z.data()[i]);
        break;
    }

    LayerGradient& lg = result.params.layers[li];
    lg.weight = Matrix(layer.in_dim(), layer.out_dim());
    lg.bias.assign(layer.out_dim(), 0.0);
    if (batch > 0) {
      const Matrix xt = transpose(tape.inputs[li]);
      k.gemm_nn(layer.in_dim(), layer.out_dim(), batch, xt.data(), xt.cols(), grad.data(),
                grad.cols(), lg.weight.data(), lg.weight.cols());
    }
    for (std::size_t r = 0; r < batch; ++r) {
      const auto g_row = grad.row(r);
      for (std::size_t c = 0; c < g_row.size(); ++c) lg.bias[c] += g_row[c];
    }

    if (li == 0 && !want_input_grad) {
      grad = Matrix();
      break;
    }
    Matrix next(batch, layer.in_dim());
    if (batch > 0 && layer.out_dim() > 0) {
      const Matrix wt = transpose(layer.weight);
      k.gemm_nn(batch, layer.in_dim(), layer.out_dim(), grad.data(), grad.cols(), wt.data(),
                wt.cols(), next.data(), next.cols());
    }
    grad = std::move(next);
  }
  result.input_grad = std::move(grad);
  return result;
}

CrossEntropyResult softmax_cross_entropy(const Matrix& logits, std::span<const int> labels) {
  if (labels.size() != logits.rows())
    throw ShapeError("label count does not match logits rows");
  CrossEntropyResult result;
  result.grad = Matrix(logits.rows(), logits.cols());
  if (logits.rows() == 0) return result;
  const double inv_n = 1.0 / static_cast<double>(logits.rows());
  for (std::size_t r = 0; r < logits.rows(); ++r) {
    const int y = labels[r];
    if (y < 0 || static_cast<std::size_t>(y) >= logits.cols())
      throw InputError("label " + std::to_string(y) + " outside [0, " +
                       std::to_string(logits.cols()) + ")");
    const auto row = logits.row(r);
    const double mx = *std::max_element(row.begin(), row.end());
    double denom = 0.0;
    for (double v : row) denom += std::exp(v - mx);
    const double log_denom = std::log(denom);
    result.loss += (mx + log_denom - row[static_cast<std::size_t>(y)]) * inv_n;
    auto g = result.grad.row(r);
    for (std::size_t c = 0; c < row.size(); ++c) g[c] = std::exp(row[c] - mx - log_denom) * inv_n;
    g[static_cast<std::size_t>(y)] -= inv_n;
  }
  return result;
}

AdamState AdamState::for_params(const Mlp& net, AdamConfig config) {
  AdamState s;
  s.config = config;
  s.first = MlpGradients::zeros_like(net);
  s.second = MlpGradients::zeros_like(net);
  return s;
}

void adam_step(Mlp& net, const MlpGradients& grads, AdamState& state) {
  if (!grads.matches(net) || !state.first.matches(net) || !state.second.matches(net))
    throw ShapeError("optimizer state or gradients do not match the network");
  if (!grads.all_finite()) throw TrainingError("non-finite gradient passed to the optimizer");

  state.step += 1;
  const auto t = static_cast<double>(state.step);
  const simd::AdamCoefficients coeff{
      state.config.learning_rate,
      state.config.beta1,
      state.config.beta2,
      1.0 - std::pow(state.config.beta1, t),
      1.0 - std::pow(state.config.beta2, t),
      state.config.epsilon,
  };
  const auto& k = simd::active();
  for (std::size_t i = 0; i < net.layers.size(); ++i) {
    auto& layer = net.layers[i];
    k.adam_update(layer.weight.data(), state.first.layers[i].weight.data(),
                  state.second.layers[i].weight.data(), grads.layers[i].weight.data(),
                  layer.weight.size(), coeff);
    k.adam_update(layer.bias.data(), state.first.layers[i].bias.data(),
                  state.second.layers[i].bias.data(), grads.layers[i].bias.data(),
                  layer.bias.size(), coeff);
  }
}

}  // namespace emm::nn
