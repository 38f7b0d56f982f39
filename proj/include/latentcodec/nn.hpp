#pragma once

// Sequential networks built from dense / conv / transposed-conv / residual
// layers, and the toy generator, encoder and discriminator architectures.

#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "latentcodec/ops.hpp"

namespace latentcodec {

enum class LayerKind : std::uint8_t { dense, conv2d, transpose_conv2d, residual_block, activation, reshape };
enum class Activation : std::uint8_t { none, relu, leaky_relu, tanh, sigmoid };

struct LayerSpec {
  LayerKind kind = LayerKind::activation;
  std::size_t in_channels = 0;
  std::size_t out_channels = 0;
  std::size_t kernel = 0;
  std::size_t stride = 1;
  std::size_t padding = 0;
  Activation activation = Activation::none;
  Shape in_shape;
  Shape out_shape;  // declared; checked against the computed shape
};

struct Layer {
  LayerSpec spec;
  std::vector<std::string> param_names;
  std::vector<Tensor> params;
};

enum class ParamMode { frozen, trainable };

inline Tensor apply_activation(const Tensor& x, Activation a) {
  switch (a) {
    case Activation::none: return x;
    case Activation::relu: return relu(x);
    case Activation::leaky_relu: return leaky_relu(x, 0.2);
    case Activation::tanh: return tanh(x);
    case Activation::sigmoid: return sigmoid(x);
  }
  return x;
}

class Network {
 public:
  Network() = default;
  Network(std::string name, Shape input) : name_(std::move(name)), input_shape_(std::move(input)) {}

  const std::string& name() const { return name_; }
  const Shape& input_shape() const { return input_shape_; }
  Shape output_shape() const { return layers_.empty() ? input_shape_ : layers_.back().spec.out_shape; }
  bool empty() const { return layers_.empty(); }
  const std::vector<Layer>& layers() const { return layers_; }
  std::vector<Layer>& layers() { return layers_; }

  /// Taps receive the input (index 0) and every layer output (index i + 1).
  Tensor forward(const Tensor& x, ParamMode mode = ParamMode::frozen,
                 std::vector<Tensor>* taps = nullptr) const {
    if (x.shape() != input_shape_) {
      throw ShapeError(name_ + ": input shape " + to_string(x.shape()) + ", expected " +
                       to_string(input_shape_));
    }
    Tensor h = x;
    if (taps) taps->push_back(h);
    for (const Layer& l : layers_) {
      auto p = [&](std::size_t i) {
        return mode == ParamMode::trainable ? l.params[i] : l.params[i].detach();
      };
      const LayerSpec& s = l.spec;
      switch (s.kind) {
        case LayerKind::dense:
          h = add(reshape(matmul(p(0), reshape(h, {s.in_channels, 1})), {s.out_channels}), p(1));
          break;
        case LayerKind::conv2d:
          h = conv2d(h, p(0), p(1), s.stride, s.padding);
          break;
        case LayerKind::transpose_conv2d:
          h = conv_transpose2d(h, p(0), p(1), s.stride, s.padding);
          break;
        case LayerKind::residual_block: {
          Tensor r = leaky_relu(conv2d(h, p(0), p(1), 1, s.kernel / 2), 0.2);
          h = add(h, conv2d(r, p(2), p(3), 1, s.kernel / 2));
          break;
        }
        case LayerKind::activation:
          h = apply_activation(h, s.activation);
          break;
        case LayerKind::reshape:
          h = reshape(h, s.out_shape);
          break;
      }
      if (h.shape() != s.out_shape) {
        throw ShapeError(name_ + ": layer produced " + to_string(h.shape()) + ", declared " +
                         to_string(s.out_shape));
      }
      if (taps) taps->push_back(h);
    }
    return h;
  }

  /// Runs a zero input through every layer and compares declared and
  /// computed shapes (the forward pass throws on any disagreement).
  void check_shapes() const {
    Shape cur = input_shape_;
    for (const Layer& l : layers_) {
      if (l.spec.in_shape != cur) throw ShapeError(name_ + ": layers do not compose");
      cur = l.spec.out_shape;
    }
    forward(Tensor::zeros(input_shape_));
  }

  std::vector<Tensor> parameters() const {
    std::vector<Tensor> out;
    for (const Layer& l : layers_)
      for (const Tensor& t : l.params) out.push_back(t);
    return out;
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const Tensor& t : parameters()) n += t.numel();
    return n;
  }

  /// Deep copy: parameters get their own storage.
  Network clone() const {
    Network n = *this;
    for (Layer& l : n.layers_)
      for (Tensor& t : l.params) t = Tensor::variable(t);
    return n;
  }

  // ---- builder -----------------------------------------------------------

  Network& dense(std::size_t out, std::mt19937_64& rng, double gain = std::sqrt(2.0)) {
    Shape in = output_shape();
    if (in.size() != 1) throw ShapeError(name_ + ": dense needs a flat input");
    LayerSpec s{LayerKind::dense, in[0], out, 0, 1, 0, Activation::none, in, {out}};
    push(s, {"weight", "bias"}, {init({out, in[0]}, in[0], gain, rng), Tensor::variable({out}, std::vector<double>(out, 0.0))});
    return *this;
  }

  Network& conv(std::size_t out_c, std::size_t k, std::size_t stride, std::size_t pad,
                std::mt19937_64& rng, double gain = std::sqrt(2.0)) {
    Shape in = output_shape();
    std::size_t H = (in[1] + 2 * pad - k) / stride + 1, W = (in[2] + 2 * pad - k) / stride + 1;
    LayerSpec s{LayerKind::conv2d, in[0], out_c, k, stride, pad, Activation::none, in, {out_c, H, W}};
    push(s, {"weight", "bias"},
         {init({out_c, in[0], k, k}, in[0] * k * k, gain, rng), Tensor::variable({out_c}, std::vector<double>(out_c, 0.0))});
    return *this;
  }

  Network& tconv(std::size_t out_c, std::size_t k, std::size_t stride, std::size_t pad,
                 std::mt19937_64& rng, double gain = std::sqrt(2.0)) {
    Shape in = output_shape();
    std::size_t H = (in[1] - 1) * stride + k - 2 * pad, W = (in[2] - 1) * stride + k - 2 * pad;
    LayerSpec s{LayerKind::transpose_conv2d, in[0], out_c, k, stride, pad, Activation::none, in, {out_c, H, W}};
    // Each output sees about in_c * (k/stride)^2 taps.
    std::size_t fan = in[0] * (k / stride) * (k / stride);
    push(s, {"weight", "bias"},
         {init({in[0], out_c, k, k}, fan, gain, rng), Tensor::variable({out_c}, std::vector<double>(out_c, 0.0))});
    return *this;
  }

  Network& residual(std::mt19937_64& rng, std::size_t k = 3) {
    Shape in = output_shape();
    std::size_t c = in[0];
    LayerSpec s{LayerKind::residual_block, c, c, k, 1, k / 2, Activation::leaky_relu, in, in};
    push(s, {"conv1.weight", "conv1.bias", "conv2.weight", "conv2.bias"},
         {init({c, c, k, k}, c * k * k, std::sqrt(2.0), rng), Tensor::variable({c}, std::vector<double>(c, 0.0)),
          init({c, c, k, k}, c * k * k, 0.1, rng), Tensor::variable({c}, std::vector<double>(c, 0.0))});
    return *this;
  }

  Network& act(Activation a) {
    Shape in = output_shape();
    push(LayerSpec{LayerKind::activation, 0, 0, 0, 1, 0, a, in, in}, {}, {});
    return *this;
  }

  Network& flatten_to(Shape shape) {
    Shape in = output_shape();
    if (numel(shape) != numel(in)) throw ShapeError(name_ + ": reshape changes element count");
    push(LayerSpec{LayerKind::reshape, 0, 0, 0, 1, 0, Activation::none, in, std::move(shape)}, {}, {});
    return *this;
  }

 private:
  static Tensor init(Shape shape, std::size_t fan_in, double gain, std::mt19937_64& rng) {
    std::normal_distribution<double> nd(0.0, gain / std::sqrt(static_cast<double>(fan_in)));
    std::vector<double> v(numel(shape));
    for (double& x : v) x = nd(rng);
    return Tensor::variable(std::move(shape), std::move(v));
  }

  void push(LayerSpec s, std::vector<std::string> names, std::vector<Tensor> params) {
    layers_.push_back(Layer{std::move(s), std::move(names), std::move(params)});
  }

  std::string name_;
  Shape input_shape_;
  std::vector<Layer> layers_;
};

enum class SignalKind : std::uint8_t { image = 0, speech = 1 };

inline const char* signal_name(SignalKind k) { return k == SignalKind::image ? "image" : "speech"; }

/// Sizes of the toy architectures. The generator starts from a
/// channels x base x base map and upsamples 8x through three stride-2
/// transposed convolutions.
struct ArchConfig {
  SignalKind signal = SignalKind::image;
  std::size_t latent_dim = 64;
  std::size_t channels = 16;
  std::size_t image_channels = 1;
  std::size_t base = 4;

  Shape signal_shape() const { return {image_channels, base * 8, base * 8}; }

  static ArchConfig image(std::size_t latent_dim = 64) { return {SignalKind::image, latent_dim, 16, 1, 4}; }
  static ArchConfig speech(std::size_t latent_dim = 512) { return {SignalKind::speech, latent_dim, 8, 1, 16}; }

  bool operator==(const ArchConfig&) const = default;
};

inline Network build_generator(const ArchConfig& a, std::mt19937_64& rng) {
  const std::size_t C = a.channels, b = a.base;
  Network g("generator", {a.latent_dim});
  g.dense(C * b * b, rng).act(Activation::leaky_relu).flatten_to({C, b, b});
  g.tconv(C, 4, 2, 1, rng).act(Activation::leaky_relu).residual(rng);
  g.tconv(C / 2, 4, 2, 1, rng).act(Activation::leaky_relu).residual(rng);
  g.tconv(a.image_channels, 4, 2, 1, rng, 1.0).act(Activation::tanh);
  return g;
}

inline Network build_encoder(const ArchConfig& a, std::mt19937_64& rng) {
  const std::size_t C = a.channels, b = a.base;
  Network e("encoder", a.signal_shape());
  e.conv(C / 2, 4, 2, 1, rng).act(Activation::leaky_relu);
  e.conv(C, 4, 2, 1, rng).act(Activation::leaky_relu);
  e.conv(C, 4, 2, 1, rng).act(Activation::leaky_relu);
  e.flatten_to({C * b * b}).dense(a.latent_dim, rng, 1.0);
  return e;
}

/// Feature taps 2, 4 and 6 are the three post-activation conv outputs.
inline Network build_discriminator(const ArchConfig& a, std::mt19937_64& rng) {
  const std::size_t C = a.channels, b = a.base;
  Network d("discriminator", a.signal_shape());
  d.conv(C / 2, 4, 2, 1, rng).act(Activation::leaky_relu);
  d.conv(C, 4, 2, 1, rng).act(Activation::leaky_relu);
  d.conv(C, 4, 2, 1, rng).act(Activation::leaky_relu);
  d.flatten_to({C * b * b}).dense(1, rng, 1.0);
  return d;
}

}  // namespace latentcodec
