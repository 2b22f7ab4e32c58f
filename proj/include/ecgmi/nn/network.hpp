#pragma once

// The VGG-MI layer stack and its width-scaled family.
//
//   conv(1->64) conv(64->64) pool conv(64->128) conv(128->128) pool
//   conv(128->256) conv(256->256) pool fc(->2048) fc(2048->2048) dropout(0.5) softmax-fc(2048->2)
//
// Channel and unit counts are multiplied by width_scale; every conv and hidden fc is
// followed by ReLU.

#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "ecgmi/image.hpp"
#include "ecgmi/nn/layers.hpp"
#include "ecgmi/nn/tensor.hpp"

namespace ecgmi::nn {

enum class LayerKind : std::uint8_t { Conv3x3 = 1, MaxPool2x2 = 2, FullyConnected = 3, Dropout = 4, Softmax = 5 };

struct LayerSpec {
  LayerKind kind;
  std::size_t in = 0;   // channels or units
  std::size_t out = 0;  // channels or units
  double dropout_rate = 0.0;

  bool operator==(const LayerSpec&) const = default;
};

struct WidthScale {
  std::uint64_t num = 1;
  std::uint64_t den = 1;

  std::size_t apply(std::size_t n) const {
    if (num == 0 || den == 0 || num > den) throw Error(ErrorCode::InvalidArgument, "width_scale must lie in (0, 1]");
    if ((n * num) % den != 0)
      throw Error(ErrorCode::InvalidArgument,
                  "width_scale " + std::to_string(num) + "/" + std::to_string(den) + " does not divide " +
                      std::to_string(n));
    return n * num / den;
  }
  bool operator==(const WidthScale&) const = default;
};

struct Architecture {
  std::size_t input_size = kImageSize;  // square input, divisible by 8
  WidthScale width;
  double dropout_rate = 0.5;
  std::size_t classes = 2;

  bool operator==(const Architecture&) const = default;
};

inline std::vector<LayerSpec> layer_specs(const Architecture& arch) {
  if (arch.input_size == 0 || arch.input_size % 8 != 0)
    throw Error(ErrorCode::InvalidArgument, "input size must be a positive multiple of 8");
  const auto c1 = arch.width.apply(64), c2 = arch.width.apply(128), c3 = arch.width.apply(256);
  const auto fc = arch.width.apply(2048);
  const std::size_t flat = (arch.input_size / 8) * (arch.input_size / 8) * c3;
  return {
      {LayerKind::Conv3x3, 1, c1},      {LayerKind::Conv3x3, c1, c1},     {LayerKind::MaxPool2x2, c1, c1},
      {LayerKind::Conv3x3, c1, c2},     {LayerKind::Conv3x3, c2, c2},     {LayerKind::MaxPool2x2, c2, c2},
      {LayerKind::Conv3x3, c2, c3},     {LayerKind::Conv3x3, c3, c3},     {LayerKind::MaxPool2x2, c3, c3},
      {LayerKind::FullyConnected, flat, fc},
      {LayerKind::FullyConnected, fc, fc},
      {LayerKind::Dropout, fc, fc, arch.dropout_rate},
      {LayerKind::Softmax, fc, arch.classes},
  };
}

/// Input shape of every layer, from metadata alone (nothing allocated).
inline std::vector<Shape> trace_input_shapes(const Architecture& arch) {
  std::vector<Shape> shapes;
  Shape cur{1, arch.input_size, arch.input_size};
  for (const auto& l : layer_specs(arch)) {
    shapes.push_back(cur);
    switch (l.kind) {
      case LayerKind::Conv3x3: cur = {l.out, cur[1], cur[2]}; break;
      case LayerKind::MaxPool2x2: cur = {cur[0], cur[1] / 2, cur[2] / 2}; break;
      case LayerKind::FullyConnected:
      case LayerKind::Softmax: cur = {l.out}; break;
      case LayerKind::Dropout: break;
    }
  }
  return shapes;
}

inline std::size_t parameter_count(const Architecture& arch) {
  std::size_t n = 0;
  for (const auto& l : layer_specs(arch)) {
    if (l.kind == LayerKind::Conv3x3) n += l.out * l.in * 9 + l.out;
    if (l.kind == LayerKind::FullyConnected || l.kind == LayerKind::Softmax) n += l.out * l.in + l.out;
  }
  return n;
}

inline bool has_params(LayerKind k) {
  return k == LayerKind::Conv3x3 || k == LayerKind::FullyConnected || k == LayerKind::Softmax;
}

struct LayerParams {
  Tensor weight;
  Tensor bias;
  bool operator==(const LayerParams&) const = default;
};

struct NetworkParams {
  Architecture arch;
  std::vector<LayerSpec> layers;
  std::vector<LayerParams> params;  // one entry per layer; empty tensors for pool/dropout

  bool operator==(const NetworkParams&) const = default;
};

/// Zero-filled parameters of the right shapes.
inline NetworkParams zero_params(const Architecture& arch) {
  NetworkParams net{arch, layer_specs(arch), {}};
  for (const auto& l : net.layers) {
    LayerParams p;
    if (l.kind == LayerKind::Conv3x3) {
      p.weight = Tensor({l.out, l.in, 3, 3});
      p.bias = Tensor({l.out});
    } else if (l.kind == LayerKind::FullyConnected || l.kind == LayerKind::Softmax) {
      p.weight = Tensor({l.out, l.in});
      p.bias = Tensor({l.out});
    }
    net.params.push_back(std::move(p));
  }
  return net;
}

enum class InitScheme {
  Gaussian,  // every weight ~ N(mean, std)
  He,        // weight ~ N(mean, 2 / fan_in), fan_in = in_channels * 9 or in_units
};

/// Weights i.i.d. Gaussian, biases zero.
inline NetworkParams init_params(const Architecture& arch, double mean, double stddev, std::uint64_t seed,
                                 InitScheme scheme = InitScheme::Gaussian) {
  NetworkParams net = zero_params(arch);
  std::mt19937_64 rng(seed);
  for (std::size_t i = 0; i < net.params.size(); ++i) {
    auto& w = net.params[i].weight;
    if (w.empty()) continue;
    double sd = stddev;
    if (scheme == InitScheme::He) sd = std::sqrt(2.0 / static_cast<double>(w.size() / w.dim(0)));
    std::normal_distribution<double> dist(mean, sd);
    for (auto& v : w.values()) v = dist(rng);
  }
  return net;
}

/// Maps intensities 0..255 to [0, 1].
inline Tensor image_to_tensor(const EcgImage& image) {
  Tensor t({1, image.height, image.width});
  for (std::size_t i = 0; i < image.pixels.size(); ++i) t[i] = image.pixels[i] / 255.0;
  return t;
}

/// Per-layer activations kept for the backward pass.
struct ForwardTrace {
  std::vector<Tensor> activations;  // activations[i] = input of layer i; back() = logits
  std::vector<std::vector<std::uint32_t>> pool_argmax;
  std::vector<Tensor> dropout_masks;
};

inline ForwardTrace forward(const NetworkParams& net, const Tensor& input, Mode mode, std::mt19937_64* rng) {
  const auto& first = net.layers.front();
  require_shape(input, {first.in, net.arch.input_size, net.arch.input_size}, "network input");
  ForwardTrace tr;
  tr.activations.reserve(net.layers.size() + 1);
  tr.pool_argmax.resize(net.layers.size());
  tr.dropout_masks.resize(net.layers.size());
  tr.activations.push_back(input);
  for (std::size_t i = 0; i < net.layers.size(); ++i) {
    const auto& l = net.layers[i];
    const auto& p = net.params[i];
    const Tensor& x = tr.activations.back();
    Tensor y;
    switch (l.kind) {
      case LayerKind::Conv3x3: y = relu(conv3x3_forward(x, p.weight, p.bias)); break;
      case LayerKind::MaxPool2x2: {
        auto r = maxpool2x2(x);
        y = std::move(r.output);
        tr.pool_argmax[i] = std::move(r.argmax);
        break;
      }
      case LayerKind::FullyConnected: y = relu(fc_forward(x, p.weight, p.bias)); break;
      case LayerKind::Dropout: {
        if (mode == Mode::Infer) {
          y = x;
          break;
        }
        if (!rng) throw Error(ErrorCode::InvalidArgument, "training forward needs an RNG");
        auto r = dropout(x, l.dropout_rate, mode, *rng);
        y = std::move(r.output);
        tr.dropout_masks[i] = std::move(r.mask);
        break;
      }
      case LayerKind::Softmax: y = fc_forward(x, p.weight, p.bias); break;
    }
    tr.activations.push_back(std::move(y));
  }
  return tr;
}

/// Backpropagates dL/dlogits through the trace, accumulating into `grads`.
/// Returns dL/dinput.
inline Tensor backward(const NetworkParams& net, const ForwardTrace& tr, const Tensor& grad_logits,
                       std::vector<LayerParams>& grads, bool need_input_grad = false) {
  Tensor g = grad_logits;
  for (std::size_t i = net.layers.size(); i-- > 0;) {
    const auto& l = net.layers[i];
    const Tensor& x = tr.activations[i];
    const Tensor& y = tr.activations[i + 1];
    const bool want_dx = i > 0 || need_input_grad;
    Tensor dx;
    switch (l.kind) {
      case LayerKind::Conv3x3: {
        Tensor pre_grad = relu_backward(y, g);
        conv3x3_backward(x, net.params[i].weight, pre_grad, grads[i].weight, grads[i].bias, want_dx ? &dx : nullptr);
        break;
      }
      case LayerKind::MaxPool2x2: dx = maxpool2x2_backward(x.shape(), tr.pool_argmax[i], g); break;
      case LayerKind::FullyConnected: {
        Tensor pre_grad = relu_backward(y, g);
        fc_backward(x, net.params[i].weight, pre_grad, grads[i].weight, grads[i].bias, want_dx ? &dx : nullptr);
        break;
      }
      case LayerKind::Dropout: dx = dropout_backward(tr.dropout_masks[i], g); break;
      case LayerKind::Softmax:
        fc_backward(x, net.params[i].weight, g, grads[i].weight, grads[i].bias, want_dx ? &dx : nullptr);
        break;
    }
    if (!want_dx) break;
    g = std::move(dx);
  }
  return g;
}

struct Prediction {
  int label = 0;  // class index, argmax of probs (ties -> lower index)
  Tensor probs;
};

inline Prediction predict(const NetworkParams& net, const Tensor& input) {
  auto tr = forward(net, input, Mode::Infer, nullptr);
  Prediction p{0, softmax(tr.activations.back())};
  for (std::size_t i = 1; i < p.probs.size(); ++i)
    if (p.probs[i] > p.probs[static_cast<std::size_t>(p.label)]) p.label = static_cast<int>(i);
  return p;
}

inline Prediction predict(const NetworkParams& net, const EcgImage& image) {
  return predict(net, image_to_tensor(image));
}

/// Post-ReLU output of the second fully connected layer, dropout disabled.
inline std::vector<double> extract_features(const NetworkParams& net, const EcgImage& image) {
  auto tr = forward(net, image_to_tensor(image), Mode::Infer, nullptr);
  std::size_t fc_seen = 0;
  for (std::size_t i = 0; i < net.layers.size(); ++i)
    if (net.layers[i].kind == LayerKind::FullyConnected && ++fc_seen == 2) {
      const auto v = tr.activations[i + 1].values();
      return {v.begin(), v.end()};
    }
  throw Error(ErrorCode::ShapeMismatch, "network has no second fully connected layer");
}

}  // namespace ecgmi::nn
