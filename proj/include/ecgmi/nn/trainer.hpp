#pragma once

// Minibatch SGD with momentum and L2 weight decay for the end-to-end classifier.

#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "ecgmi/image.hpp"
#include "ecgmi/label.hpp"
#include "ecgmi/nn/network.hpp"

namespace ecgmi::nn {

struct TrainConfig {
  double learning_rate = 0.001;
  double weight_decay = 0.0005;
  double momentum = 0.9;
  std::size_t epochs = 50;
  std::size_t minibatch = 5;
  double init_std = 0.01;
  double init_mean = 0.0;
  InitScheme init_scheme = InitScheme::Gaussian;
  bool decay_biases = true;
  std::uint64_t seed = 42;
};

struct EpochLog {
  std::size_t epoch = 0;  // 1-based
  double train_loss = 0.0;
  double train_accuracy = 0.0;
  double val_accuracy = -1.0;  // -1 when no validation set was given
};

struct TrainResult {
  NetworkParams params;
  std::vector<EpochLog> log;
  std::size_t selected_epoch = 0;
};

/// Per-parameter velocity buffers, shaped like the network.
using Velocity = std::vector<LayerParams>;

inline std::vector<LayerParams> zero_like(const NetworkParams& net) {
  std::vector<LayerParams> g;
  g.reserve(net.params.size());
  for (const auto& p : net.params) g.push_back({Tensor(p.weight.shape()), Tensor(p.bias.shape())});
  return g;
}

/// v <- momentum*v - lr*(grad + decay*w); w <- w + v.
inline void sgd_step(NetworkParams& net, const std::vector<LayerParams>& grads, Velocity& velocity,
                     const TrainConfig& cfg) {
  auto update = [&](Tensor& w, const Tensor& g, Tensor& v, double decay) {
    for (std::size_t i = 0; i < w.size(); ++i) {
      v[i] = cfg.momentum * v[i] - cfg.learning_rate * (g[i] + decay * w[i]);
      w[i] += v[i];
    }
  };
  for (std::size_t l = 0; l < net.params.size(); ++l) {
    update(net.params[l].weight, grads[l].weight, velocity[l].weight, cfg.weight_decay);
    update(net.params[l].bias, grads[l].bias, velocity[l].bias, cfg.decay_biases ? cfg.weight_decay : 0.0);
  }
}

struct LabeledTensor {
  Tensor input;
  int label = 0;
};

inline std::vector<LabeledTensor> to_tensors(std::span<const EcgImage> images) {
  std::vector<LabeledTensor> out;
  out.reserve(images.size());
  for (const auto& img : images) out.push_back({image_to_tensor(img), class_index(img.label)});
  return out;
}

inline double accuracy(const NetworkParams& net, std::span<const LabeledTensor> data) {
  if (data.empty()) return 0.0;
  std::size_t correct = 0;
  for (const auto& s : data) correct += predict(net, s.input).label == s.label;
  return static_cast<double>(correct) / static_cast<double>(data.size());
}

/// Mean loss and gradient over one minibatch (train-mode forward).
inline double minibatch_gradient(const NetworkParams& net, std::span<const LabeledTensor* const> batch,
                                 std::vector<LayerParams>& grads, std::mt19937_64& dropout_rng,
                                 std::size_t* correct = nullptr) {
  for (auto& g : grads) {
    g.weight.fill(0.0);
    g.bias.fill(0.0);
  }
  double loss = 0.0;
  for (const auto* s : batch) {
    auto tr = forward(net, s->input, Mode::Train, &dropout_rng);
    auto sl = softmax_xent(tr.activations.back(), static_cast<std::size_t>(s->label));
    loss += sl.loss;
    if (correct) {
      const int pred = sl.probs[1] > sl.probs[0] ? 1 : 0;
      *correct += pred == s->label;
    }
    backward(net, tr, sl.grad_logits, grads);
  }
  const double inv = 1.0 / static_cast<double>(batch.size());
  for (auto& g : grads) {
    for (auto& v : g.weight.values()) v *= inv;
    for (auto& v : g.bias.values()) v *= inv;
  }
  return loss * inv;
}

using EpochCallback = std::function<void(const EpochLog&)>;

/// Trains from Gaussian initialization for exactly cfg.epochs epochs and returns the
/// parameters of the epoch with the best validation accuracy (ties -> later epoch;
/// without a validation set, the final epoch).
inline TrainResult train_mi1(std::span<const LabeledTensor> train, std::span<const LabeledTensor> val,
                             const Architecture& arch, const TrainConfig& cfg, const EpochCallback& on_epoch = {}) {
  bool seen[2] = {false, false};
  for (const auto& s : train) {
    if (s.label < 0 || s.label > 1) throw Error(ErrorCode::InvalidArgument, "labels must be 0 or 1");
    seen[s.label] = true;
  }
  if (!seen[0] || !seen[1]) throw Error(ErrorCode::SingleClassTraining, "training set needs both classes");
  if (cfg.minibatch == 0 || cfg.epochs == 0) throw Error(ErrorCode::InvalidArgument, "epochs and minibatch must be > 0");

  TrainResult result{init_params(arch, cfg.init_mean, cfg.init_std, cfg.seed, cfg.init_scheme), {}, 0};
  NetworkParams& net = result.params;
  NetworkParams best;
  double best_val = -1.0;

  std::mt19937_64 shuffle_rng(cfg.seed ^ 0x5DEECE66DULL);
  std::mt19937_64 dropout_rng(cfg.seed ^ 0x9E3779B97F4A7C15ULL);
  auto grads = zero_like(net);
  Velocity velocity = zero_like(net);

  std::vector<std::size_t> order(train.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::vector<const LabeledTensor*> batch;

  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[shuffle_rng() % i]);
    double loss_sum = 0.0;
    std::size_t correct = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.minibatch) {
      batch.clear();
      for (std::size_t k = start; k < std::min(order.size(), start + cfg.minibatch); ++k)
        batch.push_back(&train[order[k]]);
      const double loss = minibatch_gradient(net, batch, grads, dropout_rng, &correct);
      if (!std::isfinite(loss))
        throw Error(ErrorCode::NonFiniteLoss, "loss diverged at epoch " + std::to_string(epoch) + ", batch starting " +
                                                  std::to_string(start));
      loss_sum += loss * static_cast<double>(batch.size());
      sgd_step(net, grads, velocity, cfg);
    }
    EpochLog entry{epoch, loss_sum / static_cast<double>(train.size()),
                   static_cast<double>(correct) / static_cast<double>(train.size()), -1.0};
    if (!val.empty()) {
      entry.val_accuracy = accuracy(net, val);
      if (entry.val_accuracy >= best_val) {
        best_val = entry.val_accuracy;
        best = net;
        result.selected_epoch = epoch;
      }
    }
    result.log.push_back(entry);
    if (on_epoch) on_epoch(entry);
  }
  if (!val.empty()) {
    net = std::move(best);
  } else {
    result.selected_epoch = cfg.epochs;
  }
  return result;
}

inline TrainResult train_mi1(std::span<const EcgImage> train, std::span<const EcgImage> val,
                             const Architecture& arch, const TrainConfig& cfg, const EpochCallback& on_epoch = {}) {
  const auto t = to_tensors(train);
  const auto v = to_tensors(val);
  return train_mi1(std::span<const LabeledTensor>(t), std::span<const LabeledTensor>(v), arch, cfg, on_epoch);
}

}  // namespace ecgmi::nn
