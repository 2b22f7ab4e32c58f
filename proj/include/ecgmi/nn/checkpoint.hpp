#pragma once

// Checkpoint layout (little-endian):
//   "VGGMI1\0" | version u8 | width num u64 | width den u64 | layer count u64 |
//   per layer: kind u8, then
//     conv/fc/softmax: weight rank u64, dims u64..., f64 data; bias rank u64, dims u64..., f64 data
//     dropout: rate f64
//     pool: nothing

#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ecgmi/binary_io.hpp"
#include "ecgmi/nn/network.hpp"

namespace ecgmi::nn {

inline constexpr std::string_view kCheckpointMagic{"VGGMI1\0", 7};
inline constexpr std::uint8_t kCheckpointVersion = 1;

inline std::vector<std::uint8_t> save_checkpoint(const NetworkParams& net) {
  std::vector<std::uint8_t> out;
  io::put_bytes(out, kCheckpointMagic);
  io::put_u8(out, kCheckpointVersion);
  io::put_u64(out, net.arch.width.num);
  io::put_u64(out, net.arch.width.den);
  io::put_u64(out, net.layers.size());
  auto put_tensor = [&](const Tensor& t) {
    io::put_u64(out, t.rank());
    for (auto d : t.shape()) io::put_u64(out, d);
    io::put_f64s(out, t.values());
  };
  for (std::size_t i = 0; i < net.layers.size(); ++i) {
    const auto kind = net.layers[i].kind;
    io::put_u8(out, static_cast<std::uint8_t>(kind));
    if (has_params(kind)) {
      put_tensor(net.params[i].weight);
      put_tensor(net.params[i].bias);
    } else if (kind == LayerKind::Dropout) {
      io::put_f64(out, net.layers[i].dropout_rate);
    }
  }
  return out;
}

inline NetworkParams load_checkpoint(std::span<const std::uint8_t> bytes) {
  io::Reader in(bytes);
  if (!in.expect(kCheckpointMagic)) throw Error(ErrorCode::MalformedFile, "not a VGG-MI checkpoint");
  if (const auto v = in.u8(); v != kCheckpointVersion)
    throw Error(ErrorCode::MalformedFile, "unsupported checkpoint version " + std::to_string(v));
  WidthScale width{in.u64(), in.u64()};
  const auto n_layers = in.u64();
  if (n_layers > 1024) throw Error(ErrorCode::MalformedFile, "implausible layer count");

  auto get_tensor = [&]() {
    const auto rank = in.u64();
    if (rank > 8) throw Error(ErrorCode::MalformedFile, "implausible tensor rank");
    Shape shape(rank);
    for (auto& d : shape) d = in.u64();
    std::size_t n = 1;
    for (auto d : shape) {
      if (d != 0 && n > in.remaining() / d) throw Error(ErrorCode::MalformedFile, "tensor larger than file");
      n *= d;
    }
    return Tensor(shape, in.f64s(n));
  };

  std::vector<LayerParams> params;
  std::vector<std::uint8_t> kinds;
  double dropout_rate = 0.5;
  for (std::uint64_t i = 0; i < n_layers; ++i) {
    const auto kind = in.u8();
    kinds.push_back(kind);
    LayerParams p;
    if (has_params(static_cast<LayerKind>(kind))) {
      p.weight = get_tensor();
      p.bias = get_tensor();
    } else if (static_cast<LayerKind>(kind) == LayerKind::Dropout) {
      dropout_rate = in.f64();
    } else if (static_cast<LayerKind>(kind) != LayerKind::MaxPool2x2) {
      throw Error(ErrorCode::MalformedFile, "unknown layer kind " + std::to_string(kind));
    }
    params.push_back(std::move(p));
  }
  if (in.remaining() != 0) throw Error(ErrorCode::MalformedFile, "trailing bytes in checkpoint");

  // Input size follows from the first fully connected layer: in = (S/8)^2 * channels.
  Architecture arch;
  arch.width = width;
  arch.dropout_rate = dropout_rate;
  const std::size_t c3 = width.apply(256);
  std::size_t fc_in = 0;
  for (std::size_t i = 0; i < params.size(); ++i)
    if (static_cast<LayerKind>(kinds[i]) == LayerKind::FullyConnected) {
      fc_in = params[i].weight.rank() == 2 ? params[i].weight.dim(1) : 0;
      break;
    }
  const auto side = static_cast<std::size_t>(std::llround(std::sqrt(static_cast<double>(fc_in / c3))));
  arch.input_size = side * 8;
  const auto last = params.empty() ? Tensor{} : params.back().weight;
  arch.classes = last.rank() == 2 ? last.dim(0) : 2;

  NetworkParams net = zero_params(arch);
  if (net.layers.size() != params.size()) throw Error(ErrorCode::MalformedFile, "layer count does not match architecture");
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (static_cast<std::uint8_t>(net.layers[i].kind) != kinds[i])
      throw Error(ErrorCode::MalformedFile, "layer " + std::to_string(i) + " kind does not match architecture");
    if (params[i].weight.shape() != net.params[i].weight.shape() || params[i].bias.shape() != net.params[i].bias.shape())
      throw Error(ErrorCode::MalformedFile, "layer " + std::to_string(i) + " shape does not match architecture");
    net.params[i] = std::move(params[i]);
  }
  return net;
}

inline void write_checkpoint(const NetworkParams& net, const std::string& path) {
  io::write_file(path, save_checkpoint(net));
}

inline NetworkParams read_checkpoint(const std::string& path) { return load_checkpoint(io::read_file(path)); }

}  // namespace ecgmi::nn
