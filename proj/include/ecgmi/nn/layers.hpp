#pragma once

// Layer kernels: forward passes return fresh tensors; backward passes accumulate
// parameter gradients into caller-owned tensors so a minibatch can sum in place.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <vector>

#include "ecgmi/nn/tensor.hpp"

namespace ecgmi::nn {

// ---- ReLU -------------------------------------------------------------------

inline Tensor relu(const Tensor& x) {
  Tensor y = x;
  for (auto& v : y.values()) v = v > 0.0 ? v : 0.0;
  return y;
}

/// Derivative at exactly 0 is taken as 0.
inline Tensor relu_backward(const Tensor& x, const Tensor& grad) {
  require_shape(grad, x.shape(), "relu_backward");
  Tensor g = grad;
  for (std::size_t i = 0; i < g.size(); ++i)
    if (!(x[i] > 0.0)) g[i] = 0.0;
  return g;
}

// ---- 3x3 convolution, stride 1, zero pad 1 -----------------------------------

namespace detail {

// col[(c*9 + ky*3 + kx) * HW + y*W + x] = in[c][y+ky-1][x+kx-1]
inline void im2col3x3(const double* in, std::size_t channels, std::size_t h, std::size_t w, double* col) {
  const std::size_t hw = h * w;
  for (std::size_t c = 0; c < channels; ++c) {
    const double* src = in + c * hw;
    for (std::size_t ky = 0; ky < 3; ++ky)
      for (std::size_t kx = 0; kx < 3; ++kx) {
        double* dst = col + ((c * 3 + ky) * 3 + kx) * hw;
        for (std::size_t y = 0; y < h; ++y) {
          const long sy = static_cast<long>(y) + static_cast<long>(ky) - 1;
          double* row = dst + y * w;
          if (sy < 0 || sy >= static_cast<long>(h)) {
            std::fill(row, row + w, 0.0);
            continue;
          }
          const double* srow = src + static_cast<std::size_t>(sy) * w;
          if (kx == 0) {
            row[0] = 0.0;
            std::copy(srow, srow + w - 1, row + 1);
          } else if (kx == 1) {
            std::copy(srow, srow + w, row);
          } else {
            std::copy(srow + 1, srow + w, row);
            row[w - 1] = 0.0;
          }
        }
      }
  }
}

// Transposed layout: colT[(y*W + x) * K + k], K = channels * 9.
inline void im2col3x3_transposed(const double* in, std::size_t channels, std::size_t h, std::size_t w,
                                 double* colT) {
  const std::size_t k_total = channels * 9;
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x) {
      double* dst = colT + (y * w + x) * k_total;
      for (std::size_t c = 0; c < channels; ++c) {
        const double* src = in + c * h * w;
        for (std::size_t ky = 0; ky < 3; ++ky) {
          const long sy = static_cast<long>(y) + static_cast<long>(ky) - 1;
          for (std::size_t kx = 0; kx < 3; ++kx) {
            const long sx = static_cast<long>(x) + static_cast<long>(kx) - 1;
            const bool inside = sy >= 0 && sy < static_cast<long>(h) && sx >= 0 && sx < static_cast<long>(w);
            *dst++ = inside ? src[static_cast<std::size_t>(sy) * w + static_cast<std::size_t>(sx)] : 0.0;
          }
        }
      }
    }
}

inline void col2im3x3_add(const double* col, std::size_t channels, std::size_t h, std::size_t w, double* out) {
  const std::size_t hw = h * w;
  for (std::size_t c = 0; c < channels; ++c) {
    double* dst = out + c * hw;
    for (std::size_t ky = 0; ky < 3; ++ky)
      for (std::size_t kx = 0; kx < 3; ++kx) {
        const double* src = col + ((c * 3 + ky) * 3 + kx) * hw;
        for (std::size_t y = 0; y < h; ++y) {
          const long sy = static_cast<long>(y) + static_cast<long>(ky) - 1;
          if (sy < 0 || sy >= static_cast<long>(h)) continue;
          double* drow = dst + static_cast<std::size_t>(sy) * w;
          const double* srow = src + y * w;
          if (kx == 0) {
            for (std::size_t x = 1; x < w; ++x) drow[x - 1] += srow[x];
          } else if (kx == 1) {
            for (std::size_t x = 0; x < w; ++x) drow[x] += srow[x];
          } else {
            for (std::size_t x = 0; x + 1 < w; ++x) drow[x + 1] += srow[x];
          }
        }
      }
  }
}

inline void axpy(std::size_t n, double a, const double* __restrict x, double* __restrict y) {
  for (std::size_t i = 0; i < n; ++i) y[i] += a * x[i];
}

inline double dot(std::size_t n, const double* __restrict a, const double* __restrict b) {
  double s0 = 0, s1 = 0, s2 = 0, s3 = 0;
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    s0 += a[i] * b[i];
    s1 += a[i + 1] * b[i + 1];
    s2 += a[i + 2] * b[i + 2];
    s3 += a[i + 3] * b[i + 3];
  }
  for (; i < n; ++i) s0 += a[i] * b[i];
  return (s0 + s1) + (s2 + s3);
}

}  // namespace detail

inline void check_conv_shapes(const Tensor& x, const Tensor& w, const Tensor& b) {
  if (x.rank() != 3 || w.rank() != 4 || b.rank() != 1 || w.dim(1) != x.dim(0) || w.dim(2) != 3 || w.dim(3) != 3 ||
      b.dim(0) != w.dim(0))
    throw Error(ErrorCode::ShapeMismatch, "conv3x3: x " + shape_string(x.shape()) + ", w " +
                                              shape_string(w.shape()) + ", b " + shape_string(b.shape()));
}

/// Cross-correlation with zero padding 1 and stride 1; output keeps the spatial size.
inline Tensor conv3x3_forward(const Tensor& x, const Tensor& w, const Tensor& b) {
  check_conv_shapes(x, w, b);
  const std::size_t cin = x.dim(0), h = x.dim(1), wd = x.dim(2), cout = w.dim(0);
  const std::size_t hw = h * wd, k_total = cin * 9;
  std::vector<double> col(k_total * hw);
  detail::im2col3x3(x.data(), cin, h, wd, col.data());
  Tensor y({cout, h, wd});
  for (std::size_t o = 0; o < cout; ++o) {
    double* out = y.data() + o * hw;
    std::fill(out, out + hw, b[o]);
    const double* wrow = w.data() + o * k_total;
    for (std::size_t k = 0; k < k_total; ++k) {
      const double a = wrow[k];
      if (a != 0.0) detail::axpy(hw, a, col.data() + k * hw, out);
    }
  }
  return y;
}

/// Accumulates dL/dw and dL/db; writes dL/dx when `dx` is non-null.
inline void conv3x3_backward(const Tensor& x, const Tensor& w, const Tensor& dy, Tensor& dw, Tensor& db,
                             Tensor* dx) {
  const std::size_t cin = x.dim(0), h = x.dim(1), wd = x.dim(2), cout = w.dim(0);
  const std::size_t hw = h * wd, k_total = cin * 9;
  require_shape(dy, {cout, h, wd}, "conv3x3_backward dy");
  require_shape(dw, w.shape(), "conv3x3_backward dw");

  std::vector<double> colT(hw * k_total);
  detail::im2col3x3_transposed(x.data(), cin, h, wd, colT.data());
  for (std::size_t o = 0; o < cout; ++o) {
    const double* g = dy.data() + o * hw;
    double* dwrow = dw.data() + o * k_total;
    double bsum = 0.0;
    for (std::size_t p = 0; p < hw; ++p) {
      bsum += g[p];
      if (g[p] != 0.0) detail::axpy(k_total, g[p], colT.data() + p * k_total, dwrow);
    }
    db[o] += bsum;
  }

  if (dx) {
    std::vector<double> dcol(k_total * hw, 0.0);
    for (std::size_t o = 0; o < cout; ++o) {
      const double* g = dy.data() + o * hw;
      const double* wrow = w.data() + o * k_total;
      for (std::size_t k = 0; k < k_total; ++k)
        if (wrow[k] != 0.0) detail::axpy(hw, wrow[k], g, dcol.data() + k * hw);
    }
    *dx = Tensor({cin, h, wd});
    detail::col2im3x3_add(dcol.data(), cin, h, wd, dx->data());
  }
}

// ---- 2x2 max pooling, stride 2 --------------------------------------------------

struct PoolResult {
  Tensor output;
  std::vector<std::uint32_t> argmax;  // flat input index per output element
};

/// Ties resolve to the first maximum in row-major order within the block.
inline PoolResult maxpool2x2(const Tensor& x) {
  if (x.rank() != 3) throw Error(ErrorCode::ShapeMismatch, "maxpool2x2 expects CxHxW");
  const std::size_t c = x.dim(0), h = x.dim(1), w = x.dim(2);
  if (h % 2 != 0 || w % 2 != 0) throw Error(ErrorCode::OddDimensions, "maxpool2x2 needs even H and W");
  const std::size_t oh = h / 2, ow = w / 2;
  PoolResult r{Tensor({c, oh, ow}), std::vector<std::uint32_t>(c * oh * ow)};
  std::size_t o = 0;
  for (std::size_t ch = 0; ch < c; ++ch)
    for (std::size_t y = 0; y < oh; ++y)
      for (std::size_t xx = 0; xx < ow; ++xx, ++o) {
        const std::size_t base = (ch * h + 2 * y) * w + 2 * xx;
        std::size_t best = base;
        for (std::size_t idx : {base + 1, base + w, base + w + 1})
          if (x[idx] > x[best]) best = idx;
        r.output[o] = x[best];
        r.argmax[o] = static_cast<std::uint32_t>(best);
      }
  return r;
}

inline Tensor maxpool2x2_backward(const Shape& input_shape, const std::vector<std::uint32_t>& argmax,
                                  const Tensor& dy) {
  if (dy.size() != argmax.size()) throw Error(ErrorCode::ShapeMismatch, "maxpool2x2_backward size mismatch");
  Tensor dx(input_shape);
  for (std::size_t i = 0; i < dy.size(); ++i) dx[argmax[i]] += dy[i];
  return dx;
}

// ---- fully connected --------------------------------------------------------------

/// y = W x + b, with x flattened row-major.
inline Tensor fc_forward(const Tensor& x, const Tensor& w, const Tensor& b) {
  if (w.rank() != 2 || b.rank() != 1 || w.dim(1) != x.size() || b.dim(0) != w.dim(0))
    throw Error(ErrorCode::ShapeMismatch, "fc: x " + shape_string(x.shape()) + ", w " + shape_string(w.shape()) +
                                              ", b " + shape_string(b.shape()));
  const std::size_t m = w.dim(0), n = w.dim(1);
  Tensor y({m});
  for (std::size_t i = 0; i < m; ++i) y[i] = detail::dot(n, w.data() + i * n, x.data()) + b[i];
  return y;
}

inline void fc_backward(const Tensor& x, const Tensor& w, const Tensor& dy, Tensor& dw, Tensor& db, Tensor* dx) {
  const std::size_t m = w.dim(0), n = w.dim(1);
  if (dy.size() != m || x.size() != n) throw Error(ErrorCode::ShapeMismatch, "fc_backward size mismatch");
  require_shape(dw, w.shape(), "fc_backward dw");
  for (std::size_t i = 0; i < m; ++i) {
    db[i] += dy[i];
    if (dy[i] != 0.0) detail::axpy(n, dy[i], x.data(), dw.data() + i * n);
  }
  if (dx) {
    *dx = Tensor(x.shape());
    for (std::size_t i = 0; i < m; ++i)
      if (dy[i] != 0.0) detail::axpy(n, dy[i], w.data() + i * n, dx->data());
  }
}

// ---- dropout ------------------------------------------------------------------------

enum class Mode { Train, Infer };

struct DropoutResult {
  Tensor output;
  Tensor mask;  // 0 or 1/(1-rate); empty in Infer mode
};

/// Inverted dropout: survivors scaled by 1/(1-rate) so inference is the identity.
inline DropoutResult dropout(const Tensor& x, double rate, Mode mode, std::mt19937_64& rng) {
  if (!(rate >= 0.0 && rate < 1.0)) throw Error(ErrorCode::InvalidArgument, "dropout rate must lie in [0, 1)");
  if (mode == Mode::Infer || rate == 0.0) return {x, {}};
  DropoutResult r{Tensor(x.shape()), Tensor(x.shape())};
  const double keep_scale = 1.0 / (1.0 - rate);
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
    r.mask[i] = u < rate ? 0.0 : keep_scale;
    r.output[i] = x[i] * r.mask[i];
  }
  return r;
}

inline Tensor dropout_backward(const Tensor& mask, const Tensor& dy) {
  if (mask.empty()) return dy;
  Tensor dx = dy;
  for (std::size_t i = 0; i < dx.size(); ++i) dx[i] *= mask[i];
  return dx;
}

// ---- softmax + cross-entropy -----------------------------------------------------------

struct SoftmaxLoss {
  double loss = 0.0;
  Tensor probs;
  Tensor grad_logits;
};

inline Tensor softmax(const Tensor& logits) {
  Tensor p = logits;
  const double mx = *std::max_element(p.values().begin(), p.values().end());
  double sum = 0.0;
  for (auto& v : p.values()) sum += (v = std::exp(v - mx));
  for (auto& v : p.values()) v /= sum;
  return p;
}

inline SoftmaxLoss softmax_xent(const Tensor& logits, std::size_t target) {
  if (target >= logits.size()) throw Error(ErrorCode::InvalidArgument, "target class out of range");
  const double mx = *std::max_element(logits.values().begin(), logits.values().end());
  double sum = 0.0;
  for (double v : logits.values()) sum += std::exp(v - mx);
  const double log_sum = std::log(sum);
  SoftmaxLoss r{0.0, Tensor(logits.shape()), Tensor(logits.shape())};
  for (std::size_t i = 0; i < logits.size(); ++i) {
    r.probs[i] = std::exp(logits[i] - mx - log_sum);
    r.grad_logits[i] = r.probs[i] - (i == target ? 1.0 : 0.0);
  }
  r.loss = -(logits[target] - mx - log_sum);
  return r;
}

}  // namespace ecgmi::nn
