#pragma once

// Q-Gaussian kernel SVM trained by SMO.
//
//   K(x, y) = (1 + (q - 1) / ((3 - q) sigma^2) * |x - y|^2)^(1 / (1 - q)),  1 < q < 3
//
// With q = 1.5 and 1/sigma^2 = 0.5 this is (1 + |x - y|^2 / 6)^-2.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ecgmi/binary_io.hpp"
#include "ecgmi/error.hpp"

namespace ecgmi::svm {

using FeatureVector = std::vector<double>;

struct QGKernelParams {
  double q = 1.5;
  double inv_sigma_sq = 0.5;

  bool operator==(const QGKernelParams&) const = default;
};

inline void validate(const QGKernelParams& p) {
  if (!(p.q > 1.0 && p.q < 3.0)) throw Error(ErrorCode::InvalidArgument, "q must lie in (1, 3)");
  if (!(p.inv_sigma_sq > 0.0)) throw Error(ErrorCode::InvalidArgument, "1/sigma^2 must be positive");
}

inline double squared_distance(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size())
    throw Error(ErrorCode::DimensionMismatch,
                "vectors of length " + std::to_string(x.size()) + " and " + std::to_string(y.size()));
  double s = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double d = x[i] - y[i];
    s += d * d;
  }
  return s;
}

inline double qg_kernel_from_distance(double d2, const QGKernelParams& p) {
  const double coef = (p.q - 1.0) / (3.0 - p.q) * p.inv_sigma_sq;
  return std::pow(1.0 + coef * d2, 1.0 / (1.0 - p.q));
}

inline double qg_kernel(std::span<const double> x, std::span<const double> y, const QGKernelParams& p = {}) {
  validate(p);
  return qg_kernel_from_distance(squared_distance(x, y), p);
}

struct SmoConfig {
  double C = 1.0;
  double kkt_tolerance = 1e-3;
  std::size_t max_passes = 10;
  std::size_t max_iterations = 100000;
  std::uint64_t seed = 42;
};

/// Decision function f(x) = sum_i coef_i K(s_i, x) + bias, coef_i = alpha_i y_i.
/// Positive side is MI (+1), negative side Normal (-1).
class SvmModel {
 public:
  SvmModel(std::vector<FeatureVector> support_vectors, std::vector<double> dual_coeffs, double bias,
           QGKernelParams kernel)
      : support_vectors_(std::move(support_vectors)), dual_coeffs_(std::move(dual_coeffs)), bias_(bias),
        kernel_(kernel) {
    validate(kernel_);
    if (support_vectors_.empty()) throw Error(ErrorCode::InvalidArgument, "model has no support vectors");
    if (support_vectors_.size() != dual_coeffs_.size())
      throw Error(ErrorCode::InvalidArgument, "support vector and coefficient counts differ");
    for (const auto& sv : support_vectors_)
      if (sv.size() != support_vectors_.front().size())
        throw Error(ErrorCode::DimensionMismatch, "support vectors of unequal length");
  }

  const std::vector<FeatureVector>& support_vectors() const { return support_vectors_; }
  const std::vector<double>& dual_coeffs() const { return dual_coeffs_; }
  double bias() const { return bias_; }
  const QGKernelParams& kernel() const { return kernel_; }
  std::size_t dimension() const { return support_vectors_.front().size(); }

  double decision_value(std::span<const double> x) const {
    if (x.size() != dimension())
      throw Error(ErrorCode::DimensionMismatch, "feature length " + std::to_string(x.size()) + ", model expects " +
                                                    std::to_string(dimension()));
    double f = 0.0;
    for (std::size_t i = 0; i < support_vectors_.size(); ++i)
      f += dual_coeffs_[i] * qg_kernel_from_distance(squared_distance(support_vectors_[i], x), kernel_);
    return f + bias_;
  }

  /// Dual objective sum|coef| - 1/2 sum coef_i coef_j K_ij.
  double dual_objective() const {
    double lin = 0.0, quad = 0.0;
    for (std::size_t i = 0; i < support_vectors_.size(); ++i) {
      lin += std::abs(dual_coeffs_[i]);
      for (std::size_t j = 0; j < support_vectors_.size(); ++j)
        quad += dual_coeffs_[i] * dual_coeffs_[j] *
                qg_kernel_from_distance(squared_distance(support_vectors_[i], support_vectors_[j]), kernel_);
    }
    return lin - 0.5 * quad;
  }

  bool operator==(const SvmModel&) const = default;

 private:
  std::vector<FeatureVector> support_vectors_;
  std::vector<double> dual_coeffs_;
  double bias_;
  QGKernelParams kernel_;
};

struct SvmPrediction {
  int label;  // +1 MI, -1 Normal
  double decision_value;
};

/// Exactly zero decision value resolves to Normal (-1).
inline SvmPrediction predict_svm(const SvmModel& model, std::span<const double> x) {
  const double f = model.decision_value(x);
  return {f > 0.0 ? 1 : -1, f};
}

struct SvmTrainResult {
  SvmModel model;
  std::vector<double> alphas;  // per training example
  std::size_t iterations = 0;
  bool hit_iteration_limit = false;
  double max_kkt_violation = 0.0;
  double objective = 0.0;
};

namespace detail {

class Gram {
 public:
  static constexpr std::size_t kFullCacheLimit = 4096;

  Gram(std::span<const FeatureVector> x, const QGKernelParams& p) : x_(x), p_(p), n_(x.size()) {
    if (n_ <= kFullCacheLimit) {
      full_.resize(n_ * n_);
      for (std::size_t i = 0; i < n_; ++i)
        for (std::size_t j = 0; j <= i; ++j)
          full_[i * n_ + j] = full_[j * n_ + i] = qg_kernel_from_distance(squared_distance(x_[i], x_[j]), p_);
    }
  }

  double operator()(std::size_t i, std::size_t j) const {
    if (!full_.empty()) return full_[i * n_ + j];
    return qg_kernel_from_distance(squared_distance(x_[i], x_[j]), p_);
  }

 private:
  std::span<const FeatureVector> x_;
  QGKernelParams p_;
  std::size_t n_;
  std::vector<double> full_;
};

}  // namespace detail

/// Sequential minimal optimization on the box-constrained dual. Each pass visits every
/// KKT violator i and pairs it with the j maximizing |E_i - E_j|, falling back to all
/// other j from a seeded random offset. Training stops after max_passes consecutive
/// passes without an update or after max_iterations pair updates.
inline SvmTrainResult train_svm(std::span<const FeatureVector> x, std::span<const int> y,
                                const QGKernelParams& kernel = {}, const SmoConfig& cfg = {}) {
  validate(kernel);
  const std::size_t n = x.size();
  if (n != y.size()) throw Error(ErrorCode::DimensionMismatch, "feature and label counts differ");
  if (!(cfg.C > 0.0) || !(cfg.kkt_tolerance > 0.0) || cfg.max_passes == 0 || cfg.max_iterations == 0)
    throw Error(ErrorCode::InvalidArgument, "SMO settings must be positive");
  bool pos = false, neg = false;
  for (std::size_t i = 0; i < n; ++i) {
    if (y[i] != 1 && y[i] != -1) throw Error(ErrorCode::InvalidArgument, "SVM labels must be +1 or -1");
    (y[i] > 0 ? pos : neg) = true;
    if (x[i].size() != x[0].size()) throw Error(ErrorCode::DimensionMismatch, "features of unequal length");
    for (double v : x[i])
      if (!std::isfinite(v)) throw Error(ErrorCode::InvalidArgument, "non-finite feature value");
  }
  if (!pos || !neg) throw Error(ErrorCode::SingleClassTraining, "SVM training needs both classes");

  const detail::Gram K(x, kernel);
  const double C = cfg.C;
  double tol = cfg.kkt_tolerance;
  constexpr double eps = 1e-10;
  std::vector<double> alpha(n, 0.0), err(n);
  for (std::size_t i = 0; i < n; ++i) err[i] = -y[i];
  double b = 0.0;
  std::mt19937_64 rng(cfg.seed);

  auto take_step = [&](std::size_t i, std::size_t j) -> bool {
    if (i == j) return false;
    const double a1 = alpha[i], a2 = alpha[j];
    const double y1 = y[i], y2 = y[j], e1 = err[i], e2 = err[j];
    const double s = y1 * y2;
    double lo, hi;
    if (s < 0) {
      lo = std::max(0.0, a2 - a1);
      hi = std::min(C, C + a2 - a1);
    } else {
      lo = std::max(0.0, a1 + a2 - C);
      hi = std::min(C, a1 + a2);
    }
    if (hi - lo < eps) return false;
    const double k11 = K(i, i), k12 = K(i, j), k22 = K(j, j);
    const double eta = k11 + k22 - 2.0 * k12;
    double a2new;
    if (eta > eps) {
      a2new = std::clamp(a2 + y2 * (e1 - e2) / eta, lo, hi);
    } else {
      // Objective at the segment ends (eta ~ 0: duplicated or near-duplicated points).
      const double f1 = y1 * (e1 + y1) - a1 * k11 - s * a2 * k12;
      const double f2 = y2 * (e2 + y2) - s * a1 * k12 - a2 * k22;
      auto obj = [&](double a2x) {
        const double a1x = a1 + s * (a2 - a2x);
        return a1x * f1 + a2x * f2 + 0.5 * a1x * a1x * k11 + 0.5 * a2x * a2x * k22 + s * a1x * a2x * k12;
      };
      const double lobj = obj(lo), hobj = obj(hi);
      if (lobj < hobj - eps)
        a2new = lo;
      else if (lobj > hobj + eps)
        a2new = hi;
      else
        return false;
    }
    if (std::abs(a2new - a2) < eps * (a2new + a2 + eps)) return false;
    double a1new = a1 + s * (a2 - a2new);
    if (a1new < 0.0) {
      a2new += s * a1new;
      a1new = 0.0;
    } else if (a1new > C) {
      a2new += s * (a1new - C);
      a1new = C;
    }
    // Rounding can leave an alpha a few ulps off a bound; snap it so bound and free
    // vectors stay distinguishable.
    auto snap = [&](double& a) {
      if (a < 1e-12 * C) a = 0.0;
      if (a > C * (1.0 - 1e-12)) a = C;
    };
    snap(a1new);
    snap(a2new);
    const double d1 = y1 * (a1new - a1), d2 = y2 * (a2new - a2);
    const double b1 = b - e1 - d1 * k11 - d2 * k12;
    const double b2 = b - e2 - d1 * k12 - d2 * k22;
    double bnew;
    if (a1new > 0.0 && a1new < C)
      bnew = b1;
    else if (a2new > 0.0 && a2new < C)
      bnew = b2;
    else
      bnew = 0.5 * (b1 + b2);
    const double db = bnew - b;
    for (std::size_t k = 0; k < n; ++k) err[k] += d1 * K(i, k) + d2 * K(j, k) + db;
    alpha[i] = a1new;
    alpha[j] = a2new;
    b = bnew;
    return true;
  };

  auto violates = [&](std::size_t i) {
    const double r = y[i] * err[i];
    return (r < -tol && alpha[i] < C) || (r > tol && alpha[i] > 0.0);
  };

  std::size_t iterations = 0;
  bool limit = false;
  std::vector<double> g(n, 0.0);
  double worst = 0.0;

  // Each round runs SMO passes against the running bias, then re-derives the bias from
  // exact decision sums. If that leaves a KKT violation above tolerance (the running
  // and final bias differ), the working tolerance is halved and the passes resume.
  for (double working_tol = 0.5 * cfg.kkt_tolerance;; working_tol *= 0.5) {
    tol = working_tol;
    std::size_t passes = 0;
    while (passes < cfg.max_passes && !limit) {
      std::size_t changed = 0;
      for (std::size_t i = 0; i < n && !limit; ++i) {
        if (!violates(i)) continue;
        std::size_t best = i;
        double gap = -1.0;
        for (std::size_t j = 0; j < n; ++j)
          if (j != i && std::abs(err[i] - err[j]) > gap) {
            gap = std::abs(err[i] - err[j]);
            best = j;
          }
        bool stepped = take_step(i, best);
        if (!stepped) {
          const std::size_t offset = static_cast<std::size_t>(rng() % n);
          for (std::size_t k = 0; k < n && !stepped; ++k) {
            const std::size_t j = (offset + k) % n;
            if (j != best) stepped = take_step(i, j);
          }
        }
        if (stepped) {
          ++changed;
          if (++iterations >= cfg.max_iterations) limit = true;
        }
      }
      passes = changed == 0 ? passes + 1 : 0;
    }

    // Bias from the exact decision sums: mean over free vectors, else the midpoint of
    // the interval allowed by the bound vectors.
    std::fill(g.begin(), g.end(), 0.0);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j)
        if (alpha[j] > 0.0) g[i] += alpha[j] * y[j] * K(i, j);
    double free_sum = 0.0;
    std::size_t free_count = 0;
    double b_lo = -std::numeric_limits<double>::infinity(), b_hi = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < n; ++i) {
      if (alpha[i] > 0.0 && alpha[i] < C) {
        free_sum += y[i] - g[i];
        ++free_count;
      } else {
        const bool at_zero = alpha[i] <= 0.0;
        // alpha = 0 needs y f >= 1; alpha = C needs y f <= 1.
        if ((y[i] > 0) == at_zero)
          b_lo = std::max(b_lo, y[i] - g[i]);
        else
          b_hi = std::min(b_hi, y[i] - g[i]);
      }
    }
    if (free_count > 0) {
      b = free_sum / static_cast<double>(free_count);
    } else if (std::isfinite(b_lo) && std::isfinite(b_hi)) {
      b = 0.5 * (b_lo + b_hi);
    } else if (std::isfinite(b_lo)) {
      b = b_lo;
    } else if (std::isfinite(b_hi)) {
      b = b_hi;
    }

    worst = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double margin = y[i] * (g[i] + b) - 1.0;
      double v = 0.0;
      if (alpha[i] <= 0.0)
        v = std::max(0.0, -margin);
      else if (alpha[i] >= C)
        v = std::max(0.0, margin);
      else
        v = std::abs(margin);
      worst = std::max(worst, v);
    }
    if (worst <= cfg.kkt_tolerance || limit || working_tol < 1e-12) break;
    for (std::size_t i = 0; i < n; ++i) err[i] = g[i] + b - y[i];
  }

  std::vector<FeatureVector> svs;
  std::vector<double> coef;
  double objective = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    objective += alpha[i] - 0.5 * alpha[i] * y[i] * g[i];
    if (alpha[i] > 0.0) {
      svs.push_back(x[i]);
      coef.push_back(alpha[i] * y[i]);
    }
  }
  return {SvmModel(std::move(svs), std::move(coef), b, kernel), std::move(alpha), iterations, limit, worst,
          objective};
}

// ---- one-vs-rest ---------------------------------------------------------------

/// One binary model per class (class c -> +1, rest -> -1).
inline std::vector<SvmModel> train_one_vs_rest(std::span<const FeatureVector> x, std::span<const int> labels,
                                               std::size_t classes, const QGKernelParams& kernel = {},
                                               const SmoConfig& cfg = {}) {
  if (classes < 2) throw Error(ErrorCode::InvalidArgument, "one-vs-rest needs k >= 2");
  std::vector<std::size_t> counts(classes, 0);
  for (int l : labels) {
    if (l < 0 || static_cast<std::size_t>(l) >= classes) throw Error(ErrorCode::InvalidArgument, "label out of range");
    ++counts[static_cast<std::size_t>(l)];
  }
  if (std::count(counts.begin(), counts.end(), std::size_t{0}) > 0)
    throw Error(ErrorCode::SingleClassTraining, "every class needs at least one example");
  std::vector<SvmModel> models;
  std::vector<int> y(labels.size());
  for (std::size_t c = 0; c < classes; ++c) {
    for (std::size_t i = 0; i < labels.size(); ++i) y[i] = labels[i] == static_cast<int>(c) ? 1 : -1;
    models.push_back(train_svm(x, y, kernel, cfg).model);
  }
  return models;
}

/// Argmax of per-class decision values; ties go to the lowest class index.
inline int predict_one_vs_rest(std::span<const SvmModel> models, std::span<const double> x) {
  int best = 0;
  double best_value = models.front().decision_value(x);
  for (std::size_t c = 1; c < models.size(); ++c) {
    const double v = models[c].decision_value(x);
    if (v > best_value) {
      best_value = v;
      best = static_cast<int>(c);
    }
  }
  return best;
}

// ---- model file ----------------------------------------------------------------------
//   "QGSVM\0" | version u8 | q f64 | 1/sigma^2 f64 | bias f64 | n_sv u64 | dim u64 |
//   dual coefficients f64[n_sv] | support vectors f64[n_sv * dim]

inline constexpr std::string_view kModelMagic{"QGSVM\0", 6};
inline constexpr std::uint8_t kModelVersion = 1;

inline std::vector<std::uint8_t> save_model(const SvmModel& m) {
  std::vector<std::uint8_t> out;
  io::put_bytes(out, kModelMagic);
  io::put_u8(out, kModelVersion);
  io::put_f64(out, m.kernel().q);
  io::put_f64(out, m.kernel().inv_sigma_sq);
  io::put_f64(out, m.bias());
  io::put_u64(out, m.support_vectors().size());
  io::put_u64(out, m.dimension());
  io::put_f64s(out, m.dual_coeffs());
  for (const auto& sv : m.support_vectors()) io::put_f64s(out, sv);
  return out;
}

inline SvmModel load_model(std::span<const std::uint8_t> bytes) {
  io::Reader in(bytes);
  if (!in.expect(kModelMagic)) throw Error(ErrorCode::MalformedFile, "not a QG-SVM model");
  if (const auto v = in.u8(); v != kModelVersion)
    throw Error(ErrorCode::MalformedFile, "unsupported model version " + std::to_string(v));
  QGKernelParams k{in.f64(), in.f64()};
  const double bias = in.f64();
  const auto n_sv = in.u64();
  const auto dim = in.u64();
  if (n_sv == 0 || dim == 0 || n_sv > in.remaining() / 8 || dim > in.remaining() / 8 / n_sv)
    throw Error(ErrorCode::MalformedFile, "implausible model dimensions");
  auto coef = in.f64s(n_sv);
  std::vector<FeatureVector> svs;
  svs.reserve(n_sv);
  for (std::uint64_t i = 0; i < n_sv; ++i) svs.push_back(in.f64s(dim));
  if (in.remaining() != 0) throw Error(ErrorCode::MalformedFile, "trailing bytes in model");
  return SvmModel(std::move(svs), std::move(coef), bias, k);
}

}  // namespace ecgmi::svm
