#pragma once

// Butterworth band-pass design (bilinear transform, second-order sections) and
// forward or forward-backward filtering.

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>
#include <span>
#include <vector>

#include "ecgmi/error.hpp"

namespace ecgmi::dsp {

struct FilterSpec {
  double low_cutoff = 0.5;   // Hz
  double high_cutoff = 40.0; // Hz
  int order = 2;             // prototype order; the band-pass has 2*order poles
  bool zero_phase = true;
};

/// One section: H(z) = (b0 + b1 z^-1 + b2 z^-2) / (1 + a1 z^-1 + a2 z^-2).
struct Biquad {
  double b0 = 1, b1 = 0, b2 = 0;
  double a1 = 0, a2 = 0;
};

using Sos = std::vector<Biquad>;

inline void validate(const FilterSpec& spec, double fs) {
  if (!(spec.low_cutoff > 0.0 && spec.low_cutoff < spec.high_cutoff && spec.high_cutoff < fs / 2.0))
    throw Error(ErrorCode::InvalidCutoff, "need 0 < low < high < fs/2");
  if (spec.order < 1) throw Error(ErrorCode::InvalidArgument, "filter order must be >= 1");
}

inline std::complex<double> response(const Sos& sos, double freq, double fs) {
  const double w = 2.0 * std::numbers::pi * freq / fs;
  const std::complex<double> zi = std::polar(1.0, -w);  // z^-1
  std::complex<double> h = 1.0;
  for (const auto& s : sos)
    h *= (s.b0 + s.b1 * zi + s.b2 * zi * zi) / (1.0 + s.a1 * zi + s.a2 * zi * zi);
  return h;
}

/// Butterworth band-pass as `order` biquads, each with zeros at z = 1 and z = -1.
/// Passband gain is normalized to 1 at the geometric centre of the prewarped band.
inline Sos design_bandpass(const FilterSpec& spec, double fs) {
  validate(spec, fs);
  using cd = std::complex<double>;
  const double k = 2.0 * fs;
  const double w1 = k * std::tan(std::numbers::pi * spec.low_cutoff / fs);
  const double w2 = k * std::tan(std::numbers::pi * spec.high_cutoff / fs);
  const double bw = w2 - w1;
  const double w0sq = w1 * w2;
  const int n = spec.order;

  // Analog band-pass poles from the low-pass prototype, then bilinear map.
  std::vector<cd> upper;  // Im > 0
  std::vector<double> real_poles;
  for (int i = 0; i < n; ++i) {
    const cd p = std::polar(1.0, std::numbers::pi * (2.0 * i + n + 1) / (2.0 * n));
    const cd disc = std::sqrt(p * p * bw * bw - 4.0 * w0sq);
    for (const cd s : {(p * bw + disc) / 2.0, (p * bw - disc) / 2.0}) {
      const cd z = (k + s) / (k - s);
      if (std::abs(z.imag()) < 1e-12 * std::max(1.0, std::abs(z)))
        real_poles.push_back(z.real());
      else if (z.imag() > 0)
        upper.push_back(z);
    }
  }
  std::sort(real_poles.begin(), real_poles.end());

  Sos sos;
  for (const cd& z : upper) sos.push_back({1.0, 0.0, -1.0, -2.0 * z.real(), std::norm(z)});
  for (std::size_t i = 0; i + 1 < real_poles.size(); i += 2)
    sos.push_back({1.0, 0.0, -1.0, -(real_poles[i] + real_poles[i + 1]), real_poles[i] * real_poles[i + 1]});
  if (sos.size() != static_cast<std::size_t>(n) || real_poles.size() % 2 != 0)
    throw Error(ErrorCode::InvalidCutoff, "pole pairing failed for the requested band");

  const double centre = fs / std::numbers::pi * std::atan(std::sqrt(w0sq) / k);
  const double g = 1.0 / std::abs(response(sos, centre, fs));
  sos.front().b0 *= g;
  sos.front().b1 *= g;
  sos.front().b2 *= g;
  return sos;
}

/// Direct form II transposed state per section.
struct SosState {
  std::vector<double> z1, z2;
};

/// Steady-state state for a unit step input (cascade-aware).
inline SosState step_state(const Sos& sos) {
  SosState st{std::vector<double>(sos.size()), std::vector<double>(sos.size())};
  double scale = 1.0;
  for (std::size_t i = 0; i < sos.size(); ++i) {
    const auto& s = sos[i];
    const double gain = (s.b0 + s.b1 + s.b2) / (1.0 + s.a1 + s.a2);
    st.z2[i] = scale * (s.b2 - s.a2 * gain);
    st.z1[i] = scale * (s.b1 - s.a1 * gain) + st.z2[i];
    scale *= gain;
  }
  return st;
}

inline void sosfilt_inplace(const Sos& sos, std::span<double> x, SosState st) {
  for (double& v : x) {
    double in = v;
    for (std::size_t i = 0; i < sos.size(); ++i) {
      const auto& s = sos[i];
      const double y = s.b0 * in + st.z1[i];
      st.z1[i] = s.b1 * in - s.a1 * y + st.z2[i];
      st.z2[i] = s.b2 * in - s.a2 * y;
      in = y;
    }
    v = in;
  }
}

/// Causal single pass from zero state.
inline std::vector<double> sosfilt(const Sos& sos, std::span<const double> x) {
  std::vector<double> y(x.begin(), x.end());
  sosfilt_inplace(sos, y, SosState{std::vector<double>(sos.size()), std::vector<double>(sos.size())});
  return y;
}

namespace detail {

/// Forward then backward pass over an odd-extension padded copy, each pass started from
/// the step-response state scaled to its first sample.
inline std::vector<double> forward_backward(const Sos& sos, std::span<const double> x) {
  const std::size_t n = x.size();
  const std::size_t pad = std::min<std::size_t>(n - 1, 3 * (2 * sos.size() + 1));
  std::vector<double> ext;
  ext.reserve(n + 2 * pad);
  for (std::size_t i = pad; i >= 1; --i) ext.push_back(2.0 * x[0] - x[i]);
  ext.insert(ext.end(), x.begin(), x.end());
  for (std::size_t i = 1; i <= pad; ++i) ext.push_back(2.0 * x[n - 1] - x[n - 1 - i]);

  const SosState unit = step_state(sos);
  auto scaled = [&](double v) {
    SosState st = unit;
    for (auto& z : st.z1) z *= v;
    for (auto& z : st.z2) z *= v;
    return st;
  };
  sosfilt_inplace(sos, ext, scaled(ext.front()));
  std::reverse(ext.begin(), ext.end());
  sosfilt_inplace(sos, ext, scaled(ext.front()));
  std::reverse(ext.begin(), ext.end());
  return {ext.begin() + static_cast<std::ptrdiff_t>(pad), ext.begin() + static_cast<std::ptrdiff_t>(pad + n)};
}

}  // namespace detail

/// Zero-phase filtering: the mean of the forward-backward and backward-forward passes,
/// which makes the result commute exactly with time reversal.
inline std::vector<double> sosfiltfilt(const Sos& sos, std::span<const double> x) {
  auto fb = detail::forward_backward(sos, x);
  std::vector<double> rev(x.rbegin(), x.rend());
  auto bf = detail::forward_backward(sos, rev);
  const std::size_t n = x.size();
  for (std::size_t i = 0; i < n; ++i) fb[i] = 0.5 * (fb[i] + bf[n - 1 - i]);
  return fb;
}

inline std::vector<double> bandpass_filter(std::span<const double> signal, double fs, const FilterSpec& spec) {
  validate(spec, fs);
  if (signal.size() <= static_cast<std::size_t>(3 * spec.order))
    throw Error(ErrorCode::SignalTooShort, "signal length must exceed 3 x order");
  const Sos sos = design_bandpass(spec, fs);
  return spec.zero_phase ? sosfiltfilt(sos, signal) : sosfilt(sos, signal);
}

}  // namespace ecgmi::dsp
