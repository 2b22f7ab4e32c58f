#pragma once

// Offline Pan-Tompkins style R detector with windowed P/T search.

#include <algorithm>
#include <cmath>
#include <numeric>
#include <span>
#include <vector>

#include "ecgmi/error.hpp"
#include "ecgmi/filter.hpp"

namespace ecgmi::dsp {

struct PeakAnnotations {
  std::vector<std::size_t> r_indices;
  std::vector<std::size_t> p_indices;
  std::vector<std::size_t> t_indices;
};

struct DetectorParams {
  double band_low = 5.0;          // Hz
  double band_high = 15.0;        // Hz
  double integration_window = 0.150;  // s
  double refractory = 0.200;      // s
  double refine_radius = 0.040;   // s
  double p_window_begin = 0.200;  // s before R
  double p_window_end = 0.080;    // s before R
  double t_window_begin = 0.120;  // s after R
  double t_window_end = 0.380;    // s after R
  double searchback_factor = 1.66;
};

namespace detail {

inline std::size_t argmax_in(std::span<const double> x, std::size_t lo, std::size_t hi) {
  std::size_t best = lo;
  for (std::size_t i = lo + 1; i <= hi; ++i)
    if (x[i] > x[best]) best = i;
  return best;
}

inline std::size_t to_samples(double seconds, double fs) {
  return static_cast<std::size_t>(std::llround(seconds * fs));
}

}  // namespace detail

/// Feature signal: band-limit -> centred 5-point derivative -> square -> centred
/// moving-window integration.
inline std::vector<double> qrs_energy(std::span<const double> signal, double fs, const DetectorParams& p = {}) {
  const auto band = sosfiltfilt(design_bandpass({p.band_low, p.band_high, 2, true}, fs), signal);
  const std::size_t n = band.size();
  std::vector<double> sq(n, 0.0);
  for (std::size_t i = 2; i + 2 < n; ++i) {
    const double d = (-band[i - 2] - 2.0 * band[i - 1] + 2.0 * band[i + 1] + band[i + 2]) / 8.0;
    sq[i] = d * d;
  }
  const std::size_t w = std::max<std::size_t>(1, detail::to_samples(p.integration_window, fs));
  const std::size_t half = w / 2;
  std::vector<double> prefix(n + 1, 0.0);
  for (std::size_t i = 0; i < n; ++i) prefix[i + 1] = prefix[i] + sq[i];
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t lo = i >= half ? i - half : 0;
    const std::size_t hi = std::min(n, lo + w);
    out[i] = (prefix[hi] - prefix[lo]) / static_cast<double>(w);
  }
  return out;
}

/// R, P and T peak indices. R peaks use adaptive dual thresholds on the integrated
/// energy with a refractory period and RR-based search-back, then snap to the
/// signal maximum within the refine radius. Beats whose P or T window would leave
/// the signal are dropped.
inline PeakAnnotations detect_peaks(std::span<const double> signal, double fs, const DetectorParams& p = {}) {
  if (fs < 250.0) throw Error(ErrorCode::InvalidArgument, "detect_peaks needs fs >= 250 Hz");
  const std::size_t n = signal.size();
  if (n < detail::to_samples(2.0, fs)) throw Error(ErrorCode::SignalTooShort, "need at least 2 s of signal");

  const auto energy = qrs_energy(signal, fs, p);
  const std::size_t refractory = detail::to_samples(p.refractory, fs);

  // Candidate peaks: local maxima of the energy, at least one refractory apart
  // (larger one wins).
  std::vector<std::size_t> cand;
  for (std::size_t i = 1; i + 1 < n; ++i) {
    if (!(energy[i] > energy[i - 1] && energy[i] >= energy[i + 1])) continue;
    if (!cand.empty() && i - cand.back() < refractory) {
      if (energy[i] > energy[cand.back()]) cand.back() = i;
      continue;
    }
    cand.push_back(i);
  }

  const double peak_max = *std::max_element(energy.begin(), energy.end());
  PeakAnnotations ann;
  if (!(peak_max > 0.0) || cand.empty()) throw Error(ErrorCode::NoBeatsFound, "no QRS energy in signal");

  // Learning phase over the first two seconds.
  const std::size_t learn = std::min(n, detail::to_samples(2.0, fs));
  double learn_max = 0.0, learn_mean = 0.0;
  for (std::size_t i = 0; i < learn; ++i) {
    learn_max = std::max(learn_max, energy[i]);
    learn_mean += energy[i];
  }
  learn_mean /= static_cast<double>(learn);
  double spk = 0.25 * learn_max;
  double npk = 0.5 * learn_mean;
  auto threshold1 = [&] { return npk + 0.25 * (spk - npk); };

  std::vector<std::size_t> qrs;
  std::vector<std::size_t> pending_noise;  // candidates since the last QRS, for search-back
  double rr_avg = 0.0;
  for (std::size_t c : cand) {
    const double e = energy[c];
    if (!qrs.empty() && rr_avg > 0.0 && !pending_noise.empty() &&
        static_cast<double>(c - qrs.back()) > p.searchback_factor * rr_avg) {
      std::size_t best = pending_noise.front();
      for (auto k : pending_noise)
        if (energy[k] > energy[best]) best = k;
      if (energy[best] > 0.5 * threshold1() && best - qrs.back() >= refractory) {
        spk = 0.25 * energy[best] + 0.75 * spk;
        qrs.push_back(best);
      }
      pending_noise.clear();
    }
    if (e > threshold1() && (qrs.empty() || c - qrs.back() >= refractory)) {
      if (!qrs.empty()) {
        const double rr = static_cast<double>(c - qrs.back());
        rr_avg = rr_avg > 0.0 ? 0.875 * rr_avg + 0.125 * rr : rr;
      }
      spk = 0.125 * e + 0.875 * spk;
      qrs.push_back(c);
      pending_noise.clear();
    } else {
      npk = 0.125 * e + 0.875 * npk;
      pending_noise.push_back(c);
    }
  }

  // Snap to the signal maximum and enforce spacing.
  const std::size_t radius = detail::to_samples(p.refine_radius, fs);
  std::vector<std::size_t> r;
  for (auto c : qrs) {
    const std::size_t lo = c >= radius ? c - radius : 0;
    const std::size_t hi = std::min(n - 1, c + radius);
    const std::size_t idx = detail::argmax_in(signal, lo, hi);
    if (!r.empty() && idx - r.back() < refractory) {
      if (signal[idx] > signal[r.back()]) r.back() = idx;
      continue;
    }
    if (r.empty() || idx > r.back()) r.push_back(idx);
  }

  const std::size_t p_begin = detail::to_samples(p.p_window_begin, fs);
  const std::size_t p_end = detail::to_samples(p.p_window_end, fs);
  const std::size_t t_begin = detail::to_samples(p.t_window_begin, fs);
  const std::size_t t_end = detail::to_samples(p.t_window_end, fs);
  for (std::size_t i = 0; i < r.size(); ++i) {
    const std::size_t ri = r[i];
    if (ri < p_end || ri + t_begin >= n) continue;
    const std::size_t prev_mid = i > 0 ? (r[i - 1] + ri) / 2 + 1 : 0;
    const std::size_t next_mid = i + 1 < r.size() ? (ri + r[i + 1]) / 2 : n - 1;
    std::size_t plo = std::max(ri >= p_begin ? ri - p_begin : 0, prev_mid);
    std::size_t phi = ri - p_end;
    if (plo > phi) plo = phi = std::max(prev_mid, ri - 1);
    std::size_t tlo = ri + t_begin;
    std::size_t thi = std::min({ri + t_end, next_mid, n - 1});
    if (tlo > thi) tlo = thi = std::min(ri + 1, next_mid);
    ann.r_indices.push_back(ri);
    ann.p_indices.push_back(detail::argmax_in(signal, plo, phi));
    ann.t_indices.push_back(detail::argmax_in(signal, tlo, thi));
  }

  if (ann.r_indices.size() < 3)
    throw Error(ErrorCode::NoBeatsFound, "only " + std::to_string(ann.r_indices.size()) + " R peaks detected");
  return ann;
}

}  // namespace ecgmi::dsp
