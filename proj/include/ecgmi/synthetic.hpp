#pragma once

// Deterministic synthetic Lead-II ECG with known R-peak positions.
//
// Each beat is a sum of Gaussian bumps placed relative to its R peak. The morphology
// tables below are frozen; downstream fixtures depend on them.
//
//   wave      Normal (offset s, amp mV, width s)     MI
//   P         -0.200  0.15  0.025                    -0.200  0.15  0.025
//   Q         -0.035 -0.10  0.010                    -0.045 -0.45  0.020
//   R          0.000  1.20  0.012                     0.000  1.00  0.012
//   S         +0.035 -0.25  0.010                    +0.035 -0.10  0.010
//   ST            -                                  +0.150  0.30  0.060
//   T         +0.280  0.30  0.045                    +0.300  0.45  0.050
//
// Beat k (0-based) has its R peak at round((k + 0.5) * period), period = fs * 60 / bpm,
// and the record spans n_beats periods. Noise is i.i.d. uniform in [-a, a].

#include <array>
#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "ecgmi/error.hpp"
#include "ecgmi/label.hpp"
#include "ecgmi/wfdb.hpp"

namespace ecgmi::synth {

struct SyntheticSpec {
  std::size_t n_beats = 10;
  double heart_rate = 60.0;      // bpm
  double sampling_rate = 1000.0; // Hz
  double noise_amplitude = 0.0;  // mV
  Label label = Label::Normal;
  std::uint64_t seed = 1;
};

struct Bump {
  double offset;  // seconds relative to R
  double amplitude;
  double width;
};

inline constexpr std::array<Bump, 5> kNormalBeat{{
    {-0.200, 0.15, 0.025},
    {-0.035, -0.10, 0.010},
    {0.000, 1.20, 0.012},
    {0.035, -0.25, 0.010},
    {0.280, 0.30, 0.045},
}};

inline constexpr std::array<Bump, 6> kMiBeat{{
    {-0.200, 0.15, 0.025},
    {-0.045, -0.45, 0.020},
    {0.000, 1.00, 0.012},
    {0.035, -0.10, 0.010},
    {0.150, 0.30, 0.060},
    {0.300, 0.45, 0.050},
}};

struct SyntheticRecord {
  wfdb::EcgRecord record;
  std::vector<std::size_t> r_peaks;
};

inline void validate(const SyntheticSpec& spec) {
  if (spec.n_beats < 1) throw Error(ErrorCode::InvalidArgument, "n_beats must be >= 1");
  if (!(spec.heart_rate >= 30.0 && spec.heart_rate <= 220.0))
    throw Error(ErrorCode::InvalidArgument, "heart_rate must lie in [30, 220] bpm");
  if (!(spec.sampling_rate > 0.0)) throw Error(ErrorCode::InvalidArgument, "sampling_rate must be positive");
  if (!(spec.noise_amplitude >= 0.0)) throw Error(ErrorCode::InvalidArgument, "noise_amplitude must be >= 0");
  if (spec.label != Label::Normal && spec.label != Label::MI)
    throw Error(ErrorCode::InvalidArgument, "synthetic class must be Normal or MI");
}

/// Noise-free waveform and exact R indices.
inline std::vector<double> clean_waveform(const SyntheticSpec& spec, std::vector<std::size_t>& r_peaks) {
  validate(spec);
  const double fs = spec.sampling_rate;
  const double period = fs * 60.0 / spec.heart_rate;
  const auto n = static_cast<std::size_t>(std::llround(period * static_cast<double>(spec.n_beats)));
  std::vector<double> x(n, 0.0);
  r_peaks.clear();

  auto add_beat = [&](double r, auto const& bumps) {
    for (const auto& b : bumps) {
      const double centre = r + b.offset * fs;
      const double sigma = b.width * fs;
      const auto lo = static_cast<long long>(std::floor(centre - 6.0 * sigma));
      const auto hi = static_cast<long long>(std::ceil(centre + 6.0 * sigma));
      for (long long t = std::max(0LL, lo); t <= hi && t < static_cast<long long>(n); ++t) {
        const double d = (static_cast<double>(t) - centre) / sigma;
        x[static_cast<std::size_t>(t)] += b.amplitude * std::exp(-0.5 * d * d);
      }
    }
  };

  for (std::size_t k = 0; k < spec.n_beats; ++k) {
    const auto r = static_cast<std::size_t>(std::llround((static_cast<double>(k) + 0.5) * period));
    r_peaks.push_back(r);
    if (spec.label == Label::MI)
      add_beat(static_cast<double>(r), kMiBeat);
    else
      add_beat(static_cast<double>(r), kNormalBeat);
  }
  return x;
}

/// Single-lead ("ii") record in mV with exact ground-truth R peaks.
inline SyntheticRecord generate_synthetic(const SyntheticSpec& spec, const std::string& record_name = "synth") {
  SyntheticRecord out;
  auto x = clean_waveform(spec, out.r_peaks);
  if (spec.noise_amplitude > 0.0) {
    std::mt19937_64 rng(spec.seed);
    for (auto& v : x) {
      // uniform in [-a, a] from 53 random bits
      const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
      v += spec.noise_amplitude * (2.0 * u - 1.0);
    }
  }

  auto& h = out.record.header;
  h.record_name = record_name;
  h.n_signals = 1;
  h.sampling_rate = spec.sampling_rate;
  h.n_samples = x.size();
  wfdb::SignalSpec s;
  s.file_name = record_name + ".dat";
  s.adc_gain = 2000.0;
  s.adc_resolution = 16;
  s.checksum = 0;
  s.lead_name = "ii";
  h.signals.push_back(s);
  h.comments.push_back(std::string("Reason for admission: ") +
                       (spec.label == Label::MI ? "Myocardial infarction" : "Healthy control"));
  out.record.samples.push_back(std::move(x));
  out.record.label = spec.label;
  return out;
}

}  // namespace ecgmi::synth
