#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "ecgmi/filter.hpp"
#include "ecgmi/peaks.hpp"
#include "ecgmi/pipeline.hpp"
#include "ecgmi/segment.hpp"
#include "ecgmi/synthetic.hpp"

using namespace ecgmi;
using namespace ecgmi::dsp;

namespace {

std::vector<double> sine(double freq, double fs, std::size_t n) {
  std::vector<double> x(n);
  for (std::size_t i = 0; i < n; ++i) x[i] = std::sin(2.0 * std::numbers::pi * freq * static_cast<double>(i) / fs);
  return x;
}

// Peak absolute value over [lo, hi).
double peak(const std::vector<double>& x, std::size_t lo, std::size_t hi) {
  double m = 0.0;
  for (std::size_t i = lo; i < hi; ++i) m = std::max(m, std::abs(x[i]));
  return m;
}

std::vector<double> random_signal(std::mt19937_64& rng, std::size_t n) {
  std::normal_distribution<double> nd;
  std::vector<double> x(n);
  for (auto& v : x) v = nd(rng);
  return x;
}

synth::SyntheticRecord synthetic(std::size_t beats, double hr, double noise, std::uint64_t seed,
                                 Label label = Label::Normal) {
  synth::SyntheticSpec s;
  s.n_beats = beats;
  s.heart_rate = hr;
  s.noise_amplitude = noise;
  s.seed = seed;
  s.label = label;
  return synth::generate_synthetic(s);
}

PeakAnnotations evenly_spaced(std::size_t n_peaks, std::size_t first, std::size_t gap) {
  PeakAnnotations a;
  for (std::size_t k = 0; k < n_peaks; ++k) a.r_indices.push_back(first + k * gap);
  return a;
}

}  // namespace

// ---- filter -------------------------------------------------------------------------------

TEST(Filter, DesignedResponse) {
  const auto sos = design_bandpass({}, 1000.0);
  EXPECT_EQ(sos.size(), 2u);
  EXPECT_LT(std::abs(response(sos, 0.0, 1000.0)), 1e-12);
  const double h10 = std::abs(response(sos, 10.0, 1000.0));
  EXPECT_GE(h10 * h10, 0.98);
  EXPECT_NEAR(std::abs(response(sos, 40.0, 1000.0)), std::sqrt(0.5), 1e-3);
  EXPECT_NEAR(std::abs(response(sos, 0.5, 1000.0)), std::sqrt(0.5), 1e-3);
  EXPECT_LT(std::abs(response(sos, 500.0, 1000.0)), 1e-12);
}

TEST(Filter, ConstantSignalRejected) {
  std::vector<double> x(10000, 1.0);
  const auto y = bandpass_filter(x, 1000.0, {});
  ASSERT_EQ(y.size(), x.size());
  EXPECT_LT(peak(y, 2000, 8000), 1e-3);
}

TEST(Filter, TenHertzZeroPhase) {
  const auto x = sine(10.0, 1000.0, 10000);
  const auto y = bandpass_filter(x, 1000.0, {});
  const double amp = peak(y, 3000, 7000);
  EXPECT_GE(amp, 0.98);
  EXPECT_LE(amp, 1.0);
  // zero lag: peaks line up with the input's peaks
  for (std::size_t i = 3025; i < 7000; i += 100) EXPECT_NEAR(y[i], x[i] * amp, 1e-3);
}

TEST(Filter, FortyHertzSinglePass) {
  const auto x = sine(40.0, 1000.0, 10000);
  const auto y = bandpass_filter(x, 1000.0, {0.5, 40.0, 2, false});
  EXPECT_NEAR(peak(y, 5000, 9000), 0.7071, 0.02);
}

TEST(Filter, Linearity) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 5; ++trial) {
    const auto x = random_signal(rng, 3000), y = random_signal(rng, 3000);
    const double a = 1.7, b = -0.3;
    std::vector<double> mix(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) mix[i] = a * x[i] + b * y[i];
    const auto fx = bandpass_filter(x, 1000.0, {}), fy = bandpass_filter(y, 1000.0, {});
    const auto fm = bandpass_filter(mix, 1000.0, {});
    double scale = 0.0;
    for (double v : fm) scale = std::max(scale, std::abs(v));
    for (std::size_t i = 0; i < x.size(); ++i) EXPECT_NEAR(fm[i], a * fx[i] + b * fy[i], 1e-9 * scale);
  }
}

TEST(Filter, ZeroPhaseTimeReversalSymmetry) {
  std::mt19937_64 rng(6);
  for (int trial = 0; trial < 5; ++trial) {
    const auto x = random_signal(rng, 2500);
    std::vector<double> rx(x.rbegin(), x.rend());
    const auto fx = bandpass_filter(x, 1000.0, {});
    auto frx = bandpass_filter(rx, 1000.0, {});
    std::reverse(frx.begin(), frx.end());
    for (std::size_t i = 0; i < x.size(); ++i) EXPECT_NEAR(fx[i], frx[i], 1e-9);
  }
}

TEST(Filter, Errors) {
  std::vector<double> x(100, 0.0);
  auto code = [&](FilterSpec s, std::size_t n, double fs) {
    try {
      bandpass_filter(std::span(x).first(n), fs, s);
    } catch (const Error& e) {
      return e.code();
    }
    return ErrorCode::IoError;
  };
  EXPECT_EQ(code({0.5, 600.0, 2, true}, 100, 1000.0), ErrorCode::InvalidCutoff);
  EXPECT_EQ(code({40.0, 0.5, 2, true}, 100, 1000.0), ErrorCode::InvalidCutoff);
  EXPECT_EQ(code({0.0, 40.0, 2, true}, 100, 1000.0), ErrorCode::InvalidCutoff);
  EXPECT_EQ(code({0.5, 40.0, 2, true}, 6, 1000.0), ErrorCode::SignalTooShort);
  EXPECT_NO_THROW(bandpass_filter(std::span(x).first(7), 1000.0, {}));
}

TEST(Filter, HigherOrderStillButterworth) {
  for (int order = 1; order <= 4; ++order) {
    const auto sos = design_bandpass({0.5, 40.0, order, false}, 1000.0);
    EXPECT_EQ(static_cast<int>(sos.size()), order);
    EXPECT_NEAR(std::abs(response(sos, 40.0, 1000.0)), std::sqrt(0.5), 2e-3) << order;
    EXPECT_NEAR(std::abs(response(sos, std::sqrt(0.5 * 40.0), 1000.0)), 1.0, 1e-6) << order;
  }
}

// ---- peaks --------------------------------------------------------------------------------

TEST(Peaks, CleanSyntheticEightBeats) {
  const auto rec = synthetic(8, 60.0, 0.0, 1);
  const auto ann = detect_peaks(rec.record.samples[0], 1000.0);
  ASSERT_EQ(ann.r_indices.size(), 8u);
  for (std::size_t k = 0; k < 8; ++k)
    EXPECT_LE(std::abs(static_cast<long>(ann.r_indices[k]) - static_cast<long>(rec.r_peaks[k])), 10);
}

TEST(Peaks, ZeroSignal) {
  std::vector<double> x(10000, 0.0);
  try {
    detect_peaks(x, 1000.0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::NoBeatsFound);
  }
}

TEST(Peaks, NoisyTwentyBeats) {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const auto rec = synthetic(20, 75.0, 0.05, seed, seed % 2 ? Label::MI : Label::Normal);
    const auto ann = detect_peaks(rec.record.samples[0], 1000.0);
    std::size_t matched = 0;
    for (auto truth : rec.r_peaks)
      matched += std::any_of(ann.r_indices.begin(), ann.r_indices.end(), [&](std::size_t d) {
        return std::abs(static_cast<long>(d) - static_cast<long>(truth)) <= 20;
      });
    EXPECT_GE(matched, 19u);
    for (auto d : ann.r_indices) {
      const bool near_truth = std::any_of(rec.r_peaks.begin(), rec.r_peaks.end(), [&](std::size_t t) {
        return std::abs(static_cast<long>(d) - static_cast<long>(t)) <= 50;
      });
      EXPECT_TRUE(near_truth) << "false positive at " << d;
    }
  }
}

TEST(Peaks, AnnotationInvariants) {
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    const auto rec = synthetic(15, 50.0 + 7.0 * static_cast<double>(seed), 0.03, seed);
    const auto& x = rec.record.samples[0];
    const auto ann = detect_peaks(x, 1000.0);
    ASSERT_EQ(ann.p_indices.size(), ann.r_indices.size());
    ASSERT_EQ(ann.t_indices.size(), ann.r_indices.size());
    for (std::size_t i = 0; i < ann.r_indices.size(); ++i) {
      EXPECT_LT(ann.p_indices[i], ann.r_indices[i]);
      EXPECT_GT(ann.t_indices[i], ann.r_indices[i]);
      EXPECT_LT(ann.t_indices[i], x.size());
      if (i > 0) {
        EXPECT_LT(ann.r_indices[i - 1], ann.r_indices[i]);
        EXPECT_LT(ann.p_indices[i - 1], ann.p_indices[i]);
        EXPECT_LT(ann.t_indices[i - 1], ann.t_indices[i]);
      }
    }
  }
}

TEST(Peaks, AmplitudeScaleInvariance) {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const auto rec = synthetic(12, 70.0, 0.05, seed, Label::MI);
    const auto base = detect_peaks(rec.record.samples[0], 1000.0);
    for (double k : {0.01, 0.5, 3.0, 250.0}) {
      auto x = rec.record.samples[0];
      for (auto& v : x) v *= k;
      EXPECT_EQ(detect_peaks(x, 1000.0).r_indices, base.r_indices) << "k = " << k;
    }
  }
}

TEST(Peaks, Preconditions) {
  std::vector<double> x(1000, 0.0);
  EXPECT_THROW(detect_peaks(x, 1000.0), Error);  // shorter than 2 s
  std::vector<double> y(600, 0.0);
  EXPECT_THROW(detect_peaks(y, 200.0), Error);  // fs below 250 Hz
}

// ---- segmentation -------------------------------------------------------------------------

TEST(Segment, FourPeaksGiveOneSegment) {
  std::vector<double> x(4000, 0.5);
  const auto seg = segment_beats(x, evenly_spaced(4, 500, 1000), 1000.0);
  ASSERT_EQ(seg.segments.size(), 1u);
  EXPECT_EQ(seg.segments[0].start_index, 1250u);
  EXPECT_EQ(seg.segments[0].samples.size(), 2000u);
}

TEST(Segment, InteriorPairCount) {
  for (std::size_t n = 4; n <= 8; ++n) {
    std::vector<double> x(n * 1000, 0.0);
    const auto seg = segment_beats(x, evenly_spaced(n, 500, 1000), 1000.0);
    EXPECT_EQ(seg.segments.size(), n - 3) << n;
    EXPECT_EQ(seg.dropped, 0u);
  }
}

TEST(Segment, TailZeroPadded) {
  // Pair window runs past the end of the signal.
  std::vector<double> x(2900, 1.0);
  PeakAnnotations a;
  a.r_indices = {100, 700, 1300, 1900, 4000};
  const auto seg = segment_beats(x, a, 1000.0);
  ASSERT_FALSE(seg.segments.empty());
  const auto& last = seg.segments.back();
  EXPECT_EQ(last.samples.size(), 2000u);
  EXPECT_EQ(last.start_index, 1050u);
  EXPECT_EQ(last.samples[2900 - 1050 - 1], 1.0);
  EXPECT_EQ(last.samples[2900 - 1050], 0.0);
  EXPECT_EQ(last.samples.back(), 0.0);
}

TEST(Segment, TooFewBeats) {
  std::vector<double> x(4000, 0.0);
  try {
    segment_beats(x, evenly_spaced(3, 500, 1000), 1000.0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::TooFewBeats);
  }
}

TEST(Segment, WindowContentInvariants) {
  // Every emitted window has fixed length, holds R_i and R_i+1, and never the first
  // or last beat; the strict rule additionally allows no third beat.
  for (double hr : {45.0, 60.0, 68.0, 75.0, 90.0, 120.0}) {
    const auto rec = synthetic(14, hr, 0.0, 1);
    PeakAnnotations a;
    a.r_indices = rec.r_peaks;
    for (bool strict : {false, true}) {
      SegmentParams params;
      params.strict_two_beats = strict;
      const auto seg = segment_beats(rec.record.samples[0], a, 1000.0, {}, params);
      EXPECT_EQ(seg.segments.size() + seg.dropped, a.r_indices.size() - 3);
      for (const auto& s : seg.segments) {
        EXPECT_EQ(s.samples.size(), 2000u);
        const auto in = [&](std::size_t r) { return r >= s.start_index && r < s.start_index + 2000; };
        const auto count = std::count_if(a.r_indices.begin(), a.r_indices.end(), in);
        EXPECT_GE(count, 2);
        if (strict) EXPECT_EQ(count, 2);
        EXPECT_FALSE(in(a.r_indices.front()));
        EXPECT_FALSE(in(a.r_indices.back()));
      }
    }
  }
}

TEST(Segment, StrictRuleThreshold) {
  // The third R enters a 2 s window anchored 250 ms early once 2 RR < 1.75 s.
  auto count = [](double hr, bool strict) {
    const auto rec = synthetic(14, hr, 0.0, 1);
    PeakAnnotations a;
    a.r_indices = rec.r_peaks;
    SegmentParams params;
    params.strict_two_beats = strict;
    return segment_beats(rec.record.samples[0], a, 1000.0, {}, params).segments.size();
  };
  EXPECT_EQ(count(68.0, true), 11u);
  EXPECT_EQ(count(69.0, true), 0u);
  EXPECT_GT(count(69.0, false), 0u);
}

TEST(Segment, SourceFieldsPropagate) {
  std::vector<double> x(6000, 0.0);
  const auto seg = segment_beats(x, evenly_spaced(6, 500, 1000), 1000.0, {"rec7", Label::MI, NoiseCondition::Raw});
  for (const auto& s : seg.segments) {
    EXPECT_EQ(s.source_record, "rec7");
    EXPECT_EQ(s.label, Label::MI);
    EXPECT_EQ(s.noise_condition, NoiseCondition::Raw);
  }
}

TEST(Pipeline, PreprocessSyntheticRecord) {
  const auto rec = synthetic(12, 60.0, 0.02, 4, Label::MI);
  for (auto noise : {NoiseCondition::Raw, NoiseCondition::Filtered}) {
    PreprocessConfig cfg;
    cfg.noise = noise;
    const auto seg = preprocess_record(rec.record, cfg);
    EXPECT_EQ(seg.segments.size(), 9u);
    for (const auto& s : seg.segments) {
      EXPECT_EQ(s.label, Label::MI);
      EXPECT_EQ(s.noise_condition, noise);
    }
  }
}
