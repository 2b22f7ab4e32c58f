#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "ecgmi/error.hpp"
#include "ecgmi/label.hpp"
#include "ecgmi/peaks.hpp"

namespace ecgmi::dsp {

/// Fixed-length Lead-II window holding exactly two consecutive interior beats.
struct BeatSegment {
  std::vector<double> samples;
  std::string source_record;
  std::size_t start_index = 0;
  Label label = Label::Normal;
  NoiseCondition noise_condition = NoiseCondition::Filtered;
};

struct SegmentParams {
  double duration = 2.0;  // s
  double anchor = 0.250;  // s before the first R of the pair
  // Reject windows holding any R peak besides the pair. A 2 s window anchored 250 ms
  // before R_i reaches R_i+2 whenever the heart rate exceeds ~68.6 bpm.
  bool strict_two_beats = false;
};

struct SegmentSource {
  std::string record;
  Label label = Label::Normal;
  NoiseCondition noise_condition = NoiseCondition::Filtered;
};

struct Segmentation {
  std::vector<BeatSegment> segments;
  std::size_t dropped = 0;  // windows rejected by the beat-content rules
};

inline std::size_t segment_length(double fs, const SegmentParams& params = {}) {
  return static_cast<std::size_t>(std::llround(params.duration * fs));
}

/// One window per consecutive interior pair (R_i, R_i+1), advancing one beat at a time.
/// Windows start `anchor` before R_i and are zero-padded at the record tail. A window is
/// dropped (and counted) when it misses R_i+1 or reaches the record's first or last R peak,
/// or, with strict_two_beats, when it holds any third R peak.
inline Segmentation segment_beats(std::span<const double> signal, const PeakAnnotations& ann, double fs,
                                  const SegmentSource& source = {}, const SegmentParams& params = {}) {
  const auto& r = ann.r_indices;
  if (r.size() < 4)
    throw Error(ErrorCode::TooFewBeats, "need >= 4 R peaks, have " + std::to_string(r.size()));
  const std::size_t len = segment_length(fs, params);
  const auto anchor = static_cast<std::size_t>(std::llround(params.anchor * fs));

  Segmentation out;
  // 0-based pairs (i, i+1) with 1 <= i and i+1 <= N-2.
  for (std::size_t i = 1; i + 2 < r.size(); ++i) {
    const std::size_t start = r[i] >= anchor ? r[i] - anchor : 0;
    const std::size_t end = start + len;
    auto in_window = [&](std::size_t v) { return v >= start && v < end; };
    const auto inside = std::count_if(r.begin(), r.end(), in_window);
    const bool reaches_ends = in_window(r.front()) || in_window(r.back());
    if (!in_window(r[i + 1]) || reaches_ends || (params.strict_two_beats && inside != 2)) {
      ++out.dropped;
      continue;
    }
    BeatSegment seg;
    seg.samples.assign(len, 0.0);
    const std::size_t avail = start < signal.size() ? std::min(len, signal.size() - start) : 0;
    std::copy_n(signal.begin() + static_cast<std::ptrdiff_t>(start), avail, seg.samples.begin());
    seg.source_record = source.record;
    seg.start_index = start;
    seg.label = source.label;
    seg.noise_condition = source.noise_condition;
    out.segments.push_back(std::move(seg));
  }
  return out;
}

}  // namespace ecgmi::dsp
