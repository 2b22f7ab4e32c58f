#pragma once

// Segment -> 128x128 white-on-black trace.
//
// Amplitude: row(v) = round((vmax - v) / (vmax - vmin) * 127); a flat segment maps to row 64.
// Time: column(t) = floor(t * 128 / L). Each column is filled between its extreme rows and
// extended toward the previous column's span so the trace stays 8-connected.

#include <algorithm>
#include <cmath>
#include <span>
#include <string>

#include "ecgmi/error.hpp"
#include "ecgmi/image.hpp"
#include "ecgmi/segment.hpp"

namespace ecgmi {

inline EcgImage render_trace(std::span<const double> samples, std::size_t size = kImageSize) {
  const std::size_t len = samples.size();
  if (len < size)
    throw Error(ErrorCode::SegmentTooShort, "segment has " + std::to_string(len) + " samples, need >= " +
                                                std::to_string(size));
  const auto [lo_it, hi_it] = std::minmax_element(samples.begin(), samples.end());
  const double vmin = *lo_it, vmax = *hi_it;
  const double range = vmax - vmin;
  const double top = static_cast<double>(size - 1);

  auto row_of = [&](double v) -> long {
    if (!(range > 0.0)) return static_cast<long>(size / 2);
    return std::lround((vmax - v) / range * top);
  };

  std::vector<long> span_lo(size, static_cast<long>(size)), span_hi(size, -1);
  for (std::size_t t = 0; t < len; ++t) {
    const std::size_t col = t * size / len;
    const long r = row_of(samples[t]);
    span_lo[col] = std::min(span_lo[col], r);
    span_hi[col] = std::max(span_hi[col], r);
  }
  for (std::size_t c = 1; c < size; ++c) {
    if (span_lo[c] > span_hi[c - 1] + 1) span_lo[c] = span_hi[c - 1] + 1;
    if (span_hi[c] < span_lo[c - 1] - 1) span_hi[c] = span_lo[c - 1] - 1;
  }

  EcgImage img(size, size, 0);
  for (std::size_t c = 0; c < size; ++c)
    for (long r = span_lo[c]; r <= span_hi[c]; ++r) img.at(static_cast<std::size_t>(r), c) = 255;
  return img;
}

inline EcgImage render(const dsp::BeatSegment& segment, std::string provenance = {}) {
  EcgImage img = render_trace(segment.samples);
  img.label = segment.label;
  img.provenance = std::move(provenance);
  return img;
}

}  // namespace ecgmi
