#pragma once

// Record -> segments -> images, and the synthetic corpus used for desk-scale runs.

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "ecgmi/augment.hpp"
#include "ecgmi/filter.hpp"
#include "ecgmi/peaks.hpp"
#include "ecgmi/raster.hpp"
#include "ecgmi/segment.hpp"
#include "ecgmi/synthetic.hpp"
#include "ecgmi/wfdb.hpp"

namespace ecgmi {

struct PreprocessConfig {
  std::string lead = "ii";
  NoiseCondition noise = NoiseCondition::Filtered;
  dsp::FilterSpec filter{};
  dsp::SegmentParams segment{};
};

/// Lead selection, optional band-pass, peak detection and segmentation of one record.
inline dsp::Segmentation preprocess_record(const wfdb::EcgRecord& record, const PreprocessConfig& cfg) {
  const auto& lead = wfdb::select_lead(record, cfg.lead);
  const double fs = record.header.sampling_rate;
  std::vector<double> signal =
      cfg.noise == NoiseCondition::Filtered ? dsp::bandpass_filter(lead, fs, cfg.filter) : lead;
  const auto ann = dsp::detect_peaks(signal, fs);
  return dsp::segment_beats(signal, ann, fs, {record.header.record_name, record.label, cfg.noise}, cfg.segment);
}

inline std::string segment_id(const dsp::BeatSegment& s) {
  return s.source_record + "_" + std::to_string(s.start_index);
}

struct SyntheticCorpusSpec {
  std::size_t records_per_class = 4;
  std::size_t beats_per_record = 12;
  double min_heart_rate = 50.0;
  double max_heart_rate = 100.0;
  double max_noise = 0.05;  // mV; each record draws its amplitude in [0, max_noise]
  double sampling_rate = 1000.0;
  std::uint64_t seed = 7;
};

/// Per-record generator settings, drawn deterministically from the corpus seed.
/// Records alternate Normal, MI, Normal, MI, ...
inline std::vector<std::pair<std::string, synth::SyntheticSpec>> synthetic_corpus_plan(const SyntheticCorpusSpec& spec) {
  std::mt19937_64 rng(spec.seed);
  auto uniform = [&](double lo, double hi) { return lo + (hi - lo) * (static_cast<double>(rng() >> 11) * 0x1.0p-53); };
  std::vector<std::pair<std::string, synth::SyntheticSpec>> plan;
  for (std::size_t i = 0; i < 2 * spec.records_per_class; ++i) {
    synth::SyntheticSpec s;
    s.label = i % 2 == 0 ? Label::Normal : Label::MI;
    s.n_beats = spec.beats_per_record;
    s.heart_rate = uniform(spec.min_heart_rate, spec.max_heart_rate);
    s.noise_amplitude = uniform(0.0, spec.max_noise);
    s.sampling_rate = spec.sampling_rate;
    s.seed = rng();
    char name[32];
    std::snprintf(name, sizeof name, "syn%04zu_%s", i, s.label == Label::MI ? "mi" : "nl");
    plan.emplace_back(name, s);
  }
  return plan;
}

/// Images rendered from a synthetic corpus, at most `per_class` of each class, in
/// record order.
inline std::vector<EcgImage> synthetic_images(std::size_t per_class, NoiseCondition noise, std::uint64_t seed,
                                              double max_noise = 0.05) {
  SyntheticCorpusSpec spec;
  spec.seed = seed;
  spec.max_noise = max_noise;
  // 12 beats yield 7 to 9 usable windows per record depending on heart rate.
  spec.records_per_class = (per_class + 5) / 6 + 1;
  PreprocessConfig cfg;
  cfg.noise = noise;
  std::vector<EcgImage> out;
  std::size_t count[2] = {0, 0};
  for (const auto& [name, s] : synthetic_corpus_plan(spec)) {
    auto rec = synth::generate_synthetic(s, name).record;
    const int cls = class_index(rec.label);
    if (count[cls] >= per_class) continue;
    for (const auto& seg : preprocess_record(rec, cfg).segments) {
      if (count[cls] >= per_class) break;
      out.push_back(render(seg, segment_id(seg)));
      ++count[cls];
    }
  }
  if (count[0] < per_class || count[1] < per_class)
    throw Error(ErrorCode::TooFewItems, "synthetic corpus produced too few segments");
  return out;
}

/// Resamples pipeline images to a network input size (area averaging for integer factors).
inline std::vector<EcgImage> to_input_size(std::span<const EcgImage> images, std::size_t input_size) {
  std::vector<EcgImage> out;
  out.reserve(images.size());
  for (const auto& img : images) {
    if (img.height == input_size && img.width == input_size) {
      out.push_back(img);
    } else if (img.height % input_size == 0 && img.width == img.height) {
      out.push_back(augment::downsample_area(img, img.height / input_size));
    } else {
      out.push_back(augment::resize_bilinear(img, input_size, input_size));
    }
  }
  return out;
}

}  // namespace ecgmi
