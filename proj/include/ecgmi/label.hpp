#pragma once

#include <string>
#include <string_view>

#include "ecgmi/error.hpp"

namespace ecgmi {

/// Diagnosis class. Only Normal and MI enter the pipeline; Other is dropped at ingest.
enum class Label { Normal = 0, MI = 1, Other = 2 };

/// Preprocessing condition of a segment: raw ("with noise") or band-passed ("without noise").
enum class NoiseCondition { Raw, Filtered };

constexpr std::string_view to_string(Label label) {
  switch (label) {
    case Label::Normal: return "normal";
    case Label::MI: return "mi";
    case Label::Other: return "other";
  }
  return "other";
}

constexpr std::string_view to_string(NoiseCondition c) {
  return c == NoiseCondition::Raw ? "raw" : "filtered";
}

inline Label parse_label(std::string_view s) {
  if (s == "normal") return Label::Normal;
  if (s == "mi") return Label::MI;
  if (s == "other") return Label::Other;
  throw Error(ErrorCode::InvalidArgument, "unknown label '" + std::string(s) + "'");
}

inline NoiseCondition parse_noise_condition(std::string_view s) {
  if (s == "raw") return NoiseCondition::Raw;
  if (s == "filtered") return NoiseCondition::Filtered;
  throw Error(ErrorCode::InvalidArgument, "unknown noise condition '" + std::string(s) + "'");
}

/// Class index used by the network and the metrics: Normal -> 0, MI -> 1.
inline int class_index(Label label) {
  if (label == Label::Other) throw Error(ErrorCode::InvalidArgument, "label Other has no class index");
  return static_cast<int>(label);
}

inline Label label_from_index(int index) { return index == 1 ? Label::MI : Label::Normal; }

}  // namespace ecgmi
