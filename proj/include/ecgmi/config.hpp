#pragma once

// key = value configuration. One setting per line, `#` starts a comment, keys and values
// are trimmed, values are unquoted scalars, flags are true/false.

#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "ecgmi/error.hpp"
#include "ecgmi/eval.hpp"
#include "ecgmi/pipeline.hpp"

namespace ecgmi::config {

/// Bad key or value; the CLI maps it to exit code 1.
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class Kind { String, Path, Flag, Integer, Real, Choice, Fraction };

struct KeySpec {
  std::string_view key;
  std::string_view default_value;
  Kind kind;
  std::string_view range;  // accepted values, shown in usage errors
  double lo = 0.0;
  double hi = 0.0;
  bool lo_open = false;
  bool hi_open = false;
};

inline constexpr double kInf = 1e300;

// clang-format off
inline const std::vector<KeySpec>& schema() {
  static const std::vector<KeySpec> keys = {
      {"seed", "42", Kind::Integer, "integer >= 0", 0, 1.8e19},
      {"threads", "0", Kind::Integer, "integer >= 0 (0 = auto)", 0, 4096},
      {"data", "", Kind::Path, "input path"},
      {"validation", "", Kind::Path, "image directory (optional)"},
      {"checkpoint", "", Kind::Path, "checkpoint file"},
      {"model_file", "", Kind::Path, "SVM model file"},
      {"strict_checksum", "false", Kind::Flag, "true|false"},
      {"lead", "ii", Kind::String, "lead name"},
      {"noise", "filtered", Kind::Choice, "filtered|raw"},
      {"filter_low_hz", "0.5", Kind::Real, "real > 0", 0, kInf, true},
      {"filter_high_hz", "40", Kind::Real, "real > 0", 0, kInf, true},
      {"filter_order", "2", Kind::Integer, "integer in [1, 8]", 1, 8},
      {"zero_phase", "true", Kind::Flag, "true|false"},
      {"segment_duration_s", "2", Kind::Real, "real > 0", 0, kInf, true},
      {"segment_anchor_s", "0.25", Kind::Real, "real >= 0", 0, kInf},
      {"strict_two_beats", "false", Kind::Flag, "true|false"},
      {"augment", "true", Kind::Flag, "true|false"},
      {"model", "mi2", Kind::Choice, "mi1|mi2"},
      {"split", "tenfold", Kind::Choice, "tenfold|holdout"},
      {"folds", "10", Kind::Integer, "integer >= 2", 2, 1e9},
      {"patient_level", "false", Kind::Flag, "true|false"},
      {"input_size", "128", Kind::Integer, "positive multiple of 8", 8, 4096},
      {"width_scale", "1", Kind::Fraction, "fraction n/d in (0, 1]"},
      {"dropout", "0.5", Kind::Real, "real in [0, 1)", 0, 1, false, true},
      {"learning_rate", "0.001", Kind::Real, "real > 0", 0, kInf, true},
      {"weight_decay", "0.0005", Kind::Real, "real >= 0", 0, kInf},
      {"momentum", "0.9", Kind::Real, "real in [0, 1)", 0, 1, false, true},
      {"epochs", "50", Kind::Integer, "integer >= 1", 1, 1e9},
      {"minibatch", "5", Kind::Integer, "integer >= 1", 1, 1e9},
      {"init_mean", "0", Kind::Real, "real", -kInf, kInf},
      {"init_std", "0.01", Kind::Real, "real > 0", 0, kInf, true},
      {"init_scheme", "gaussian", Kind::Choice, "gaussian|he"},
      {"decay_biases", "true", Kind::Flag, "true|false"},
      {"svm_q", "1.5", Kind::Real, "real in (1, 3)", 1, 3, true, true},
      {"svm_inv_sigma_sq", "0.5", Kind::Real, "real > 0", 0, kInf, true},
      {"svm_c", "1", Kind::Real, "real > 0", 0, kInf, true},
      {"svm_tolerance", "0.001", Kind::Real, "real > 0", 0, kInf, true},
      {"svm_max_passes", "10", Kind::Integer, "integer >= 1", 1, 1e9},
      {"svm_max_iterations", "100000", Kind::Integer, "integer >= 1", 1, 1e12},
      {"standardize_features", "false", Kind::Flag, "true|false"},
      {"synth_records_per_class", "4", Kind::Integer, "integer >= 1", 1, 1e6},
      {"synth_beats", "12", Kind::Integer, "integer >= 4", 4, 1e6},
      {"synth_min_hr", "50", Kind::Real, "real in [20, 250]", 20, 250},
      {"synth_max_hr", "100", Kind::Real, "real in [20, 250]", 20, 250},
      {"synth_max_noise", "0.05", Kind::Real, "real >= 0 (mV)", 0, kInf},
      {"synth_sampling_rate", "1000", Kind::Real, "real >= 250", 250, 1e6},
  };
  return keys;
}
// clang-format on

inline const KeySpec* find_key(std::string_view key) {
  for (const auto& k : schema())
    if (k.key == key) return &k;
  return nullptr;
}

inline std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

namespace detail {

inline bool parse_double(std::string_view s, double& out) {
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && p == s.data() + s.size();
}

inline bool parse_u64(std::string_view s, std::uint64_t& out) {
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && p == s.data() + s.size();
}

inline bool in_choices(std::string_view value, std::string_view choices) {
  while (!choices.empty()) {
    const auto bar = choices.find('|');
    if (choices.substr(0, bar) == value) return true;
    if (bar == std::string_view::npos) break;
    choices.remove_prefix(bar + 1);
  }
  return false;
}

}  // namespace detail

inline void check_value(const KeySpec& k, std::string_view v) {
  auto fail = [&] {
    throw UsageError("invalid value '" + std::string(v) + "' for key '" + std::string(k.key) + "': expected " +
                     std::string(k.range));
  };
  switch (k.kind) {
    case Kind::String:
      if (v.empty()) fail();
      break;
    case Kind::Path: break;
    case Kind::Flag:
      if (v != "true" && v != "false") fail();
      break;
    case Kind::Choice:
      if (!detail::in_choices(v, k.range)) fail();
      break;
    case Kind::Integer: {
      std::uint64_t n;
      if (!detail::parse_u64(v, n) || static_cast<double>(n) < k.lo || static_cast<double>(n) > k.hi) fail();
      break;
    }
    case Kind::Real: {
      double x;
      if (!detail::parse_double(v, x) || !std::isfinite(x)) fail();
      if (x < k.lo || x > k.hi || (k.lo_open && x == k.lo) || (k.hi_open && x == k.hi)) fail();
      break;
    }
    case Kind::Fraction: {
      const auto slash = v.find('/');
      std::uint64_t num, den = 1;
      if (!detail::parse_u64(v.substr(0, slash), num)) fail();
      if (slash != std::string_view::npos && !detail::parse_u64(v.substr(slash + 1), den)) fail();
      if (num == 0 || den == 0 || num > den) fail();
      break;
    }
  }
}

/// Effective settings: defaults, overlaid by a file, then by explicit overrides.
class Config {
 public:
  Config() {
    for (const auto& k : schema()) values_[std::string(k.key)] = std::string(k.default_value);
  }

  void set(std::string_view key, std::string_view value) {
    const auto* spec = find_key(key);
    if (!spec) throw UsageError("unknown configuration key '" + std::string(key) + "'");
    const auto v = trim(value);
    check_value(*spec, v);
    values_[std::string(key)] = std::string(v);
  }

  void merge_text(std::string_view text, std::string_view source = "config") {
    std::size_t line_no = 0;
    while (!text.empty()) {
      const auto nl = text.find('\n');
      auto line = text.substr(0, nl);
      text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
      ++line_no;
      if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
      line = trim(line);
      if (line.empty()) continue;
      const auto eq = line.find('=');
      if (eq == std::string_view::npos)
        throw UsageError(std::string(source) + ":" + std::to_string(line_no) + ": expected 'key = value'");
      set(trim(line.substr(0, eq)), line.substr(eq + 1));
    }
  }

  const std::string& get(std::string_view key) const {
    const auto it = values_.find(std::string(key));
    if (it == values_.end()) throw UsageError("unknown configuration key '" + std::string(key) + "'");
    return it->second;
  }
  bool flag(std::string_view key) const { return get(key) == "true"; }
  std::uint64_t integer(std::string_view key) const {
    std::uint64_t n = 0;
    detail::parse_u64(get(key), n);
    return n;
  }
  double real(std::string_view key) const {
    double x = 0.0;
    detail::parse_double(get(key), x);
    return x;
  }

  /// Every key in schema order, `key = value`.
  std::string dump() const {
    std::string out;
    for (const auto& k : schema()) out += std::string(k.key) + " = " + get(k.key) + "\n";
    return out;
  }

  // ---- typed views ----

  PreprocessConfig preprocess() const {
    PreprocessConfig p;
    p.lead = get("lead");
    p.noise = parse_noise_condition(get("noise"));
    p.filter = {real("filter_low_hz"), real("filter_high_hz"), static_cast<int>(integer("filter_order")),
                flag("zero_phase")};
    p.segment.duration = real("segment_duration_s");
    p.segment.anchor = real("segment_anchor_s");
    p.segment.strict_two_beats = flag("strict_two_beats");
    return p;
  }

  nn::Architecture architecture() const {
    nn::Architecture a;
    a.input_size = integer("input_size");
    const auto& w = get("width_scale");
    const auto slash = w.find('/');
    detail::parse_u64(std::string_view(w).substr(0, slash), a.width.num);
    a.width.den = 1;
    if (slash != std::string::npos) detail::parse_u64(std::string_view(w).substr(slash + 1), a.width.den);
    a.dropout_rate = real("dropout");
    if (a.input_size % 8 != 0) throw UsageError("invalid value for key 'input_size': expected multiple of 8");
    try {
      (void)nn::layer_specs(a);
    } catch (const Error& e) {
      throw UsageError(std::string("invalid value for key 'width_scale': ") + e.what());
    }
    return a;
  }

  nn::TrainConfig train() const {
    nn::TrainConfig t;
    t.learning_rate = real("learning_rate");
    t.weight_decay = real("weight_decay");
    t.momentum = real("momentum");
    t.epochs = integer("epochs");
    t.minibatch = integer("minibatch");
    t.init_mean = real("init_mean");
    t.init_std = real("init_std");
    t.init_scheme = get("init_scheme") == "he" ? nn::InitScheme::He : nn::InitScheme::Gaussian;
    t.decay_biases = flag("decay_biases");
    t.seed = integer("seed");
    return t;
  }

  svm::QGKernelParams kernel() const { return {real("svm_q"), real("svm_inv_sigma_sq")}; }

  svm::SmoConfig smo() const {
    return {real("svm_c"), real("svm_tolerance"), integer("svm_max_passes"), integer("svm_max_iterations"),
            integer("seed")};
  }

  eval::RunConfig run() const {
    return {architecture(), train(), kernel(), smo(), flag("standardize_features"), integer("threads")};
  }

  eval::ScenarioSpec scenario() const {
    eval::ScenarioSpec s;
    s.noise = parse_noise_condition(get("noise"));
    s.augmentation = flag("augment");
    s.model = get("model") == "mi1" ? eval::ModelKind::MI1 : eval::ModelKind::MI2;
    s.folds = integer("folds");
    s.split = get("split") == "holdout" ? eval::SplitMode::Holdout60_30_10 : eval::SplitMode::TenFold;
    s.patient_level = flag("patient_level");
    s.seed = integer("seed");
    return s;
  }

  SyntheticCorpusSpec synthetic() const {
    SyntheticCorpusSpec s;
    s.records_per_class = integer("synth_records_per_class");
    s.beats_per_record = integer("synth_beats");
    s.min_heart_rate = real("synth_min_hr");
    s.max_heart_rate = real("synth_max_hr");
    s.max_noise = real("synth_max_noise");
    s.sampling_rate = real("synth_sampling_rate");
    s.seed = integer("seed");
    if (s.min_heart_rate > s.max_heart_rate) throw UsageError("synth_min_hr must not exceed synth_max_hr");
    return s;
  }

 private:
  std::map<std::string, std::string> values_;
};

}  // namespace ecgmi::config
