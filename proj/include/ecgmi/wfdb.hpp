#pragma once

// WFDB record reader (format 16 only) for PTB-style .hea/.dat pairs.

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "ecgmi/binary_io.hpp"
#include "ecgmi/error.hpp"
#include "ecgmi/label.hpp"

namespace ecgmi::wfdb {

inline constexpr double kDefaultGain = 200.0;  // adu per mV when the header omits it

struct SignalSpec {
  std::string file_name;
  int storage_format = 16;
  double adc_gain = kDefaultGain;
  int adc_baseline = 0;
  std::string units = "mV";
  int adc_resolution = 16;
  int adc_zero = 0;
  int initial_value = 0;
  std::optional<std::int16_t> checksum;
  int block_size = 0;
  std::string lead_name;

  bool operator==(const SignalSpec&) const = default;
};

struct SignalHeader {
  std::string record_name;
  std::size_t n_signals = 0;
  double sampling_rate = 0.0;
  std::size_t n_samples = 0;
  std::vector<SignalSpec> signals;
  std::vector<std::string> comments;  // text of '#' lines, marker stripped and trimmed

  bool operator==(const SignalHeader&) const = default;
};

struct EcgRecord {
  SignalHeader header;
  std::vector<std::vector<double>> samples;  // [n_signals][n_samples], mV
  Label label = Label::Other;
};

namespace detail {

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

inline std::string lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

inline std::vector<std::string> split_ws(std::string_view line) {
  std::vector<std::string> out;
  std::istringstream in{std::string(line)};
  for (std::string tok; in >> tok;) out.push_back(tok);
  return out;
}

template <class T>
std::optional<T> parse_number(std::string_view s) {
  T value{};
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
  if (ec != std::errc{} || ptr != s.data() + s.size()) return std::nullopt;
  return value;
}

// Leading numeric prefix of a token such as "1000/0(0)" or "16+24".
inline std::string_view numeric_prefix(std::string_view s) {
  std::size_t n = 0;
  while (n < s.size() && (std::isdigit(static_cast<unsigned char>(s[n])) || s[n] == '.' || s[n] == '-' ||
                          s[n] == 'e' || s[n] == 'E' || (n == 0 && s[n] == '+')))
    ++n;
  return s.substr(0, n);
}

inline std::string format_number(double v) {
  std::ostringstream out;
  out.precision(17);
  out << v;
  return out.str();
}

}  // namespace detail

/// Parses a `.hea` header. Gain defaults to 200 adu/mV when absent or zero; baseline
/// defaults to the ADC zero (itself 0 when absent).
inline SignalHeader parse_header(std::string_view text) {
  SignalHeader h;
  std::vector<std::string> lines;
  {
    std::string buf(text);
    std::istringstream in(buf);
    for (std::string line; std::getline(in, line);) lines.push_back(line);
  }

  bool have_record_line = false;
  for (const auto& raw : lines) {
    auto line = detail::trim(raw);
    if (line.empty()) continue;
    if (line.front() == '#') {
      h.comments.emplace_back(detail::trim(line.substr(1)));
      continue;
    }
    auto tok = detail::split_ws(line);
    if (!have_record_line) {
      have_record_line = true;
      if (tok.size() < 2) throw Error(ErrorCode::MalformedHeader, "record line needs name and signal count");
      if (tok[0].find('/') != std::string::npos)
        throw Error(ErrorCode::UnsupportedFormat, "multi-segment records are not supported");
      h.record_name = tok[0];
      auto nsig = detail::parse_number<std::size_t>(tok[1]);
      if (!nsig || *nsig == 0) throw Error(ErrorCode::MalformedHeader, "bad signal count '" + tok[1] + "'");
      h.n_signals = *nsig;
      h.sampling_rate = 250.0;
      if (tok.size() > 2) {
        auto fs = detail::parse_number<double>(detail::numeric_prefix(tok[2]));
        if (!fs || !(*fs > 0.0)) throw Error(ErrorCode::MalformedHeader, "bad sampling rate '" + tok[2] + "'");
        h.sampling_rate = *fs;
      }
      if (tok.size() > 3) {
        auto ns = detail::parse_number<std::size_t>(tok[3]);
        if (!ns) throw Error(ErrorCode::MalformedHeader, "bad sample count '" + tok[3] + "'");
        h.n_samples = *ns;
      }
      continue;
    }

    if (tok.size() < 2) throw Error(ErrorCode::MalformedHeader, "signal line needs file and format");
    SignalSpec s;
    s.file_name = tok[0];
    auto fmt = detail::parse_number<int>(detail::numeric_prefix(tok[1]));
    if (!fmt) throw Error(ErrorCode::MalformedHeader, "bad storage format '" + tok[1] + "'");
    if (*fmt != 16 || tok[1] != "16")
      throw Error(ErrorCode::UnsupportedFormat, "storage format '" + tok[1] + "' (only 16 is supported)");
    s.storage_format = 16;

    std::optional<int> baseline;
    if (tok.size() > 2) {
      std::string_view g = tok[2];
      auto gain = detail::parse_number<double>(detail::numeric_prefix(g));
      if (!gain) throw Error(ErrorCode::MalformedHeader, "bad gain '" + tok[2] + "'");
      s.adc_gain = *gain > 0.0 ? *gain : kDefaultGain;
      if (auto open = g.find('('); open != std::string_view::npos) {
        auto close = g.find(')', open);
        if (close == std::string_view::npos) throw Error(ErrorCode::MalformedHeader, "unterminated baseline");
        baseline = detail::parse_number<int>(g.substr(open + 1, close - open - 1));
        if (!baseline) throw Error(ErrorCode::MalformedHeader, "bad baseline in '" + tok[2] + "'");
      }
      if (auto slash = g.find('/'); slash != std::string_view::npos) s.units = std::string(g.substr(slash + 1));
    }
    auto int_field = [&](std::size_t i, int& field) {
      if (tok.size() <= i) return;
      auto v = detail::parse_number<int>(tok[i]);
      if (!v) throw Error(ErrorCode::MalformedHeader, "bad integer field '" + tok[i] + "'");
      field = *v;
    };
    int_field(3, s.adc_resolution);
    int_field(4, s.adc_zero);
    s.initial_value = s.adc_zero;
    int_field(5, s.initial_value);
    if (tok.size() > 6) {
      int cs = 0;
      int_field(6, cs);
      s.checksum = static_cast<std::int16_t>(cs);
    }
    int_field(7, s.block_size);
    if (tok.size() > 8) {
      std::string desc;
      for (std::size_t i = 8; i < tok.size(); ++i) desc += (i > 8 ? " " : "") + tok[i];
      s.lead_name = desc;
    }
    s.adc_baseline = baseline.value_or(s.adc_zero);
    h.signals.push_back(std::move(s));
  }

  if (!have_record_line) throw Error(ErrorCode::MalformedHeader, "missing record line");
  if (h.signals.size() != h.n_signals)
    throw Error(ErrorCode::MalformedHeader, "record line declares " + std::to_string(h.n_signals) +
                                                " signals but " + std::to_string(h.signals.size()) + " are listed");
  return h;
}

/// Serializes a header in canonical form; parse_header(write_header(h)) == h.
inline std::string write_header(const SignalHeader& h) {
  std::ostringstream out;
  out << h.record_name << ' ' << h.n_signals << ' ' << detail::format_number(h.sampling_rate) << ' ' << h.n_samples
      << '\n';
  for (const auto& s : h.signals) {
    out << s.file_name << ' ' << s.storage_format << ' ' << detail::format_number(s.adc_gain) << '('
        << s.adc_baseline << ")/" << s.units << ' ' << s.adc_resolution << ' ' << s.adc_zero << ' '
        << s.initial_value;
    if (s.checksum) {
      out << ' ' << *s.checksum << ' ' << s.block_size;
      if (!s.lead_name.empty()) out << ' ' << s.lead_name;
    }
    out << '\n';
  }
  for (const auto& c : h.comments) out << "# " << c << '\n';
  return out.str();
}

/// 16-bit WFDB checksum: sum of the signal's adu values modulo 2^16.
inline std::int16_t checksum16(std::span<const std::int16_t> adu) {
  std::uint16_t sum = 0;
  for (auto v : adu) sum = static_cast<std::uint16_t>(sum + static_cast<std::uint16_t>(v));
  return static_cast<std::int16_t>(sum);
}

/// Decodes one format-16 file holding the given header signals, interleaved frame by frame.
/// Returns raw adu values per listed signal.
inline std::vector<std::vector<std::int16_t>> decode_format16(std::span<const std::uint8_t> bytes,
                                                              std::size_t n_channels, std::size_t n_samples) {
  const std::size_t needed = 2 * n_channels * n_samples;
  if (bytes.size() < needed)
    throw Error(ErrorCode::TruncatedData,
                "need " + std::to_string(needed) + " bytes, have " + std::to_string(bytes.size()));
  std::vector<std::vector<std::int16_t>> adu(n_channels, std::vector<std::int16_t>(n_samples));
  std::size_t pos = 0;
  for (std::size_t t = 0; t < n_samples; ++t) {
    for (std::size_t c = 0; c < n_channels; ++c, pos += 2) {
      auto lo = static_cast<std::uint16_t>(bytes[pos]);
      auto hi = static_cast<std::uint16_t>(bytes[pos + 1]);
      adu[c][t] = static_cast<std::int16_t>(static_cast<std::uint16_t>(lo | (hi << 8)));
    }
  }
  return adu;
}

inline double adu_to_mv(std::int16_t adu, const SignalSpec& s) {
  return (static_cast<double>(adu) - static_cast<double>(s.adc_baseline)) / s.adc_gain;
}

/// Reads a record whose signals all live in a single interleaved data file.
/// Bytes past the declared sample count are ignored. When `strict`, per-signal checksums
/// present in the header are verified.
inline EcgRecord read_signals(const SignalHeader& header, std::span<const std::uint8_t> bytes, bool strict = false) {
  auto adu = decode_format16(bytes, header.n_signals, header.n_samples);
  EcgRecord rec;
  rec.header = header;
  rec.samples.resize(header.n_signals);
  for (std::size_t c = 0; c < header.n_signals; ++c) {
    const auto& spec = header.signals[c];
    if (strict && spec.checksum && checksum16(adu[c]) != *spec.checksum)
      throw Error(ErrorCode::ChecksumMismatch, "signal " + std::to_string(c) + " (" + spec.lead_name + ")");
    rec.samples[c].resize(header.n_samples);
    for (std::size_t t = 0; t < header.n_samples; ++t) rec.samples[c][t] = adu_to_mv(adu[c][t], spec);
  }
  return rec;
}

/// Reads a record whose signals may be spread over several data files (PTB keeps the
/// Frank leads in a separate `.xyz` file). `load` maps a data file name to its bytes.
inline EcgRecord read_record(const SignalHeader& header,
                             const std::function<std::vector<std::uint8_t>(const std::string&)>& load,
                             bool strict = false) {
  std::map<std::string, std::vector<std::size_t>> by_file;
  std::vector<std::string> order;
  for (std::size_t c = 0; c < header.n_signals; ++c) {
    auto& group = by_file[header.signals[c].file_name];
    if (group.empty()) order.push_back(header.signals[c].file_name);
    group.push_back(c);
  }
  EcgRecord rec;
  rec.header = header;
  rec.samples.resize(header.n_signals);
  for (const auto& file : order) {
    const auto& channels = by_file[file];
    auto bytes = load(file);
    auto adu = decode_format16(bytes, channels.size(), header.n_samples);
    for (std::size_t k = 0; k < channels.size(); ++k) {
      const auto& spec = header.signals[channels[k]];
      if (strict && spec.checksum && checksum16(adu[k]) != *spec.checksum)
        throw Error(ErrorCode::ChecksumMismatch, "signal " + std::to_string(channels[k]) + " in " + file);
      auto& row = rec.samples[channels[k]];
      row.resize(header.n_samples);
      for (std::size_t t = 0; t < header.n_samples; ++t) row[t] = adu_to_mv(adu[k][t], spec);
    }
  }
  return rec;
}

/// Diagnosis from header comments: "myocardial infarction" -> MI, "healthy control" -> Normal.
inline Label extract_label(std::span<const std::string> comments) {
  bool normal = false;
  for (const auto& c : comments) {
    auto text = detail::lower(c);
    if (text.find("myocardial infarction") != std::string::npos) return Label::MI;
    if (text.find("healthy control") != std::string::npos) normal = true;
  }
  return normal ? Label::Normal : Label::Other;
}

inline std::size_t lead_index(const SignalHeader& header, std::string_view lead_name) {
  auto wanted = detail::lower(detail::trim(lead_name));
  for (std::size_t c = 0; c < header.signals.size(); ++c)
    if (detail::lower(detail::trim(header.signals[c].lead_name)) == wanted) return c;
  throw Error(ErrorCode::LeadNotFound, "lead '" + std::string(lead_name) + "' not in record " + header.record_name);
}

inline const std::vector<double>& select_lead(const EcgRecord& record, std::string_view lead_name) {
  return record.samples[lead_index(record.header, lead_name)];
}

/// Loads `<dir>/<name>.hea` and its data files, and labels the record from its comments.
inline EcgRecord load_record(const std::filesystem::path& header_path, bool strict = false) {
  auto header = parse_header(io::read_text_file(header_path.string()));
  auto dir = header_path.parent_path();
  auto rec = read_record(header, [&](const std::string& f) { return io::read_file((dir / f).string()); }, strict);
  rec.label = extract_label(rec.header.comments);
  return rec;
}

/// Encodes samples (mV) as format 16 with the header's gains and baselines; fills
/// checksums and initial values into the returned header.
inline std::vector<std::uint8_t> encode_format16(SignalHeader& header,
                                                 const std::vector<std::vector<double>>& samples_mv) {
  std::vector<std::uint8_t> out;
  out.reserve(2 * header.n_signals * header.n_samples);
  std::vector<std::vector<std::int16_t>> adu(header.n_signals, std::vector<std::int16_t>(header.n_samples));
  for (std::size_t c = 0; c < header.n_signals; ++c) {
    const auto& s = header.signals[c];
    for (std::size_t t = 0; t < header.n_samples; ++t) {
      double v = std::round(samples_mv[c][t] * s.adc_gain) + s.adc_baseline;
      v = std::clamp(v, -32768.0, 32767.0);
      adu[c][t] = static_cast<std::int16_t>(v);
    }
    header.signals[c].checksum = checksum16(adu[c]);
    header.signals[c].initial_value = header.n_samples ? adu[c][0] : 0;
  }
  for (std::size_t t = 0; t < header.n_samples; ++t)
    for (std::size_t c = 0; c < header.n_signals; ++c) {
      auto u = static_cast<std::uint16_t>(adu[c][t]);
      out.push_back(static_cast<std::uint8_t>(u & 0xff));
      out.push_back(static_cast<std::uint8_t>(u >> 8));
    }
  return out;
}

struct ManifestEntry {
  std::string record_name;
  Label label = Label::Other;
  std::size_t n_samples = 0;
};

/// One admitted record per line: `record_name<TAB>label<TAB>n_samples`.
inline std::string format_manifest(std::span<const ManifestEntry> entries) {
  std::string out;
  for (const auto& e : entries)
    out += e.record_name + '\t' + std::string(to_string(e.label)) + '\t' + std::to_string(e.n_samples) + '\n';
  return out;
}

inline bool admitted(Label label) { return label == Label::Normal || label == Label::MI; }

}  // namespace ecgmi::wfdb
