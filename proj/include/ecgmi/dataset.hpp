#pragma once

// On-disk intermediate formats passed between pipeline stages.
//
//   record directory   WFDB .hea/.dat files, searched recursively; a record's name is
//                      its header path relative to the directory, without extension
//   segment dump       segments.tsv (segment_id, record, label, noise_condition) plus
//                      one `<segment_id>.f64` file of samples (f64 LE) per segment
//   image directory    images.tsv (file, label, provenance) plus one PGM per row
//   feature table      features.tsv: id, label, then one column per feature (%.17g)

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "ecgmi/binary_io.hpp"
#include "ecgmi/image.hpp"
#include "ecgmi/segment.hpp"
#include "ecgmi/wfdb.hpp"

namespace ecgmi::dataset {

namespace fs = std::filesystem;

inline std::vector<std::string_view> split_tabs(std::string_view line) {
  std::vector<std::string_view> out;
  while (true) {
    const auto tab = line.find('\t');
    out.push_back(line.substr(0, tab));
    if (tab == std::string_view::npos) break;
    line.remove_prefix(tab + 1);
  }
  return out;
}

/// Non-empty lines after the header row; the header must match `expected_header`.
inline std::vector<std::string_view> table_rows(std::string_view text, std::string_view expected_header,
                                                const std::string& path) {
  std::vector<std::string_view> rows;
  bool header = true;
  while (!text.empty()) {
    const auto nl = text.find('\n');
    auto line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (header) {
      if (line.substr(0, expected_header.size()) != expected_header)
        throw Error(ErrorCode::MalformedFile, path + ": unexpected header row");
      header = false;
      continue;
    }
    if (!line.empty()) rows.push_back(line);
  }
  if (header) throw Error(ErrorCode::MalformedFile, path + ": missing header row");
  return rows;
}

inline std::string format_g17(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline void require_directory(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw Error(ErrorCode::IoError, "'" + dir.string() + "' is not a directory");
}

// ---- record directories ---------------------------------------------------------------------

/// Header files under `dir`, sorted by relative path.
inline std::vector<fs::path> find_headers(const fs::path& dir) {
  require_directory(dir);
  std::vector<fs::path> out;
  for (const auto& e : fs::recursive_directory_iterator(dir))
    if (e.is_regular_file() && e.path().extension() == ".hea") out.push_back(e.path());
  std::sort(out.begin(), out.end());
  return out;
}

inline std::string record_name(const fs::path& dir, const fs::path& header) {
  return fs::relative(header, dir).replace_extension().generic_string();
}

/// Writes `<dir>/<name>.hea` and its format-16 data file.
inline void write_record(const fs::path& dir, wfdb::EcgRecord record) {
  auto bytes = wfdb::encode_format16(record.header, record.samples);
  io::write_file((dir / (record.header.record_name + ".dat")).string(), bytes);
  io::write_text_file((dir / (record.header.record_name + ".hea")).string(), wfdb::write_header(record.header));
}

// ---- segment dumps ----------------------------------------------------------------------------

inline constexpr std::string_view kSegmentHeader = "segment_id\trecord\tlabel\tnoise_condition";

inline std::string segment_file_name(std::string_view id) {
  std::string s(id);
  std::replace(s.begin(), s.end(), '/', '-');
  return s + ".f64";
}

/// Segment ids must have the form `<record>_<start index>`.
inline void write_segments(const fs::path& dir, std::span<const dsp::BeatSegment> segments,
                           std::span<const std::string> ids) {
  std::string index(kSegmentHeader);
  index += '\n';
  for (std::size_t i = 0; i < segments.size(); ++i) {
    const auto& s = segments[i];
    index += ids[i] + '\t' + s.source_record + '\t' + std::string(to_string(s.label)) + '\t' +
             std::string(to_string(s.noise_condition)) + '\n';
    std::vector<std::uint8_t> samples;
    io::put_f64s(samples, s.samples);
    io::write_file((dir / segment_file_name(ids[i])).string(), samples);
  }
  io::write_text_file((dir / "segments.tsv").string(), index);
}

struct StoredSegment {
  std::string id;
  dsp::BeatSegment segment;
};

inline std::vector<StoredSegment> read_segments(const fs::path& dir) {
  require_directory(dir);
  const auto index_path = (dir / "segments.tsv").string();
  const auto text = io::read_text_file(index_path);
  std::vector<StoredSegment> out;
  for (auto row : table_rows(text, kSegmentHeader, index_path)) {
    const auto f = split_tabs(row);
    if (f.size() != 4) throw Error(ErrorCode::MalformedFile, index_path + ": expected 4 columns");
    StoredSegment s;
    s.id = std::string(f[0]);
    s.segment.source_record = std::string(f[1]);
    const auto start = f[0].substr(f[0].rfind('_') + 1);
    auto [p, ec] = std::from_chars(start.data(), start.data() + start.size(), s.segment.start_index);
    if (ec != std::errc() || p != start.data() + start.size())
      throw Error(ErrorCode::MalformedFile, index_path + ": segment id '" + s.id + "' lacks a start index");
    s.segment.label = parse_label(f[2]);
    s.segment.noise_condition = parse_noise_condition(f[3]);
    const auto bytes = io::read_file((dir / segment_file_name(s.id)).string());
    if (bytes.size() % 8 != 0) throw Error(ErrorCode::MalformedFile, s.id + ": size is not a multiple of 8");
    io::Reader in(bytes);
    s.segment.samples = in.f64s(bytes.size() / 8);
    out.push_back(std::move(s));
  }
  return out;
}

// ---- image directories ------------------------------------------------------------------------

inline constexpr std::string_view kImageHeader = "file\tlabel\tprovenance";

inline std::string image_file_name(std::string_view provenance) {
  std::string s(provenance);
  std::replace(s.begin(), s.end(), '/', '-');
  return s + ".pgm";
}

inline void write_images(const fs::path& dir, std::span<const EcgImage> images) {
  std::string index(kImageHeader);
  index += '\n';
  for (const auto& img : images) {
    const auto file = image_file_name(img.provenance);
    pgm::write(img, (dir / file).string());
    index += file + '\t' + std::string(to_string(img.label)) + '\t' + img.provenance + '\n';
  }
  io::write_text_file((dir / "images.tsv").string(), index);
}

inline bool is_image_directory(const fs::path& dir) { return fs::is_regular_file(dir / "images.tsv"); }

inline std::vector<EcgImage> read_images(const fs::path& dir) {
  require_directory(dir);
  const auto index_path = (dir / "images.tsv").string();
  const auto text = io::read_text_file(index_path);
  std::vector<EcgImage> out;
  for (auto row : table_rows(text, kImageHeader, index_path)) {
    const auto f = split_tabs(row);
    if (f.size() != 3) throw Error(ErrorCode::MalformedFile, index_path + ": expected 3 columns");
    auto img = pgm::read((dir / std::string(f[0])).string());
    img.label = parse_label(f[1]);
    img.provenance = std::string(f[2]);
    out.push_back(std::move(img));
  }
  return out;
}

// ---- feature tables ---------------------------------------------------------------------------

struct FeatureRow {
  std::string id;
  Label label = Label::Normal;
  std::vector<double> values;
};

inline std::string format_features(std::span<const FeatureRow> rows) {
  std::string out = "id\tlabel";
  const std::size_t d = rows.empty() ? 0 : rows.front().values.size();
  for (std::size_t j = 0; j < d; ++j) out += "\tf" + std::to_string(j);
  out += '\n';
  for (const auto& r : rows) {
    out += r.id + '\t' + std::string(to_string(r.label));
    for (double v : r.values) out += '\t' + format_g17(v);
    out += '\n';
  }
  return out;
}

inline std::vector<FeatureRow> parse_features(std::string_view text, const std::string& path) {
  std::vector<FeatureRow> out;
  for (auto row : table_rows(text, "id\tlabel", path)) {
    const auto f = split_tabs(row);
    if (f.size() < 3) throw Error(ErrorCode::MalformedFile, path + ": feature row without values");
    FeatureRow r{std::string(f[0]), parse_label(f[1]), {}};
    for (std::size_t j = 2; j < f.size(); ++j) {
      double v;
      auto [p, ec] = std::from_chars(f[j].data(), f[j].data() + f[j].size(), v);
      if (ec != std::errc() || p != f[j].data() + f[j].size())
        throw Error(ErrorCode::MalformedFile, path + ": bad feature value '" + std::string(f[j]) + "'");
      r.values.push_back(v);
    }
    if (!out.empty() && r.values.size() != out.front().values.size())
      throw Error(ErrorCode::DimensionMismatch, path + ": rows of unequal length");
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace ecgmi::dataset
