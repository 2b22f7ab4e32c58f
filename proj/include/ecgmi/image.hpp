#pragma once

#include <cctype>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "ecgmi/binary_io.hpp"
#include "ecgmi/error.hpp"
#include "ecgmi/label.hpp"

namespace ecgmi {

inline constexpr std::size_t kImageSize = 128;

/// Grayscale raster, row-major, intensities 0..255.
struct EcgImage {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<std::uint8_t> pixels;
  Label label = Label::Normal;
  std::string provenance;

  EcgImage() = default;
  EcgImage(std::size_t h, std::size_t w, std::uint8_t fill = 0) : height(h), width(w), pixels(h * w, fill) {}

  std::uint8_t& at(std::size_t r, std::size_t c) { return pixels[r * width + c]; }
  std::uint8_t at(std::size_t r, std::size_t c) const { return pixels[r * width + c]; }

  bool operator==(const EcgImage&) const = default;
};

namespace pgm {

/// Binary P5 encoding: `P5\n<w> <h>\n255\n` followed by row-major bytes.
inline std::vector<std::uint8_t> encode(const EcgImage& image) {
  std::string head = "P5\n" + std::to_string(image.width) + " " + std::to_string(image.height) + "\n255\n";
  std::vector<std::uint8_t> out(head.begin(), head.end());
  out.insert(out.end(), image.pixels.begin(), image.pixels.end());
  return out;
}

inline EcgImage decode(std::span<const std::uint8_t> bytes) {
  std::size_t pos = 0;
  auto fail = [](const std::string& why) -> EcgImage { throw Error(ErrorCode::MalformedPgm, why); };
  auto skip_space = [&] {
    while (pos < bytes.size()) {
      if (bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else if (std::isspace(bytes[pos])) {
        ++pos;
      } else {
        break;
      }
    }
  };
  auto number = [&]() -> std::size_t {
    skip_space();
    std::size_t v = 0, digits = 0;
    while (pos < bytes.size() && std::isdigit(bytes[pos])) {
      v = v * 10 + (bytes[pos++] - '0');
      if (++digits > 9) throw Error(ErrorCode::MalformedPgm, "header number too long");
    }
    if (digits == 0) throw Error(ErrorCode::MalformedPgm, "expected a header number");
    return v;
  };

  if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != '5') return fail("magic is not P5");
  pos = 2;
  const std::size_t w = number();
  const std::size_t h = number();
  const std::size_t maxval = number();
  if (w == 0 || h == 0) return fail("zero dimension");
  if (maxval != 255) return fail("maxval must be 255");
  if (pos >= bytes.size() || !std::isspace(bytes[pos])) return fail("missing separator after maxval");
  ++pos;
  if (bytes.size() - pos < w * h) return fail("pixel data truncated");
  EcgImage img(h, w);
  std::copy_n(bytes.begin() + static_cast<std::ptrdiff_t>(pos), w * h, img.pixels.begin());
  return img;
}

inline void write(const EcgImage& image, const std::string& path) { io::write_file(path, encode(image)); }

inline EcgImage read(const std::string& path) { return decode(io::read_file(path)); }

}  // namespace pgm
}  // namespace ecgmi
