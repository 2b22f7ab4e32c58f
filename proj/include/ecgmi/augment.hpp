#pragma once

// Nine-crop augmentation: 96x96 crops on the {0,16,32}^2 origin grid, each resized back
// to 128x128 with corner-aligned bilinear interpolation.

#include <algorithm>
#include <array>
#include <cmath>
#include <span>
#include <utility>
#include <vector>

#include "ecgmi/error.hpp"
#include "ecgmi/image.hpp"

namespace ecgmi::augment {

inline constexpr std::size_t kCropSize = kImageSize * 3 / 4;  // 96

struct CropOrigin {
  std::size_t row;
  std::size_t col;
};

/// Corners, centre, left-centre, right-centre, top-centre, bottom-centre.
inline constexpr std::array<CropOrigin, 9> kCropOrigins{{
    {0, 0}, {0, 32}, {32, 0}, {32, 32},
    {16, 16},
    {16, 0}, {16, 32}, {0, 16}, {32, 16},
}};

inline EcgImage crop(const EcgImage& image, std::size_t row, std::size_t col, std::size_t h, std::size_t w) {
  if (row + h > image.height || col + w > image.width)
    throw Error(ErrorCode::WrongDimensions, "crop window exceeds image");
  EcgImage out(h, w);
  for (std::size_t r = 0; r < h; ++r)
    std::copy_n(image.pixels.begin() + static_cast<std::ptrdiff_t>((row + r) * image.width + col), w,
                out.pixels.begin() + static_cast<std::ptrdiff_t>(r * w));
  out.label = image.label;
  out.provenance = image.provenance;
  return out;
}

/// Corner-aligned bilinear resize: src = dst * (in - 1) / (out - 1); round-to-nearest, clamped.
inline EcgImage resize_bilinear(const EcgImage& image, std::size_t out_h, std::size_t out_w) {
  if (image.height == 0 || image.width == 0 || out_h == 0 || out_w == 0)
    throw Error(ErrorCode::WrongDimensions, "empty image in resize");
  auto coords = [](std::size_t in, std::size_t out) {
    std::vector<std::pair<std::size_t, double>> m(out);
    for (std::size_t d = 0; d < out; ++d) {
      const double src = out > 1 ? static_cast<double>(d) * static_cast<double>(in - 1) / static_cast<double>(out - 1)
                                 : 0.0;
      const auto i0 = std::min(static_cast<std::size_t>(std::floor(src)), in - 1);
      m[d] = {i0, src - static_cast<double>(i0)};
    }
    return m;
  };
  const auto rows = coords(image.height, out_h);
  const auto cols = coords(image.width, out_w);
  EcgImage out(out_h, out_w);
  for (std::size_t r = 0; r < out_h; ++r) {
    const auto [r0, fr] = rows[r];
    const std::size_t r1 = std::min(r0 + 1, image.height - 1);
    for (std::size_t c = 0; c < out_w; ++c) {
      const auto [c0, fc] = cols[c];
      const std::size_t c1 = std::min(c0 + 1, image.width - 1);
      const double top = (1.0 - fc) * image.at(r0, c0) + fc * image.at(r0, c1);
      const double bottom = (1.0 - fc) * image.at(r1, c0) + fc * image.at(r1, c1);
      const double v = (1.0 - fr) * top + fr * bottom;
      out.at(r, c) = static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
    }
  }
  out.label = image.label;
  out.provenance = image.provenance;
  return out;
}

/// Box-average downsampling by an integer factor (used to feed reduced-resolution networks).
inline EcgImage downsample_area(const EcgImage& image, std::size_t factor) {
  if (factor == 0 || image.height % factor != 0 || image.width % factor != 0)
    throw Error(ErrorCode::WrongDimensions, "image dims not divisible by downsampling factor");
  if (factor == 1) return image;
  EcgImage out(image.height / factor, image.width / factor);
  const double norm = static_cast<double>(factor * factor);
  for (std::size_t r = 0; r < out.height; ++r)
    for (std::size_t c = 0; c < out.width; ++c) {
      unsigned sum = 0;
      for (std::size_t dr = 0; dr < factor; ++dr)
        for (std::size_t dc = 0; dc < factor; ++dc) sum += image.at(r * factor + dr, c * factor + dc);
      out.at(r, c) = static_cast<std::uint8_t>(std::lround(sum / norm));
    }
  out.label = image.label;
  out.provenance = image.provenance;
  return out;
}

inline std::vector<EcgImage> nine_crops(const EcgImage& image) {
  if (image.height != kImageSize || image.width != kImageSize)
    throw Error(ErrorCode::WrongDimensions, "nine_crops expects a 128x128 image");
  std::vector<EcgImage> out;
  out.reserve(kCropOrigins.size());
  for (const auto& o : kCropOrigins)
    out.push_back(resize_bilinear(crop(image, o.row, o.col, kCropSize, kCropSize), kImageSize, kImageSize));
  return out;
}

/// Originals interleaved with their crops: x0, crops(x0), x1, crops(x1), ...
inline std::vector<EcgImage> augment_dataset(std::span<const EcgImage> images, bool enabled) {
  if (!enabled) return {images.begin(), images.end()};
  std::vector<EcgImage> out;
  out.reserve(images.size() * 10);
  for (const auto& img : images) {
    out.push_back(img);
    for (auto& c : nine_crops(img)) out.push_back(std::move(c));
  }
  return out;
}

}  // namespace ecgmi::augment
