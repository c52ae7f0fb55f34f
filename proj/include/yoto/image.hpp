#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "yoto/config.hpp"

YOTO_BEGIN_NAMESPACE

/// 8-bit interleaved image, `channels` is 3 (RGB) or 1 (gray).
struct Image {
  std::size_t width = 0;
  std::size_t height = 0;
  std::size_t channels = 3;
  std::vector<std::uint8_t> pixels;

  Image() = default;
  Image(std::size_t w, std::size_t h, std::size_t c = 3, std::uint8_t fill = 0)
      : width(w), height(h), channels(c), pixels(w * h * c, fill) {}

  std::uint8_t& at(std::size_t x, std::size_t y, std::size_t c) { return pixels[(y * width + x) * channels + c]; }
  std::uint8_t at(std::size_t x, std::size_t y, std::size_t c) const { return pixels[(y * width + x) * channels + c]; }

  bool operator==(const Image&) const = default;
};

/// Binary PPM "P6" / PGM "P5" with maxval 255.
void write_ppm(const std::filesystem::path& path, const Image& img);
void write_pgm(const std::filesystem::path& path, const Image& img);
/// Reads P6 or P5; comments in the header are skipped.
Image read_pnm(const std::filesystem::path& path);
Image decode_pnm(const std::vector<std::uint8_t>& bytes);
std::vector<std::uint8_t> encode_pnm(const Image& img);

/// Crop of size w x h whose top-left corner is (x0, y0).
Image crop(const Image& img, std::size_t x0, std::size_t y0, std::size_t w, std::size_t h);
Image flip_horizontal(const Image& img);
/// Nearest-neighbour resize: source index floor(dst * src_size / dst_size).
Image resize_nearest(const Image& img, std::size_t w, std::size_t h);

YOTO_END_NAMESPACE
