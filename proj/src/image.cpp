#include "yoto/image.hpp"

#include <cctype>
#include <fstream>
#include <iterator>
#include <string>

#include "yoto/errors.hpp"

YOTO_BEGIN_NAMESPACE

std::vector<std::uint8_t> encode_pnm(const Image& img) {
  if (img.channels != 1 && img.channels != 3) throw ContractError("encode_pnm: channels must be 1 or 3");
  if (img.pixels.size() != img.width * img.height * img.channels) throw ContractError("encode_pnm: pixel buffer size mismatch");
  const std::string header = std::string(img.channels == 3 ? "P6" : "P5") + "\n" + std::to_string(img.width) + " " +
                             std::to_string(img.height) + "\n255\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  out.insert(out.end(), img.pixels.begin(), img.pixels.end());
  return out;
}

namespace {

void write_bytes(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open for writing: " + path.string());
  os.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!os) throw IoError("write failed: " + path.string());
}

class HeaderReader {
 public:
  explicit HeaderReader(const std::vector<std::uint8_t>& b) : bytes_(b) {}

  void skip_space_and_comments() {
    while (pos_ < bytes_.size()) {
      if (bytes_[pos_] == '#') {
        while (pos_ < bytes_.size() && bytes_[pos_] != '\n') ++pos_;
      } else if (std::isspace(bytes_[pos_])) {
        ++pos_;
      } else {
        break;
      }
    }
  }

  std::size_t number() {
    skip_space_and_comments();
    const std::size_t start = pos_;
    std::size_t value = 0;
    while (pos_ < bytes_.size() && std::isdigit(bytes_[pos_])) {
      value = value * 10 + (bytes_[pos_] - '0');
      if (value > 1'000'000) throw FormatError("pnm: header value too large", start);
      ++pos_;
    }
    if (pos_ == start) throw FormatError("pnm: expected a number", start);
    return value;
  }

  std::size_t pos_ = 0;

 private:
  const std::vector<std::uint8_t>& bytes_;
};

}  // namespace

Image decode_pnm(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < 2 || bytes[0] != 'P' || (bytes[1] != '6' && bytes[1] != '5')) {
    throw FormatError("pnm: bad magic, expected P6 or P5", 0);
  }
  const std::size_t channels = bytes[1] == '6' ? 3 : 1;
  HeaderReader reader(bytes);
  reader.pos_ = 2;
  const std::size_t width = reader.number();
  const std::size_t height = reader.number();
  const std::size_t maxval_pos = reader.pos_;
  const std::size_t maxval = reader.number();
  if (maxval != 255) throw FormatError("pnm: only maxval 255 is supported", maxval_pos);
  if (width == 0 || height == 0) throw FormatError("pnm: zero image dimension", maxval_pos);
  // Exactly one whitespace byte separates the header from the raster.
  if (reader.pos_ >= bytes.size() || !std::isspace(bytes[reader.pos_])) {
    throw FormatError("pnm: missing separator after header", reader.pos_);
  }
  const std::size_t data_start = reader.pos_ + 1;
  const std::size_t needed = width * height * channels;
  if (bytes.size() - data_start < needed) throw FormatError("pnm: truncated raster", bytes.size());
  Image img(width, height, channels);
  std::copy(bytes.begin() + static_cast<std::ptrdiff_t>(data_start),
            bytes.begin() + static_cast<std::ptrdiff_t>(data_start + needed), img.pixels.begin());
  return img;
}

void write_ppm(const std::filesystem::path& path, const Image& img) {
  if (img.channels != 3) throw ContractError("write_ppm: image must have 3 channels");
  write_bytes(path, encode_pnm(img));
}

void write_pgm(const std::filesystem::path& path, const Image& img) {
  if (img.channels != 1) throw ContractError("write_pgm: image must have 1 channel");
  write_bytes(path, encode_pnm(img));
}

Image read_pnm(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open for reading: " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  return decode_pnm(bytes);
}

Image crop(const Image& img, std::size_t x0, std::size_t y0, std::size_t w, std::size_t h) {
  if (x0 + w > img.width || y0 + h > img.height || w == 0 || h == 0) {
    throw ContractError("crop: window outside the image");
  }
  Image out(w, h, img.channels);
  for (std::size_t y = 0; y < h; ++y) {
    const auto* src = img.pixels.data() + ((y0 + y) * img.width + x0) * img.channels;
    std::copy(src, src + w * img.channels, out.pixels.begin() + static_cast<std::ptrdiff_t>(y * w * img.channels));
  }
  return out;
}

Image flip_horizontal(const Image& img) {
  Image out(img.width, img.height, img.channels);
  for (std::size_t y = 0; y < img.height; ++y) {
    for (std::size_t x = 0; x < img.width; ++x) {
      for (std::size_t c = 0; c < img.channels; ++c) out.at(img.width - 1 - x, y, c) = img.at(x, y, c);
    }
  }
  return out;
}

Image resize_nearest(const Image& img, std::size_t w, std::size_t h) {
  if (w == img.width && h == img.height) return img;
  Image out(w, h, img.channels);
  for (std::size_t y = 0; y < h; ++y) {
    const std::size_t sy = y * img.height / h;
    for (std::size_t x = 0; x < w; ++x) {
      const std::size_t sx = x * img.width / w;
      for (std::size_t c = 0; c < img.channels; ++c) out.at(x, y, c) = img.at(sx, sy, c);
    }
  }
  return out;
}

YOTO_END_NAMESPACE
