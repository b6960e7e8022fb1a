#include "cfpn/netpbm.hpp"

#include <cctype>
#include <cmath>
#include <fstream>
#include <iterator>
#include <string>

#include "cfpn/error.hpp"

namespace cfpn {
namespace {

class HeaderParser {
 public:
  HeaderParser(const std::vector<std::uint8_t>& bytes, std::size_t start) : bytes_(bytes), pos_(start) {}

  std::size_t pos() const { return pos_; }

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

  std::size_t number(const char* field) {
    skip_space_and_comments();
    const std::size_t start = pos_;
    std::size_t v = 0;
    while (pos_ < bytes_.size() && std::isdigit(bytes_[pos_])) {
      v = v * 10 + static_cast<std::size_t>(bytes_[pos_] - '0');
      if (v > 1'000'000) throw DecodeError(std::string("header field ") + field + " is too large", start);
      ++pos_;
    }
    if (pos_ == start) throw DecodeError(std::string("expected header field ") + field, start);
    return v;
  }

  // Exactly one whitespace byte separates maxval from the raster.
  void single_whitespace() {
    if (pos_ >= bytes_.size() || !std::isspace(bytes_[pos_])) {
      throw DecodeError("expected whitespace after maxval", pos_);
    }
    ++pos_;
  }

 private:
  const std::vector<std::uint8_t>& bytes_;
  std::size_t pos_;
};

std::vector<std::uint8_t> slurp(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ConfigError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

}  // namespace

Raster decode_netpbm(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < 2 || bytes[0] != 'P' || (bytes[1] != '5' && bytes[1] != '6')) {
    throw DecodeError("not a binary PGM (P5) or PPM (P6) file", 0);
  }
  Raster r;
  r.channels = bytes[1] == '6' ? 3 : 1;
  HeaderParser p(bytes, 2);
  p.skip_space_and_comments();
  const std::size_t width_at = p.pos();
  r.width = p.number("width");
  if (r.width == 0) throw DecodeError("image width is zero", width_at);
  p.skip_space_and_comments();
  const std::size_t height_at = p.pos();
  r.height = p.number("height");
  if (r.height == 0) throw DecodeError("image height is zero", height_at);
  p.skip_space_and_comments();
  const std::size_t maxval_at = p.pos();
  const std::size_t maxval = p.number("maxval");
  if (maxval != 255) throw DecodeError("maxval " + std::to_string(maxval) + " unsupported (expected 255)", maxval_at);
  p.single_whitespace();
  const std::size_t need = r.width * r.height * r.channels;
  if (bytes.size() - p.pos() < need) {
    throw DecodeError("raster truncated: expected " + std::to_string(need) + " bytes", bytes.size());
  }
  r.pixels.assign(bytes.begin() + static_cast<std::ptrdiff_t>(p.pos()),
                  bytes.begin() + static_cast<std::ptrdiff_t>(p.pos() + need));
  return r;
}

std::vector<std::uint8_t> encode_netpbm(const Raster& raster) {
  if (raster.channels != 1 && raster.channels != 3) throw DimensionError("netpbm raster needs 1 or 3 channels");
  if (raster.pixels.size() != raster.width * raster.height * raster.channels) {
    throw DimensionError("netpbm raster pixel count does not match its dimensions");
  }
  const std::string header = std::string(raster.channels == 3 ? "P6" : "P5") + "\n" + std::to_string(raster.width) +
                             " " + std::to_string(raster.height) + "\n255\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  out.insert(out.end(), raster.pixels.begin(), raster.pixels.end());
  return out;
}

Raster read_raster(const std::filesystem::path& path) {
  try {
    return decode_netpbm(slurp(path));
  } catch (const DecodeError& e) {
    throw DecodeError(path.string() + ": " + e.message(), e.offset());
  }
}

void write_raster(const std::filesystem::path& path, const Raster& raster) {
  const auto bytes = encode_netpbm(raster);
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw ConfigError("cannot open for writing: " + path.string());
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw ConfigError("failed writing: " + path.string());
}

Tensor read_image(const std::filesystem::path& path) {
  const Raster r = read_raster(path);
  Tensor out({3, r.height, r.width});
  const std::size_t plane = r.height * r.width;
  for (std::size_t j = 0; j < plane; ++j) {
    for (std::size_t c = 0; c < 3; ++c) {
      const std::size_t src = r.channels == 3 ? j * 3 + c : j;
      out[c * plane + j] = r.pixels[src] / 255.0;
    }
  }
  return out;
}

Tensor read_mask(const std::filesystem::path& path) {
  const Raster r = read_raster(path);
  if (r.channels != 1) throw DecodeError(path.string() + ": mask must be a PGM (P5), got a PPM", 1);
  Tensor out({1, r.height, r.width});
  for (std::size_t j = 0; j < r.pixels.size(); ++j) out[j] = r.pixels[j] >= 128 ? 1.0 : 0.0;
  return out;
}

std::uint8_t quantize_unit(double v) {
  if (!(v >= 0.0 && v <= 1.0)) throw DimensionError("value " + std::to_string(v) + " outside [0,1]");
  return static_cast<std::uint8_t>(std::floor(v * 255.0 + 0.5));
}

void write_saliency(const std::filesystem::path& path, const Tensor& saliency) {
  const bool ok = (saliency.rank() == 3 && saliency.dim(0) == 1) || saliency.rank() == 2;
  if (!ok) throw DimensionError("write_saliency expects [1,H,W] or [H,W], got " + to_string(saliency.shape()));
  Raster r;
  r.channels = 1;
  r.height = saliency.dim(saliency.rank() - 2);
  r.width = saliency.dim(saliency.rank() - 1);
  r.pixels.reserve(saliency.numel());
  for (double v : saliency.values()) r.pixels.push_back(quantize_unit(v));
  write_raster(path, r);
}

void write_image(const std::filesystem::path& path, const Tensor& image) {
  if (image.rank() != 3 || image.dim(0) != 3) {
    throw DimensionError("write_image expects [3,H,W], got " + to_string(image.shape()));
  }
  Raster r;
  r.channels = 3;
  r.height = image.dim(1);
  r.width = image.dim(2);
  const std::size_t plane = r.height * r.width;
  r.pixels.resize(plane * 3);
  for (std::size_t j = 0; j < plane; ++j) {
    for (std::size_t c = 0; c < 3; ++c) r.pixels[j * 3 + c] = quantize_unit(image[c * plane + j]);
  }
  write_raster(path, r);
}

}  // namespace cfpn
