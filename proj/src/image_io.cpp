#include "d2a2/image_io.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <iterator>

namespace d2a2 {

namespace {

class HeaderParser {
 public:
  HeaderParser(const std::vector<unsigned char>& bytes, const std::string& source) : b_(bytes), source_(source) {}

  [[noreturn]] void fail(const std::string& what) const {
    throw ImageError(source_ + ": " + what + " at byte offset " + std::to_string(pos_));
  }

  void skip_space_and_comments() {
    while (pos_ < b_.size()) {
      if (b_[pos_] == '#') {
        while (pos_ < b_.size() && b_[pos_] != '\n') ++pos_;
      } else if (std::isspace(b_[pos_]) != 0) {
        ++pos_;
      } else {
        break;
      }
    }
  }

  unsigned long number(const char* field) {
    skip_space_and_comments();
    if (pos_ >= b_.size() || std::isdigit(b_[pos_]) == 0) fail(std::string("expected ") + field);
    unsigned long v = 0;
    while (pos_ < b_.size() && std::isdigit(b_[pos_]) != 0) {
      v = v * 10 + static_cast<unsigned long>(b_[pos_] - '0');
      if (v > 0xFFFFFFFFul) fail(std::string(field) + " is too large");
      ++pos_;
    }
    return v;
  }

  std::size_t& pos() { return pos_; }

 private:
  const std::vector<unsigned char>& b_;
  std::string source_;
  std::size_t pos_ = 0;
};

std::vector<unsigned char> slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ImageError("cannot open image " + path);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

Raster decode_netpbm(const std::vector<unsigned char>& bytes, const std::string& source) {
  HeaderParser p(bytes, source);
  if (bytes.size() < 2 || bytes[0] != 'P' || (bytes[1] != '5' && bytes[1] != '6')) {
    p.fail("bad magic number (expected P5 or P6)");
  }
  Raster r;
  r.channels = bytes[1] == '5' ? 1 : 3;
  p.pos() = 2;
  r.width = p.number("width");
  r.height = p.number("height");
  const unsigned long maxval = p.number("maxval");
  if (maxval == 0 || maxval > 65535) p.fail("unsupported maxval " + std::to_string(maxval));
  if (r.channels == 3 && maxval > 255) p.fail("unsupported PPM maxval " + std::to_string(maxval) + " (8-bit only)");
  r.maxval = static_cast<unsigned>(maxval);
  if (p.pos() >= bytes.size() || std::isspace(bytes[p.pos()]) == 0) p.fail("expected whitespace after maxval");
  ++p.pos();
  const std::size_t count = r.width * r.height * r.channels;
  const std::size_t sample_bytes = r.maxval > 255 ? 2 : 1;
  if (bytes.size() - p.pos() < count * sample_bytes) {
    p.fail("pixel data truncated: need " + std::to_string(count * sample_bytes) + " bytes, have " +
           std::to_string(bytes.size() - p.pos()));
  }
  r.levels.resize(count);
  const unsigned char* data = bytes.data() + p.pos();
  for (std::size_t i = 0; i < count; ++i) {
    const unsigned v = sample_bytes == 2 ? (static_cast<unsigned>(data[2 * i]) << 8) | data[2 * i + 1] : data[i];
    if (v > r.maxval) {
      p.pos() += i * sample_bytes;
      p.fail("sample " + std::to_string(v) + " exceeds maxval");
    }
    r.levels[i] = static_cast<std::uint16_t>(v);
  }
  return r;
}

std::vector<unsigned char> encode_netpbm(const Raster& r) {
  if (r.channels != 1 && r.channels != 3) throw ImageError("raster must have 1 or 3 channels");
  if (r.maxval == 0 || r.maxval > 65535 || (r.channels == 3 && r.maxval > 255)) {
    throw ImageError("unsupported maxval " + std::to_string(r.maxval));
  }
  if (r.levels.size() != r.width * r.height * r.channels) throw ImageError("raster size does not match its extent");
  const std::string header = std::string(r.channels == 1 ? "P5" : "P6") + "\n" + std::to_string(r.width) + " " +
                             std::to_string(r.height) + "\n" + std::to_string(r.maxval) + "\n";
  std::vector<unsigned char> out(header.begin(), header.end());
  const bool wide = r.maxval > 255;
  out.reserve(out.size() + r.levels.size() * (wide ? 2 : 1));
  for (std::uint16_t v : r.levels) {
    if (v > r.maxval) throw ImageError("level " + std::to_string(v) + " exceeds maxval");
    if (wide) out.push_back(static_cast<unsigned char>(v >> 8));
    out.push_back(static_cast<unsigned char>(v & 0xFF));
  }
  return out;
}

Raster read_netpbm(const std::string& path) { return decode_netpbm(slurp(path), path); }

void write_netpbm(const Raster& raster, const std::string& path) {
  const auto bytes = encode_netpbm(raster);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ImageError("cannot open " + path + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw ImageError("write to " + path + " failed");
}

Tensor<double> read_image(const std::string& path) {
  const Raster r = read_netpbm(path);
  Tensor<double> t(Shape{1, r.channels, r.height, r.width});
  const double divisor = r.channels == 3 ? static_cast<double>(r.maxval) : 1.0;
  for (std::size_t y = 0; y < r.height; ++y) {
    for (std::size_t x = 0; x < r.width; ++x) {
      for (std::size_t c = 0; c < r.channels; ++c) {
        t.at(0, c, y, x) = r.levels[(y * r.width + x) * r.channels + c] / divisor;
      }
    }
  }
  return t;
}

void write_image(const Tensor<double>& image, const std::string& path, unsigned maxval) {
  const Shape& s = image.shape();
  if (s.n != 1 || (s.c != 1 && s.c != 3)) throw ImageError("write_image expects (1,1,H,W) or (1,3,H,W), got " + s.str());
  Raster r;
  r.width = s.w;
  r.height = s.h;
  r.channels = s.c;
  r.maxval = s.c == 3 ? std::min(maxval, 255u) : maxval;
  const double scale = s.c == 3 ? r.maxval : 1.0;
  r.levels.resize(s.numel());
  for (std::size_t y = 0; y < s.h; ++y) {
    for (std::size_t x = 0; x < s.w; ++x) {
      for (std::size_t c = 0; c < s.c; ++c) {
        const double v = std::round(image.at(0, c, y, x) * scale);
        const double clamped = std::clamp(std::isfinite(v) ? v : 0.0, 0.0, static_cast<double>(r.maxval));
        r.levels[(y * s.w + x) * s.c + c] = static_cast<std::uint16_t>(clamped);
      }
    }
  }
  write_netpbm(r, path);
}

void write_gray8(const Tensor<double>& unit_image, const std::string& path) {
  const Shape& s = unit_image.shape();
  if (s.n != 1 || s.c != 1) throw ImageError("write_gray8 expects (1,1,H,W), got " + s.str());
  Tensor<double> scaled(s);
  for (std::size_t i = 0; i < s.numel(); ++i) scaled[i] = std::clamp(unit_image[i], 0.0, 1.0) * 255.0;
  write_image(scaled, path, 255);
}

}  // namespace d2a2
