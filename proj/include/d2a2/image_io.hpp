#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "d2a2/tensor.hpp"

namespace d2a2 {

class ImageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Binary Netpbm raster. channels = 1 (P5) or 3 (P6, interleaved RGB). Levels in [0, maxval].
struct Raster {
  std::size_t width = 0;
  std::size_t height = 0;
  std::size_t channels = 1;
  unsigned maxval = 255;
  std::vector<std::uint16_t> levels;
};

/// Parses P5 (maxval 1..65535) or P6 (maxval 1..255). Errors name the byte offset.
Raster decode_netpbm(const std::vector<unsigned char>& bytes, const std::string& source = "<memory>");
std::vector<unsigned char> encode_netpbm(const Raster& raster);

Raster read_netpbm(const std::string& path);
void write_netpbm(const Raster& raster, const std::string& path);

/// PGM -> (1,1,H,W) raw levels (depth units); PPM -> (1,3,H,W) scaled by 1/maxval into [0,1].
Tensor<double> read_image(const std::string& path);
/// 1 channel -> PGM of rounded, clamped raw levels with the given maxval;
/// 3 channels -> 8-bit PPM from values in [0,1].
void write_image(const Tensor<double>& image, const std::string& path, unsigned maxval = 65535);
/// Grayscale diagnostics: values in [0,1] quantized linearly to 0..255.
void write_gray8(const Tensor<double>& unit_image, const std::string& path);

}  // namespace d2a2
