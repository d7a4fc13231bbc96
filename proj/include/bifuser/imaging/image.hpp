#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "bifuser/core/errors.hpp"
#include "bifuser/core/tensor.hpp"

namespace bifuser::imaging {

/// Interleaved 8-bit image (HWC). Channels is 1 or 3.
struct ImageU8 {
  Index width = 0;
  Index height = 0;
  Index channels = 0;
  std::vector<std::uint8_t> pixels;

  static ImageU8 create(Index width, Index height, Index channels, std::uint8_t fill = 0) {
    ImageU8 img;
    img.width = width;
    img.height = height;
    img.channels = channels;
    img.pixels.assign(static_cast<std::size_t>(width * height * channels), fill);
    return img;
  }

  bool empty() const { return pixels.empty(); }

  std::uint8_t& at(Index y, Index x, Index c) {
    return pixels[static_cast<std::size_t>((y * width + x) * channels + c)];
  }
  std::uint8_t at(Index y, Index x, Index c) const {
    return pixels[static_cast<std::size_t>((y * width + x) * channels + c)];
  }
};

/// Planar float image in [0,1], shape {C,H,W}.
TensorF to_chw_float(const ImageU8& img);
ImageU8 to_u8(const TensorF& chw);

/// Reads PNG or JPEG (sniffed from the file magic); grayscale stays 1-channel.
ImageU8 read_image(const std::string& path);
void write_png(const std::string& path, const ImageU8& img);

/// Header-only dimension probe, (width, height). Throws IOError on parse
/// failure and MissingFile when the file cannot be opened.
std::pair<Index, Index> probe_image_size(const std::string& path);

}  // namespace bifuser::imaging
