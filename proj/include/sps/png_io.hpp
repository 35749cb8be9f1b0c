#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace sps {

/// 8-bit image as read from or written to PNG.
struct Raster {
  int width = 0;
  int height = 0;
  int channels = 0;  // 1 gray, 2 gray+alpha, 3 RGB, 4 RGBA
  std::vector<std::uint8_t> data;
};

/// Decodes any PNG into 8-bit gray, gray+alpha, RGB or RGBA. Throws IoError.
Raster read_png(const std::string& path);

/// Writes 8-bit gray (1 channel) or RGB (3 channels). Throws IoError.
void write_png(const std::string& path, const Raster& raster);

}  // namespace sps
