#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace clci::detail {

struct GrayImage {
  int h = 0;
  int w = 0;
  int bit_depth = 8;  // 8 or 16
  std::vector<std::uint16_t> pixels;
};

void write_png_gray(const std::string& path, const GrayImage& img);
// Accepts 8- and 16-bit grayscale PNGs; anything else is an IoError.
GrayImage read_png_gray(const std::string& path);

}  // namespace clci::detail
