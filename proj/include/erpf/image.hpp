#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace erpf {

// Single-channel 8-bit raster.
struct LumaFrame {
  int width = 0;
  int height = 0;
  std::vector<uint8_t> samples;  // row-major

  uint8_t at(int x, int y) const { return samples[size_t(y) * width + x]; }
  uint8_t& at(int x, int y) { return samples[size_t(y) * width + x]; }
  int64_t pixels() const { return int64_t(width) * height; }
};

LumaFrame make_frame(int width, int height, uint8_t fill = 0);

// Binary PGM (P5, maxval 255).
LumaFrame read_pgm(const std::string& path);
void write_pgm(const std::string& path, const LumaFrame& frame);

// Headerless planar luma; dimensions supplied by the caller.
LumaFrame read_raw_y(const std::string& path, int width, int height);
void write_raw_y(const std::string& path, const LumaFrame& frame);

}  // namespace erpf
