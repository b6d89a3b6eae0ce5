#include "erpf/image.hpp"

#include <cctype>
#include <cstdio>
#include <stdexcept>

namespace erpf {

LumaFrame make_frame(int width, int height, uint8_t fill) {
  if (width < 1 || height < 1)
    throw std::invalid_argument("make_frame: dimensions must be positive");
  LumaFrame f;
  f.width = width;
  f.height = height;
  f.samples.assign(size_t(width) * height, fill);
  return f;
}

namespace {

int pgm_token(FILE* f) {
  // next integer token, skipping whitespace and '#' comment lines
  int c = std::fgetc(f);
  while (c != EOF) {
    if (c == '#') {
      while (c != EOF && c != '\n') c = std::fgetc(f);
    } else if (std::isspace(c)) {
      c = std::fgetc(f);
    } else {
      break;
    }
  }
  if (c == EOF || !std::isdigit(c)) return -1;
  int v = 0;
  while (c != EOF && std::isdigit(c)) {
    v = v * 10 + (c - '0');
    c = std::fgetc(f);
  }
  return v;
}

}  // namespace

LumaFrame read_pgm(const std::string& path) {
  FILE* f = std::fopen(path.c_str(), "rb");
  if (!f) throw std::runtime_error("read_pgm: cannot open " + path);
  char m0 = char(std::fgetc(f)), m1 = char(std::fgetc(f));
  if (m0 != 'P' || m1 != '5') {
    std::fclose(f);
    throw std::runtime_error("read_pgm: " + path + " is not binary PGM (P5)");
  }
  int w = pgm_token(f), h = pgm_token(f), maxval = pgm_token(f);
  if (w < 1 || h < 1 || maxval != 255) {
    std::fclose(f);
    throw std::runtime_error("read_pgm: unsupported header in " + path);
  }
  LumaFrame frame = make_frame(w, h);
  size_t got = std::fread(frame.samples.data(), 1, frame.samples.size(), f);
  std::fclose(f);
  if (got != frame.samples.size())
    throw std::runtime_error("read_pgm: truncated pixel data in " + path);
  return frame;
}

void write_pgm(const std::string& path, const LumaFrame& frame) {
  FILE* f = std::fopen(path.c_str(), "wb");
  if (!f) throw std::runtime_error("write_pgm: cannot open " + path);
  std::fprintf(f, "P5\n%d %d\n255\n", frame.width, frame.height);
  size_t n = std::fwrite(frame.samples.data(), 1, frame.samples.size(), f);
  std::fclose(f);
  if (n != frame.samples.size())
    throw std::runtime_error("write_pgm: short write to " + path);
}

LumaFrame read_raw_y(const std::string& path, int width, int height) {
  LumaFrame frame = make_frame(width, height);
  FILE* f = std::fopen(path.c_str(), "rb");
  if (!f) throw std::runtime_error("read_raw_y: cannot open " + path);
  size_t got = std::fread(frame.samples.data(), 1, frame.samples.size(), f);
  std::fclose(f);
  if (got != frame.samples.size())
    throw std::runtime_error("read_raw_y: " + path + " holds fewer than " +
                             std::to_string(frame.samples.size()) + " bytes");
  return frame;
}

void write_raw_y(const std::string& path, const LumaFrame& frame) {
  FILE* f = std::fopen(path.c_str(), "wb");
  if (!f) throw std::runtime_error("write_raw_y: cannot open " + path);
  size_t n = std::fwrite(frame.samples.data(), 1, frame.samples.size(), f);
  std::fclose(f);
  if (n != frame.samples.size())
    throw std::runtime_error("write_raw_y: short write to " + path);
}

}  // namespace erpf
