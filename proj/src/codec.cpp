#include "erpf/codec.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <stdexcept>

namespace erpf::codec {

namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr int kCtu = 64;
constexpr int kCell = 8;
constexpr int kMaxDepth = 3;

bool valid_block_size(int n) {
  return n == 8 || n == 16 || n == 32 || n == 64;
}

// Orthonormal DCT-II basis, built once per block size.
const std::vector<double>& dct_basis(int n) {
  auto build = [](int n) {
    std::vector<double> c(size_t(n) * n);
    for (int u = 0; u < n; ++u) {
      const double a = u == 0 ? std::sqrt(1.0 / n) : std::sqrt(2.0 / n);
      for (int i = 0; i < n; ++i)
        c[size_t(u) * n + i] = a * std::cos(kPi * (2 * i + 1) * u / (2.0 * n));
    }
    return c;
  };
  static const std::vector<double> c8 = build(8);
  static const std::vector<double> c16 = build(16);
  static const std::vector<double> c32 = build(32);
  static const std::vector<double> c64 = build(64);
  switch (n) {
    case 8:
      return c8;
    case 16:
      return c16;
    case 32:
      return c32;
    case 64:
      return c64;
  }
  throw std::invalid_argument("dct: block size " + std::to_string(n) +
                              " not in {8,16,32,64}");
}

// out = C * in * C^T (forward) or C^T * in * C (inverse)
void dct_apply(const double* in, double* out, int n, bool forward) {
  const auto& c = dct_basis(n);
  std::vector<double> tmp(size_t(n) * n);
  // rows
  for (int r = 0; r < n; ++r)
    for (int u = 0; u < n; ++u) {
      double acc = 0.0;
      for (int i = 0; i < n; ++i)
        acc += (forward ? c[size_t(u) * n + i] : c[size_t(i) * n + u]) *
               in[size_t(r) * n + i];
      tmp[size_t(r) * n + u] = acc;
    }
  // columns
  for (int u = 0; u < n; ++u)
    for (int v = 0; v < n; ++v) {
      double acc = 0.0;
      for (int r = 0; r < n; ++r)
        acc += (forward ? c[size_t(v) * n + r] : c[size_t(r) * n + v]) *
               tmp[size_t(r) * n + u];
      out[size_t(v) * n + u] = acc;
    }
}

struct PaddedFrame {
  int w = 0, h = 0;
  std::vector<uint8_t> data;

  uint8_t at(int x, int y) const { return data[size_t(y) * w + x]; }
  uint8_t& at(int x, int y) { return data[size_t(y) * w + x]; }
};

PaddedFrame pad_to_ctu(const LumaFrame& f) {
  PaddedFrame p;
  p.w = (f.width + kCtu - 1) / kCtu * kCtu;
  p.h = (f.height + kCtu - 1) / kCtu * kCtu;
  p.data.resize(size_t(p.w) * p.h);
  for (int y = 0; y < p.h; ++y) {
    const int sy = std::min(y, f.height - 1);
    for (int x = 0; x < p.w; ++x) {
      const int sx = std::min(x, f.width - 1);
      p.data[size_t(y) * p.w + x] = f.at(sx, sy);
    }
  }
  return p;
}

double cu_variance(const PaddedFrame& f, int x0, int y0, int size) {
  double sum = 0.0, sq = 0.0;
  for (int y = y0; y < y0 + size; ++y)
    for (int x = x0; x < x0 + size; ++x) {
      const double v = f.at(x, y);
      sum += v;
      sq += v * v;
    }
  const double n = double(size) * size;
  const double mean = sum / n;
  return sq / n - mean * mean;
}

struct EncodeState {
  const PaddedFrame* orig;
  PaddedFrame* recon;
  CUDepthMap* map;
  double qs;
  double split_thresh;
  int64_t bits = 0;
};

void code_leaf(EncodeState& st, int x0, int y0, int size, int depth) {
  // DC prediction from reconstructed top/left borders, 128 when neither
  // neighbor exists.
  int64_t acc = 0;
  int count = 0;
  if (y0 > 0)
    for (int x = x0; x < x0 + size; ++x) {
      acc += st.recon->at(x, y0 - 1);
      ++count;
    }
  if (x0 > 0)
    for (int y = y0; y < y0 + size; ++y) {
      acc += st.recon->at(x0 - 1, y);
      ++count;
    }
  const double pred = count > 0 ? double(acc) / count : 128.0;

  std::vector<double> res(size_t(size) * size), coef(size_t(size) * size);
  for (int y = 0; y < size; ++y)
    for (int x = 0; x < size; ++x)
      res[size_t(y) * size + x] = double(st.orig->at(x0 + x, y0 + y)) - pred;
  dct2(res.data(), coef.data(), size);

  st.bits += 8;  // leaf header; zero levels are covered by it
  for (auto& c : coef) {
    const int64_t level = std::llround(c / st.qs);
    if (level != 0) st.bits += eg_signed_len(level);
    c = double(level) * st.qs;
  }
  idct2(coef.data(), res.data(), size);
  for (int y = 0; y < size; ++y)
    for (int x = 0; x < size; ++x) {
      const long v = std::lround(pred + res[size_t(y) * size + x]);
      st.recon->at(x0 + x, y0 + y) =
          uint8_t(std::min(255l, std::max(0l, v)));
    }

  const int c0 = x0 / kCell, r0 = y0 / kCell, cs = size / kCell;
  for (int r = r0; r < r0 + cs; ++r)
    for (int c = c0; c < c0 + cs; ++c)
      st.map->depth[size_t(r) * st.map->cells_w + c] = uint8_t(depth);
}

void code_cu(EncodeState& st, int x0, int y0, int size, int depth) {
  if (depth < kMaxDepth &&
      cu_variance(*st.orig, x0, y0, size) > st.split_thresh) {
    const int half = size / 2;
    code_cu(st, x0, y0, half, depth + 1);
    code_cu(st, x0 + half, y0, half, depth + 1);
    code_cu(st, x0, y0 + half, half, depth + 1);
    code_cu(st, x0 + half, y0 + half, half, depth + 1);
    return;
  }
  code_leaf(st, x0, y0, size, depth);
}

bool quadtree_region_valid(const CUDepthMap& m, int c0, int r0, int cells,
                           int depth) {
  bool uniform = true;
  for (int r = r0; r < r0 + cells && uniform; ++r)
    for (int c = c0; c < c0 + cells; ++c)
      if (m.at(c, r) != depth) {
        uniform = false;
        break;
      }
  if (uniform) return true;
  if (depth >= kMaxDepth) return false;
  const int half = cells / 2;
  return quadtree_region_valid(m, c0, r0, half, depth + 1) &&
         quadtree_region_valid(m, c0 + half, r0, half, depth + 1) &&
         quadtree_region_valid(m, c0, r0 + half, half, depth + 1) &&
         quadtree_region_valid(m, c0 + half, r0 + half, half, depth + 1);
}

// CU identity of a cell: depth plus the aligned origin at that depth.
struct CuKey {
  int depth, ox, oy;
  bool operator==(const CuKey&) const = default;
};

CuKey cu_key(const CUDepthMap& m, int cx, int cy) {
  const int d = m.at(cx, cy);
  const int span = kCell >> d;  // cells per CU side
  return {d, cx / span * span, cy / span * span};
}

}  // namespace

double qstep(int qp) { return std::pow(2.0, (qp - 4) / 6.0); }

bool quadtree_valid(const CUDepthMap& map) {
  if (map.cells_w <= 0 || map.cells_h <= 0 ||
      map.cells_w % kCell != 0 || map.cells_h % kCell != 0)
    return false;
  if (map.depth.size() != size_t(map.cells_w) * map.cells_h) return false;
  for (uint8_t d : map.depth)
    if (d > kMaxDepth) return false;
  for (int r = 0; r < map.cells_h; r += kCell)
    for (int c = 0; c < map.cells_w; c += kCell)
      if (!quadtree_region_valid(map, c, r, kCell, 0)) return false;
  return true;
}

void write_depth_map(const std::string& path, const CUDepthMap& map) {
  FILE* f = std::fopen(path.c_str(), "w");
  if (!f) throw std::runtime_error("write_depth_map: cannot open " + path);
  for (int r = 0; r < map.cells_h; ++r) {
    for (int c = 0; c < map.cells_w; ++c)
      std::fputc('0' + map.at(c, r), f);
    std::fputc('\n', f);
  }
  std::fclose(f);
}

CUDepthMap read_depth_map(const std::string& path) {
  FILE* f = std::fopen(path.c_str(), "r");
  if (!f) throw std::runtime_error("read_depth_map: cannot open " + path);
  CUDepthMap map;
  int width = -1, col = 0, ch;
  while ((ch = std::fgetc(f)) != EOF) {
    if (ch == '\n') {
      if (col == 0) continue;
      if (width < 0) width = col;
      if (col != width) {
        std::fclose(f);
        throw std::runtime_error("read_depth_map: ragged rows in " + path);
      }
      ++map.cells_h;
      col = 0;
    } else if (ch >= '0' && ch <= '3') {
      map.depth.push_back(uint8_t(ch - '0'));
      ++col;
    } else {
      std::fclose(f);
      throw std::runtime_error("read_depth_map: invalid character in " + path);
    }
  }
  std::fclose(f);
  if (col != 0) {  // last row without trailing newline
    if (width < 0) width = col;
    if (col != width)
      throw std::runtime_error("read_depth_map: ragged rows in " + path);
    ++map.cells_h;
  }
  map.cells_w = width < 0 ? 0 : width;
  return map;
}

int eg_signed_len(int64_t level) {
  const uint64_t code = level > 0 ? uint64_t(2 * level - 1)
                                  : uint64_t(-2 * level);
  int bits = 0;
  uint64_t v = code + 1;
  while (v > 1) {
    v >>= 1;
    ++bits;
  }
  return 2 * bits + 1;
}

void dct2(const double* in, double* out, int n) {
  if (!valid_block_size(n))
    throw std::invalid_argument("dct2: block size " + std::to_string(n) +
                                " not in {8,16,32,64}");
  dct_apply(in, out, n, true);
}

void idct2(const double* in, double* out, int n) {
  if (!valid_block_size(n))
    throw std::invalid_argument("idct2: block size " + std::to_string(n) +
                                " not in {8,16,32,64}");
  dct_apply(in, out, n, false);
}

CodecResult encode_intra(const LumaFrame& frame, int qp,
                         const EncoderConfig& cfg) {
  if (qp < 0 || qp > 51)
    throw std::invalid_argument("encode_intra: qp " + std::to_string(qp) +
                                " outside [0,51]");
  if (frame.width < 1 || frame.height < 1)
    throw std::invalid_argument("encode_intra: empty frame");

  const PaddedFrame orig = pad_to_ctu(frame);
  PaddedFrame recon;
  recon.w = orig.w;
  recon.h = orig.h;
  recon.data.assign(orig.data.size(), 0);

  CodecResult result;
  result.qp = qp;
  result.depth_map.cells_w = orig.w / kCell;
  result.depth_map.cells_h = orig.h / kCell;
  result.depth_map.depth.assign(
      size_t(result.depth_map.cells_w) * result.depth_map.cells_h, 0);

  EncodeState st;
  st.orig = &orig;
  st.recon = &recon;
  st.map = &result.depth_map;
  st.qs = qstep(qp);
  st.split_thresh = cfg.split_tau * st.qs;

  for (int y = 0; y < orig.h; y += kCtu)
    for (int x = 0; x < orig.w; x += kCtu) code_cu(st, x, y, kCtu, 0);

  result.estimated_bits = st.bits;
  result.recon = make_frame(frame.width, frame.height);
  for (int y = 0; y < frame.height; ++y)
    for (int x = 0; x < frame.width; ++x)
      result.recon.at(x, y) = recon.at(x, y);
  return result;
}

LumaFrame deblock(const LumaFrame& frame, const CUDepthMap& map, int qp) {
  if (map.cells_w * kCell < frame.width || map.cells_h * kCell < frame.height)
    throw std::invalid_argument("deblock: depth map does not cover frame");
  const double beta = qstep(qp);
  LumaFrame out = frame;

  auto smooth = [](int p1, int p0, int q0, int q1) {
    const long v = std::lround((p1 + 2.0 * p0 + 2.0 * q0 + q1) / 6.0);
    return uint8_t(std::min(255l, std::max(0l, v)));
  };

  // vertical CU boundaries
  for (int x = kCell; x + 1 < frame.width; x += kCell) {
    for (int y = 0; y < frame.height; ++y) {
      if (cu_key(map, x / kCell - 1, y / kCell) ==
          cu_key(map, x / kCell, y / kCell))
        continue;
      const int p1 = out.at(x - 2, y), p0 = out.at(x - 1, y);
      const int q0 = out.at(x, y), q1 = out.at(x + 1, y);
      if (std::abs(p0 - q0) >= beta) continue;
      const uint8_t s = smooth(p1, p0, q0, q1);
      out.at(x - 1, y) = s;
      out.at(x, y) = s;
    }
  }
  // horizontal CU boundaries
  for (int y = kCell; y + 1 < frame.height; y += kCell) {
    for (int x = 0; x < frame.width; ++x) {
      if (cu_key(map, x / kCell, y / kCell - 1) ==
          cu_key(map, x / kCell, y / kCell))
        continue;
      const int p1 = out.at(x, y - 2), p0 = out.at(x, y - 1);
      const int q0 = out.at(x, y), q1 = out.at(x, y + 1);
      if (std::abs(p0 - q0) >= beta) continue;
      const uint8_t s = smooth(p1, p0, q0, q1);
      out.at(x, y - 1) = s;
      out.at(x, y) = s;
    }
  }
  return out;
}

}  // namespace erpf::codec
