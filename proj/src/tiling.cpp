#include "erpf/tiling.hpp"

#include <cmath>
#include <cstdio>
#include <stdexcept>

#include "json.hpp"

namespace erpf::tile {

namespace {

std::vector<int> axis_origins(int dim, int tile, int overlap) {
  if (dim <= tile) return {0};
  std::vector<int> out;
  const int stride = tile - overlap;
  for (int o = 0;; o += stride) {
    if (o + tile >= dim) {
      const int last = dim - tile;
      if (out.empty() || out.back() != last) out.push_back(last);
      break;
    }
    out.push_back(o);
  }
  return out;
}

// Float-valued network output for one raster region.
std::vector<float> forward_region(const LumaFrame& frame,
                                  const mask::PartitionMask& pm,
                                  const net::ModelConfig& cfg,
                                  const nn::ParameterSet<float>& params,
                                  int x0, int y0, int w, int h) {
  std::vector<float> img(size_t(w) * h), msk(size_t(w) * h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      img[size_t(y) * w + x] = float(frame.at(x0 + x, y0 + y)) / 255.0f;
      msk[size_t(y) * w + x] = float(pm.at(x0 + x, y0 + y));
    }
  nn::Tensor<float> it(nn::Shape{1, 1, h, w}, std::move(img));
  nn::Tensor<float> mt(nn::Shape{1, 1, h, w}, std::move(msk));
  auto out = net::forward(it, mt, params, cfg);
  return out.values();
}

uint8_t quantize(float v) {
  const long q = std::lround(double(v) * 255.0);
  return uint8_t(std::min(255l, std::max(0l, q)));
}

}  // namespace

TilePlan plan_tiles(int width, int height, int tile, int overlap) {
  if (width < 1 || height < 1)
    throw std::invalid_argument("plan_tiles: frame dimensions must be positive");
  if (overlap < 0) throw std::invalid_argument("plan_tiles: negative overlap");
  if (tile <= 2 * overlap)
    throw std::invalid_argument("plan_tiles: tile " + std::to_string(tile) +
                                " must exceed twice the overlap " +
                                std::to_string(overlap));
  TilePlan plan;
  plan.overlap = overlap;
  plan.tile_w = std::min(tile, width);
  plan.tile_h = std::min(tile, height);
  plan.xs = axis_origins(width, plan.tile_w, overlap);
  plan.ys = axis_origins(height, plan.tile_h, overlap);
  return plan;
}

std::vector<std::pair<int, int>> core_intervals(const std::vector<int>& origins,
                                                int tile, int dim) {
  std::vector<std::pair<int, int>> out;
  int lo = 0;
  for (size_t i = 0; i < origins.size(); ++i) {
    int hi;
    if (i + 1 == origins.size()) {
      hi = dim;
    } else {
      const double c0 = origins[i] + (tile - 1) / 2.0;
      const double c1 = origins[i + 1] + (tile - 1) / 2.0;
      hi = int(std::floor((c0 + c1) / 2.0)) + 1;  // tie goes to the lower tile
    }
    out.push_back({lo, hi});
    lo = hi;
  }
  return out;
}

LumaFrame filter_frame(const LumaFrame& frame, const mask::PartitionMask& pm,
                       const net::ModelConfig& cfg,
                       const nn::ParameterSet<float>& params,
                       const TilePlan& plan) {
  if (pm.width != frame.width || pm.height != frame.height)
    throw std::invalid_argument("filter_frame: mask does not match frame");
  LumaFrame out = make_frame(frame.width, frame.height);
  const auto cores_x = core_intervals(plan.xs, plan.tile_w, frame.width);
  const auto cores_y = core_intervals(plan.ys, plan.tile_h, frame.height);
  for (size_t ti = 0; ti < plan.ys.size(); ++ti)
    for (size_t tj = 0; tj < plan.xs.size(); ++tj) {
      const int oy = plan.ys[ti], ox = plan.xs[tj];
      const auto vals = forward_region(frame, pm, cfg, params, ox, oy,
                                       plan.tile_w, plan.tile_h);
      const auto [cy0, cy1] = cores_y[ti];
      const auto [cx0, cx1] = cores_x[tj];
      for (int y = cy0; y < cy1; ++y)
        for (int x = cx0; x < cx1; ++x)
          out.at(x, y) =
              quantize(vals[size_t(y - oy) * plan.tile_w + (x - ox)]);
    }
  return out;
}

SeamReport seam_report(const LumaFrame& frame, const mask::PartitionMask& pm,
                       const net::ModelConfig& cfg,
                       const nn::ParameterSet<float>& params,
                       const TilePlan& plan) {
  const auto whole = forward_region(frame, pm, cfg, params, 0, 0, frame.width,
                                    frame.height);
  // tiled result kept in float, assembled exactly as filter_frame does
  std::vector<float> tiled(whole.size());
  const auto cores_x = core_intervals(plan.xs, plan.tile_w, frame.width);
  const auto cores_y = core_intervals(plan.ys, plan.tile_h, frame.height);
  for (size_t ti = 0; ti < plan.ys.size(); ++ti)
    for (size_t tj = 0; tj < plan.xs.size(); ++tj) {
      const int oy = plan.ys[ti], ox = plan.xs[tj];
      const auto vals = forward_region(frame, pm, cfg, params, ox, oy,
                                       plan.tile_w, plan.tile_h);
      const auto [cy0, cy1] = cores_y[ti];
      const auto [cx0, cx1] = cores_x[tj];
      for (int y = cy0; y < cy1; ++y)
        for (int x = cx0; x < cx1; ++x)
          tiled[size_t(y) * frame.width + x] =
              vals[size_t(y - oy) * plan.tile_w + (x - ox)];
    }

  SeamReport report;
  for (size_t i = 0; i < whole.size(); ++i)
    report.max_abs_diff = std::max(
        report.max_abs_diff, std::abs(double(whole[i]) - double(tiled[i])));
  for (size_t j = 0; j + 1 < cores_x.size(); ++j) {
    const int seam = cores_x[j].second;
    double m = 0.0;
    for (int y = 0; y < frame.height; ++y)
      for (int x = std::max(0, seam - 1); x <= std::min(frame.width - 1, seam);
           ++x)
        m = std::max(m, std::abs(double(whole[size_t(y) * frame.width + x]) -
                                 double(tiled[size_t(y) * frame.width + x])));
    report.col_seams.push_back(seam);
    report.col_seam_max.push_back(m);
  }
  for (size_t j = 0; j + 1 < cores_y.size(); ++j) {
    const int seam = cores_y[j].second;
    double m = 0.0;
    for (int y = std::max(0, seam - 1); y <= std::min(frame.height - 1, seam);
         ++y)
      for (int x = 0; x < frame.width; ++x)
        m = std::max(m, std::abs(double(whole[size_t(y) * frame.width + x]) -
                                 double(tiled[size_t(y) * frame.width + x])));
    report.row_seams.push_back(seam);
    report.row_seam_max.push_back(m);
  }
  return report;
}

void write_seam_report_json(const std::string& path,
                            const SeamReport& report) {
  nlohmann::json j;
  j["max_abs_diff"] = report.max_abs_diff;
  j["col_seams"] = report.col_seams;
  j["col_seam_max"] = report.col_seam_max;
  j["row_seams"] = report.row_seams;
  j["row_seam_max"] = report.row_seam_max;
  FILE* f = std::fopen(path.c_str(), "w");
  if (!f)
    throw std::runtime_error("write_seam_report_json: cannot open " + path);
  const std::string s = j.dump(2);
  std::fwrite(s.data(), 1, s.size(), f);
  std::fputc('\n', f);
  std::fclose(f);
}

double delta_t(double t_base, double t_ours) {
  if (t_base <= 0.0)
    throw std::invalid_argument("delta_t: base time must be positive");
  return (t_ours - t_base) / t_base;
}

}  // namespace erpf::tile
