#pragma once

#include <array>
#include <cstdint>
#include <utility>
#include <vector>

#include "erpf/image.hpp"

namespace erpf::geom {

// Per-pixel spherical-area weights, normalized to sum 1 over the frame.
// The raw row factor is cos((j - H/2 + 1/2) * pi / H) for 0-based row j,
// identical within a row and symmetric about the equator.
struct WeightMap {
  int width = 0;
  int height = 0;
  std::vector<double> values;  // row-major, W*H

  double at(int x, int y) const { return values[size_t(y) * width + x]; }
};

WeightMap weight_map(int width, int height);

// Spherically weighted MSE; the weights already sum to 1.
double wmse(const LumaFrame& a, const LumaFrame& b, const WeightMap& g);

// 10*log10(255^2 / wmse); +infinity when the frames are identical.
double ws_psnr(const LumaFrame& a, const LumaFrame& b, const WeightMap& g);

// Uniform-weight PSNR on 8-bit frames.
double psnr(const LumaFrame& a, const LumaFrame& b);

// PSNR of two real-valued rasters against a 255 peak.
double psnr_real(const std::vector<double>& a, const std::vector<double>& b);

struct ViewportSpec {
  double lon_deg = 0.0;    // viewing direction longitude, [-180, 180]
  double lat_deg = 0.0;    // viewing direction latitude, [-90, 90]
  double fov_w_deg = 75.0; // field angles, (0, 180)
  double fov_h_deg = 75.0;
  int width = 0;           // output raster
  int height = 0;

  void validate() const;
};

// Real-valued ERP pixel positions for every viewport pixel, 1-based
// convention (integer coordinates are pixel centers). The longitude
// coordinate lies in [0.5, W + 0.5].
struct SampleGrid {
  int width = 0;
  int height = 0;
  std::vector<double> p;  // ERP x, size W_v*H_v
  std::vector<double> q;  // ERP y
};

// Spherical direction (lon, lat) in degrees seen by viewport pixel (x, y),
// 1-based. Inverse gnomonic projection about the viewport center; the
// center ray (rho = 0) maps exactly to the viewing direction.
std::pair<double, double> viewport_angles(const ViewportSpec& spec, int x,
                                          int y);

// Forward ERP mapping of a spherical direction to pixel coordinates.
std::pair<double, double> erp_from_sphere(double lon_deg, double lat_deg,
                                          int erp_w, int erp_h);

SampleGrid viewport_grid(const ViewportSpec& spec, int erp_w, int erp_h);

void write_grid_csv(const std::string& path, const SampleGrid& grid);

// Four-tap bilinear lookup table against a raster of the given size.
// Horizontal coordinates wrap (360 degree seam) when wrap_x is set and clamp
// otherwise; vertical coordinates always clamp.
struct BilinearTable {
  int width = 0;   // output raster
  int height = 0;
  std::vector<std::array<int64_t, 4>> idx;
  std::vector<std::array<double, 4>> w;
};

BilinearTable bilinear_table(const SampleGrid& grid, int raster_w,
                             int raster_h, bool wrap_x);

// Bilinear resampling of an 8-bit frame at grid positions; wraps across the
// longitude seam and clamps at the poles.
std::vector<double> bilinear_sample(const LumaFrame& frame,
                                    const SampleGrid& grid);

std::vector<double> extract_viewport(const LumaFrame& frame,
                                     const ViewportSpec& spec);

}  // namespace erpf::geom
