#include "erpf/geometry.hpp"

#include <cmath>
#include <cstdio>
#include <limits>
#include <stdexcept>

namespace erpf::geom {

namespace {

constexpr double kPi = 3.14159265358979323846;

double deg2rad(double d) { return d * kPi / 180.0; }
double rad2deg(double r) { return r * 180.0 / kPi; }

// wrap to (-180, 180]
double wrap_lon(double deg) {
  double w = std::fmod(deg + 180.0, 360.0);
  if (w <= 0.0) w += 360.0;
  return w - 180.0;
}

}  // namespace

WeightMap weight_map(int width, int height) {
  if (width < 1 || height < 1)
    throw std::invalid_argument("weight_map: dimensions must be positive");
  WeightMap g;
  g.width = width;
  g.height = height;
  g.values.resize(size_t(width) * height);
  std::vector<double> row(height);
  double total = 0.0;
  for (int j = 0; j < height; ++j) {
    row[j] = std::cos((j - height / 2.0 + 0.5) * kPi / height);
    total += row[j] * width;
  }
  for (int j = 0; j < height; ++j)
    for (int i = 0; i < width; ++i)
      g.values[size_t(j) * width + i] = row[j] / total;
  return g;
}

double wmse(const LumaFrame& a, const LumaFrame& b, const WeightMap& g) {
  if (a.width != b.width || a.height != b.height || a.width != g.width ||
      a.height != g.height)
    throw std::invalid_argument("wmse: frame/weight dimensions disagree");
  double acc = 0.0;
  for (size_t i = 0; i < a.samples.size(); ++i) {
    const double d = double(a.samples[i]) - double(b.samples[i]);
    acc += d * d * g.values[i];
  }
  return acc;
}

double ws_psnr(const LumaFrame& a, const LumaFrame& b, const WeightMap& g) {
  const double e = wmse(a, b, g);
  if (e == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(255.0 * 255.0 / e);
}

double psnr(const LumaFrame& a, const LumaFrame& b) {
  if (a.width != b.width || a.height != b.height)
    throw std::invalid_argument("psnr: frame dimensions disagree");
  double acc = 0.0;
  for (size_t i = 0; i < a.samples.size(); ++i) {
    const double d = double(a.samples[i]) - double(b.samples[i]);
    acc += d * d;
  }
  const double mse = acc / double(a.samples.size());
  if (mse == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(255.0 * 255.0 / mse);
}

double psnr_real(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size() || a.empty())
    throw std::invalid_argument("psnr_real: size mismatch");
  double acc = 0.0;
  for (size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    acc += d * d;
  }
  const double mse = acc / double(a.size());
  if (mse == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(255.0 * 255.0 / mse);
}

void ViewportSpec::validate() const {
  if (!(fov_w_deg > 0.0 && fov_w_deg < 180.0 && fov_h_deg > 0.0 &&
        fov_h_deg < 180.0))
    throw std::invalid_argument("viewport: field angles must lie in (0,180)");
  if (width < 1 || height < 1)
    throw std::invalid_argument("viewport: raster must be at least 1x1");
  if (lat_deg < -90.0 || lat_deg > 90.0)
    throw std::invalid_argument("viewport: latitude outside [-90,90]");
  if (lon_deg < -180.0 || lon_deg > 180.0)
    throw std::invalid_argument("viewport: longitude outside [-180,180]");
}

std::pair<double, double> viewport_angles(const ViewportSpec& spec, int x,
                                          int y) {
  spec.validate();
  const double fx = (2.0 * x - 1.0 - spec.width) / spec.width *
                    std::tan(deg2rad(spec.fov_w_deg) / 2.0);
  const double fy = -(2.0 * y - 1.0 - spec.height) / spec.height *
                    std::tan(deg2rad(spec.fov_h_deg) / 2.0);
  const double rho = std::sqrt(fx * fx + fy * fy);
  const double lat_v = deg2rad(spec.lat_deg);
  if (rho == 0.0) return {spec.lon_deg, spec.lat_deg};  // center ray
  const double c = std::atan(rho);
  const double sinc_over_rho = std::sin(c) / rho;
  const double lon =
      spec.lon_deg +
      rad2deg(std::atan2(fx * sinc_over_rho,
                         std::cos(lat_v) * std::cos(c) -
                             fy * std::sin(lat_v) * sinc_over_rho));
  double s = std::cos(c) * std::sin(lat_v) +
             fy * sinc_over_rho * std::cos(lat_v);
  s = std::min(1.0, std::max(-1.0, s));
  return {wrap_lon(lon), rad2deg(std::asin(s))};
}

std::pair<double, double> erp_from_sphere(double lon_deg, double lat_deg,
                                          int erp_w, int erp_h) {
  const double p = (lon_deg / 360.0 + 0.5) * erp_w + 0.5;
  const double q = (0.5 - lat_deg / 180.0) * erp_h + 0.5;
  return {p, q};
}

SampleGrid viewport_grid(const ViewportSpec& spec, int erp_w, int erp_h) {
  spec.validate();
  SampleGrid grid;
  grid.width = spec.width;
  grid.height = spec.height;
  grid.p.resize(size_t(spec.width) * spec.height);
  grid.q.resize(grid.p.size());
  for (int y = 1; y <= spec.height; ++y)
    for (int x = 1; x <= spec.width; ++x) {
      const auto [lon, lat] = viewport_angles(spec, x, y);
      const auto [p, q] = erp_from_sphere(lon, lat, erp_w, erp_h);
      const size_t i = size_t(y - 1) * spec.width + (x - 1);
      grid.p[i] = p;
      grid.q[i] = q;
    }
  return grid;
}

void write_grid_csv(const std::string& path, const SampleGrid& grid) {
  FILE* f = std::fopen(path.c_str(), "w");
  if (!f) throw std::runtime_error("write_grid_csv: cannot open " + path);
  std::fprintf(f, "x,y,p,q\n");
  for (int y = 1; y <= grid.height; ++y)
    for (int x = 1; x <= grid.width; ++x) {
      const size_t i = size_t(y - 1) * grid.width + (x - 1);
      std::fprintf(f, "%d,%d,%.9f,%.9f\n", x, y, grid.p[i], grid.q[i]);
    }
  std::fclose(f);
}

BilinearTable bilinear_table(const SampleGrid& grid, int raster_w,
                             int raster_h, bool wrap_x) {
  BilinearTable t;
  t.width = grid.width;
  t.height = grid.height;
  t.idx.resize(grid.p.size());
  t.w.resize(grid.p.size());
  auto col = [&](int64_t i) -> int64_t {
    if (wrap_x) return ((i - 1) % raster_w + raster_w) % raster_w;
    return std::min<int64_t>(raster_w - 1, std::max<int64_t>(0, i - 1));
  };
  auto row = [&](int64_t j) -> int64_t {
    return std::min<int64_t>(raster_h - 1, std::max<int64_t>(0, j - 1));
  };
  for (size_t i = 0; i < grid.p.size(); ++i) {
    const double p = grid.p[i], q = grid.q[i];
    if (!std::isfinite(p) || !std::isfinite(q))
      throw std::invalid_argument("bilinear_table: non-finite grid position");
    const double fp = std::floor(p), fq = std::floor(q);
    const double ax = p - fp, ay = q - fq;
    const int64_t x0 = col(int64_t(fp)), x1 = col(int64_t(fp) + 1);
    const int64_t y0 = row(int64_t(fq)), y1 = row(int64_t(fq) + 1);
    t.idx[i] = {y0 * raster_w + x0, y0 * raster_w + x1, y1 * raster_w + x0,
                y1 * raster_w + x1};
    t.w[i] = {(1.0 - ax) * (1.0 - ay), ax * (1.0 - ay), (1.0 - ax) * ay,
              ax * ay};
  }
  return t;
}

std::vector<double> bilinear_sample(const LumaFrame& frame,
                                    const SampleGrid& grid) {
  const BilinearTable t =
      bilinear_table(grid, frame.width, frame.height, /*wrap_x=*/true);
  std::vector<double> out(grid.p.size());
  for (size_t i = 0; i < out.size(); ++i) {
    double acc = 0.0;
    for (int k = 0; k < 4; ++k)
      acc += t.w[i][k] * double(frame.samples[size_t(t.idx[i][k])]);
    out[i] = acc;
  }
  return out;
}

std::vector<double> extract_viewport(const LumaFrame& frame,
                                     const ViewportSpec& spec) {
  return bilinear_sample(frame, viewport_grid(spec, frame.width, frame.height));
}

}  // namespace erpf::geom
