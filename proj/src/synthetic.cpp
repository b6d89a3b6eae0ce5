#include "erpf/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

namespace erpf {

LumaFrame synth_frame(int width, int height, uint64_t seed) {
  LumaFrame f = make_frame(width, height);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  const double kx1 = 1.0 + double(rng() % 4);   // integer cycles keep the seam clean
  const double kx2 = 2.0 + double(rng() % 6);
  const double ky1 = 1.5 + 2.0 * unit(rng);
  const double ph1 = 2.0 * M_PI * unit(rng);
  const double ph2 = 2.0 * M_PI * unit(rng);
  const double base = 90.0 + 60.0 * unit(rng);

  // a few hard-edged rectangles near the equator
  struct Rect {
    int x0, y0, w, h;
    double level;
  };
  std::vector<Rect> rects;
  const int nrect = 3 + int(rng() % 4);
  for (int i = 0; i < nrect; ++i) {
    Rect r;
    r.w = 16 + int(rng() % 96);
    r.h = 12 + int(rng() % 48);
    r.x0 = int(rng() % uint64_t(width));
    r.y0 = height / 4 + int(rng() % uint64_t(std::max(1, height / 2)));
    r.level = 30.0 + 200.0 * unit(rng);
    rects.push_back(r);
  }

  std::uniform_real_distribution<double> noise(-22.0, 22.0);
  for (int y = 0; y < height; ++y) {
    const double v = (y + 0.5) / height;            // 0 at north pole
    const double lat = std::cos((v - 0.5) * M_PI);  // 1 at equator, 0 at poles
    for (int x = 0; x < width; ++x) {
      const double u = (x + 0.5) / width;
      double val = base;
      val += 55.0 * std::sin(2.0 * M_PI * kx1 * u + ph1) * std::sin(ky1 * v * M_PI);
      val += 35.0 * std::sin(2.0 * M_PI * kx2 * u + ph2) * lat;
      val += 40.0 * (v - 0.5);  // gentle vertical ramp
      for (const Rect& r : rects) {
        const int dx = ((x - r.x0) % width + width) % width;  // wrap
        if (dx < r.w && y >= r.y0 && y < r.y0 + r.h)
          val = 0.6 * val + 0.4 * r.level;
      }
      // texture concentrated at the equator, smooth poles
      val += noise(rng) * lat * lat;
      f.at(x, y) = uint8_t(std::min(255.0, std::max(0.0, std::round(val))));
    }
  }
  return f;
}

}  // namespace erpf
