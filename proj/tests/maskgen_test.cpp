#include "doctest.h"
#include <stdexcept>
#include "erpf/codec.hpp"
#include "erpf/maskgen.hpp"
#include "erpf/synthetic.hpp"

using namespace erpf;

namespace {

codec::CUDepthMap uniform_map(int cells_w, int cells_h, uint8_t depth) {
  codec::CUDepthMap m;
  m.cells_w = cells_w;
  m.cells_h = cells_h;
  m.depth.assign(size_t(cells_w) * cells_h, depth);
  return m;
}

}  // namespace

TEST_CASE("depth to mask rule") {
  SUBCASE("all depth 0 maps to 0") {
    auto pm = mask::partition_mask(uniform_map(8, 8, 0), 64, 64);
    for (uint8_t v : pm.values) CHECK(v == 0);
  }
  SUBCASE("all depth 3 maps to 1") {
    auto pm = mask::partition_mask(uniform_map(8, 8, 3), 64, 64);
    for (uint8_t v : pm.values) CHECK(v == 1);
  }
  SUBCASE("depth 1 maps to 0, depth 2 maps to 1") {
    auto pm1 = mask::partition_mask(uniform_map(8, 8, 1), 64, 64);
    for (uint8_t v : pm1.values) CHECK(v == 0);
    auto pm2 = mask::partition_mask(uniform_map(8, 8, 2), 64, 64);
    for (uint8_t v : pm2.values) CHECK(v == 1);
  }
  SUBCASE("one CTU, top-left quadrant refined to depth 2") {
    auto m = uniform_map(8, 8, 1);
    for (int y = 0; y < 4; ++y)
      for (int x = 0; x < 4; ++x) m.depth[size_t(y) * 8 + x] = 2;
    auto pm = mask::partition_mask(m, 64, 64);
    for (int y = 0; y < 64; ++y)
      for (int x = 0; x < 64; ++x)
        CHECK(pm.at(x, y) == ((x < 32 && y < 32) ? 1 : 0));
  }
}

TEST_CASE("mask invariants") {
  auto f = synth_frame(256, 128, 30);
  auto res = codec::encode_intra(f, 37);
  auto pm = mask::partition_mask(res.depth_map, 256, 128);
  SUBCASE("values are binary and complementarity holds") {
    for (uint8_t v : pm.values) CHECK((v == 0 || v == 1));
    // complementary branch mask is 1 - v per pixel by construction
  }
  SUBCASE("mask area equals the fraction of deep cells") {
    int64_t deep_cells = 0;
    for (int cy = 0; cy < 128 / 8; ++cy)
      for (int cx = 0; cx < 256 / 8; ++cx)
        if (res.depth_map.at(cx, cy) >= 2) ++deep_cells;
    int64_t area = 0;
    for (uint8_t v : pm.values) area += v;
    CHECK(area == deep_cells * 64);
  }
  SUBCASE("mask is constant over each leaf CU") {
    for (int cy = 0; cy + 1 < 128 / 8; ++cy)
      for (int cx = 0; cx + 1 < 256 / 8; ++cx) {
        const int x0 = cx * 8, y0 = cy * 8;
        for (int dy = 0; dy < 8; ++dy)
          for (int dx = 0; dx < 8; ++dx)
            CHECK(pm.at(x0 + dx, y0 + dy) == pm.at(x0, y0));
      }
  }
}

TEST_CASE("invalid quadtrees are rejected") {
  auto m = uniform_map(8, 8, 0);
  m.depth[0] = 1;  // lone refined cell inside a depth-0 CTU
  CHECK_THROWS_AS(mask::partition_mask(m, 64, 64), std::invalid_argument);
}

TEST_CASE("cropping when the frame was padded") {
  auto f = synth_frame(100, 70, 31);
  auto res = codec::encode_intra(f, 32);
  auto pm = mask::partition_mask(res.depth_map, 100, 70);
  CHECK(pm.width == 100);
  CHECK(pm.height == 70);
}

TEST_CASE("pgm interchange uses 0 and 255") {
  // two CTUs: left shallow, right refined
  codec::CUDepthMap two;
  two.cells_w = 16;
  two.cells_h = 8;
  two.depth.assign(128, 0);
  for (int y = 0; y < 8; ++y)
    for (int x = 8; x < 16; ++x) two.depth[size_t(y) * 16 + x] = 2;
  auto pm = mask::partition_mask(two, 128, 64);
  auto frame = mask::to_pgm_frame(pm);
  for (size_t i = 0; i < frame.samples.size(); ++i)
    CHECK((frame.samples[i] == 0 || frame.samples[i] == 255));
  auto back = mask::from_pgm_frame(frame);
  CHECK(back.values == pm.values);
  frame.samples[3] = 128;
  CHECK_THROWS_AS(mask::from_pgm_frame(frame), std::invalid_argument);
}
