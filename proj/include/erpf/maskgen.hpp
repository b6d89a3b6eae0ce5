#pragma once

#include <cstdint>
#include <vector>

#include "erpf/codec.hpp"
#include "erpf/image.hpp"

namespace erpf::mask {

// Binary partition mask at pixel resolution: 1 where the covering CU has
// depth 2 or 3, 0 where it has depth 0 or 1.
struct PartitionMask {
  int width = 0;
  int height = 0;
  std::vector<uint8_t> values;  // {0,1}

  uint8_t at(int x, int y) const { return values[size_t(y) * width + x]; }
};

// Rejects depth maps that are not valid quadtrees or too small for the
// requested frame. The result is cropped to width x height.
PartitionMask partition_mask(const codec::CUDepthMap& map, int width,
                             int height);

// PGM interchange uses {0, 255}; 255 maps to mask value 1.
LumaFrame to_pgm_frame(const PartitionMask& mask);
PartitionMask from_pgm_frame(const LumaFrame& frame);

}  // namespace erpf::mask
