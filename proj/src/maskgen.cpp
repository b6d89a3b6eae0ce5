#include "erpf/maskgen.hpp"

#include <stdexcept>

namespace erpf::mask {

PartitionMask partition_mask(const codec::CUDepthMap& map, int width,
                             int height) {
  if (width < 1 || height < 1)
    throw std::invalid_argument("partition_mask: dimensions must be positive");
  if (!codec::quadtree_valid(map))
    throw std::invalid_argument("partition_mask: depth map is not a valid quadtree");
  if (map.cells_w * 8 < width || map.cells_h * 8 < height)
    throw std::invalid_argument("partition_mask: depth map does not cover frame");

  PartitionMask m;
  m.width = width;
  m.height = height;
  m.values.resize(size_t(width) * height);
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x)
      m.values[size_t(y) * width + x] = map.at(x / 8, y / 8) >= 2 ? 1 : 0;
  return m;
}

LumaFrame to_pgm_frame(const PartitionMask& mask) {
  LumaFrame f = make_frame(mask.width, mask.height);
  for (size_t i = 0; i < mask.values.size(); ++i)
    f.samples[i] = mask.values[i] ? 255 : 0;
  return f;
}

PartitionMask from_pgm_frame(const LumaFrame& frame) {
  PartitionMask m;
  m.width = frame.width;
  m.height = frame.height;
  m.values.resize(frame.samples.size());
  for (size_t i = 0; i < frame.samples.size(); ++i) {
    if (frame.samples[i] != 0 && frame.samples[i] != 255)
      throw std::invalid_argument(
          "partition mask PGM must contain only 0 and 255");
    m.values[i] = frame.samples[i] == 255 ? 1 : 0;
  }
  return m;
}

}  // namespace erpf::mask
