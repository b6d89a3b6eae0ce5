#pragma once

#include <string>
#include <vector>

#include "erpf/filternet.hpp"
#include "erpf/image.hpp"
#include "erpf/maskgen.hpp"

namespace erpf::tile {

struct TilePlan {
  int tile_w = 0, tile_h = 0;  // effective tile extents (clamped to frame)
  int overlap = 0;
  std::vector<int> xs, ys;  // tile origins per axis
};

// Origins advance by tile - overlap; the final origin is clamped so the last
// tile ends at the frame edge. A frame smaller than the tile yields a single
// tile of the frame size along that axis.
TilePlan plan_tiles(int width, int height, int tile, int overlap);

// Per-axis half-open core intervals: each pixel belongs to the tile whose
// center is nearest, ties to the lower origin. The cores partition the axis.
std::vector<std::pair<int, int>> core_intervals(const std::vector<int>& origins,
                                                int tile, int dim);

// Filters each tile through the network and assembles the cores.
LumaFrame filter_frame(const LumaFrame& frame, const mask::PartitionMask& pm,
                       const net::ModelConfig& cfg,
                       const nn::ParameterSet<float>& params,
                       const TilePlan& plan);

struct SeamReport {
  double max_abs_diff = 0.0;             // over the whole frame, tiled vs whole
  std::vector<double> col_seam_max;      // per interior vertical seam
  std::vector<double> row_seam_max;      // per interior horizontal seam
  std::vector<int> col_seams, row_seams; // seam positions
};

// Compares tiled inference against whole-frame inference on the float
// outputs. Discrepancies at the seams are measured, never suppressed.
SeamReport seam_report(const LumaFrame& frame, const mask::PartitionMask& pm,
                       const net::ModelConfig& cfg,
                       const nn::ParameterSet<float>& params,
                       const TilePlan& plan);

void write_seam_report_json(const std::string& path, const SeamReport& report);

// Runtime overhead ratio (t_ours - t_base) / t_base.
double delta_t(double t_base, double t_ours);

}  // namespace erpf::tile
