#pragma once

#include <map>
#include <string>
#include <vector>

#include "erpf/filternet.hpp"
#include "erpf/geometry.hpp"
#include "erpf/image.hpp"
#include "erpf/tiling.hpp"

namespace erpf::eval {

struct RDPoint {
  double bitrate = 0.0;  // bits (or bits/frame); must be positive
  double quality = 0.0;  // dB
};

// Bjontegaard delta rate in percent: cubic least-squares fit of log-bitrate
// over quality per curve, integrated across the overlapping quality range;
// 100 * (exp(mean log-rate difference) - 1). Negative means the test curve
// saves rate.
double bd_rate(std::vector<RDPoint> anchor, std::vector<RDPoint> test);

struct FrameMetrics {
  double psnr = 0.0;
  double ws_psnr = 0.0;
  std::vector<double> viewport_psnr;
};

struct EvalConfig {
  std::vector<geom::ViewportSpec> viewports;

  // Two static centers at the configured field angle; stand-ins for the
  // dynamic per-sequence trajectories of formal test conditions.
  static EvalConfig defaults(int raster = 256) {
    EvalConfig c;
    geom::ViewportSpec vp0;
    vp0.width = vp0.height = raster;
    c.viewports.push_back(vp0);
    geom::ViewportSpec vp1 = vp0;
    vp1.lon_deg = 90.0;
    c.viewports.push_back(vp1);
    return c;
  }
};

struct EvalReport {
  std::vector<FrameMetrics> frames;
  FrameMetrics average;
};

EvalReport evaluate(const std::vector<LumaFrame>& gt,
                    const std::vector<LumaFrame>& recon,
                    const EvalConfig& cfg);

void write_eval_csv(const std::string& path, const EvalReport& report);
void write_eval_json(const std::string& path, const EvalReport& report);

struct PipelineConfig {
  uint64_t seed = 0;
  std::vector<std::string> frame_paths;  // PGM inputs
  std::vector<int> qps{27, 32, 37, 42};
  std::string model_path;  // trained weights; empty -> zero-residual identity
  int tile = 1024;
  int overlap = 20;
  bool run_deblock = true;
  EvalConfig eval = EvalConfig::defaults();
  std::string out_dir;
};

PipelineConfig pipeline_config_from_json(const std::string& path);

struct PipelineResult {
  // metric name -> BD-rate percent of (codec + filter) against codec alone
  std::map<std::string, double> bd_rates;
  std::vector<RDPoint> anchor_wspsnr, test_wspsnr;
  std::string out_dir;
};

// encode -> deblock -> mask -> filter -> evaluate, per frame and QP; writes
// per-stage artifacts, RD curves, and a summary into out_dir.
PipelineResult pipeline_run(const PipelineConfig& cfg);

}  // namespace erpf::eval
