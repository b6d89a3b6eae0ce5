#include "erpf/evalharness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <stdexcept>

#include "erpf/codec.hpp"
#include "json.hpp"

namespace erpf::eval {

namespace {

namespace fs = std::filesystem;
using json = nlohmann::json;

// Least-squares cubic fit by normal equations; x is pre-centered by the
// caller. Returns coefficients c0..c3.
std::array<double, 4> fit_cubic(const std::vector<double>& x,
                                const std::vector<double>& y) {
  double m[4][5] = {};
  for (size_t i = 0; i < x.size(); ++i) {
    double pow_x[7] = {1, 0, 0, 0, 0, 0, 0};
    for (int k = 1; k <= 6; ++k) pow_x[k] = pow_x[k - 1] * x[i];
    for (int r = 0; r < 4; ++r) {
      for (int c = 0; c < 4; ++c) m[r][c] += pow_x[r + c];
      m[r][4] += pow_x[r] * y[i];
    }
  }
  // Gaussian elimination with partial pivoting
  for (int col = 0; col < 4; ++col) {
    int piv = col;
    for (int r = col + 1; r < 4; ++r)
      if (std::abs(m[r][col]) > std::abs(m[piv][col])) piv = r;
    std::swap(m[col], m[piv]);
    if (std::abs(m[col][col]) < 1e-14)
      throw std::runtime_error("bd_rate: singular fit (degenerate curve)");
    for (int r = 0; r < 4; ++r) {
      if (r == col) continue;
      const double f = m[r][col] / m[col][col];
      for (int c = col; c < 5; ++c) m[r][c] -= f * m[col][c];
    }
  }
  return {m[0][4] / m[0][0], m[1][4] / m[1][1], m[2][4] / m[2][2],
          m[3][4] / m[3][3]};
}

double integrate_cubic(const std::array<double, 4>& c, double lo, double hi) {
  auto anti = [&](double x) {
    return c[0] * x + c[1] * x * x / 2 + c[2] * x * x * x / 3 +
           c[3] * x * x * x * x / 4;
  };
  return anti(hi) - anti(lo);
}

std::string fmt_metric(double v) {
  if (std::isinf(v)) return "inf";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

json metric_json(double v) {
  if (std::isinf(v)) return json("inf");
  return json(v);
}

}  // namespace

double bd_rate(std::vector<RDPoint> anchor, std::vector<RDPoint> test) {
  auto prep = [](std::vector<RDPoint>& curve, const char* name) {
    if (curve.size() < 4)
      throw std::invalid_argument(std::string("bd_rate: ") + name +
                                  " curve needs at least 4 points");
    std::sort(curve.begin(), curve.end(),
              [](const RDPoint& a, const RDPoint& b) {
                return a.bitrate < b.bitrate;
              });
    for (size_t i = 0; i < curve.size(); ++i) {
      if (curve[i].bitrate <= 0.0)
        throw std::invalid_argument(std::string("bd_rate: ") + name +
                                    " curve has non-positive bitrate");
      if (i > 0 && curve[i].quality <= curve[i - 1].quality)
        throw std::invalid_argument(
            std::string("bd_rate: ") + name +
            " curve quality is not strictly increasing with bitrate");
    }
  };
  prep(anchor, "anchor");
  prep(test, "test");

  const double lo = std::max(anchor.front().quality, test.front().quality);
  const double hi = std::min(anchor.back().quality, test.back().quality);
  if (lo >= hi) {
    char msg[160];
    std::snprintf(msg, sizeof msg,
                  "bd_rate: quality ranges do not overlap: anchor "
                  "[%.4f, %.4f] vs test [%.4f, %.4f]",
                  anchor.front().quality, anchor.back().quality,
                  test.front().quality, test.back().quality);
    throw std::invalid_argument(msg);
  }

  const double center = (lo + hi) / 2.0;
  auto fit = [&](const std::vector<RDPoint>& curve) {
    std::vector<double> x, y;
    for (const auto& p : curve) {
      x.push_back(p.quality - center);
      y.push_back(std::log(p.bitrate));
    }
    return fit_cubic(x, y);
  };
  const auto ca = fit(anchor);
  const auto ct = fit(test);
  const double span = hi - lo;
  const double avg_a = integrate_cubic(ca, lo - center, hi - center) / span;
  const double avg_t = integrate_cubic(ct, lo - center, hi - center) / span;
  return 100.0 * (std::exp(avg_t - avg_a) - 1.0);
}

EvalReport evaluate(const std::vector<LumaFrame>& gt,
                    const std::vector<LumaFrame>& recon,
                    const EvalConfig& cfg) {
  if (gt.size() != recon.size())
    throw std::invalid_argument("evaluate: frame count mismatch: " +
                                std::to_string(gt.size()) + " vs " +
                                std::to_string(recon.size()));
  if (gt.empty()) throw std::invalid_argument("evaluate: no frames");

  EvalReport report;
  const size_t nvp = cfg.viewports.size();
  std::vector<double> sum_vp(nvp, 0.0);
  double sum_psnr = 0.0, sum_ws = 0.0;
  for (size_t i = 0; i < gt.size(); ++i) {
    FrameMetrics fm;
    const geom::WeightMap w = geom::weight_map(gt[i].width, gt[i].height);
    fm.psnr = geom::psnr(gt[i], recon[i]);
    fm.ws_psnr = geom::ws_psnr(gt[i], recon[i], w);
    for (const auto& spec : cfg.viewports) {
      const auto a = geom::extract_viewport(gt[i], spec);
      const auto b = geom::extract_viewport(recon[i], spec);
      fm.viewport_psnr.push_back(geom::psnr_real(a, b));
    }
    sum_psnr += fm.psnr;
    sum_ws += fm.ws_psnr;
    for (size_t v = 0; v < nvp; ++v) sum_vp[v] += fm.viewport_psnr[v];
    report.frames.push_back(std::move(fm));
  }
  report.average.psnr = sum_psnr / double(gt.size());
  report.average.ws_psnr = sum_ws / double(gt.size());
  for (size_t v = 0; v < nvp; ++v)
    report.average.viewport_psnr.push_back(sum_vp[v] / double(gt.size()));
  return report;
}

void write_eval_csv(const std::string& path, const EvalReport& report) {
  FILE* f = std::fopen(path.c_str(), "w");
  if (!f) throw std::runtime_error("write_eval_csv: cannot open " + path);
  std::fprintf(f, "frame,psnr,ws_psnr");
  for (size_t v = 0; v < report.average.viewport_psnr.size(); ++v)
    std::fprintf(f, ",vp%zu_psnr", v);
  std::fprintf(f, "\n");
  for (size_t i = 0; i < report.frames.size(); ++i) {
    const auto& fm = report.frames[i];
    std::fprintf(f, "%zu,%s,%s", i, fmt_metric(fm.psnr).c_str(),
                 fmt_metric(fm.ws_psnr).c_str());
    for (double v : fm.viewport_psnr)
      std::fprintf(f, ",%s", fmt_metric(v).c_str());
    std::fprintf(f, "\n");
  }
  std::fprintf(f, "average,%s,%s", fmt_metric(report.average.psnr).c_str(),
               fmt_metric(report.average.ws_psnr).c_str());
  for (double v : report.average.viewport_psnr)
    std::fprintf(f, ",%s", fmt_metric(v).c_str());
  std::fprintf(f, "\n");
  std::fclose(f);
}

void write_eval_json(const std::string& path, const EvalReport& report) {
  json j;
  j["frames"] = json::array();
  for (const auto& fm : report.frames) {
    json row;
    row["psnr"] = metric_json(fm.psnr);
    row["ws_psnr"] = metric_json(fm.ws_psnr);
    row["viewport_psnr"] = json::array();
    for (double v : fm.viewport_psnr)
      row["viewport_psnr"].push_back(metric_json(v));
    j["frames"].push_back(row);
  }
  j["average"]["psnr"] = metric_json(report.average.psnr);
  j["average"]["ws_psnr"] = metric_json(report.average.ws_psnr);
  j["average"]["viewport_psnr"] = json::array();
  for (double v : report.average.viewport_psnr)
    j["average"]["viewport_psnr"].push_back(metric_json(v));
  FILE* f = std::fopen(path.c_str(), "w");
  if (!f) throw std::runtime_error("write_eval_json: cannot open " + path);
  const std::string s = j.dump(2);
  std::fwrite(s.data(), 1, s.size(), f);
  std::fputc('\n', f);
  std::fclose(f);
}

PipelineConfig pipeline_config_from_json(const std::string& path) {
  FILE* f = std::fopen(path.c_str(), "rb");
  if (!f) throw std::runtime_error("pipeline config: cannot open " + path);
  std::string text;
  char buf[4096];
  size_t n;
  while ((n = std::fread(buf, 1, sizeof buf, f)) > 0) text.append(buf, n);
  std::fclose(f);
  json j = json::parse(text);

  PipelineConfig cfg;
  cfg.seed = j.value("seed", uint64_t(0));
  for (const auto& p : j.at("frames")) cfg.frame_paths.push_back(p);
  if (j.contains("qps")) cfg.qps = j["qps"].get<std::vector<int>>();
  cfg.model_path = j.value("model", std::string{});
  cfg.tile = j.value("tile", 1024);
  cfg.overlap = j.value("overlap", 20);
  cfg.run_deblock = j.value("deblock", true);
  cfg.out_dir = j.value("out_dir", std::string{"pipeline_out"});
  if (j.contains("viewports")) {
    cfg.eval.viewports.clear();
    for (const auto& v : j["viewports"]) {
      geom::ViewportSpec spec;
      spec.lon_deg = v.value("lon", 0.0);
      spec.lat_deg = v.value("lat", 0.0);
      spec.fov_w_deg = spec.fov_h_deg = v.value("fov", 75.0);
      spec.width = spec.height = v.value("size", 256);
      cfg.eval.viewports.push_back(spec);
    }
  }
  return cfg;
}

PipelineResult pipeline_run(const PipelineConfig& cfg) {
  if (cfg.frame_paths.empty())
    throw std::invalid_argument("pipeline: no input frames");
  if (cfg.qps.empty()) throw std::invalid_argument("pipeline: empty QP list");

  fs::create_directories(cfg.out_dir);
  const fs::path out(cfg.out_dir);
  fs::create_directories(out / "frames");

  auto stage = [](const std::string& what, auto&& fn) {
    try {
      return fn();
    } catch (const std::exception& e) {
      throw std::runtime_error("pipeline stage '" + what + "': " + e.what());
    }
  };

  std::vector<LumaFrame> gt;
  for (const auto& p : cfg.frame_paths)
    gt.push_back(stage("load", [&] { return read_pgm(p); }));

  net::ModelConfig model_cfg = net::ModelConfig::desk();
  nn::ParameterSet<float> params;
  if (!cfg.model_path.empty()) {
    auto loaded = stage("load-model", [&] { return net::load_model(cfg.model_path); });
    model_cfg = loaded.config;
    params = std::move(loaded.params);
  } else {
    params = net::init_weights<float>(model_cfg, cfg.seed);
    for (auto& [name, prm] : params)  // zero residual: pure identity filter
      std::fill(prm.tensor.values().begin(), prm.tensor.values().end(), 0.0f);
    model_cfg.global_skip = true;
  }
  params.set_requires_grad(false);

  // config snapshot
  {
    json snap;
    snap["seed"] = cfg.seed;
    snap["frames"] = cfg.frame_paths;
    snap["qps"] = cfg.qps;
    snap["model"] = cfg.model_path;
    snap["tile"] = cfg.tile;
    snap["overlap"] = cfg.overlap;
    snap["deblock"] = cfg.run_deblock;
    snap["viewports"] = json::array();
    for (const auto& v : cfg.eval.viewports)
      snap["viewports"].push_back({{"lon", v.lon_deg},
                                   {"lat", v.lat_deg},
                                   {"fov", v.fov_w_deg},
                                   {"size", v.width}});
    FILE* f = std::fopen((out / "config.json").c_str(), "w");
    if (!f) throw std::runtime_error("pipeline: cannot write config snapshot");
    const std::string s = snap.dump(2);
    std::fwrite(s.data(), 1, s.size(), f);
    std::fputc('\n', f);
    std::fclose(f);
  }

  FILE* mcsv = std::fopen((out / "metrics.csv").c_str(), "w");
  if (!mcsv) throw std::runtime_error("pipeline: cannot write metrics.csv");
  std::fprintf(mcsv, "frame,qp,variant,bits,psnr,ws_psnr");
  for (size_t v = 0; v < cfg.eval.viewports.size(); ++v)
    std::fprintf(mcsv, ",vp%zu_psnr", v);
  std::fprintf(mcsv, "\n");

  const size_t nvp = cfg.eval.viewports.size();
  struct QpAgg {
    double bits = 0.0;
    FrameMetrics anchor_sum, test_sum;
  };
  std::vector<QpAgg> agg(cfg.qps.size());
  for (auto& a : agg) {
    a.anchor_sum.viewport_psnr.assign(nvp, 0.0);
    a.test_sum.viewport_psnr.assign(nvp, 0.0);
  }

  for (size_t qi = 0; qi < cfg.qps.size(); ++qi) {
    const int qp = cfg.qps[qi];
    for (size_t fi = 0; fi < gt.size(); ++fi) {
      const auto res = stage("encode", [&] { return codec::encode_intra(gt[fi], qp); });
      const LumaFrame anchor =
          cfg.run_deblock
              ? stage("deblock", [&] { return codec::deblock(res.recon, res.depth_map, qp); })
              : res.recon;
      const auto pm = stage("mask", [&] {
        return mask::partition_mask(res.depth_map, gt[fi].width,
                                    gt[fi].height);
      });
      const auto plan = tile::plan_tiles(gt[fi].width, gt[fi].height, cfg.tile,
                                         cfg.overlap);
      const LumaFrame filtered = stage("filter", [&] {
        return tile::filter_frame(anchor, pm, model_cfg, params, plan);
      });

      char base[64];
      std::snprintf(base, sizeof base, "f%02zu_qp%02d", fi, qp);
      write_pgm((out / "frames" / (std::string(base) + "_anchor.pgm")).string(),
                anchor);
      write_pgm(
          (out / "frames" / (std::string(base) + "_filtered.pgm")).string(),
          filtered);
      codec::write_depth_map(
          (out / "frames" / (std::string(base) + "_depth.txt")).string(),
          res.depth_map);
      write_pgm((out / "frames" / (std::string(base) + "_mask.pgm")).string(),
                mask::to_pgm_frame(pm));

      auto report_one = [&](const LumaFrame& recon, const char* variant) {
        const auto rep = evaluate({gt[fi]}, {recon}, cfg.eval);
        const auto& fm = rep.frames[0];
        std::fprintf(mcsv, "%zu,%d,%s,%lld,%s,%s", fi, qp, variant,
                     static_cast<long long>(res.estimated_bits),
                     fmt_metric(fm.psnr).c_str(),
                     fmt_metric(fm.ws_psnr).c_str());
        for (double v : fm.viewport_psnr)
          std::fprintf(mcsv, ",%s", fmt_metric(v).c_str());
        std::fprintf(mcsv, "\n");
        return fm;
      };
      const FrameMetrics am = report_one(anchor, "anchor");
      const FrameMetrics tm = report_one(filtered, "filtered");
      agg[qi].bits += double(res.estimated_bits);
      agg[qi].anchor_sum.psnr += am.psnr;
      agg[qi].anchor_sum.ws_psnr += am.ws_psnr;
      agg[qi].test_sum.psnr += tm.psnr;
      agg[qi].test_sum.ws_psnr += tm.ws_psnr;
      for (size_t v = 0; v < nvp; ++v) {
        agg[qi].anchor_sum.viewport_psnr[v] += am.viewport_psnr[v];
        agg[qi].test_sum.viewport_psnr[v] += tm.viewport_psnr[v];
      }
    }
  }
  std::fclose(mcsv);

  const double nframes = double(gt.size());
  std::vector<std::string> metric_names{"psnr", "ws_psnr"};
  for (size_t v = 0; v < nvp; ++v)
    metric_names.push_back("vp" + std::to_string(v) + "_psnr");

  auto curve = [&](bool test, size_t metric) {
    std::vector<RDPoint> pts;
    for (size_t qi = 0; qi < cfg.qps.size(); ++qi) {
      const FrameMetrics& s = test ? agg[qi].test_sum : agg[qi].anchor_sum;
      double q;
      if (metric == 0)
        q = s.psnr / nframes;
      else if (metric == 1)
        q = s.ws_psnr / nframes;
      else
        q = s.viewport_psnr[metric - 2] / nframes;
      pts.push_back({agg[qi].bits / nframes, q});
    }
    return pts;
  };

  auto write_rd = [&](const std::string& name, bool test) {
    FILE* f = std::fopen((out / name).c_str(), "w");
    if (!f) throw std::runtime_error("pipeline: cannot write " + name);
    std::fprintf(f, "qp,bitrate");
    for (const auto& m : metric_names) std::fprintf(f, ",%s", m.c_str());
    std::fprintf(f, "\n");
    for (size_t qi = 0; qi < cfg.qps.size(); ++qi) {
      std::fprintf(f, "%d,%.3f", cfg.qps[qi], agg[qi].bits / nframes);
      for (size_t m = 0; m < metric_names.size(); ++m)
        std::fprintf(f, ",%s", fmt_metric(curve(test, m)[qi].quality).c_str());
      std::fprintf(f, "\n");
    }
    std::fclose(f);
  };
  write_rd("rd_anchor.csv", false);
  write_rd("rd_test.csv", true);

  PipelineResult result;
  result.out_dir = cfg.out_dir;
  result.anchor_wspsnr = curve(false, 1);
  result.test_wspsnr = curve(true, 1);
  json summary;
  for (size_t m = 0; m < metric_names.size(); ++m) {
    const double bd = stage("bd-rate", [&] { return bd_rate(curve(false, m), curve(true, m)); });
    result.bd_rates[metric_names[m]] = bd;
    summary["bd_rate_percent"][metric_names[m]] = bd;
  }
  summary["qps"] = cfg.qps;
  summary["frame_count"] = gt.size();
  summary["fit"] = "cubic-polynomial";
  FILE* f = std::fopen((out / "summary.json").c_str(), "w");
  if (!f) throw std::runtime_error("pipeline: cannot write summary.json");
  const std::string s = summary.dump(2);
  std::fwrite(s.data(), 1, s.size(), f);
  std::fputc('\n', f);
  std::fclose(f);
  return result;
}

}  // namespace erpf::eval
