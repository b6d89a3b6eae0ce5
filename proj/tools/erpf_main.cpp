#include <chrono>
#include <cstdio>
#include <filesystem>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "erpf/codec.hpp"
#include "erpf/evalharness.hpp"
#include "erpf/filternet.hpp"
#include "erpf/geometry.hpp"
#include "erpf/image.hpp"
#include "erpf/maskgen.hpp"
#include "erpf/synthetic.hpp"
#include "erpf/tiling.hpp"
#include "erpf/training.hpp"
#include "json.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace erpf;

namespace {

void dump_json(const std::string& path, const json& j) {
  FILE* f = std::fopen(path.c_str(), "w");
  if (!f) throw std::runtime_error("cannot open " + path);
  const std::string s = j.dump(2);
  std::fwrite(s.data(), 1, s.size(), f);
  std::fputc('\n', f);
  std::fclose(f);
}

json read_json(const std::string& path) {
  FILE* f = std::fopen(path.c_str(), "rb");
  if (!f) throw std::runtime_error("cannot open " + path);
  std::string text;
  char buf[4096];
  size_t n;
  while ((n = std::fread(buf, 1, sizeof buf, f)) > 0) text.append(buf, n);
  std::fclose(f);
  return json::parse(text);
}

net::ModelConfig model_config_from_json(const json& j) {
  net::ModelConfig cfg = net::ModelConfig::with_channels(j.value("channels", 128));
  cfg.sb_kernel = j.value("sb_kernel", 3);
  cfg.lb_kernel = j.value("lb_kernel", 5);
  cfg.rcab_count = j.value("rcab_count", 4);
  if (j.contains("fc_widths")) {
    auto w = j["fc_widths"].get<std::vector<int>>();
    if (w.size() != 4) throw std::runtime_error("fc_widths must have 4 entries");
    for (int i = 0; i < 4; ++i) cfg.fc_widths[i] = w[i];
  }
  cfg.global_skip = j.value("global_skip", true);
  cfg.mask_renormalize = j.value("mask_renormalize", false);
  cfg.use_mask = j.value("use_mask", true);
  cfg.use_fs = j.value("use_fs", true);
  cfg.use_ar = j.value("use_ar", true);
  cfg.validate();
  return cfg;
}

LumaFrame load_frame(const std::string& path, int raw_w, int raw_h) {
  if (path.ends_with(".y")) {
    if (raw_w < 1 || raw_h < 1)
      throw std::runtime_error("raw input needs --width/--height");
    return read_raw_y(path, raw_w, raw_h);
  }
  return read_pgm(path);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"ERP loop-filter toolkit"};
  app.require_subcommand(1);

  // ---- encode ----
  auto* enc = app.add_subcommand("encode", "intra-encode a frame");
  std::string enc_in, enc_recon, enc_depth, enc_json;
  int enc_qp = 37, enc_w = 0, enc_h = 0;
  bool enc_no_deblock = false;
  enc->add_option("--in", enc_in)->required();
  enc->add_option("--qp", enc_qp);
  enc->add_option("--width", enc_w);
  enc->add_option("--height", enc_h);
  enc->add_option("--out-recon", enc_recon);
  enc->add_option("--out-depth", enc_depth);
  enc->add_option("--out-json", enc_json);
  enc->add_flag("--no-deblock", enc_no_deblock);

  // ---- mask ----
  auto* msk = app.add_subcommand("mask", "partition mask from a depth map");
  std::string msk_depth, msk_out;
  int msk_w = 0, msk_h = 0;
  msk->add_option("--depth", msk_depth)->required();
  msk->add_option("--width", msk_w)->required();
  msk->add_option("--height", msk_h)->required();
  msk->add_option("--out", msk_out)->required();

  // ---- filter ----
  auto* flt = app.add_subcommand("filter", "run the loop filter on a frame");
  std::string flt_in, flt_mask, flt_model, flt_out, flt_timing;
  int flt_tile = 1024, flt_overlap = 20;
  flt->add_option("--in", flt_in)->required();
  flt->add_option("--mask", flt_mask)->required();
  flt->add_option("--model", flt_model)->required();
  flt->add_option("--tile", flt_tile);
  flt->add_option("--overlap", flt_overlap);
  flt->add_option("--out", flt_out)->required();
  flt->add_option("--timing", flt_timing);

  // ---- corpus ----
  auto* cor = app.add_subcommand("corpus", "build a training corpus");
  std::string cor_config, cor_out;
  cor->add_option("--config", cor_config)->required();
  cor->add_option("--out", cor_out)->required();

  // ---- train ----
  auto* trn = app.add_subcommand("train", "train the filter");
  std::string trn_config, trn_out, trn_log;
  trn->add_option("--config", trn_config)->required();
  trn->add_option("--out", trn_out)->required();
  trn->add_option("--log", trn_log);

  // ---- viewport ----
  auto* vpt = app.add_subcommand("viewport", "extract a perspective viewport");
  std::string vpt_in, vpt_out, vpt_grid;
  double vpt_lon = 0, vpt_lat = 0, vpt_fov = 75;
  int vpt_size = 256;
  vpt->add_option("--in", vpt_in)->required();
  vpt->add_option("--lon", vpt_lon);
  vpt->add_option("--lat", vpt_lat);
  vpt->add_option("--fov", vpt_fov);
  vpt->add_option("--size", vpt_size);
  vpt->add_option("--out", vpt_out)->required();
  vpt->add_option("--grid-csv", vpt_grid);

  // ---- metrics ----
  auto* met = app.add_subcommand("metrics", "PSNR / WS-PSNR / viewport PSNR");
  std::vector<std::string> met_gt, met_recon;
  std::string met_csv, met_json_path;
  double met_fov = 75;
  int met_vp_size = 256;
  met->add_option("--gt", met_gt)->required();
  met->add_option("--recon", met_recon)->required();
  met->add_option("--fov", met_fov);
  met->add_option("--vp-size", met_vp_size);
  met->add_option("--csv", met_csv);
  met->add_option("--json", met_json_path);

  // ---- bdrate ----
  auto* bdr = app.add_subcommand("bdrate", "Bjontegaard delta rate");
  std::string bdr_anchor, bdr_test;
  bdr->add_option("--anchor", bdr_anchor)->required();
  bdr->add_option("--test", bdr_test)->required();

  // ---- pipeline ----
  auto* pip = app.add_subcommand("pipeline", "encode/filter/evaluate run");
  std::string pip_config, pip_out;
  pip->add_option("--config", pip_config)->required();
  pip->add_option("--out", pip_out);

  // ---- bench ----
  auto* ben = app.add_subcommand("bench", "time the filter, report delta-T");
  std::string ben_model, ben_json;
  int ben_w = 1024, ben_h = 512, ben_tile = 1024, ben_overlap = 20,
      ben_reps = 3;
  double ben_base = 0.0;
  uint64_t ben_seed = 1;
  ben->add_option("--model", ben_model)->required();
  ben->add_option("--width", ben_w);
  ben->add_option("--height", ben_h);
  ben->add_option("--tile", ben_tile);
  ben->add_option("--overlap", ben_overlap);
  ben->add_option("--reps", ben_reps);
  ben->add_option("--base-time", ben_base);
  ben->add_option("--seed", ben_seed);
  ben->add_option("--json", ben_json);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*enc) {
      const LumaFrame frame = load_frame(enc_in, enc_w, enc_h);
      const auto res = codec::encode_intra(frame, enc_qp);
      const LumaFrame recon =
          enc_no_deblock ? res.recon
                         : codec::deblock(res.recon, res.depth_map, enc_qp);
      if (!enc_recon.empty()) write_pgm(enc_recon, recon);
      if (!enc_depth.empty()) codec::write_depth_map(enc_depth, res.depth_map);
      if (!enc_json.empty()) {
        const auto w = geom::weight_map(frame.width, frame.height);
        const double ws = geom::ws_psnr(frame, recon, w);
        json j{{"qp", enc_qp},
               {"estimated_bits", res.estimated_bits},
               {"psnr", geom::psnr(frame, recon)},
               {"ws_psnr", std::isinf(ws) ? json("inf") : json(ws)}};
        dump_json(enc_json, j);
      }
      std::printf("encoded %s qp=%d bits=%lld\n", enc_in.c_str(), enc_qp,
                  static_cast<long long>(res.estimated_bits));
    } else if (*msk) {
      const auto map = codec::read_depth_map(msk_depth);
      const auto pm = mask::partition_mask(map, msk_w, msk_h);
      write_pgm(msk_out, mask::to_pgm_frame(pm));
    } else if (*flt) {
      const LumaFrame frame = read_pgm(flt_in);
      const auto pm = mask::from_pgm_frame(read_pgm(flt_mask));
      auto model = net::load_model(flt_model);
      model.params.set_requires_grad(false);
      const auto plan =
          tile::plan_tiles(frame.width, frame.height, flt_tile, flt_overlap);
      const auto t0 = std::chrono::steady_clock::now();
      const LumaFrame outf =
          tile::filter_frame(frame, pm, model.config, model.params, plan);
      const auto t1 = std::chrono::steady_clock::now();
      write_pgm(flt_out, outf);
      const double secs = std::chrono::duration<double>(t1 - t0).count();
      if (!flt_timing.empty())
        dump_json(flt_timing, json{{"seconds", secs},
                                   {"tile", flt_tile},
                                   {"overlap", flt_overlap}});
      std::printf("filtered %s in %.3fs\n", flt_in.c_str(), secs);
    } else if (*cor) {
      const json j = read_json(cor_config);
      train::TrainConfig tc;
      tc.seed = j.value("seed", uint64_t(0));
      tc.patch = j.value("patch", 64);
      tc.middle_count = j.value("middle_count", 50);
      tc.pole_count = j.value("pole_count", 30);
      if (j.contains("qps")) tc.qps = j["qps"].get<std::vector<int>>();
      std::vector<LumaFrame> images;
      for (const auto& p : j.at("frames"))
        images.push_back(read_pgm(p.get<std::string>()));
      const auto corpus = train::build_corpus(images, tc);
      train::save_corpus(cor_out, corpus);
      std::printf("corpus: %zu records, %zu warnings -> %s\n",
                  corpus.records.size(), corpus.warnings.size(),
                  cor_out.c_str());
    } else if (*trn) {
      const json j = read_json(trn_config);
      train::TrainConfig tc;
      tc.seed = j.value("seed", uint64_t(0));
      tc.lambda = j.value("lambda", 0.5);
      tc.patch = j.value("patch", 64);
      tc.middle_count = j.value("middle_count", 50);
      tc.pole_count = j.value("pole_count", 30);
      if (j.contains("qps")) tc.qps = j["qps"].get<std::vector<int>>();
      tc.loss_fov_deg = j.value("loss_fov", 5.0);
      tc.batch = j.value("batch", 16);
      tc.steps = j.value("steps", int64_t(1000));
      tc.opt.learning_rate = j.value("lr", 1e-4);
      tc.checkpoint_every = j.value("checkpoint_every", 0);
      tc.checkpoint_dir = j.value("checkpoint_dir", std::string{});
      tc.viewport_squared = j.value("viewport_squared", false);
      tc.identity_start = j.value("identity_start", true);
      tc.auto_halve_every = j.value("halve_every", int64_t(100000));

      const net::ModelConfig mc =
          j.contains("model") ? model_config_from_json(j["model"])
                              : net::ModelConfig::desk();
      train::Corpus corpus;
      if (j.contains("corpus_dir")) {
        corpus = train::load_corpus(j["corpus_dir"].get<std::string>());
      } else {
        std::vector<LumaFrame> images;
        for (const auto& p : j.at("frames"))
          images.push_back(read_pgm(p.get<std::string>()));
        corpus = train::build_corpus(images, tc);
      }
      auto params = net::init_weights<float>(mc, tc.seed);
      const auto result = train::train(corpus, params, mc, tc);
      net::save_model(trn_out, mc, params);
      if (!trn_log.empty()) train::write_history_csv(trn_log, result.history);
      std::printf("trained %lld steps, final loss %.6g -> %s\n",
                  static_cast<long long>(tc.steps),
                  result.history.empty() ? 0.0 : result.history.back().loss,
                  trn_out.c_str());
    } else if (*vpt) {
      const LumaFrame frame = read_pgm(vpt_in);
      geom::ViewportSpec spec;
      spec.lon_deg = vpt_lon;
      spec.lat_deg = vpt_lat;
      spec.fov_w_deg = spec.fov_h_deg = vpt_fov;
      spec.width = spec.height = vpt_size;
      const auto grid = geom::viewport_grid(spec, frame.width, frame.height);
      if (!vpt_grid.empty()) geom::write_grid_csv(vpt_grid, grid);
      const auto img = geom::bilinear_sample(frame, grid);
      LumaFrame outf = make_frame(vpt_size, vpt_size);
      for (size_t i = 0; i < img.size(); ++i) {
        const long v = std::lround(img[i]);
        outf.samples[i] = uint8_t(std::min(255l, std::max(0l, v)));
      }
      write_pgm(vpt_out, outf);
    } else if (*met) {
      std::vector<LumaFrame> gt, recon;
      for (const auto& p : met_gt) gt.push_back(read_pgm(p));
      for (const auto& p : met_recon) recon.push_back(read_pgm(p));
      eval::EvalConfig ec = eval::EvalConfig::defaults(met_vp_size);
      for (auto& v : ec.viewports) v.fov_w_deg = v.fov_h_deg = met_fov;
      const auto report = eval::evaluate(gt, recon, ec);
      if (!met_csv.empty()) eval::write_eval_csv(met_csv, report);
      if (!met_json_path.empty()) eval::write_eval_json(met_json_path, report);
      std::printf("avg psnr=%s ws_psnr=%s\n",
                  std::isinf(report.average.psnr)
                      ? "inf"
                      : std::to_string(report.average.psnr).c_str(),
                  std::isinf(report.average.ws_psnr)
                      ? "inf"
                      : std::to_string(report.average.ws_psnr).c_str());
    } else if (*bdr) {
      auto read_curve = [](const std::string& path) {
        FILE* f = std::fopen(path.c_str(), "r");
        if (!f) throw std::runtime_error("cannot open " + path);
        std::vector<eval::RDPoint> pts;
        char line[512];
        while (std::fgets(line, sizeof line, f)) {
          double r, q;
          if (std::sscanf(line, "%lf,%lf", &r, &q) == 2) pts.push_back({r, q});
        }
        std::fclose(f);
        return pts;
      };
      const double bd = eval::bd_rate(read_curve(bdr_anchor), read_curve(bdr_test));
      std::printf("bd-rate: %+.2f%%\n", bd);
    } else if (*pip) {
      auto cfg = eval::pipeline_config_from_json(pip_config);
      if (!pip_out.empty()) cfg.out_dir = pip_out;
      const auto result = eval::pipeline_run(cfg);
      for (const auto& [name, bd] : result.bd_rates)
        std::printf("bd-rate %-10s %+.2f%%\n", name.c_str(), bd);
      std::printf("artifacts in %s\n", result.out_dir.c_str());
    } else if (*ben) {
      auto model = net::load_model(ben_model);
      model.params.set_requires_grad(false);
      const LumaFrame frame = synth_frame(ben_w, ben_h, ben_seed);
      const auto enc_res = codec::encode_intra(frame, 37);
      const auto pm =
          mask::partition_mask(enc_res.depth_map, ben_w, ben_h);
      const auto plan = tile::plan_tiles(ben_w, ben_h, ben_tile, ben_overlap);
      double best = 1e30;
      for (int r = 0; r < ben_reps; ++r) {
        const auto t0 = std::chrono::steady_clock::now();
        tile::filter_frame(frame, pm, model.config, model.params, plan);
        const auto t1 = std::chrono::steady_clock::now();
        best = std::min(best, std::chrono::duration<double>(t1 - t0).count());
      }
      json j{{"seconds_per_frame", best},
             {"width", ben_w},
             {"height", ben_h},
             {"tile", ben_tile},
             {"overlap", ben_overlap}};
      if (ben_base > 0.0) j["delta_t"] = tile::delta_t(ben_base, best);
      if (!ben_json.empty()) dump_json(ben_json, j);
      std::printf("%s\n", j.dump().c_str());
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
