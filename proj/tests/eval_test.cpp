#include <cmath>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include "doctest.h"
#include "erpf/evalharness.hpp"
#include "erpf/synthetic.hpp"

using namespace erpf;

namespace {

std::vector<eval::RDPoint> sample_curve() {
  return {{1000, 32.0}, {1800, 34.5}, {3200, 37.2}, {6000, 40.1}};
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  return std::string(std::istreambuf_iterator<char>(in), {});
}

}  // namespace

TEST_CASE("bd-rate") {
  SUBCASE("identical curves give exactly zero") {
    CHECK(eval::bd_rate(sample_curve(), sample_curve()) ==
          doctest::Approx(0.0).epsilon(1e-12));
  }
  SUBCASE("uniform +10% rate shift integrates to +10.00%") {
    auto test = sample_curve();
    for (auto& p : test) p.bitrate *= 1.10;
    CHECK(eval::bd_rate(sample_curve(), test) ==
          doctest::Approx(10.0).epsilon(1e-3));
  }
  SUBCASE("uniform quality gain turns the rate negative") {
    auto test = sample_curve();
    for (auto& p : test) p.quality += 0.8;
    CHECK(eval::bd_rate(sample_curve(), test) < 0.0);
  }
  SUBCASE("swap symmetry holds at the log-rate level") {
    auto test = sample_curve();
    for (auto& p : test) {
      p.bitrate *= 1.17;
      p.quality += 0.3;
    }
    const double ab = eval::bd_rate(sample_curve(), test);
    const double ba = eval::bd_rate(test, sample_curve());
    CHECK((1.0 + ab / 100.0) * (1.0 + ba / 100.0) ==
          doctest::Approx(1.0).epsilon(1e-9));
  }
  SUBCASE("too few points are rejected") {
    auto short_curve = sample_curve();
    short_curve.pop_back();
    CHECK_THROWS_AS(eval::bd_rate(short_curve, sample_curve()),
                    std::invalid_argument);
  }
  SUBCASE("non-overlapping ranges are rejected with both ranges named") {
    auto low = sample_curve();
    auto high = sample_curve();
    for (auto& p : high) p.quality += 20.0;
    CHECK_THROWS_WITH_AS(eval::bd_rate(low, high), doctest::Contains("32.0"),
                         std::invalid_argument);
  }
  SUBCASE("non-monotone curves are rejected") {
    auto bad = sample_curve();
    bad[2].quality = 30.0;
    CHECK_THROWS_AS(eval::bd_rate(bad, sample_curve()),
                    std::invalid_argument);
  }
}

TEST_CASE("evaluate") {
  std::vector<LumaFrame> gt{synth_frame(128, 64, 401),
                            synth_frame(128, 64, 402)};
  auto cfg = eval::EvalConfig::defaults(64);

  SUBCASE("identical frame sets report the infinity marker everywhere") {
    auto rep = eval::evaluate(gt, gt, cfg);
    for (const auto& fm : rep.frames) {
      CHECK(std::isinf(fm.psnr));
      CHECK(std::isinf(fm.ws_psnr));
      for (double v : fm.viewport_psnr) CHECK(std::isinf(v));
    }
    CHECK(std::isinf(rep.average.ws_psnr));
  }
  SUBCASE("uniform +1 offset lands at 48.1308 dB per frame") {
    auto recon = gt;
    for (auto& f : recon)
      for (auto& s : f.samples) s = uint8_t(s < 255 ? s + 1 : s - 1);
    auto rep = eval::evaluate(gt, recon, cfg);
    for (const auto& fm : rep.frames) {
      CHECK(fm.psnr == doctest::Approx(48.1308).epsilon(1e-5));
      CHECK(fm.ws_psnr == doctest::Approx(48.1308).epsilon(1e-5));
    }
  }
  SUBCASE("reordering both lists reorders rows and keeps averages") {
    std::vector<LumaFrame> recon{synth_frame(128, 64, 403),
                                 synth_frame(128, 64, 404)};
    auto rep = eval::evaluate(gt, recon, cfg);
    std::vector<LumaFrame> gt2{gt[1], gt[0]}, recon2{recon[1], recon[0]};
    auto rep2 = eval::evaluate(gt2, recon2, cfg);
    CHECK(rep.frames[0].psnr == rep2.frames[1].psnr);
    CHECK(rep.frames[1].ws_psnr == rep2.frames[0].ws_psnr);
    CHECK(rep.average.psnr == doctest::Approx(rep2.average.psnr).epsilon(1e-12));
  }
  SUBCASE("frame count mismatch is rejected") {
    std::vector<LumaFrame> one{gt[0]};
    CHECK_THROWS_AS(eval::evaluate(gt, one, cfg), std::invalid_argument);
  }
}

TEST_CASE("pipeline") {
  namespace fs = std::filesystem;
  const std::string dir = "/tmp/erpf_pipeline_test";
  fs::remove_all(dir);
  fs::create_directories(dir);

  // two small frames on disk
  std::vector<std::string> paths;
  for (int i = 0; i < 2; ++i) {
    auto f = synth_frame(192, 128, 500 + i);
    const std::string p = dir + "/frame" + std::to_string(i) + ".pgm";
    write_pgm(p, f);
    paths.push_back(p);
  }

  eval::PipelineConfig cfg;
  cfg.frame_paths = paths;
  cfg.qps = {27, 32, 37, 42};
  cfg.tile = 1024;
  cfg.overlap = 20;
  cfg.eval = eval::EvalConfig::defaults(48);
  cfg.out_dir = dir + "/run1";

  SUBCASE("identity model gives a zero bd-rate") {
    auto result = eval::pipeline_run(cfg);
    for (const auto& [name, bd] : result.bd_rates)
      CHECK(bd == doctest::Approx(0.0).epsilon(1e-9));
    CHECK(fs::exists(fs::path(cfg.out_dir) / "summary.json"));
    CHECK(fs::exists(fs::path(cfg.out_dir) / "metrics.csv"));
    CHECK(fs::exists(fs::path(cfg.out_dir) / "rd_anchor.csv"));
  }
  SUBCASE("byte-identical reports for identical configs") {
    auto c1 = cfg;
    c1.out_dir = dir + "/run_a";
    auto c2 = cfg;
    c2.out_dir = dir + "/run_b";
    eval::pipeline_run(c1);
    eval::pipeline_run(c2);
    CHECK(slurp(c1.out_dir + "/metrics.csv") ==
          slurp(c2.out_dir + "/metrics.csv"));
    CHECK(slurp(c1.out_dir + "/summary.json") ==
          slurp(c2.out_dir + "/summary.json"));
    CHECK(slurp(c1.out_dir + "/rd_test.csv") ==
          slurp(c2.out_dir + "/rd_test.csv"));
  }
}
