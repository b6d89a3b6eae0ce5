#include "erpf/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <numeric>
#include <random>
#include <stdexcept>

#include "erpf/maskgen.hpp"
#include "json.hpp"

namespace erpf::train {

namespace {

namespace fs = std::filesystem;
using json = nlohmann::json;

bool rects_overlap(int r0, int c0, int r1, int c1, int size) {
  return std::abs(r0 - r1) < size && std::abs(c0 - c1) < size;
}

struct BandSampler {
  std::vector<std::pair<int, int>> taken;  // (row, col) origins

  // Draw up to `count` non-overlapping origins with rows inside the listed
  // inclusive ranges. Returns how many were placed.
  int sample(std::mt19937_64& rng, int count, int patch, int frame_w,
             const std::vector<std::pair<int, int>>& row_ranges,
             std::vector<std::pair<int, int>>& out) {
    int64_t rows_total = 0;
    for (auto [lo, hi] : row_ranges) rows_total += hi - lo + 1;
    if (rows_total <= 0 || frame_w < patch) return 0;
    int placed = 0;
    const int64_t max_attempts = int64_t(count) * 200;
    std::uniform_int_distribution<int64_t> row_pick(0, rows_total - 1);
    std::uniform_int_distribution<int> col_pick(0, frame_w - patch);
    for (int64_t a = 0; a < max_attempts && placed < count; ++a) {
      int64_t r = row_pick(rng);
      int row = 0;
      for (auto [lo, hi] : row_ranges) {
        const int64_t span = hi - lo + 1;
        if (r < span) {
          row = lo + int(r);
          break;
        }
        r -= span;
      }
      const int col = col_pick(rng);
      bool ok = true;
      for (auto [tr, tc] : taken)
        if (rects_overlap(row, col, tr, tc, patch)) {
          ok = false;
          break;
        }
      if (!ok) continue;
      taken.push_back({row, col});
      out.push_back({row, col});
      ++placed;
    }
    return placed;
  }
};

std::vector<float> crop_scaled(const LumaFrame& f, int row, int col,
                               int size) {
  std::vector<float> out(size_t(size) * size);
  for (int y = 0; y < size; ++y)
    for (int x = 0; x < size; ++x)
      out[size_t(y) * size + x] = float(f.at(col + x, row + y)) / 255.0f;
  return out;
}

}  // namespace

void TrainConfig::validate() const {
  nn::check(lambda >= 0.0, "train: lambda must be nonnegative");
  nn::check(patch >= 8 && patch % 8 == 0,
            "train: patch size must be a positive multiple of 8");
  nn::check(batch >= 1, "train: batch size must be at least 1");
  nn::check(!qps.empty(), "train: QP list must not be empty");
  nn::check(loss_fov_deg > 0.0 && loss_fov_deg < 180.0,
            "train: loss field angle must lie in (0,180)");
  opt.validate();
}

Corpus build_corpus(const std::vector<LumaFrame>& images,
                    const TrainConfig& cfg, const codec::EncoderConfig& enc) {
  cfg.validate();
  Corpus corpus;
  const int patch = cfg.patch;
  for (size_t img_id = 0; img_id < images.size(); ++img_id) {
    const LumaFrame& gt = images[img_id];
    if (gt.width < patch || gt.height < patch) {
      corpus.warnings.push_back("image " + std::to_string(img_id) +
                                " smaller than patch size, skipped");
      continue;
    }
    const geom::WeightMap wmap = geom::weight_map(gt.width, gt.height);
    for (int qp : cfg.qps) {
      const codec::CodecResult res = codec::encode_intra(gt, qp, enc);
      const LumaFrame deb = codec::deblock(res.recon, res.depth_map, qp);
      const mask::PartitionMask pm =
          mask::partition_mask(res.depth_map, gt.width, gt.height);

      const int h = gt.height;
      const int mid_lo = h / 4;
      const int mid_hi = 3 * h / 4 - patch;  // origin keeps the patch in band
      std::vector<std::pair<int, int>> mid_ranges, pole_ranges;
      if (mid_hi >= mid_lo) mid_ranges.push_back({mid_lo, mid_hi});
      if (h / 4 - patch >= 0) pole_ranges.push_back({0, h / 4 - patch});
      if (h - patch >= 3 * h / 4) pole_ranges.push_back({3 * h / 4, h - patch});

      const std::string tag = "corpus/img" + std::to_string(img_id) + "/qp" +
                              std::to_string(qp);
      std::mt19937_64 rng(nn::seed_mix(cfg.seed, tag));

      BandSampler mid_sampler, pole_sampler;
      std::vector<std::pair<int, int>> mids, poles;
      const int got_mid = mid_sampler.sample(rng, cfg.middle_count, patch,
                                             gt.width, mid_ranges, mids);
      const int got_pole = pole_sampler.sample(rng, cfg.pole_count, patch,
                                               gt.width, pole_ranges, poles);
      if (got_mid < cfg.middle_count)
        corpus.warnings.push_back(tag + ": placed " + std::to_string(got_mid) +
                                  "/" + std::to_string(cfg.middle_count) +
                                  " middle patches");
      if (got_pole < cfg.pole_count)
        corpus.warnings.push_back(tag + ": placed " +
                                  std::to_string(got_pole) + "/" +
                                  std::to_string(cfg.pole_count) +
                                  " pole patches");

      auto emit = [&](int row, int col) {
        PatchRecord rec;
        rec.size = patch;
        rec.row = row;
        rec.col = col;
        rec.qp = qp;
        rec.image_id = int(img_id);
        rec.frame_w = gt.width;
        rec.frame_h = gt.height;
        rec.gt = crop_scaled(gt, row, col, patch);
        rec.distorted = crop_scaled(deb, row, col, patch);
        rec.mask.resize(size_t(patch) * patch);
        rec.weight.resize(size_t(patch) * patch);
        for (int y = 0; y < patch; ++y)
          for (int x = 0; x < patch; ++x) {
            rec.mask[size_t(y) * patch + x] = float(pm.at(col + x, row + y));
            rec.weight[size_t(y) * patch + x] =
                float(wmap.at(col + x, row + y));
          }
        corpus.records.push_back(std::move(rec));
      };
      for (auto [r, c] : mids) emit(r, c);
      for (auto [r, c] : poles) emit(r, c);
    }
  }
  std::mt19937_64 shuffle_rng(nn::seed_mix(cfg.seed, "corpus/shuffle"));
  std::shuffle(corpus.records.begin(), corpus.records.end(), shuffle_rng);
  return corpus;
}

void save_corpus(const std::string& dir, const Corpus& corpus) {
  fs::create_directories(dir);
  FILE* bin = std::fopen((fs::path(dir) / "corpus.bin").c_str(), "wb");
  if (!bin) throw std::runtime_error("save_corpus: cannot open corpus.bin");
  FILE* man = std::fopen((fs::path(dir) / "manifest.jsonl").c_str(), "w");
  if (!man) {
    std::fclose(bin);
    throw std::runtime_error("save_corpus: cannot open manifest.jsonl");
  }
  int64_t offset = 0;
  for (const auto& rec : corpus.records) {
    json j{{"size", rec.size},       {"row", rec.row},
           {"col", rec.col},         {"qp", rec.qp},
           {"image_id", rec.image_id}, {"frame_w", rec.frame_w},
           {"frame_h", rec.frame_h}, {"offset", offset}};
    std::fprintf(man, "%s\n", j.dump().c_str());
    for (const auto* v : {&rec.gt, &rec.distorted, &rec.mask, &rec.weight}) {
      std::fwrite(v->data(), sizeof(float), v->size(), bin);
      offset += int64_t(v->size()) * sizeof(float);
    }
  }
  for (const auto& w : corpus.warnings) {
    json j{{"warning", w}};
    std::fprintf(man, "%s\n", j.dump().c_str());
  }
  std::fclose(man);
  std::fclose(bin);
}

Corpus load_corpus(const std::string& dir) {
  FILE* man = std::fopen((fs::path(dir) / "manifest.jsonl").c_str(), "r");
  if (!man) throw std::runtime_error("load_corpus: cannot open manifest.jsonl");
  FILE* bin = std::fopen((fs::path(dir) / "corpus.bin").c_str(), "rb");
  if (!bin) {
    std::fclose(man);
    throw std::runtime_error("load_corpus: cannot open corpus.bin");
  }
  Corpus corpus;
  char line[4096];
  while (std::fgets(line, sizeof line, man)) {
    json j = json::parse(line, nullptr, false);
    if (j.is_discarded()) continue;
    if (j.contains("warning")) {
      corpus.warnings.push_back(j["warning"].get<std::string>());
      continue;
    }
    PatchRecord rec;
    rec.size = j["size"].get<int>();
    rec.row = j["row"].get<int>();
    rec.col = j["col"].get<int>();
    rec.qp = j["qp"].get<int>();
    rec.image_id = j["image_id"].get<int>();
    rec.frame_w = j["frame_w"].get<int>();
    rec.frame_h = j["frame_h"].get<int>();
    const size_t n = size_t(rec.size) * rec.size;
    std::fseek(bin, long(j["offset"].get<int64_t>()), SEEK_SET);
    for (auto* v : {&rec.gt, &rec.distorted, &rec.mask, &rec.weight}) {
      v->resize(n);
      if (std::fread(v->data(), sizeof(float), n, bin) != n) {
        std::fclose(man);
        std::fclose(bin);
        throw std::runtime_error("load_corpus: truncated corpus.bin");
      }
    }
    corpus.records.push_back(std::move(rec));
  }
  std::fclose(man);
  std::fclose(bin);
  return corpus;
}

geom::BilinearTable loss_viewport_table(const PatchRecord& rec,
                                        double fov_deg) {
  // Patch center in 1-based frame coordinates, then its spherical direction.
  const double pc = rec.col + (rec.size + 1) / 2.0;
  const double qc = rec.row + (rec.size + 1) / 2.0;
  const double lon = ((pc - 0.5) / rec.frame_w - 0.5) * 360.0;
  const double lat = (0.5 - (qc - 0.5) / rec.frame_h) * 180.0;

  geom::ViewportSpec spec;
  spec.lon_deg = lon;
  spec.lat_deg = lat;
  spec.fov_w_deg = fov_deg;
  spec.fov_h_deg = fov_deg;
  spec.width = rec.size;
  spec.height = rec.size;

  geom::SampleGrid grid = geom::viewport_grid(spec, rec.frame_w, rec.frame_h);
  for (auto& p : grid.p) p -= rec.col;  // frame -> patch-local coordinates
  for (auto& q : grid.q) q -= rec.row;
  return geom::bilinear_table(grid, rec.size, rec.size, /*wrap_x=*/false);
}

TrainResult train(const Corpus& corpus, nn::ParameterSet<float>& params,
                  const net::ModelConfig& model_cfg, const TrainConfig& cfg) {
  cfg.validate();
  nn::check(!corpus.records.empty(), "train: corpus is empty");

  nn::OptimizerConfig opt = cfg.opt;
  if (opt.decay_schedule.empty() && cfg.auto_halve_every > 0) {
    double lr = opt.learning_rate;
    for (int64_t s = cfg.auto_halve_every; s <= cfg.steps;
         s += cfg.auto_halve_every) {
      lr *= 0.5;
      opt.decay_schedule.push_back({s, lr});
    }
  }

  if (cfg.identity_start) {
    for (const char* name : {"head.out.weight", "head.out.bias"}) {
      auto& v = params.at(name).values();
      std::fill(v.begin(), v.end(), 0.0f);
    }
  }
  params.set_requires_grad(true);
  std::mt19937_64 rng(nn::seed_mix(cfg.seed, "train/shuffle"));
  std::vector<size_t> order(corpus.records.size());
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  size_t cursor = 0;

  TrainResult result;
  result.history.reserve(size_t(cfg.steps));
  for (int64_t step = 1; step <= cfg.steps; ++step) {
    params.zero_grad();
    double loss_acc = 0.0, re_acc = 0.0, v_acc = 0.0;
    for (int b = 0; b < cfg.batch; ++b) {
      if (cursor == order.size()) {
        std::shuffle(order.begin(), order.end(), rng);
        cursor = 0;
      }
      const PatchRecord& rec = corpus.records[order[cursor++]];
      const nn::Shape ps{1, 1, rec.size, rec.size};
      nn::Tensor<float> gt(ps, rec.gt);
      nn::Tensor<float> dist(ps, rec.distorted);
      nn::Tensor<float> m(ps, rec.mask);
      std::vector<float> gv = rec.weight;  // unit-mean latitude weights
      const float unit = float(rec.frame_w) * float(rec.frame_h);
      for (auto& v : gv) v *= unit;
      nn::Tensor<float> g(ps, std::move(gv));

      auto restored = net::forward(dist, m, params, model_cfg);
      geom::BilinearTable table;
      const geom::BilinearTable* table_ptr = nullptr;
      if (cfg.lambda > 0.0) {
        table = loss_viewport_table(rec, cfg.loss_fov_deg);
        table_ptr = &table;
      }
      auto parts = patch_loss(gt, restored, g, table_ptr, cfg.lambda,
                              cfg.viewport_squared);
      const double record_loss = double(parts.total.item());
      if (std::isnan(record_loss))
        throw std::runtime_error(
            "train: NaN loss at step " + std::to_string(step) + " (image " +
            std::to_string(rec.image_id) + ", qp " + std::to_string(rec.qp) +
            ", origin " + std::to_string(rec.row) + "," +
            std::to_string(rec.col) + ")");
      auto scaled = nn::scalar_mul(parts.total, 1.0f / float(cfg.batch));
      nn::backward(scaled);
      loss_acc += record_loss / cfg.batch;
      re_acc += parts.re / cfg.batch;
      v_acc += parts.v / cfg.batch;
    }
    adam_step(params, opt, step);
    result.history.push_back(
        {step, loss_acc, re_acc, v_acc, opt.lr_at(step)});
    if (cfg.checkpoint_every > 0 && step % cfg.checkpoint_every == 0 &&
        !cfg.checkpoint_dir.empty()) {
      fs::create_directories(cfg.checkpoint_dir);
      char name[64];
      std::snprintf(name, sizeof name, "step%08lld.erpf",
                    static_cast<long long>(step));
      net::save_model((fs::path(cfg.checkpoint_dir) / name).string(),
                      model_cfg, params);
    }
  }
  return result;
}

void write_history_csv(const std::string& path,
                       const std::vector<HistoryRow>& history) {
  FILE* f = std::fopen(path.c_str(), "w");
  if (!f) throw std::runtime_error("write_history_csv: cannot open " + path);
  std::fprintf(f, "step,loss,loss_re,loss_v,lr\n");
  for (const auto& row : history)
    std::fprintf(f, "%lld,%.9g,%.9g,%.9g,%.9g\n",
                 static_cast<long long>(row.step), row.loss, row.re, row.v,
                 row.lr);
  std::fclose(f);
}

}  // namespace erpf::train
