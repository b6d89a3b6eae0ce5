#pragma once

#include <string>
#include <vector>

#include "erpf/codec.hpp"
#include "erpf/filternet.hpp"
#include "erpf/geometry.hpp"
#include "erpf/image.hpp"
#include "erpf/params.hpp"
#include "erpf/tensor.hpp"

namespace erpf::train {

// One training sample: aligned crops of the ground truth, the deblocked
// reconstruction, the partition mask and the frame-normalized weight map.
// gt/distorted are scaled to [0,1]; the weight crop keeps its frame
// normalization so equatorial patches weigh more.
struct PatchRecord {
  int size = 0;
  int row = 0, col = 0;  // origin in the frame, 0-based
  int qp = 0;
  int image_id = 0;
  int frame_w = 0, frame_h = 0;
  std::vector<float> gt, distorted, mask, weight;
};

struct TrainConfig {
  double lambda = 0.5;
  int patch = 64;
  int middle_count = 50;
  int pole_count = 30;
  std::vector<int> qps{27, 32, 37, 42};
  double loss_fov_deg = 5.0;
  nn::OptimizerConfig opt;
  int batch = 16;
  int64_t steps = 0;
  uint64_t seed = 0;
  int checkpoint_every = 0;  // 0 disables
  std::string checkpoint_dir;
  // Viewport term: per-pixel absolute difference by default; squared
  // difference is available for ablation.
  bool viewport_squared = false;
  // When the optimizer has no explicit schedule, halve the rate every
  // this many steps (0 disables).
  int64_t auto_halve_every = 100000;
  // Zero the output projection before the first step so training starts from
  // the identity restoration and can only move away from it on merit. Turn
  // off when resuming from a checkpoint.
  bool identity_start = true;

  void validate() const;
};

struct Corpus {
  std::vector<PatchRecord> records;
  std::vector<std::string> warnings;
};

// Encodes every image at every configured QP, deblocks, and samples
// non-overlapping patches: middle band rows [H/4, 3H/4), remaining rows form
// the two pole bands. Record order is a seeded shuffle.
Corpus build_corpus(const std::vector<LumaFrame>& images,
                    const TrainConfig& cfg,
                    const codec::EncoderConfig& enc = {});

void save_corpus(const std::string& dir, const Corpus& corpus);
Corpus load_corpus(const std::string& dir);

// Loss-side viewport: centered on the patch center's spherical direction,
// square field of loss_fov_deg, rasterized at patch resolution and sampled
// from the patch-local raster (clamped).
geom::BilinearTable loss_viewport_table(const PatchRecord& rec,
                                        double fov_deg);

template <typename T>
struct LossParts {
  nn::Tensor<T> total;
  double re = 0.0;
  double v = 0.0;
};

// L = L_re + lambda * L_v with
//   L_re = (1/N) sum (Y - I~)^2 .* G
//   L_v  = (1/N) sum sqrt((V - V~)^2)   (absolute difference as written;
//                                        squared under viewport_squared)
// Pass a null table (or lambda 0) to drop the viewport term.
template <typename T>
LossParts<T> patch_loss(const nn::Tensor<T>& gt, const nn::Tensor<T>& restored,
                        const nn::Tensor<T>& weights,
                        const geom::BilinearTable* table, double lambda,
                        bool viewport_squared = false) {
  nn::check(gt.shape() == restored.shape() &&
                gt.shape() == weights.shape(),
            "patch_loss: shape mismatch " + gt.shape().str() + " / " +
                restored.shape().str() + " / " + weights.shape().str());
  auto diff = nn::sub(gt, restored);
  auto re = nn::scalar_mul(nn::sum(nn::mul(nn::mul(diff, diff), weights)),
                           T(1) / T(gt.numel()));
  LossParts<T> parts;
  parts.re = double(re.item());
  if (lambda == 0.0 || table == nullptr) {
    parts.total = re;
    return parts;
  }
  auto vp = nn::gather_bilinear(restored, table->idx, table->w, table->height,
                                table->width);
  auto vp_gt =
      nn::gather_bilinear(gt, table->idx, table->w, table->height,
                          table->width);
  auto vdiff = nn::sub(vp, vp_gt);
  auto lv = viewport_squared ? nn::mean(nn::mul(vdiff, vdiff))
                             : nn::mean(nn::abs_val(vdiff));
  parts.v = double(lv.item());
  parts.total = nn::add(re, nn::scalar_mul(lv, T(lambda)));
  return parts;
}

struct HistoryRow {
  int64_t step = 0;
  double loss = 0.0, re = 0.0, v = 0.0, lr = 0.0;
};

struct TrainResult {
  std::vector<HistoryRow> history;
};

// Mini-batch Adam over the shuffled corpus. Deterministic for a fixed seed.
//
// The stored weight crops keep their frame normalization (they sum to 1 over
// the source frame); the loss consumes them rescaled to unit mean, i.e.
// multiplied by the frame pixel count. That keeps the relative latitude
// weighting while the weighted term trains in plain-MSE units; with the
// normalized values (around 1e-5 and below) its gradients sink under the
// Adam epsilon and the term stops training at all.
TrainResult train(const Corpus& corpus, nn::ParameterSet<float>& params,
                  const net::ModelConfig& model_cfg, const TrainConfig& cfg);

void write_history_csv(const std::string& path,
                       const std::vector<HistoryRow>& history);

}  // namespace erpf::train
