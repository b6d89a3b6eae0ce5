#pragma once

#include <array>
#include <string>

#include "erpf/image.hpp"
#include "erpf/maskgen.hpp"
#include "erpf/params.hpp"
#include "erpf/tensor.hpp"

namespace erpf::net {

struct ModelConfig {
  int channels = 128;
  int sb_kernel = 3;
  int lb_kernel = 5;
  int rcab_count = 4;
  std::array<int, 4> fc_widths{512, 256, 128, 128};
  bool global_skip = true;
  bool mask_renormalize = false;
  // ablation switches
  bool use_mask = true;  // off: plain convolutions in both branches
  bool use_fs = true;    // off: single dense 3x3 instead of depthwise+pointwise
  bool use_ar = true;    // off: no channel recalibration

  static ModelConfig with_channels(int c) {
    ModelConfig m;
    m.channels = c;
    m.fc_widths = {4 * c, 2 * c, c, c};
    return m;
  }

  // Small configuration used by tests and smoke runs.
  static ModelConfig desk() {
    ModelConfig m = with_channels(16);
    m.rcab_count = 1;
    return m;
  }

  void validate() const;

  // Halo a pixel needs so its output never sees a crop boundary: the sum of
  // (kernel-1)/2 along the deepest spatial path. Channel recalibration pools
  // globally and is not counted; exact tile equivalence additionally needs
  // input-independent channel scales.
  int receptive_radius() const;

  std::vector<uint8_t> to_block() const;
  static ModelConfig from_block(const std::vector<uint8_t>& block);

  bool operator==(const ModelConfig&) const = default;
};

// Parameter names and shapes implied by a configuration, in build order.
std::vector<std::pair<std::string, nn::Shape>> expected_params(
    const ModelConfig& cfg);

template <typename T>
nn::ParameterSet<T> init_weights(const ModelConfig& cfg, uint64_t seed) {
  cfg.validate();
  nn::ParameterSet<T> p;
  for (const auto& [name, shape] : expected_params(cfg)) {
    const bool is_bias = name.ends_with(".bias");
    if (is_bias)
      p.add(name, nn::Tensor<T>(shape, T(0)));
    else
      p.add(name, nn::xavier_init<T>(shape, nn::seed_mix(seed, name)));
  }
  return p;
}

void save_model(const std::string& path, const ModelConfig& cfg,
                const nn::ParameterSet<float>& params);

struct LoadedModel {
  ModelConfig config;
  nn::ParameterSet<float> params;
};

// Re-derives the expected parameter list from the embedded configuration and
// cross-checks every name and shape.
LoadedModel load_model(const std::string& path);

// ---- forward pass ----------------------------------------------------

// Residual stack of three masked convolutions: conv-relu, conv-relu, conv,
// add skip, relu. All three layers share one mask.
template <typename T>
nn::Tensor<T> branch_residual(const nn::Tensor<T>& f0,
                              const nn::Tensor<T>& branch_mask,
                              const nn::ParameterSet<T>& p,
                              const std::string& prefix,
                              const ModelConfig& cfg) {
  auto layer = [&](const nn::Tensor<T>& x, int i, bool act) {
    const std::string base = prefix + "res" + std::to_string(i);
    nn::Tensor<T> y;
    if (cfg.use_mask)
      y = nn::partial_conv(x, branch_mask, p.at(base + ".weight"),
                           p.at(base + ".bias"), cfg.mask_renormalize);
    else
      y = nn::conv2d(x, p.at(base + ".weight"), p.at(base + ".bias"));
    return act ? nn::relu(y) : y;
  };
  auto h = layer(f0, 1, true);
  h = layer(h, 2, true);
  h = layer(h, 3, false);
  return nn::relu(nn::add(h, f0));
}

// Shared two-conv stem, complementary-mask branches, element-wise fusion.
template <typename T>
nn::Tensor<T> feature_extraction(const nn::Tensor<T>& image,
                                 const nn::Tensor<T>& mask,
                                 const nn::ParameterSet<T>& p,
                                 const ModelConfig& cfg) {
  const nn::Shape& is = image.shape();
  nn::check(is.c == 1, "feature_extraction: input must be single channel");
  nn::check(mask.shape() == nn::Shape{1, 1, is.h, is.w},
            "feature_extraction: mask shape " + mask.shape().str() +
                " does not match frame " + is.str());

  auto f = nn::relu(
      nn::conv2d(image, p.at("stem.conv1.weight"), p.at("stem.conv1.bias")));
  auto f0 = nn::relu(
      nn::conv2d(f, p.at("stem.conv2.weight"), p.at("stem.conv2.bias")));

  std::vector<T> inv(mask.values().size());
  for (size_t i = 0; i < inv.size(); ++i) inv[i] = T(1) - mask.values()[i];
  nn::Tensor<T> mask_lb(mask.shape(), std::move(inv));

  auto sb = branch_residual(f0, mask, p, "sb.", cfg);
  auto lb = branch_residual(f0, mask_lb, p, "lb.", cfg);
  return nn::conv2d(nn::add(sb, lb), p.at("fuse.weight"), p.at("fuse.bias"));
}

// One recalibration block: feature separation, channel-wise scaling from the
// pooled descriptor, residual fusion.
template <typename T>
nn::Tensor<T> rcab_forward(const nn::Tensor<T>& x,
                           const nn::ParameterSet<T>& p, int index,
                           const ModelConfig& cfg) {
  nn::check(x.shape().c == cfg.channels,
            "rcab_forward: expected " + std::to_string(cfg.channels) +
                " channels, got " + x.shape().str());
  const std::string base = "rcab" + std::to_string(index) + ".";
  nn::Tensor<T> st;
  if (cfg.use_fs) {
    auto s = nn::depthwise_conv(x, p.at(base + "dw.weight"));
    st = nn::pointwise_conv(s, p.at(base + "pw.weight"),
                            p.at(base + "pw.bias"));
  } else {
    st = nn::conv2d(x, p.at(base + "conv.weight"), p.at(base + "conv.bias"));
  }
  nn::Tensor<T> sh = st;
  if (cfg.use_ar) {
    auto z = nn::global_avg_pool(st);
    z = nn::fully_connected(z, p.at(base + "fc1.weight"),
                            p.at(base + "fc1.bias"), nn::Activation::Relu);
    z = nn::fully_connected(z, p.at(base + "fc2.weight"),
                            p.at(base + "fc2.bias"), nn::Activation::Relu);
    z = nn::fully_connected(z, p.at(base + "fc3.weight"),
                            p.at(base + "fc3.bias"), nn::Activation::Relu);
    z = nn::fully_connected(z, p.at(base + "fc4.weight"),
                            p.at(base + "fc4.bias"), nn::Activation::Sigmoid);
    sh = nn::scale_channels(st, z);
  }
  auto xt = nn::conv2d(sh, p.at(base + "ff.weight"), p.at(base + "ff.bias"));
  return nn::relu(nn::add(xt, x));
}

// Four-conv residual block, then a 3x3 projection to one channel; adds the
// input back when global_skip is on and clamps to [0,1].
template <typename T>
nn::Tensor<T> reconstruct(const nn::Tensor<T>& xk, const nn::Tensor<T>& image,
                          const nn::ParameterSet<T>& p,
                          const ModelConfig& cfg) {
  auto h = nn::relu(
      nn::conv2d(xk, p.at("head.conv1.weight"), p.at("head.conv1.bias")));
  h = nn::relu(
      nn::conv2d(h, p.at("head.conv2.weight"), p.at("head.conv2.bias")));
  h = nn::relu(
      nn::conv2d(h, p.at("head.conv3.weight"), p.at("head.conv3.bias")));
  h = nn::conv2d(h, p.at("head.conv4.weight"), p.at("head.conv4.bias"));
  auto r = nn::relu(nn::add(h, xk));
  auto o = nn::conv2d(r, p.at("head.out.weight"), p.at("head.out.bias"));
  if (cfg.global_skip) o = nn::add(image, o);
  return nn::clamp01(o);
}

template <typename T>
nn::Tensor<T> forward(const nn::Tensor<T>& image, const nn::Tensor<T>& mask,
                      const nn::ParameterSet<T>& p, const ModelConfig& cfg) {
  cfg.validate();
  auto x = feature_extraction(image, mask, p, cfg);
  for (int i = 1; i <= cfg.rcab_count; ++i) x = rcab_forward(x, p, i, cfg);
  return reconstruct(x, image, p, cfg);
}

// ---- raster adapters -------------------------------------------------

template <typename T>
nn::Tensor<T> frame_to_tensor(const LumaFrame& f) {
  std::vector<T> v(f.samples.size());
  for (size_t i = 0; i < v.size(); ++i) v[i] = T(f.samples[i]) / T(255);
  return nn::Tensor<T>(nn::Shape{1, 1, f.height, f.width}, std::move(v));
}

template <typename T>
LumaFrame tensor_to_frame(const nn::Tensor<T>& t) {
  const nn::Shape& s = t.shape();
  nn::check(s.n == 1 && s.c == 1, "tensor_to_frame: need a (1,1,h,w) tensor");
  LumaFrame f = make_frame(s.w, s.h);
  for (size_t i = 0; i < f.samples.size(); ++i) {
    const long v = std::lround(double(t.values()[i]) * 255.0);
    f.samples[i] = uint8_t(std::min(255l, std::max(0l, v)));
  }
  return f;
}

template <typename T>
nn::Tensor<T> mask_to_tensor(const mask::PartitionMask& m) {
  std::vector<T> v(m.values.size());
  for (size_t i = 0; i < v.size(); ++i) v[i] = T(m.values[i]);
  return nn::Tensor<T>(nn::Shape{1, 1, m.height, m.width}, std::move(v));
}

}  // namespace erpf::net
