#include "erpf/filternet.hpp"

#include <stdexcept>

namespace erpf::net {

void ModelConfig::validate() const {
  nn::check(channels >= 1, "model: channels must be at least 1");
  nn::check(sb_kernel % 2 == 1 && lb_kernel % 2 == 1 && sb_kernel >= 1 &&
                lb_kernel >= 1,
            "model: branch kernels must be odd");
  nn::check(rcab_count >= 1, "model: need at least one recalibration block");
  for (int w : fc_widths)
    nn::check(w >= 1, "model: fc widths must be positive");
  nn::check(fc_widths[3] == channels,
            "model: last fc width must equal the channel count");
}

int ModelConfig::receptive_radius() const {
  const int r3 = 1;  // (3-1)/2
  const int rb = std::max(sb_kernel, lb_kernel) / 2;
  int radius = 2 * r3;            // stem
  radius += 3 * rb;               // branch residual stack
  radius += r3;                   // fusion
  radius += rcab_count * 2 * r3;  // per block: spatial conv (dw or dense) + ff
  radius += 5 * r3;               // head residual block + output projection
  return radius;
}

std::vector<uint8_t> ModelConfig::to_block() const {
  auto put = [](std::vector<uint8_t>& b, uint32_t v) {
    for (int i = 0; i < 4; ++i) b.push_back(uint8_t(v >> (8 * i)));
  };
  std::vector<uint8_t> b;
  put(b, uint32_t(channels));
  put(b, uint32_t(sb_kernel));
  put(b, uint32_t(lb_kernel));
  put(b, uint32_t(rcab_count));
  for (int w : fc_widths) put(b, uint32_t(w));
  uint32_t flags = 0;
  if (global_skip) flags |= 1u;
  if (mask_renormalize) flags |= 2u;
  if (use_mask) flags |= 4u;
  if (use_fs) flags |= 8u;
  if (use_ar) flags |= 16u;
  put(b, flags);
  return b;
}

ModelConfig ModelConfig::from_block(const std::vector<uint8_t>& block) {
  if (block.size() != 9 * 4)
    throw std::runtime_error("model config block has unexpected size " +
                             std::to_string(block.size()));
  auto get = [&](int i) {
    const uint8_t* p = block.data() + 4 * i;
    return uint32_t(p[0]) | uint32_t(p[1]) << 8 | uint32_t(p[2]) << 16 |
           uint32_t(p[3]) << 24;
  };
  ModelConfig m;
  m.channels = int(get(0));
  m.sb_kernel = int(get(1));
  m.lb_kernel = int(get(2));
  m.rcab_count = int(get(3));
  for (int i = 0; i < 4; ++i) m.fc_widths[i] = int(get(4 + i));
  const uint32_t flags = get(8);
  m.global_skip = flags & 1u;
  m.mask_renormalize = flags & 2u;
  m.use_mask = flags & 4u;
  m.use_fs = flags & 8u;
  m.use_ar = flags & 16u;
  m.validate();
  return m;
}

std::vector<std::pair<std::string, nn::Shape>> expected_params(
    const ModelConfig& cfg) {
  cfg.validate();
  const int c = cfg.channels;
  std::vector<std::pair<std::string, nn::Shape>> out;
  auto conv = [&](const std::string& name, int oc, int ic, int k) {
    out.push_back({name + ".weight", nn::Shape{oc, ic, k, k}});
    out.push_back({name + ".bias", nn::Shape{1, oc, 1, 1}});
  };
  conv("stem.conv1", c, 1, 3);
  conv("stem.conv2", c, c, 3);
  for (int i = 1; i <= 3; ++i)
    conv("sb.res" + std::to_string(i), c, c, cfg.sb_kernel);
  for (int i = 1; i <= 3; ++i)
    conv("lb.res" + std::to_string(i), c, c, cfg.lb_kernel);
  conv("fuse", c, c, 3);
  for (int i = 1; i <= cfg.rcab_count; ++i) {
    const std::string base = "rcab" + std::to_string(i) + ".";
    if (cfg.use_fs) {
      out.push_back({base + "dw.weight", nn::Shape{c, 1, 3, 3}});
      conv(base + "pw", c, c, 1);
    } else {
      conv(base + "conv", c, c, 3);
    }
    if (cfg.use_ar) {
      int in = c;
      for (int j = 0; j < 4; ++j) {
        const int width = cfg.fc_widths[j];
        const std::string fc = base + "fc" + std::to_string(j + 1);
        out.push_back({fc + ".weight", nn::Shape{width, in, 1, 1}});
        out.push_back({fc + ".bias", nn::Shape{1, width, 1, 1}});
        in = width;
      }
    }
    conv(base + "ff", c, c, 3);
  }
  for (int i = 1; i <= 4; ++i) conv("head.conv" + std::to_string(i), c, c, 3);
  conv("head.out", 1, c, 3);
  return out;
}

void save_model(const std::string& path, const ModelConfig& cfg,
                const nn::ParameterSet<float>& params) {
  nn::save_params(path, cfg.to_block(), params);
}

LoadedModel load_model(const std::string& path) {
  auto raw = nn::load_params(path);
  LoadedModel out;
  out.config = ModelConfig::from_block(raw.config_block);
  const auto expected = expected_params(out.config);
  if (expected.size() != raw.params.size())
    throw std::runtime_error("model file " + path + " holds " +
                             std::to_string(raw.params.size()) +
                             " parameters, configuration implies " +
                             std::to_string(expected.size()));
  for (const auto& [name, shape] : expected) {
    if (!raw.params.has(name))
      throw std::runtime_error("model file " + path + " is missing '" + name +
                               "'");
    if (!(raw.params.at(name).shape() == shape))
      throw std::runtime_error("model file " + path + ": parameter '" + name +
                               "' has shape " +
                               raw.params.at(name).shape().str() +
                               ", expected " + shape.str());
  }
  out.params = std::move(raw.params);
  return out;
}

}  // namespace erpf::net
