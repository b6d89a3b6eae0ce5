#pragma once

#include <cstdio>
#include <cstring>
#include <map>
#include <random>
#include <utility>

#include "erpf/tensor.hpp"

namespace erpf::nn {

struct OptimizerConfig {
  double learning_rate = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  // (step, lr) pairs; the rate switches exactly at the listed step.
  std::vector<std::pair<int64_t, double>> decay_schedule;

  void validate() const {
    check(learning_rate > 0, "optimizer: learning_rate must be positive");
    check(beta1 > 0 && beta1 < 1 && beta2 > 0 && beta2 < 1,
          "optimizer: betas must lie in (0,1)");
    check(epsilon > 0, "optimizer: epsilon must be positive");
    for (size_t i = 1; i < decay_schedule.size(); ++i)
      check(decay_schedule[i].first > decay_schedule[i - 1].first,
            "optimizer: decay schedule steps must be strictly increasing");
  }

  double lr_at(int64_t step) const {
    double lr = learning_rate;
    for (const auto& [s, l] : decay_schedule)
      if (step >= s) lr = l;
    return lr;
  }
};

template <typename T>
struct Param {
  Tensor<T> tensor;
  std::vector<T> m, v;  // Adam moments, lazily sized
};

// Named parameters in stable insertion order; the order defines the weight
// file layout and the optimizer traversal.
template <typename T>
class ParameterSet {
 public:
  void add(const std::string& name, Tensor<T> t) {
    check(!index_.count(name), "params: duplicate name '" + name + "'");
    index_[name] = entries_.size();
    entries_.push_back({name, Param<T>{std::move(t), {}, {}}});
  }

  bool has(const std::string& name) const { return index_.count(name) > 0; }

  Tensor<T>& at(const std::string& name) {
    auto it = index_.find(name);
    check(it != index_.end(), "params: unknown name '" + name + "'");
    return entries_[it->second].second.tensor;
  }
  const Tensor<T>& at(const std::string& name) const {
    auto it = index_.find(name);
    check(it != index_.end(), "params: unknown name '" + name + "'");
    return entries_[it->second].second.tensor;
  }

  size_t size() const { return entries_.size(); }
  auto begin() { return entries_.begin(); }
  auto end() { return entries_.end(); }
  auto begin() const { return entries_.begin(); }
  auto end() const { return entries_.end(); }

  std::vector<std::string> names() const {
    std::vector<std::string> out;
    for (const auto& e : entries_) out.push_back(e.first);
    return out;
  }

  void zero_grad() {
    for (auto& [name, p] : entries_) {
      auto& g = p.tensor.node()->grad;
      g.assign(p.tensor.values().size(), T(0));
    }
  }

  void set_requires_grad(bool b) {
    for (auto& [name, p] : entries_) p.tensor.set_requires_grad(b);
  }

  Param<T>& param(const std::string& name) {
    return entries_[index_.at(name)].second;
  }

 private:
  std::vector<std::pair<std::string, Param<T>>> entries_;
  std::map<std::string, size_t> index_;
};

// Bias-corrected Adam step over every parameter with an accumulated
// gradient. `step` is 1-based.
template <typename T>
void adam_step(ParameterSet<T>& params, const OptimizerConfig& cfg,
               int64_t step) {
  cfg.validate();
  check(step >= 1, "adam_step: step must be >= 1");
  const double lr = cfg.lr_at(step);
  const double bc1 = 1.0 - std::pow(cfg.beta1, double(step));
  const double bc2 = 1.0 - std::pow(cfg.beta2, double(step));
  for (auto& [name, p] : params) {
    auto& t = p.tensor;
    if (t.grad().size() != t.values().size()) continue;  // never touched
    if (p.m.size() != t.values().size()) {
      p.m.assign(t.values().size(), T(0));
      p.v.assign(t.values().size(), T(0));
    }
    for (size_t i = 0; i < t.values().size(); ++i) {
      const double g = double(t.grad()[i]);
      if (std::isnan(g) || std::isinf(g))
        throw std::runtime_error("adam_step: non-finite gradient in '" + name +
                                 "' at element " + std::to_string(i));
      const double m = cfg.beta1 * double(p.m[i]) + (1.0 - cfg.beta1) * g;
      const double v = cfg.beta2 * double(p.v[i]) + (1.0 - cfg.beta2) * g * g;
      p.m[i] = T(m);
      p.v[i] = T(v);
      const double mhat = m / bc1;
      const double vhat = v / bc2;
      t.values()[i] =
          T(double(t.values()[i]) - lr * mhat / (std::sqrt(vhat) + cfg.epsilon));
    }
  }
}

// Glorot-uniform draw: U(-a, a) with a = sqrt(6 / (fan_in + fan_out)).
// fan_in = c*h*w, fan_out = n*h*w of the kernel shape.
template <typename T>
Tensor<T> xavier_init(Shape s, uint64_t seed) {
  const int64_t fan_in = int64_t(s.c) * s.h * s.w;
  const int64_t fan_out = int64_t(s.n) * s.h * s.w;
  check(fan_in > 0 && fan_out > 0,
        "xavier_init: zero fan for shape " + s.str());
  const double a = std::sqrt(6.0 / double(fan_in + fan_out));
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> dist(-a, a);
  std::vector<T> vals(static_cast<size_t>(s.numel()));
  for (auto& v : vals) v = T(dist(rng));
  return Tensor<T>(s, std::move(vals));
}

// ---- weight file ----------------------------------------------------------
//
// magic "ERPF", u32 version, u32 config-block size, config-block bytes,
// u32 parameter count, then per parameter:
//   u32 name length, name bytes, 4 x i32 shape, float32 LE row-major data.

inline constexpr uint32_t kWeightFormatVersion = 1;

namespace detail {

inline void put_u32(std::vector<uint8_t>& b, uint32_t v) {
  for (int i = 0; i < 4; ++i) b.push_back(uint8_t(v >> (8 * i)));
}
inline uint32_t get_u32(const uint8_t* p) {
  return uint32_t(p[0]) | uint32_t(p[1]) << 8 | uint32_t(p[2]) << 16 |
         uint32_t(p[3]) << 24;
}

}  // namespace detail

inline void save_params(const std::string& path,
                        const std::vector<uint8_t>& config_block,
                        const ParameterSet<float>& params) {
  std::vector<uint8_t> buf;
  buf.insert(buf.end(), {'E', 'R', 'P', 'F'});
  detail::put_u32(buf, kWeightFormatVersion);
  detail::put_u32(buf, uint32_t(config_block.size()));
  buf.insert(buf.end(), config_block.begin(), config_block.end());
  detail::put_u32(buf, uint32_t(params.size()));
  for (const auto& [name, p] : params) {
    detail::put_u32(buf, uint32_t(name.size()));
    buf.insert(buf.end(), name.begin(), name.end());
    const Shape& s = p.tensor.shape();
    for (int d : {s.n, s.c, s.h, s.w}) detail::put_u32(buf, uint32_t(d));
    const auto& vals = p.tensor.values();
    size_t off = buf.size();
    buf.resize(off + vals.size() * 4);
    std::memcpy(buf.data() + off, vals.data(), vals.size() * 4);
  }
  FILE* f = std::fopen(path.c_str(), "wb");
  if (!f) throw std::runtime_error("save_params: cannot open " + path);
  size_t n = std::fwrite(buf.data(), 1, buf.size(), f);
  std::fclose(f);
  if (n != buf.size())
    throw std::runtime_error("save_params: short write to " + path);
}

struct LoadedParams {
  std::vector<uint8_t> config_block;
  ParameterSet<float> params;
};

inline LoadedParams load_params(const std::string& path) {
  FILE* f = std::fopen(path.c_str(), "rb");
  if (!f) throw std::runtime_error("load_params: cannot open " + path);
  std::fseek(f, 0, SEEK_END);
  long len = std::ftell(f);
  std::fseek(f, 0, SEEK_SET);
  std::vector<uint8_t> buf(static_cast<size_t>(len), uint8_t(0));
  size_t got = std::fread(buf.data(), 1, buf.size(), f);
  std::fclose(f);
  if (got != buf.size())
    throw std::runtime_error("load_params: short read from " + path);

  size_t pos = 0;
  auto need = [&](size_t k) {
    if (pos + k > buf.size())
      throw std::runtime_error("load_params: truncated file " + path);
  };
  need(4);
  if (std::memcmp(buf.data(), "ERPF", 4) != 0)
    throw std::runtime_error("load_params: bad magic in " + path);
  pos = 4;
  need(4);
  uint32_t version = detail::get_u32(buf.data() + pos);
  pos += 4;
  if (version != kWeightFormatVersion)
    throw std::runtime_error("load_params: unsupported version " +
                             std::to_string(version));
  need(4);
  uint32_t cfg_size = detail::get_u32(buf.data() + pos);
  pos += 4;
  need(cfg_size);
  LoadedParams out;
  out.config_block.assign(buf.begin() + pos, buf.begin() + pos + cfg_size);
  pos += cfg_size;
  need(4);
  uint32_t count = detail::get_u32(buf.data() + pos);
  pos += 4;
  for (uint32_t i = 0; i < count; ++i) {
    need(4);
    uint32_t name_len = detail::get_u32(buf.data() + pos);
    pos += 4;
    need(name_len);
    std::string name(reinterpret_cast<const char*>(buf.data() + pos),
                     name_len);
    pos += name_len;
    need(16);
    Shape s;
    s.n = int(detail::get_u32(buf.data() + pos));
    s.c = int(detail::get_u32(buf.data() + pos + 4));
    s.h = int(detail::get_u32(buf.data() + pos + 8));
    s.w = int(detail::get_u32(buf.data() + pos + 12));
    pos += 16;
    size_t bytes = size_t(s.numel()) * 4;
    need(bytes);
    std::vector<float> vals(size_t(s.numel()));
    std::memcpy(vals.data(), buf.data() + pos, bytes);
    pos += bytes;
    out.params.add(name, Tensor<float>(s, std::move(vals)));
  }
  return out;
}

}  // namespace erpf::nn
