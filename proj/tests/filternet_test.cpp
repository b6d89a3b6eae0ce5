#include <random>

#include "doctest.h"
#include "erpf/filternet.hpp"
#include "erpf/gradcheck.hpp"
#include "test_support.hpp"

using namespace erpf;
using nn::Shape;
using nn::Tensor;
using testsup::random_mask;
using testsup::random_tensor;

namespace {

net::ModelConfig tiny() {
  auto cfg = net::ModelConfig::with_channels(4);
  cfg.rcab_count = 1;
  return cfg;
}

template <typename T>
void randomize_biases(nn::ParameterSet<T>& p, uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> d(0.05, 0.25);
  for (auto& [name, prm] : p)
    if (name.ends_with(".bias"))
      for (auto& v : prm.tensor.values())
        v = T(d(rng)) * ((rng() & 1) ? T(1) : T(-1));
}

}  // namespace

TEST_CASE("configuration validation and parameter inventory") {
  auto cfg = net::ModelConfig::with_channels(128);
  CHECK(cfg.fc_widths == std::array<int, 4>{512, 256, 128, 128});
  cfg.validate();

  auto bad = cfg;
  bad.fc_widths[3] = 64;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  auto even = cfg;
  even.sb_kernel = 4;
  CHECK_THROWS_AS(even.validate(), std::invalid_argument);

  // every expected parameter is created, named and shaped
  auto desk = net::ModelConfig::desk();
  auto params = net::init_weights<float>(desk, 3);
  const auto expected = net::expected_params(desk);
  CHECK(params.size() == expected.size());
  for (const auto& [name, shape] : expected)
    CHECK(params.at(name).shape() == shape);
}

TEST_CASE("receptive radius") {
  auto desk = net::ModelConfig::desk();
  // stem 2 + lb residual 3*2 + fusion 1 + one rcab 2 + head 5
  CHECK(desk.receptive_radius() == 16);

  auto small = desk;
  small.lb_kernel = 3;
  CHECK(small.receptive_radius() == 13);

  int prev = 0;
  for (int n = 1; n <= 4; ++n) {
    auto c = desk;
    c.rcab_count = n;
    CHECK(c.receptive_radius() > prev);
    prev = c.receptive_radius();
  }
}

TEST_CASE("masked branches only depend on valid pixels") {
  auto cfg = tiny();
  auto p = net::init_weights<float>(cfg, 11);
  const int n = 12;
  auto img = random_tensor<float>({1, 1, n, n}, 12, 0.0, 1.0);

  SUBCASE("all-ones mask silences the large-kernel branch entirely") {
    Tensor<float> ones(Shape{1, 1, n, n}, 1.0f);
    auto base = net::feature_extraction(img, ones, p, cfg);
    auto p2 = net::init_weights<float>(cfg, 999);  // different lb weights
    for (auto& [name, prm] : p2)
      if (!name.starts_with("lb."))
        prm.tensor.values() = p.at(name).values();
    auto swapped = net::feature_extraction(img, ones, p2, cfg);
    CHECK(base.values() == swapped.values());
  }
  SUBCASE("perturbing pixels under a branch's zero mask region") {
    auto m = random_mask<float>(n, n, 13);
    auto stem_like = random_tensor<float>({1, cfg.channels, n, n}, 15);
    auto perturbed = stem_like.values();
    std::mt19937_64 rng(16);
    for (int c = 0; c < cfg.channels; ++c)
      for (int i = 0; i < n * n; ++i)
        if (m.values()[i] == 0.0f)
          perturbed[size_t(c) * n * n + i] += float(rng() % 7) - 3.0f;
    Tensor<float> stem2(stem_like.shape(), perturbed);
    // the branch's first masked conv ignores values under its zero mask
    auto l1a = nn::partial_conv(stem_like, m, p.at("sb.res1.weight"),
                                p.at("sb.res1.bias"));
    auto l1b = nn::partial_conv(stem2, m, p.at("sb.res1.weight"),
                                p.at("sb.res1.bias"));
    CHECK(l1a.values() == l1b.values());
  }
}

TEST_CASE("recalibration block") {
  auto cfg = tiny();
  auto p = net::init_weights<float>(cfg, 21);
  auto x = random_tensor<float>({1, cfg.channels, 6, 6}, 22, 0.1, 1.0);

  SUBCASE("zeroed attention stack halves the separated features") {
    auto pz = p;
    for (int j = 1; j <= 4; ++j) {
      auto wname = "rcab1.fc" + std::to_string(j) + ".weight";
      auto bname = "rcab1.fc" + std::to_string(j) + ".bias";
      std::fill(pz.at(wname).values().begin(), pz.at(wname).values().end(),
                0.0f);
      std::fill(pz.at(bname).values().begin(), pz.at(bname).values().end(),
                0.0f);
    }
    auto out = net::rcab_forward(x, pz, 1, cfg);
    // reference path with the scale applied literally as 0.5 * separated
    auto st = nn::pointwise_conv(nn::depthwise_conv(x, pz.at("rcab1.dw.weight")),
                                 pz.at("rcab1.pw.weight"),
                                 pz.at("rcab1.pw.bias"));
    auto ref = nn::relu(nn::add(
        nn::conv2d(nn::scalar_mul(st, 0.5f), pz.at("rcab1.ff.weight"),
                   pz.at("rcab1.ff.bias")),
        x));
    CHECK(out.values() == ref.values());
  }
  SUBCASE("pooled descriptor of constant channels equals the constants") {
    std::vector<float> v(size_t(cfg.channels) * 16);
    for (int c = 0; c < cfg.channels; ++c)
      for (int i = 0; i < 16; ++i) v[size_t(c) * 16 + i] = 0.5f + 0.25f * c;
    Tensor<float> xc(Shape{1, cfg.channels, 4, 4}, v);
    auto z = nn::global_avg_pool(xc);
    for (int c = 0; c < cfg.channels; ++c)
      CHECK(z.values()[c] == doctest::Approx(0.5f + 0.25f * c));
  }
  SUBCASE("scaling is homogeneous in the separated features") {
    auto z = random_tensor<float>({1, cfg.channels, 1, 1}, 23, 0.1, 0.9);
    auto s1 = nn::scale_channels(x, z);
    auto s2 = nn::scale_channels(nn::scalar_mul(x, 2.0f), z);
    for (size_t i = 0; i < s1.values().size(); ++i)
      CHECK(s2.values()[i] == doctest::Approx(2.0f * s1.values()[i]));
  }
  SUBCASE("crafted fusion cancelling the input yields zero") {
    // with zero ff weights and bias, X~ = 0, so output = relu(X)
    auto pz = p;
    std::fill(pz.at("rcab1.ff.weight").values().begin(),
              pz.at("rcab1.ff.weight").values().end(), 0.0f);
    std::fill(pz.at("rcab1.ff.bias").values().begin(),
              pz.at("rcab1.ff.bias").values().end(), 0.0f);
    auto xneg = nn::scalar_mul(x, -1.0f);  // negative input, relu(0 + x) = 0
    auto out = net::rcab_forward(xneg, pz, 1, cfg);
    for (float v : out.values()) CHECK(v == 0.0f);
  }
}

TEST_CASE("reconstruction head") {
  auto cfg = tiny();
  auto img = random_tensor<float>({1, 1, 10, 10}, 31, 0.0, 1.0);
  auto xk = random_tensor<float>({1, cfg.channels, 10, 10}, 32);

  SUBCASE("zero head with global skip is the identity") {
    auto p = net::init_weights<float>(cfg, 33);
    for (auto& [name, prm] : p)
      if (name.starts_with("head."))
        std::fill(prm.tensor.values().begin(), prm.tensor.values().end(),
                  0.0f);
    auto out = net::reconstruct(xk, img, p, cfg);
    CHECK(out.values() == img.values());
  }
  SUBCASE("outputs always stay inside [0,1]") {
    auto p = net::init_weights<float>(cfg, 34);
    auto out = net::reconstruct(xk, img, p, cfg);
    for (float v : out.values()) {
      CHECK(v >= 0.0f);
      CHECK(v <= 1.0f);
    }
  }
  SUBCASE("no skip and zero weights give the constant output bias") {
    auto cfg2 = cfg;
    cfg2.global_skip = false;
    auto p = net::init_weights<float>(cfg2, 35);
    for (auto& [name, prm] : p)
      if (name.starts_with("head."))
        std::fill(prm.tensor.values().begin(), prm.tensor.values().end(),
                  0.0f);
    p.at("head.out.bias").values()[0] = 0.25f;
    auto out = net::reconstruct(xk, img, p, cfg2);
    for (float v : out.values()) CHECK(v == 0.25f);
  }
}

TEST_CASE("full forward") {
  auto cfg = tiny();
  auto p = net::init_weights<float>(cfg, 41);
  auto img = random_tensor<float>({1, 1, 12, 12}, 42, 0.0, 1.0);
  auto m = random_mask<float>(12, 12, 43);

  SUBCASE("deterministic") {
    auto a = net::forward(img, m, p, cfg);
    auto b = net::forward(img, m, p, cfg);
    CHECK(a.values() == b.values());
  }
  SUBCASE("all-zero weights with global skip reduce to clip(identity)") {
    auto pz = net::init_weights<float>(cfg, 44);
    for (auto& [name, prm] : pz)
      std::fill(prm.tensor.values().begin(), prm.tensor.values().end(), 0.0f);
    auto out = net::forward(img, m, pz, cfg);
    CHECK(out.values() == img.values());
  }
  SUBCASE("weight file round trip forwards bit-identically") {
    const std::string path = "/tmp/erpf_model_test.erpf";
    net::save_model(path, cfg, p);
    auto loaded = net::load_model(path);
    CHECK(loaded.config == cfg);
    auto a = net::forward(img, m, p, cfg);
    auto b = net::forward(img, m, loaded.params, loaded.config);
    CHECK(a.values() == b.values());
  }
  SUBCASE("mask and frame sizes must agree") {
    auto m2 = random_mask<float>(8, 8, 45);
    CHECK_THROWS_AS(net::forward(img, m2, p, cfg), std::invalid_argument);
  }
}

TEST_CASE("full forward gradients pass a finite-difference check") {
  auto cfg = net::ModelConfig::desk();
  auto p = net::init_weights<double>(cfg, 51);
  randomize_biases(p, 52);
  auto img = random_tensor<double>({1, 1, 16, 16}, 53, 0.3, 0.7);
  auto m = random_mask<double>(16, 16, 54);
  double worst = 0.0;
  for (auto& [name, prm] : p) {
    auto f = [&](std::vector<Tensor<double>>& in) {
      (void)in;
      auto out = net::forward(img, m, p, cfg);
      return nn::mean(nn::mul(out, out));
    };
    worst = std::max(worst, nn::grad_check<double>(f, {prm.tensor}, 1e-6, 2));
  }
  CHECK(worst < 1e-5);
}

TEST_CASE("ablation variants change only their module") {
  auto base = net::ModelConfig::desk();
  auto names_of = [](const net::ModelConfig& c) {
    std::vector<std::string> out;
    for (const auto& [n, s] : net::expected_params(c)) out.push_back(n);
    return out;
  };
  const auto base_names = names_of(base);

  SUBCASE("mask toggle keeps the parameter inventory") {
    auto c = base;
    c.use_mask = false;
    CHECK(names_of(c) == base_names);
  }
  SUBCASE("attention toggle removes only fc parameters") {
    auto c = base;
    c.use_ar = false;
    auto names = names_of(c);
    for (const auto& n : names) CHECK(n.find(".fc") == std::string::npos);
    size_t fc_count = 0;
    for (const auto& n : base_names)
      if (n.find(".fc") != std::string::npos) ++fc_count;
    CHECK(names.size() + fc_count == base_names.size());
  }
  SUBCASE("separation toggle swaps dw+pw for a dense conv") {
    auto c = base;
    c.use_fs = false;
    for (const auto& n : names_of(c)) {
      CHECK(n.find(".dw.") == std::string::npos);
      CHECK(n.find(".pw.") == std::string::npos);
    }
  }
  SUBCASE("each toggle changes the output") {
    auto img = random_tensor<float>({1, 1, 16, 16}, 61, 0.0, 1.0);
    auto m = random_mask<float>(16, 16, 62);
    auto pb = net::init_weights<float>(base, 63);
    auto ref = net::forward(img, m, pb, base);
    for (auto toggle : {&net::ModelConfig::use_mask, &net::ModelConfig::use_fs,
                        &net::ModelConfig::use_ar}) {
      auto c = base;
      c.*toggle = false;
      auto pc = net::init_weights<float>(c, 63);
      auto out = net::forward(img, m, pc, c);
      CHECK(out.values() != ref.values());
    }
  }
}
