#include <cmath>
#include <random>

#include "doctest.h"
#include "erpf/gradcheck.hpp"
#include "erpf/params.hpp"
#include "erpf/tensor.hpp"
#include "test_support.hpp"

using namespace erpf;
using nn::Shape;
using nn::Tensor;
using testsup::brute_conv;
using testsup::random_mask;
using testsup::random_tensor;

TEST_CASE("conv2d hand cases") {
  // all-ones 3x3 input and kernel: center sees the full window
  Tensor<float> x(Shape{1, 1, 3, 3}, 1.0f);
  Tensor<float> k(Shape{1, 1, 3, 3}, 1.0f);
  Tensor<float> b(Shape{1, 1, 1, 1}, 0.0f);
  auto y = nn::conv2d(x, k, b);
  CHECK(y.values()[4] == doctest::Approx(9.0f));
  CHECK(y.values()[0] == doctest::Approx(4.0f));  // corner window

  // identity kernel
  auto xr = random_tensor<float>({2, 3, 5, 4}, 11);
  std::vector<float> ident(3 * 3 * 3 * 3, 0.0f);
  for (int c = 0; c < 3; ++c) ident[(size_t(c) * 3 + c) * 9 + 4] = 1.0f;
  Tensor<float> ki(Shape{3, 3, 3, 3}, ident);
  Tensor<float> bz(Shape{1, 3, 1, 1}, 0.0f);
  auto yi = nn::conv2d(xr, ki, bz);
  CHECK(yi.values() == xr.values());

  // zero kernel + bias
  Tensor<float> kz(Shape{2, 3, 3, 3}, 0.0f);
  Tensor<float> bb(Shape{1, 2, 1, 1}, std::vector<float>{1.5f, -2.0f});
  auto yb = nn::conv2d(xr, kz, bb);
  for (int c = 0; c < 2; ++c)
    for (int i = 0; i < 20; ++i)
      CHECK(yb.values()[size_t(c) * 20 + i] == (c == 0 ? 1.5f : -2.0f));
}

TEST_CASE("conv2d matches brute force exactly") {
  auto x = random_tensor<float>({2, 3, 6, 7}, 21);
  auto w = random_tensor<float>({4, 3, 3, 5}, 22);
  auto b = random_tensor<float>({1, 4, 1, 1}, 23);
  auto y = nn::conv2d(x, w, b);
  auto ref = brute_conv(x.values(), x.shape(), w.values(), 4, 3, 5, b.values());
  CHECK(y.values() == ref);
}

TEST_CASE("conv2d rejects bad shapes") {
  Tensor<float> x(Shape{1, 2, 4, 4}, 1.0f);
  Tensor<float> k_even(Shape{1, 2, 2, 2}, 1.0f);
  Tensor<float> k_chan(Shape{1, 3, 3, 3}, 1.0f);
  Tensor<float> b(Shape{1, 1, 1, 1}, 0.0f);
  CHECK_THROWS_AS(nn::conv2d(x, k_even, b), std::invalid_argument);
  CHECK_THROWS_AS(nn::conv2d(x, k_chan, b), std::invalid_argument);
}

TEST_CASE("partial_conv semantics") {
  auto x = random_tensor<float>({1, 2, 6, 6}, 31);
  auto w = random_tensor<float>({2, 2, 3, 3}, 32);
  auto b = random_tensor<float>({1, 2, 1, 1}, 33);

  SUBCASE("all-ones mask reduces to dense conv, bit-identical") {
    Tensor<float> ones(Shape{1, 1, 6, 6}, 1.0f);
    auto yp = nn::partial_conv(x, ones, w, b);
    auto yd = nn::conv2d(x, w, b);
    CHECK(yp.values() == yd.values());
  }
  SUBCASE("all-zeros mask with zero bias gives zeros") {
    Tensor<float> zeros(Shape{1, 1, 6, 6}, 0.0f);
    Tensor<float> bz(Shape{1, 2, 1, 1}, 0.0f);
    auto y = nn::partial_conv(x, zeros, w, bz);
    for (float v : y.values()) CHECK(v == 0.0f);
  }
  SUBCASE("masked-out center drops one tap") {
    Tensor<float> xi(Shape{1, 1, 3, 3}, 1.0f);
    Tensor<float> ki(Shape{1, 1, 3, 3}, 1.0f);
    Tensor<float> bz(Shape{1, 1, 1, 1}, 0.0f);
    std::vector<float> mv(9, 1.0f);
    mv[4] = 0.0f;
    Tensor<float> m(Shape{1, 1, 3, 3}, mv);
    auto y = nn::partial_conv(xi, m, ki, bz);
    CHECK(y.values()[4] == doctest::Approx(8.0f));
  }
  SUBCASE("mask values outside {0,1} are rejected") {
    Tensor<float> m(Shape{1, 1, 6, 6}, 0.5f);
    CHECK_THROWS_AS(nn::partial_conv(x, m, w, b), std::invalid_argument);
  }
  SUBCASE("perturbing masked-out inputs never changes the output") {
    auto m = random_mask<float>(6, 6, 34);
    auto base = nn::partial_conv(x, m, w, b);
    std::mt19937_64 rng(35);
    for (int trial = 0; trial < 20; ++trial) {
      auto x2 = x;
      auto vals = x2.values();
      for (int c = 0; c < 2; ++c)
        for (int i = 0; i < 36; ++i)
          if (m.values()[i] == 0.0f)
            vals[size_t(c) * 36 + i] = float(rng() % 1000) / 7.0f;
      Tensor<float> xp(x.shape(), vals);
      auto y2 = nn::partial_conv(xp, m, w, b);
      CHECK(y2.values() == base.values());
    }
  }
  SUBCASE("renormalized variant rescales by window validity") {
    // one valid pixel in a window of 9 -> scale 9
    Tensor<float> xi(Shape{1, 1, 3, 3}, 1.0f);
    Tensor<float> ki(Shape{1, 1, 3, 3}, 1.0f);
    Tensor<float> bz(Shape{1, 1, 1, 1}, 0.0f);
    std::vector<float> mv(9, 0.0f);
    mv[0] = 1.0f;
    Tensor<float> m(Shape{1, 1, 3, 3}, mv);
    auto y = nn::partial_conv(xi, m, ki, bz, /*renormalize=*/true);
    CHECK(y.values()[0] == doctest::Approx(9.0f));  // 1 tap * 9/1
    CHECK(y.values()[8] == doctest::Approx(0.0f));  // empty window
  }
}

TEST_CASE("depthwise_conv") {
  SUBCASE("identity kernels pass through") {
    auto x = random_tensor<float>({1, 3, 4, 5}, 41);
    std::vector<float> kv(3 * 9, 0.0f);
    for (int c = 0; c < 3; ++c) kv[size_t(c) * 9 + 4] = 1.0f;
    Tensor<float> k(Shape{3, 1, 3, 3}, kv);
    CHECK(nn::depthwise_conv(x, k).values() == x.values());
  }
  SUBCASE("zero kernel silences only its channel") {
    auto x = random_tensor<float>({1, 2, 4, 4}, 42);
    std::vector<float> kv(2 * 9, 0.0f);
    kv[9 + 4] = 1.0f;  // channel 1 identity, channel 0 zero
    Tensor<float> k(Shape{2, 1, 3, 3}, kv);
    auto y = nn::depthwise_conv(x, k);
    for (int i = 0; i < 16; ++i) {
      CHECK(y.values()[i] == 0.0f);
      CHECK(y.values()[16 + i] == x.values()[16 + i]);
    }
  }
  SUBCASE("matches per-channel brute force exactly") {
    auto x = random_tensor<float>({1, 2, 4, 4}, 43);
    auto k = random_tensor<float>({2, 1, 3, 3}, 44);
    auto y = nn::depthwise_conv(x, k);
    for (int c = 0; c < 2; ++c) {
      std::vector<float> xc(x.values().begin() + c * 16,
                            x.values().begin() + (c + 1) * 16);
      std::vector<float> kc(k.values().begin() + c * 9,
                            k.values().begin() + (c + 1) * 9);
      auto ref = brute_conv(xc, Shape{1, 1, 4, 4}, kc, 1, 3, 3, {});
      for (int i = 0; i < 16; ++i)
        CHECK(y.values()[size_t(c) * 16 + i] == ref[i]);
    }
  }
  SUBCASE("kernel count must match channels") {
    auto x = random_tensor<float>({1, 3, 4, 4}, 45);
    auto k = random_tensor<float>({2, 1, 3, 3}, 46);
    CHECK_THROWS_AS(nn::depthwise_conv(x, k), std::invalid_argument);
  }
}

TEST_CASE("pointwise_conv") {
  auto x = random_tensor<float>({1, 2, 3, 3}, 51);
  SUBCASE("identity mixing") {
    Tensor<float> k(Shape{2, 2, 1, 1}, std::vector<float>{1, 0, 0, 1});
    Tensor<float> b(Shape{1, 2, 1, 1}, 0.0f);
    CHECK(nn::pointwise_conv(x, k, b).values() == x.values());
  }
  SUBCASE("2->1 summing mix") {
    Tensor<float> xa(Shape{1, 2, 2, 2},
                     std::vector<float>{3, 3, 3, 3, 4, 4, 4, 4});
    Tensor<float> k(Shape{1, 2, 1, 1}, std::vector<float>{1, 1});
    Tensor<float> b(Shape{1, 1, 1, 1}, 0.0f);
    auto mixed = nn::pointwise_conv(xa, k, b);
    for (float v : mixed.values()) CHECK(v == doctest::Approx(7.0f));
  }
  SUBCASE("equals conv2d with 1x1 kernel") {
    auto k = random_tensor<float>({3, 2, 1, 1}, 52);
    auto b = random_tensor<float>({1, 3, 1, 1}, 53);
    CHECK(nn::pointwise_conv(x, k, b).values() ==
          nn::conv2d(x, k, b).values());
  }
  SUBCASE("rejects non-1x1 kernels") {
    auto k = random_tensor<float>({2, 2, 3, 3}, 54);
    auto b = random_tensor<float>({1, 2, 1, 1}, 55);
    CHECK_THROWS_AS(nn::pointwise_conv(x, k, b), std::invalid_argument);
  }
}

TEST_CASE("global_avg_pool") {
  SUBCASE("constant channel pools to its value") {
    Tensor<float> x(Shape{1, 2, 3, 3}, 2.5f);
    auto z = nn::global_avg_pool(x);
    CHECK(z.values()[0] == doctest::Approx(2.5f));
    CHECK(z.values()[1] == doctest::Approx(2.5f));
  }
  SUBCASE("2x2 holding 0..3 pools to 1.5") {
    Tensor<float> x(Shape{1, 1, 2, 2}, std::vector<float>{0, 1, 2, 3});
    CHECK(nn::global_avg_pool(x).values()[0] == doctest::Approx(1.5f));
  }
  SUBCASE("linearity") {
    auto x = random_tensor<float>({1, 3, 4, 4}, 61);
    auto z1 = nn::global_avg_pool(nn::scalar_mul(x, 3.0f));
    auto z2 = nn::scalar_mul(nn::global_avg_pool(x), 3.0f);
    for (size_t i = 0; i < z1.values().size(); ++i)
      CHECK(z1.values()[i] == doctest::Approx(z2.values()[i]).epsilon(1e-6));
  }
  SUBCASE("empty spatial extent is rejected") {
    Tensor<float> x(Shape{1, 2, 0, 4});
    CHECK_THROWS_AS(nn::global_avg_pool(x), std::invalid_argument);
  }
}

TEST_CASE("fully_connected") {
  SUBCASE("sigmoid of zero map is one half") {
    Tensor<float> v(Shape{1, 3, 1, 1}, 1.0f);
    Tensor<float> w(Shape{2, 3, 1, 1}, 0.0f);
    Tensor<float> b(Shape{1, 2, 1, 1}, 0.0f);
    auto y = nn::fully_connected(v, w, b, nn::Activation::Sigmoid);
    for (float s : y.values()) CHECK(s == doctest::Approx(0.5f));
  }
  SUBCASE("identity weights with relu") {
    Tensor<float> v(Shape{1, 2, 1, 1}, std::vector<float>{-1.0f, 2.0f});
    Tensor<float> w(Shape{2, 2, 1, 1}, std::vector<float>{1, 0, 0, 1});
    Tensor<float> b(Shape{1, 2, 1, 1}, 0.0f);
    auto y = nn::fully_connected(v, w, b, nn::Activation::Relu);
    CHECK(y.values()[0] == 0.0f);
    CHECK(y.values()[1] == 2.0f);
  }
  SUBCASE("matches matrix-vector brute force") {
    auto v = random_tensor<float>({2, 4, 1, 1}, 71);
    auto w = random_tensor<float>({3, 4, 1, 1}, 72);
    auto b = random_tensor<float>({1, 3, 1, 1}, 73);
    auto y = nn::fully_connected(v, w, b, nn::Activation::None);
    for (int n = 0; n < 2; ++n)
      for (int m = 0; m < 3; ++m) {
        float acc = b.values()[m];
        for (int k = 0; k < 4; ++k)
          acc += w.values()[size_t(m) * 4 + k] * v.values()[size_t(n) * 4 + k];
        CHECK(y.values()[size_t(n) * 3 + m] == acc);
      }
  }
  SUBCASE("dimension mismatch is rejected") {
    Tensor<float> v(Shape{1, 3, 1, 1}, 1.0f);
    Tensor<float> w(Shape{2, 4, 1, 1}, 0.0f);
    Tensor<float> b(Shape{1, 2, 1, 1}, 0.0f);
    CHECK_THROWS_AS(nn::fully_connected(v, w, b, nn::Activation::None),
                    std::invalid_argument);
  }
}

TEST_CASE("backward basics") {
  SUBCASE("sum gradient is all ones") {
    auto x = random_tensor<float>({1, 2, 3, 3}, 81);
    x.set_requires_grad(true);
    auto loss = nn::sum(x);
    nn::backward(loss);
    for (float g : x.grad()) CHECK(g == 1.0f);
  }
  SUBCASE("sum of squares over two gives x back") {
    auto x = random_tensor<float>({1, 1, 2, 4}, 82);
    x.set_requires_grad(true);
    auto loss = nn::scalar_mul(nn::sum(nn::mul(x, x)), 0.5f);
    nn::backward(loss);
    for (size_t i = 0; i < x.values().size(); ++i)
      CHECK(x.grad()[i] == doctest::Approx(x.values()[i]));
  }
  SUBCASE("second backward on one record is rejected") {
    auto x = random_tensor<float>({1, 1, 2, 2}, 83);
    x.set_requires_grad(true);
    auto loss = nn::sum(x);
    nn::backward(loss);
    CHECK_THROWS_AS(nn::backward(loss), std::logic_error);
  }
}

TEST_CASE("finite-difference gradient checks at double precision") {
  const double tol = 1e-5;
  const double h = 1e-4;
  SUBCASE("conv2d") {
    auto f = [](std::vector<Tensor<double>>& in) {
      auto y = nn::conv2d(in[0], in[1], in[2]);
      return nn::sum(nn::mul(y, y));
    };
    CHECK(nn::grad_check<double>(f,
                                 {random_tensor<double>({2, 3, 6, 6}, 91),
                                  random_tensor<double>({2, 3, 3, 3}, 92),
                                  random_tensor<double>({1, 2, 1, 1}, 93)},
                                 h) < tol);
  }
  SUBCASE("partial_conv plain and renormalized") {
    auto m = random_mask<double>(6, 6, 94);
    for (bool renorm : {false, true}) {
      auto f = [&](std::vector<Tensor<double>>& in) {
        auto y = nn::partial_conv(in[0], m, in[1], in[2], renorm);
        return nn::sum(nn::mul(y, y));
      };
      CHECK(nn::grad_check<double>(f,
                                   {random_tensor<double>({1, 2, 6, 6}, 95),
                                    random_tensor<double>({2, 2, 3, 3}, 96),
                                    random_tensor<double>({1, 2, 1, 1}, 97)},
                                   h) < tol);
    }
  }
  SUBCASE("depthwise and pointwise") {
    auto f = [](std::vector<Tensor<double>>& in) {
      auto y = nn::depthwise_conv(in[0], in[1]);
      y = nn::pointwise_conv(y, in[2], in[3]);
      return nn::sum(nn::mul(y, y));
    };
    CHECK(nn::grad_check<double>(f,
                                 {random_tensor<double>({2, 3, 5, 5}, 101),
                                  random_tensor<double>({3, 1, 3, 3}, 102),
                                  random_tensor<double>({2, 3, 1, 1}, 103),
                                  random_tensor<double>({1, 2, 1, 1}, 104)},
                                 h) < tol);
  }
  SUBCASE("pool, fc stack, channel scaling") {
    auto f = [](std::vector<Tensor<double>>& in) {
      auto z = nn::global_avg_pool(in[0]);
      z = nn::fully_connected(z, in[1], in[2], nn::Activation::Relu);
      z = nn::fully_connected(z, in[3], in[4], nn::Activation::Sigmoid);
      auto y = nn::scale_channels(in[0], z);
      return nn::mean(nn::mul(y, y));
    };
    CHECK(nn::grad_check<double>(f,
                                 {random_tensor<double>({2, 4, 4, 4}, 111),
                                  random_tensor<double>({5, 4, 1, 1}, 112),
                                  random_tensor<double>({1, 5, 1, 1}, 113),
                                  random_tensor<double>({4, 5, 1, 1}, 114),
                                  random_tensor<double>({1, 4, 1, 1}, 115)},
                                 h) < tol);
  }
  SUBCASE("elementwise chain with kink margins") {
    // inputs bounded away from relu/abs kinks and clamp bounds
    auto base = random_tensor<double>({1, 2, 4, 4}, 121, 0.1, 0.9);
    auto f = [](std::vector<Tensor<double>>& in) {
      auto y = nn::clamp01(nn::sigmoid(nn::relu(in[0])));
      y = nn::add(nn::abs_val(nn::sub(y, in[1])), nn::mul(y, in[1]));
      return nn::mean(y);
    };
    CHECK(nn::grad_check<double>(
              f, {base, random_tensor<double>({1, 2, 4, 4}, 122, 1.5, 2.5)},
              h) < tol);
  }
  SUBCASE("single precision stays under 1e-3") {
    auto f = [](std::vector<Tensor<float>>& in) {
      auto y = nn::conv2d(in[0], in[1], in[2]);
      return nn::mean(nn::mul(y, y));
    };
    CHECK(nn::grad_check<float>(f,
                                {random_tensor<float>({1, 2, 5, 5}, 131),
                                 random_tensor<float>({2, 2, 3, 3}, 132),
                                 random_tensor<float>({1, 2, 1, 1}, 133)},
                                1e-2f) < 1e-3);
  }
}

TEST_CASE("forward operators are pure and finite") {
  auto x = random_tensor<float>({2, 3, 5, 5}, 141);
  auto w = random_tensor<float>({3, 3, 3, 3}, 142);
  auto b = random_tensor<float>({1, 3, 1, 1}, 143);
  auto run = [&] {
    auto y = nn::relu(nn::conv2d(x, w, b));
    y = nn::sigmoid(nn::depthwise_conv(y, random_tensor<float>({3, 1, 3, 3}, 144)));
    return nn::scale_channels(y, nn::global_avg_pool(y));
  };
  auto a = run(), c = run();
  CHECK(a.values() == c.values());
  for (float v : a.values()) CHECK(std::isfinite(v));
}

TEST_CASE("activation ranges") {
  auto x = random_tensor<float>({1, 1, 8, 8}, 151, -10.0, 10.0);
  auto r = nn::relu(x);
  for (float v : r.values()) CHECK(v >= 0.0f);
  auto s = nn::sigmoid(x);
  for (float v : s.values()) {
    CHECK(v > 0.0f);
    CHECK(v < 1.0f);
  }
}

TEST_CASE("adam") {
  nn::OptimizerConfig cfg;
  cfg.learning_rate = 1e-2;

  SUBCASE("zero gradient leaves parameters unchanged") {
    nn::ParameterSet<float> p;
    p.add("w", random_tensor<float>({1, 1, 2, 2}, 161));
    const auto before = p.at("w").values();
    p.zero_grad();
    nn::adam_step(p, cfg, 1);
    CHECK(p.at("w").values() == before);
  }
  SUBCASE("constant gradient settles at one learning-rate per step") {
    nn::ParameterSet<float> p;
    p.add("w", Tensor<float>(Shape{1, 1, 1, 2}, 0.0f));
    for (int step = 1; step <= 50; ++step) {
      p.zero_grad();
      p.at("w").node()->ensure_grad();
      p.at("w").grad()[0] = 1.0f;
      p.at("w").grad()[1] = -2.0f;
      const auto before = p.at("w").values();
      nn::adam_step(p, cfg, step);
      if (step > 10) {
        CHECK(before[0] - p.at("w").values()[0] ==
              doctest::Approx(cfg.learning_rate).epsilon(1e-4));
        CHECK(p.at("w").values()[1] - before[1] ==
              doctest::Approx(cfg.learning_rate).epsilon(1e-4));
      }
    }
  }
  SUBCASE("decay schedule switches exactly at its step") {
    nn::OptimizerConfig sched = cfg;
    sched.decay_schedule = {{5, cfg.learning_rate / 2}};
    CHECK(sched.lr_at(4) == cfg.learning_rate);
    CHECK(sched.lr_at(5) == cfg.learning_rate / 2);
    nn::ParameterSet<float> p;
    p.add("w", Tensor<float>(Shape{1, 1, 1, 1}, 0.0f));
    double update4 = 0, update5 = 0;
    for (int step = 1; step <= 5; ++step) {
      p.zero_grad();
      p.at("w").node()->ensure_grad();
      p.at("w").grad()[0] = 1.0f;
      const float before = p.at("w").values()[0];
      nn::adam_step(p, sched, step);
      if (step == 4) update4 = before - p.at("w").values()[0];
      if (step == 5) update5 = before - p.at("w").values()[0];
    }
    CHECK(update5 == doctest::Approx(update4 / 2).epsilon(1e-3));
  }
  SUBCASE("non-finite gradients abort with the parameter name") {
    nn::ParameterSet<float> p;
    p.add("w", Tensor<float>(Shape{1, 1, 1, 1}, 0.0f));
    p.zero_grad();
    p.at("w").node()->ensure_grad();
    p.at("w").grad()[0] = std::numeric_limits<float>::quiet_NaN();
    CHECK_THROWS_WITH_AS(nn::adam_step(p, cfg, 1),
                         doctest::Contains("'w'"), std::runtime_error);
  }
  SUBCASE("invalid schedules are rejected") {
    nn::OptimizerConfig badlr = cfg;
    badlr.learning_rate = 0.0;
    CHECK_THROWS_AS(badlr.validate(), std::invalid_argument);
    nn::OptimizerConfig badsched = cfg;
    badsched.decay_schedule = {{10, 1e-3}, {10, 1e-4}};
    CHECK_THROWS_AS(badsched.validate(), std::invalid_argument);
  }
}

TEST_CASE("xavier initialization") {
  SUBCASE("deterministic for a fixed seed") {
    auto a = nn::xavier_init<float>({8, 8, 3, 3}, 42);
    auto b = nn::xavier_init<float>({8, 8, 3, 3}, 42);
    CHECK(a.values() == b.values());
    auto c = nn::xavier_init<float>({8, 8, 3, 3}, 43);
    CHECK(a.values() != c.values());
  }
  SUBCASE("variance matches 2/(fan_in+fan_out) within 10%") {
    auto t = nn::xavier_init<double>({128, 128, 3, 3}, 7);
    double sum = 0, sq = 0;
    for (double v : t.values()) {
      sum += v;
      sq += v * v;
    }
    const double n = double(t.values().size());
    const double mean = sum / n;
    const double var = sq / n - mean * mean;
    const double expected = 2.0 / (1152.0 + 1152.0);
    CHECK(var == doctest::Approx(expected).epsilon(0.10));
    // mean within 3 standard errors of zero
    const double se = std::sqrt(var / n);
    CHECK(std::abs(mean) < 3 * se);
  }
  SUBCASE("zero fan is rejected") {
    CHECK_THROWS_AS(nn::xavier_init<float>({0, 4, 3, 3}, 1),
                    std::invalid_argument);
  }
}

TEST_CASE("parameter gradients reset exactly on zero_grad") {
  nn::ParameterSet<float> p;
  p.add("w", random_tensor<float>({2, 2, 3, 3}, 171));
  auto x = random_tensor<float>({1, 2, 4, 4}, 172);
  p.set_requires_grad(true);
  auto loss = nn::sum(nn::conv2d(x, p.at("w"),
                                 Tensor<float>(Shape{1, 2, 1, 1}, 0.0f)));
  nn::backward(loss);
  bool any = false;
  for (float g : p.at("w").grad()) any = any || g != 0.0f;
  CHECK(any);
  p.zero_grad();
  for (float g : p.at("w").grad()) CHECK(g == 0.0f);
}

TEST_CASE("weight file round trip is bit exact") {
  nn::ParameterSet<float> p;
  p.add("a.weight", random_tensor<float>({4, 2, 3, 3}, 181));
  p.add("a.bias", random_tensor<float>({1, 4, 1, 1}, 182));
  p.add("z.weight", random_tensor<float>({1, 4, 5, 5}, 183));
  const std::vector<uint8_t> block{1, 2, 3, 4, 5};
  const std::string path = "/tmp/erpf_params_test.erpf";
  nn::save_params(path, block, p);
  auto loaded = nn::load_params(path);
  CHECK(loaded.config_block == block);
  CHECK(loaded.params.size() == p.size());
  CHECK(loaded.params.names() == p.names());
  for (const auto& [name, prm] : p) {
    CHECK(loaded.params.at(name).shape() == prm.tensor.shape());
    CHECK(loaded.params.at(name).values() == prm.tensor.values());
  }
}
