#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

namespace erpf::nn {

// NCHW row-major dense tensor shape.
struct Shape {
  int n = 0, c = 0, h = 0, w = 0;

  int64_t numel() const { return int64_t(n) * c * h * w; }
  int64_t plane() const { return int64_t(h) * w; }
  bool operator==(const Shape&) const = default;

  std::string str() const {
    return "(" + std::to_string(n) + "," + std::to_string(c) + "," +
           std::to_string(h) + "," + std::to_string(w) + ")";
  }
};

inline void check(bool ok, const std::string& msg) {
  if (!ok) throw std::invalid_argument(msg);
}

// Deterministic per-purpose seed derivation: FNV-1a of the tag folded into
// the root seed through a splitmix64 round.
inline uint64_t seed_mix(uint64_t root, std::string_view tag) {
  uint64_t h = 1469598103934665603ull;
  for (char ch : tag) {
    h ^= static_cast<unsigned char>(ch);
    h *= 1099511628211ull;
  }
  uint64_t z = root ^ h;
  z += 0x9e3779b97f4a7c15ull;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

template <typename T>
struct Node {
  Shape shape;
  std::vector<T> value;
  std::vector<T> grad;
  bool requires_grad = false;
  bool backward_done = false;
  std::vector<std::shared_ptr<Node<T>>> parents;
  std::function<void(Node<T>&)> backprop;

  void ensure_grad() {
    if (grad.size() != value.size()) grad.assign(value.size(), T(0));
  }
};

// Value-semantics handle onto a graph node. Forward ops are free functions;
// they only record parents/backprop closures when a gradient can flow, so
// inference passes build no graph.
template <typename T>
class Tensor {
 public:
  Tensor() : node_(std::make_shared<Node<T>>()) {}

  explicit Tensor(Shape s, T fill = T(0), bool requires_grad = false)
      : node_(std::make_shared<Node<T>>()) {
    check(s.n >= 0 && s.c >= 0 && s.h >= 0 && s.w >= 0,
          "tensor: negative dimension in shape " + s.str());
    node_->shape = s;
    node_->value.assign(static_cast<size_t>(s.numel()), fill);
    node_->requires_grad = requires_grad;
  }

  Tensor(Shape s, std::vector<T> data, bool requires_grad = false)
      : node_(std::make_shared<Node<T>>()) {
    check(static_cast<int64_t>(data.size()) == s.numel(),
          "tensor: data length " + std::to_string(data.size()) +
              " does not match shape " + s.str());
    node_->shape = s;
    node_->value = std::move(data);
    node_->requires_grad = requires_grad;
  }

  const Shape& shape() const { return node_->shape; }
  const std::vector<T>& values() const { return node_->value; }
  std::vector<T>& values() { return node_->value; }
  const std::vector<T>& grad() const { return node_->grad; }
  std::vector<T>& grad() { return node_->grad; }
  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool b) { node_->requires_grad = b; }
  int64_t numel() const { return node_->shape.numel(); }

  T item() const {
    check(numel() == 1, "item: tensor " + shape().str() + " is not scalar");
    return node_->value[0];
  }

  std::shared_ptr<Node<T>>& node() { return node_; }
  const std::shared_ptr<Node<T>>& node() const { return node_; }

 private:
  std::shared_ptr<Node<T>> node_;
};

enum class Activation { None, Relu, Sigmoid };

namespace detail {

template <typename T>
Tensor<T> make_result(Shape s, std::vector<T> vals) {
  return Tensor<T>(s, std::move(vals));
}

template <typename T>
void attach(Tensor<T>& out, std::vector<std::shared_ptr<Node<T>>> parents,
            std::function<void(Node<T>&)> fn) {
  bool any = false;
  for (auto& p : parents)
    if (p->requires_grad) any = true;
  if (!any) return;
  out.node()->requires_grad = true;
  out.node()->parents = std::move(parents);
  out.node()->backprop = std::move(fn);
}

// Dense stride-1 correlation with zero "same" padding. Per output element
// accumulation order is bias, then (ic, ky, kx) ascending; every call site
// that promises bit-exact agreement mirrors this order.
template <typename T>
void conv_forward_raw(const T* x, Shape xs, const T* w, int co, int kh, int kw,
                      const T* bias, T* out) {
  const int ph = kh / 2, pw = kw / 2;
  const int H = xs.h, W = xs.w, CI = xs.c;
  const int64_t plane = int64_t(H) * W;
  for (int n = 0; n < xs.n; ++n) {
    const T* xb = x + int64_t(n) * CI * plane;
    T* ob = out + int64_t(n) * co * plane;
#pragma omp parallel for schedule(static)
    for (int oc = 0; oc < co; ++oc) {
      T* op = ob + int64_t(oc) * plane;
      std::fill(op, op + plane, bias ? bias[oc] : T(0));
      for (int ic = 0; ic < CI; ++ic) {
        const T* ip = xb + int64_t(ic) * plane;
        const T* wp = w + (int64_t(oc) * CI + ic) * kh * kw;
        for (int ky = 0; ky < kh; ++ky) {
          const int dy = ky - ph;
          const int y0 = std::max(0, -dy), y1 = std::min(H, H - dy);
          for (int kx = 0; kx < kw; ++kx) {
            const int dx = kx - pw;
            const int x0 = std::max(0, -dx), x1 = std::min(W, W - dx);
            const T wv = wp[ky * kw + kx];
            for (int y = y0; y < y1; ++y) {
              const T* src = ip + int64_t(y + dy) * W + dx;
              T* dst = op + int64_t(y) * W;
              for (int xx = x0; xx < x1; ++xx) dst[xx] += wv * src[xx];
            }
          }
        }
      }
    }
  }
}

// dL/dx for the correlation above: full correlation of dy with the kernel
// reflected in both spatial axes.
template <typename T>
void conv_backward_input(const T* dy, Shape ys, const T* w, int ci, int kh,
                         int kw, T* dx) {
  const int ph = kh / 2, pw = kw / 2;
  const int H = ys.h, W = ys.w, CO = ys.c;
  const int64_t plane = int64_t(H) * W;
  for (int n = 0; n < ys.n; ++n) {
    const T* db = dy + int64_t(n) * CO * plane;
    T* xb = dx + int64_t(n) * ci * plane;
#pragma omp parallel for schedule(static)
    for (int ic = 0; ic < ci; ++ic) {
      T* xp = xb + int64_t(ic) * plane;
      for (int oc = 0; oc < CO; ++oc) {
        const T* dp = db + int64_t(oc) * plane;
        const T* wp = w + (int64_t(oc) * ci + ic) * kh * kw;
        for (int ky = 0; ky < kh; ++ky) {
          const int dyo = ky - ph;
          const int y0 = std::max(0, dyo), y1 = std::min(H, H + dyo);
          for (int kx = 0; kx < kw; ++kx) {
            const int dxo = kx - pw;
            const int x0 = std::max(0, dxo), x1 = std::min(W, W + dxo);
            const T wv = wp[ky * kw + kx];
            for (int y = y0; y < y1; ++y) {
              const T* src = dp + int64_t(y - dyo) * W - dxo;
              T* dst = xp + int64_t(y) * W;
              for (int xx = x0; xx < x1; ++xx) dst[xx] += wv * src[xx];
            }
          }
        }
      }
    }
  }
}

template <typename T>
void conv_backward_weight(const T* dy, Shape ys, const T* x, int ci, int kh,
                          int kw, T* dw) {
  const int ph = kh / 2, pw = kw / 2;
  const int H = ys.h, W = ys.w, CO = ys.c;
  const int64_t plane = int64_t(H) * W;
  for (int n = 0; n < ys.n; ++n) {
    const T* db = dy + int64_t(n) * CO * plane;
    const T* xb = x + int64_t(n) * ci * plane;
#pragma omp parallel for schedule(static)
    for (int oc = 0; oc < CO; ++oc) {
      const T* dp = db + int64_t(oc) * plane;
      for (int ic = 0; ic < ci; ++ic) {
        const T* ip = xb + int64_t(ic) * plane;
        T* wp = dw + (int64_t(oc) * ci + ic) * kh * kw;
        for (int ky = 0; ky < kh; ++ky) {
          const int dyo = ky - ph;
          const int y0 = std::max(0, -dyo), y1 = std::min(H, H - dyo);
          for (int kx = 0; kx < kw; ++kx) {
            const int dxo = kx - pw;
            const int x0 = std::max(0, -dxo), x1 = std::min(W, W - dxo);
            T acc = T(0);
            for (int y = y0; y < y1; ++y) {
              const T* a = dp + int64_t(y) * W;
              const T* b = ip + int64_t(y + dyo) * W + dxo;
#pragma omp simd reduction(+ : acc)
              for (int xx = x0; xx < x1; ++xx) acc += a[xx] * b[xx];
            }
            wp[ky * kw + kx] += acc;
          }
        }
      }
    }
  }
}

template <typename T>
void conv_backward_bias(const T* dy, Shape ys, T* db) {
  const int64_t plane = ys.plane();
  for (int n = 0; n < ys.n; ++n)
    for (int oc = 0; oc < ys.c; ++oc) {
      const T* dp = dy + (int64_t(n) * ys.c + oc) * plane;
      T acc = T(0);
#pragma omp simd reduction(+ : acc)
      for (int64_t i = 0; i < plane; ++i) acc += dp[i];
      db[oc] += acc;
    }
}

template <typename T>
void validate_conv_args(const Tensor<T>& x, const Tensor<T>& w,
                        const Tensor<T>& b, const char* who) {
  const Shape& xs = x.shape();
  const Shape& ws = w.shape();
  check(ws.h % 2 == 1 && ws.w % 2 == 1,
        std::string(who) + ": kernel spatial size must be odd, got " +
            ws.str());
  check(ws.c == xs.c, std::string(who) + ": input has " +
                          std::to_string(xs.c) + " channels but kernel " +
                          ws.str() + " expects " + std::to_string(ws.c));
  check(b.shape() == Shape{1, ws.n, 1, 1},
        std::string(who) + ": bias shape " + b.shape().str() +
            " must be (1," + std::to_string(ws.n) + ",1,1)");
}

}  // namespace detail

template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b) {
  detail::validate_conv_args(x, w, b, "conv2d");
  const Shape xs = x.shape(), ws = w.shape();
  Shape os{xs.n, ws.n, xs.h, xs.w};
  Tensor<T> out(os);
  detail::conv_forward_raw(x.values().data(), xs, w.values().data(), ws.n,
                           ws.h, ws.w, b.values().data(),
                           out.values().data());
  detail::attach<T>(out, {x.node(), w.node(), b.node()},
                    [xn = x.node(), wn = w.node(), bn = b.node(), xs,
                     ws](Node<T>& self) {
                      if (xn->requires_grad) {
                        xn->ensure_grad();
                        detail::conv_backward_input(self.grad.data(),
                                                    self.shape, wn->value.data(),
                                                    xs.c, ws.h, ws.w,
                                                    xn->grad.data());
                      }
                      if (wn->requires_grad) {
                        wn->ensure_grad();
                        detail::conv_backward_weight(self.grad.data(),
                                                     self.shape,
                                                     xn->value.data(), xs.c,
                                                     ws.h, ws.w,
                                                     wn->grad.data());
                      }
                      if (bn->requires_grad) {
                        bn->ensure_grad();
                        detail::conv_backward_bias(self.grad.data(), self.shape,
                                                   bn->grad.data());
                      }
                    });
  return out;
}

// Masked convolution: Conv(x ⊙ mask) with the mask broadcast over batch and
// channels. Gradients reach x only where the mask is 1. With renormalize the
// pre-bias response is scaled by |window| / sum(mask window) (0 where the
// window holds no valid pixel).
template <typename T>
Tensor<T> partial_conv(const Tensor<T>& x, const Tensor<T>& mask,
                       const Tensor<T>& w, const Tensor<T>& b,
                       bool renormalize = false) {
  detail::validate_conv_args(x, w, b, "partial_conv");
  const Shape xs = x.shape(), ws = w.shape(), ms = mask.shape();
  check(ms.n == 1 && ms.c == 1 && ms.h == xs.h && ms.w == xs.w,
        "partial_conv: mask shape " + ms.str() + " must be (1,1," +
            std::to_string(xs.h) + "," + std::to_string(xs.w) + ")");
  for (T v : mask.values())
    check(v == T(0) || v == T(1),
          "partial_conv: mask contains value outside {0,1}");

  const int64_t plane = xs.plane();
  auto masked = std::make_shared<std::vector<T>>(x.values());
  for (int n = 0; n < xs.n; ++n)
    for (int c = 0; c < xs.c; ++c) {
      T* p = masked->data() + (int64_t(n) * xs.c + c) * plane;
      const T* m = mask.values().data();
      for (int64_t i = 0; i < plane; ++i) p[i] *= m[i];
    }

  Shape os{xs.n, ws.n, xs.h, xs.w};
  Tensor<T> out(os);

  std::shared_ptr<std::vector<T>> scale;  // per-pixel renorm factor
  if (!renormalize) {
    detail::conv_forward_raw(masked->data(), xs, w.values().data(), ws.n, ws.h,
                             ws.w, b.values().data(), out.values().data());
  } else {
    scale = std::make_shared<std::vector<T>>(static_cast<size_t>(plane));
    std::vector<T> winsum(static_cast<size_t>(plane), T(0));
    std::vector<T> ones(size_t(ws.h) * ws.w, T(1));
    Shape ms1{1, 1, xs.h, xs.w};
    detail::conv_forward_raw(mask.values().data(), ms1, ones.data(), 1, ws.h,
                             ws.w, static_cast<const T*>(nullptr),
                             winsum.data());
    const T full = T(ws.h) * T(ws.w);
    for (int64_t i = 0; i < plane; ++i)
      (*scale)[i] = winsum[i] > T(0) ? full / winsum[i] : T(0);
    detail::conv_forward_raw(masked->data(), xs, w.values().data(), ws.n, ws.h,
                             ws.w, static_cast<const T*>(nullptr),
                             out.values().data());
    for (int n = 0; n < os.n; ++n)
      for (int oc = 0; oc < os.c; ++oc) {
        T* p = out.values().data() + (int64_t(n) * os.c + oc) * plane;
        const T bias = b.values()[oc];
        for (int64_t i = 0; i < plane; ++i) p[i] = p[i] * (*scale)[i] + bias;
      }
  }

  detail::attach<T>(
      out, {x.node(), w.node(), b.node()},
      [xn = x.node(), wn = w.node(), bn = b.node(), mn = mask.node(), masked,
       scale, xs, ws](Node<T>& self) {
        const int64_t plane = xs.plane();
        const std::vector<T>* dyp = &self.grad;
        std::vector<T> scaled;
        if (scale) {
          scaled = self.grad;
          for (int n = 0; n < self.shape.n; ++n)
            for (int oc = 0; oc < self.shape.c; ++oc) {
              T* p = scaled.data() + (int64_t(n) * self.shape.c + oc) * plane;
              for (int64_t i = 0; i < plane; ++i) p[i] *= (*scale)[i];
            }
          dyp = &scaled;
        }
        if (xn->requires_grad) {
          xn->ensure_grad();
          std::vector<T> dmasked(xn->value.size(), T(0));
          detail::conv_backward_input(dyp->data(), self.shape,
                                      wn->value.data(), xs.c, ws.h, ws.w,
                                      dmasked.data());
          for (int n = 0; n < xs.n; ++n)
            for (int c = 0; c < xs.c; ++c) {
              T* g = xn->grad.data() + (int64_t(n) * xs.c + c) * plane;
              const T* dm = dmasked.data() + (int64_t(n) * xs.c + c) * plane;
              const T* m = mn->value.data();
              for (int64_t i = 0; i < plane; ++i) g[i] += dm[i] * m[i];
            }
        }
        if (wn->requires_grad) {
          wn->ensure_grad();
          detail::conv_backward_weight(dyp->data(), self.shape, masked->data(),
                                       xs.c, ws.h, ws.w, wn->grad.data());
        }
        if (bn->requires_grad) {
          bn->ensure_grad();
          detail::conv_backward_bias(self.grad.data(), self.shape,
                                     bn->grad.data());
        }
      });
  return out;
}

// One spatial kernel per input channel; channel c of the output depends only
// on channel c of the input. Kernel tensor shape (C, 1, kh, kw).
template <typename T>
Tensor<T> depthwise_conv(const Tensor<T>& x, const Tensor<T>& w) {
  const Shape xs = x.shape(), ws = w.shape();
  check(ws.h % 2 == 1 && ws.w % 2 == 1,
        "depthwise_conv: kernel spatial size must be odd, got " + ws.str());
  check(ws.c == 1, "depthwise_conv: kernel shape " + ws.str() +
                       " must have a single input channel");
  check(ws.n == xs.c, "depthwise_conv: kernel count " + std::to_string(ws.n) +
                          " does not match channel count " +
                          std::to_string(xs.c));
  Tensor<T> out(xs);
  const int64_t plane = xs.plane();
  Shape one{1, 1, xs.h, xs.w};
  for (int n = 0; n < xs.n; ++n) {
#pragma omp parallel for schedule(static)
    for (int c = 0; c < xs.c; ++c) {
      const int64_t off = (int64_t(n) * xs.c + c) * plane;
      detail::conv_forward_raw(x.values().data() + off, one,
                               w.values().data() + int64_t(c) * ws.h * ws.w, 1,
                               ws.h, ws.w, static_cast<const T*>(nullptr),
                               out.values().data() + off);
    }
  }
  detail::attach<T>(
      out, {x.node(), w.node()},
      [xn = x.node(), wn = w.node(), xs, ws](Node<T>& self) {
        const int64_t plane = xs.plane();
        Shape one{1, 1, xs.h, xs.w};
        for (int n = 0; n < xs.n; ++n)
          for (int c = 0; c < xs.c; ++c) {
            const int64_t off = (int64_t(n) * xs.c + c) * plane;
            const int64_t woff = int64_t(c) * ws.h * ws.w;
            if (xn->requires_grad) {
              xn->ensure_grad();
              detail::conv_backward_input(self.grad.data() + off, one,
                                          wn->value.data() + woff, 1, ws.h,
                                          ws.w, xn->grad.data() + off);
            }
            if (wn->requires_grad) {
              wn->ensure_grad();
              detail::conv_backward_weight(self.grad.data() + off, one,
                                           xn->value.data() + off, 1, ws.h,
                                           ws.w, wn->grad.data() + woff);
            }
          }
      });
  return out;
}

// 1x1 channel mixing; identical to conv2d with a 1x1 kernel.
template <typename T>
Tensor<T> pointwise_conv(const Tensor<T>& x, const Tensor<T>& w,
                         const Tensor<T>& b) {
  check(w.shape().h == 1 && w.shape().w == 1,
        "pointwise_conv: kernel " + w.shape().str() + " must be 1x1");
  return conv2d(x, w, b);
}

template <typename T>
Tensor<T> global_avg_pool(const Tensor<T>& x) {
  const Shape xs = x.shape();
  check(xs.h > 0 && xs.w > 0,
        "global_avg_pool: empty spatial extent in " + xs.str());
  const int64_t plane = xs.plane();
  Tensor<T> out(Shape{xs.n, xs.c, 1, 1});
  for (int n = 0; n < xs.n; ++n)
    for (int c = 0; c < xs.c; ++c) {
      const T* p = x.values().data() + (int64_t(n) * xs.c + c) * plane;
      T acc = T(0);
      for (int64_t i = 0; i < plane; ++i) acc += p[i];
      out.values()[int64_t(n) * xs.c + c] = acc / T(plane);
    }
  detail::attach<T>(out, {x.node()}, [xn = x.node(), xs](Node<T>& self) {
    if (!xn->requires_grad) return;
    xn->ensure_grad();
    const int64_t plane = xs.plane();
    for (int n = 0; n < xs.n; ++n)
      for (int c = 0; c < xs.c; ++c) {
        const T g = self.grad[int64_t(n) * xs.c + c] / T(plane);
        T* dst = xn->grad.data() + (int64_t(n) * xs.c + c) * plane;
        for (int64_t i = 0; i < plane; ++i) dst[i] += g;
      }
  });
  return out;
}

namespace detail {

template <typename T, typename FwdF, typename GradF>
Tensor<T> unary_op(const Tensor<T>& x, FwdF f, GradF dfdx) {
  Tensor<T> out(x.shape());
  const auto& v = x.values();
  for (size_t i = 0; i < v.size(); ++i) out.values()[i] = f(v[i]);
  detail::attach<T>(out, {x.node()}, [xn = x.node(), dfdx](Node<T>& self) {
    if (!xn->requires_grad) return;
    xn->ensure_grad();
    for (size_t i = 0; i < self.grad.size(); ++i)
      xn->grad[i] += self.grad[i] * dfdx(xn->value[i], self.value[i]);
  });
  return out;
}

}  // namespace detail

template <typename T>
Tensor<T> relu(const Tensor<T>& x) {
  return detail::unary_op(
      x, [](T v) { return v > T(0) ? v : T(0); },
      [](T v, T) { return v > T(0) ? T(1) : T(0); });
}

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& x) {
  return detail::unary_op(
      x, [](T v) { return T(1) / (T(1) + std::exp(-v)); },
      [](T, T s) { return s * (T(1) - s); });
}

template <typename T>
Tensor<T> abs_val(const Tensor<T>& x) {
  return detail::unary_op(
      x, [](T v) { return v < T(0) ? -v : v; },
      [](T v, T) { return v > T(0) ? T(1) : (v < T(0) ? T(-1) : T(0)); });
}

// Clamp to [0,1]; subgradient 1 on the closed interval so an output sitting
// exactly on a bound still trains.
template <typename T>
Tensor<T> clamp01(const Tensor<T>& x) {
  return detail::unary_op(
      x, [](T v) { return std::min(T(1), std::max(T(0), v)); },
      [](T v, T) { return (v >= T(0) && v <= T(1)) ? T(1) : T(0); });
}

namespace detail {

template <typename T, typename CombF>
Tensor<T> binary_op(const Tensor<T>& a, const Tensor<T>& b, const char* who,
                    CombF f) {
  check(a.shape() == b.shape(), std::string(who) + ": shape mismatch " +
                                    a.shape().str() + " vs " +
                                    b.shape().str());
  Tensor<T> out(a.shape());
  for (size_t i = 0; i < a.values().size(); ++i)
    out.values()[i] = f(a.values()[i], b.values()[i]);
  return out;
}

}  // namespace detail

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  auto out =
      detail::binary_op(a, b, "add", [](T x, T y) { return x + y; });
  detail::attach<T>(out, {a.node(), b.node()},
                    [an = a.node(), bn = b.node()](Node<T>& self) {
                      if (an->requires_grad) {
                        an->ensure_grad();
                        for (size_t i = 0; i < self.grad.size(); ++i)
                          an->grad[i] += self.grad[i];
                      }
                      if (bn->requires_grad) {
                        bn->ensure_grad();
                        for (size_t i = 0; i < self.grad.size(); ++i)
                          bn->grad[i] += self.grad[i];
                      }
                    });
  return out;
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  auto out =
      detail::binary_op(a, b, "sub", [](T x, T y) { return x - y; });
  detail::attach<T>(out, {a.node(), b.node()},
                    [an = a.node(), bn = b.node()](Node<T>& self) {
                      if (an->requires_grad) {
                        an->ensure_grad();
                        for (size_t i = 0; i < self.grad.size(); ++i)
                          an->grad[i] += self.grad[i];
                      }
                      if (bn->requires_grad) {
                        bn->ensure_grad();
                        for (size_t i = 0; i < self.grad.size(); ++i)
                          bn->grad[i] -= self.grad[i];
                      }
                    });
  return out;
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  auto out =
      detail::binary_op(a, b, "mul", [](T x, T y) { return x * y; });
  detail::attach<T>(out, {a.node(), b.node()},
                    [an = a.node(), bn = b.node()](Node<T>& self) {
                      if (an->requires_grad) {
                        an->ensure_grad();
                        for (size_t i = 0; i < self.grad.size(); ++i)
                          an->grad[i] += self.grad[i] * bn->value[i];
                      }
                      if (bn->requires_grad) {
                        bn->ensure_grad();
                        for (size_t i = 0; i < self.grad.size(); ++i)
                          bn->grad[i] += self.grad[i] * an->value[i];
                      }
                    });
  return out;
}

template <typename T>
Tensor<T> scalar_mul(const Tensor<T>& a, T s) {
  Tensor<T> out(a.shape());
  for (size_t i = 0; i < a.values().size(); ++i)
    out.values()[i] = a.values()[i] * s;
  detail::attach<T>(out, {a.node()}, [an = a.node(), s](Node<T>& self) {
    if (!an->requires_grad) return;
    an->ensure_grad();
    for (size_t i = 0; i < self.grad.size(); ++i)
      an->grad[i] += self.grad[i] * s;
  });
  return out;
}

// Per-channel scaling (scale tensor shaped (n,c,1,1)); both factors receive
// gradients.
template <typename T>
Tensor<T> scale_channels(const Tensor<T>& x, const Tensor<T>& z) {
  const Shape xs = x.shape();
  check(z.shape() == Shape{xs.n, xs.c, 1, 1},
        "scale_channels: scale shape " + z.shape().str() + " must be (" +
            std::to_string(xs.n) + "," + std::to_string(xs.c) + ",1,1)");
  Tensor<T> out(xs);
  const int64_t plane = xs.plane();
  for (int n = 0; n < xs.n; ++n)
    for (int c = 0; c < xs.c; ++c) {
      const T s = z.values()[int64_t(n) * xs.c + c];
      const T* p = x.values().data() + (int64_t(n) * xs.c + c) * plane;
      T* o = out.values().data() + (int64_t(n) * xs.c + c) * plane;
      for (int64_t i = 0; i < plane; ++i) o[i] = p[i] * s;
    }
  detail::attach<T>(
      out, {x.node(), z.node()},
      [xn = x.node(), zn = z.node(), xs](Node<T>& self) {
        const int64_t plane = xs.plane();
        for (int n = 0; n < xs.n; ++n)
          for (int c = 0; c < xs.c; ++c) {
            const int64_t off = (int64_t(n) * xs.c + c) * plane;
            if (xn->requires_grad) {
              xn->ensure_grad();
              const T s = zn->value[int64_t(n) * xs.c + c];
              for (int64_t i = 0; i < plane; ++i)
                xn->grad[off + i] += self.grad[off + i] * s;
            }
            if (zn->requires_grad) {
              zn->ensure_grad();
              T acc = T(0);
              for (int64_t i = 0; i < plane; ++i)
                acc += self.grad[off + i] * xn->value[off + i];
              zn->grad[int64_t(n) * xs.c + c] += acc;
            }
          }
      });
  return out;
}

// Affine map on per-batch channel vectors followed by an optional activation.
// v: (n,k,1,1), w: (m,k,1,1), b: (1,m,1,1) -> (n,m,1,1).
template <typename T>
Tensor<T> fully_connected(const Tensor<T>& v, const Tensor<T>& w,
                          const Tensor<T>& b, Activation act) {
  const Shape vs = v.shape(), ws = w.shape();
  check(vs.h == 1 && vs.w == 1,
        "fully_connected: input " + vs.str() + " must be (n,k,1,1)");
  check(ws.h == 1 && ws.w == 1 && ws.c == vs.c,
        "fully_connected: weights " + ws.str() + " incompatible with input " +
            vs.str());
  check(b.shape() == Shape{1, ws.n, 1, 1},
        "fully_connected: bias shape " + b.shape().str() + " must be (1," +
            std::to_string(ws.n) + ",1,1)");
  const int K = vs.c, M = ws.n, N = vs.n;
  Tensor<T> out(Shape{N, M, 1, 1});
  for (int n = 0; n < N; ++n)
    for (int m = 0; m < M; ++m) {
      T acc = b.values()[m];
      const T* wr = w.values().data() + int64_t(m) * K;
      const T* vr = v.values().data() + int64_t(n) * K;
      for (int k = 0; k < K; ++k) acc += wr[k] * vr[k];
      out.values()[int64_t(n) * M + m] = acc;
    }
  detail::attach<T>(
      out, {v.node(), w.node(), b.node()},
      [vn = v.node(), wn = w.node(), bn = b.node(), K, M, N](Node<T>& self) {
        for (int n = 0; n < N; ++n)
          for (int m = 0; m < M; ++m) {
            const T g = self.grad[int64_t(n) * M + m];
            if (vn->requires_grad) {
              vn->ensure_grad();
              const T* wr = wn->value.data() + int64_t(m) * K;
              T* dst = vn->grad.data() + int64_t(n) * K;
              for (int k = 0; k < K; ++k) dst[k] += g * wr[k];
            }
            if (wn->requires_grad) {
              wn->ensure_grad();
              const T* vr = vn->value.data() + int64_t(n) * K;
              T* dst = wn->grad.data() + int64_t(m) * K;
              for (int k = 0; k < K; ++k) dst[k] += g * vr[k];
            }
            if (bn->requires_grad) {
              bn->ensure_grad();
              bn->grad[m] += g;
            }
          }
      });
  switch (act) {
    case Activation::None:
      return out;
    case Activation::Relu:
      return relu(out);
    case Activation::Sigmoid:
      return sigmoid(out);
  }
  throw std::logic_error("fully_connected: unknown activation");
}

template <typename T>
Tensor<T> sum(const Tensor<T>& x) {
  Tensor<T> out(Shape{1, 1, 1, 1});
  T acc = T(0);
  for (T v : x.values()) acc += v;
  out.values()[0] = acc;
  detail::attach<T>(out, {x.node()}, [xn = x.node()](Node<T>& self) {
    if (!xn->requires_grad) return;
    xn->ensure_grad();
    const T g = self.grad[0];
    for (size_t i = 0; i < xn->grad.size(); ++i) xn->grad[i] += g;
  });
  return out;
}

template <typename T>
Tensor<T> mean(const Tensor<T>& x) {
  check(x.numel() > 0, "mean: empty tensor");
  return scalar_mul(sum(x), T(1) / T(x.numel()));
}

// Fixed sparse linear combination: out[i] = sum_t w[i][t] * x[idx[i][t]].
// Indices address the (single-channel) spatial plane of x. This is the
// resampling primitive behind differentiable viewport extraction.
template <typename T>
Tensor<T> gather_bilinear(const Tensor<T>& x,
                          const std::vector<std::array<int64_t, 4>>& idx,
                          const std::vector<std::array<double, 4>>& wts,
                          int oh, int ow) {
  const Shape xs = x.shape();
  check(xs.n == 1 && xs.c == 1,
        "gather_bilinear: input " + xs.str() + " must be (1,1,h,w)");
  check(idx.size() == wts.size() &&
            static_cast<int64_t>(idx.size()) == int64_t(oh) * ow,
        "gather_bilinear: table size does not match output raster");
  const int64_t plane = xs.plane();
  Tensor<T> out(Shape{1, 1, oh, ow});
  for (size_t i = 0; i < idx.size(); ++i) {
    T acc = T(0);
    for (int t = 0; t < 4; ++t) {
      check(idx[i][t] >= 0 && idx[i][t] < plane,
            "gather_bilinear: index out of range");
      acc += T(wts[i][t]) * x.values()[idx[i][t]];
    }
    out.values()[i] = acc;
  }
  if (x.requires_grad()) {
    auto idx_copy = std::make_shared<std::vector<std::array<int64_t, 4>>>(idx);
    auto wts_copy = std::make_shared<std::vector<std::array<double, 4>>>(wts);
    detail::attach<T>(
        out, {x.node()},
        [xn = x.node(), idx_copy, wts_copy](Node<T>& self) {
          xn->ensure_grad();
          for (size_t i = 0; i < self.grad.size(); ++i)
            for (int t = 0; t < 4; ++t)
              xn->grad[(*idx_copy)[i][t]] +=
                  self.grad[i] * T((*wts_copy)[i][t]);
        });
  }
  return out;
}

// Reverse accumulation from a scalar root. A record can be walked once;
// re-running requires a fresh forward pass.
template <typename T>
void backward(Tensor<T>& loss) {
  auto root = loss.node();
  check(root->shape.numel() == 1,
        "backward: root " + root->shape.str() + " is not scalar");
  if (root->backward_done)
    throw std::logic_error(
        "backward: already called on this record; run forward again first");
  root->backward_done = true;
  if (!root->requires_grad) return;  // nothing recorded gradients

  // Iterative post-order DFS; children end up after parents when reversed.
  std::vector<Node<T>*> order;
  std::unordered_set<Node<T>*> seen;
  std::vector<std::pair<Node<T>*, size_t>> stack{{root.get(), 0}};
  seen.insert(root.get());
  while (!stack.empty()) {
    Node<T>* node = stack.back().first;
    const size_t next = stack.back().second;
    if (next < node->parents.size()) {
      stack.back().second++;
      Node<T>* p = node->parents[next].get();
      if (p->requires_grad && !seen.count(p)) {
        seen.insert(p);
        stack.push_back({p, 0});
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  root->ensure_grad();
  root->grad[0] = T(1);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node<T>* n = *it;
    if (n->backprop) {
      n->ensure_grad();
      n->backprop(*n);
    }
  }
}

}  // namespace erpf::nn
