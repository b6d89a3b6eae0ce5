#pragma once

#include <functional>

#include "erpf/tensor.hpp"

namespace erpf::nn {

// Central finite-difference check of reverse-mode gradients. `f` must build
// a fresh scalar graph from the given leaves on every call; the leaves are
// perturbed in place between calls. Per element the error measure is
// |analytic - numeric| / max(1, |analytic|, |numeric|), so it behaves as an
// absolute error for small gradients and a relative one for large.
//
// When max_elems_per_input > 0, only that many evenly spaced elements of each
// leaf are probed; the analytic pass always covers everything.
template <typename T>
double grad_check(
    const std::function<Tensor<T>(std::vector<Tensor<T>>&)>& f,
    std::vector<Tensor<T>> inputs, T fd_step,
    int max_elems_per_input = -1) {
  for (auto& t : inputs) t.set_requires_grad(true);

  auto loss = f(inputs);
  backward(loss);
  std::vector<std::vector<T>> analytic;
  for (auto& t : inputs) {
    if (t.grad().size() != t.values().size())
      analytic.push_back(std::vector<T>(t.values().size(), T(0)));
    else
      analytic.push_back(t.grad());
  }

  double max_err = 0.0;
  for (size_t k = 0; k < inputs.size(); ++k) {
    auto& vals = inputs[k].values();
    const int64_t n = int64_t(vals.size());
    int64_t probes = n;
    if (max_elems_per_input > 0 && n > max_elems_per_input)
      probes = max_elems_per_input;
    for (int64_t j = 0; j < probes; ++j) {
      const int64_t i = (probes == n) ? j : (j * n) / probes;
      const T orig = vals[i];
      vals[i] = orig + fd_step;
      const T up = f(inputs).item();
      vals[i] = orig - fd_step;
      const T down = f(inputs).item();
      vals[i] = orig;
      const double num = (double(up) - double(down)) / (2.0 * double(fd_step));
      const double ana = double(analytic[k][i]);
      const double err = std::abs(ana - num) /
                         std::max({1.0, std::abs(ana), std::abs(num)});
      max_err = std::max(max_err, err);
    }
  }
  return max_err;
}

}  // namespace erpf::nn
