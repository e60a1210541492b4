#pragma once

#include <functional>
#include <vector>

#include "adasr/ops.hpp"
#include "adasr/rng.hpp"

namespace adasr::testing {

struct GradCheck {
  int checked = 0;
  int ok = 0;
  double worst = 0.0;
  double pass_fraction() const { return checked ? static_cast<double>(ok) / checked : 1.0; }
};

// Central-difference check of autodiff gradients at float64. Samples up to
// `n_samples` coordinates across all inputs and compares against analytic
// grads with relative tolerance `tol`.
inline GradCheck grad_check(
    const std::function<Var<double>(const std::vector<Var<double>>&)>& build,
    std::vector<Tensor<double>> init, int n_samples, Rng& rng, double h = 1e-5,
    double tol = 1e-2) {
  GradCheck res;
  auto make_leaves = [&](const std::vector<Tensor<double>>& ts) {
    std::vector<Var<double>> vs;
    vs.reserve(ts.size());
    for (const auto& t : ts) vs.push_back(Var<double>::leaf(t));
    return vs;
  };
  std::vector<Var<double>> leaves = make_leaves(init);
  Var<double> loss = build(leaves);
  backward(loss);

  std::size_t total = 0;
  for (const auto& t : init) total += t.numel();
  for (int s = 0; s < n_samples; ++s) {
    std::size_t pick = static_cast<std::size_t>(rng.uniform_int(0, static_cast<long>(total) - 1));
    std::size_t pi = 0;
    while (pick >= init[pi].numel()) {
      pick -= init[pi].numel();
      ++pi;
    }
    const double analytic =
        leaves[pi].has_grad() ? leaves[pi].grad().data[pick] : 0.0;

    auto eval = [&](double delta) {
      std::vector<Tensor<double>> ts = init;
      ts[pi].data[pick] += delta;
      NoGradGuard ng;
      std::vector<Var<double>> vs;
      vs.reserve(ts.size());
      for (auto& t : ts) vs.push_back(Var<double>::constant(t));
      return build(vs).value().data[0];
    };
    const double fd = (eval(h) - eval(-h)) / (2.0 * h);
    const double denom = std::max({std::abs(analytic), std::abs(fd), 1e-4});
    const double rel = std::abs(analytic - fd) / denom;
    res.checked++;
    if (rel < tol) res.ok++;
    res.worst = std::max(res.worst, rel);
  }
  return res;
}

inline Tensor<double> random_tensor(Shape s, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Tensor<double> t(s);
  for (auto& v : t.data) v = rng.uniform(lo, hi);
  return t;
}

inline Tensor<float> random_tensor_f(Shape s, Rng& rng, float lo = -1.0f, float hi = 1.0f) {
  Tensor<float> t(s);
  for (auto& v : t.data) v = static_cast<float>(rng.uniform(lo, hi));
  return t;
}

}  // namespace adasr::testing
