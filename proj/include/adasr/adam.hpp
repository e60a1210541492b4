#pragma once

#include <map>

#include "adasr/config.hpp"
#include "adasr/nn.hpp"

namespace adasr {

// Adaptive-moment optimizer with bias correction and global-norm gradient
// clipping. Moment tensors are keyed by parameter name so they survive
// checkpoint round trips.
template <typename S>
class AdamOptimizer {
 public:
  AdamOptimizer() = default;
  explicit AdamOptimizer(const OptimizerConfig& cfg) : cfg_(cfg) {}

  void step(const ParamRegistry<S>& params) {
    ++t_;
    // global-norm clip
    double norm2 = 0;
    for (const auto& e : params.entries()) {
      if (e.is_buffer || !e.var.has_grad()) continue;
      for (const S& g : e.var.grad().data) norm2 += static_cast<double>(g) * g;
    }
    const double norm = std::sqrt(norm2);
    const double scale =
        (cfg_.grad_clip_norm > 0 && norm > cfg_.grad_clip_norm) ? cfg_.grad_clip_norm / norm : 1.0;

    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    const S lr = static_cast<S>(cfg_.lr * std::sqrt(bc2) / bc1);
    const S b1 = static_cast<S>(cfg_.beta1), b2 = static_cast<S>(cfg_.beta2);
    const S eps = static_cast<S>(1e-8);

    for (const auto& e : params.entries()) {
      if (e.is_buffer || !e.var.has_grad()) continue;
      Tensor<S>& m = m_.try_emplace(e.name, Tensor<S>::zeros(e.var.shape())).first->second;
      Tensor<S>& v = v_.try_emplace(e.name, Tensor<S>::zeros(e.var.shape())).first->second;
      auto& w = e.var.mutable_value();
      const auto& g = e.var.grad();
      for (std::size_t i = 0; i < w.numel(); ++i) {
        const S gi = g.data[i] * static_cast<S>(scale);
        m.data[i] = b1 * m.data[i] + (S(1) - b1) * gi;
        v.data[i] = b2 * v.data[i] + (S(1) - b2) * gi * gi;
        w.data[i] -= lr * m.data[i] / (std::sqrt(v.data[i]) + eps);
      }
    }
  }

  std::uint64_t t() const { return t_; }
  void set_t(std::uint64_t t) { t_ = t; }
  const std::map<std::string, Tensor<S>>& m_state() const { return m_; }
  const std::map<std::string, Tensor<S>>& v_state() const { return v_; }
  void restore(std::uint64_t t, std::map<std::string, Tensor<S>> m,
               std::map<std::string, Tensor<S>> v) {
    t_ = t;
    m_ = std::move(m);
    v_ = std::move(v);
  }

 private:
  OptimizerConfig cfg_;
  std::uint64_t t_ = 0;
  std::map<std::string, Tensor<S>> m_, v_;
};

}  // namespace adasr
