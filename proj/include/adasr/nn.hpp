#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "adasr/conv.hpp"
#include "adasr/rng.hpp"

namespace adasr {

// Named parameter/buffer table. Buffers carry a kind tag so structural checks
// can assert the absence of batch statistics.
template <typename S>
struct ParamEntry {
  std::string name;
  Var<S> var;
  bool is_buffer = false;
  std::string kind;  // "param" or a buffer kind such as "batch_stat"
};

template <typename S>
class ParamRegistry {
 public:
  void add(const std::string& name, const Var<S>& v) {
    entries_.push_back({name, v, false, "param"});
  }
  void add_buffer(const std::string& name, const Var<S>& v, const std::string& kind) {
    entries_.push_back({name, v, true, kind});
  }
  const std::vector<ParamEntry<S>>& entries() const& { return entries_; }
  // Iterating entries of a temporary registry must not dangle.
  std::vector<ParamEntry<S>> entries() && { return std::move(entries_); }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& e : entries_)
      if (!e.is_buffer) n += e.var.value().numel();
    return n;
  }

  int batch_stat_buffers() const {
    int n = 0;
    for (const auto& e : entries_)
      if (e.is_buffer && e.kind == "batch_stat") ++n;
    return n;
  }

  void zero_grads() const {
    for (const auto& e : entries_) e.var.zero_grad();
  }

 private:
  std::vector<ParamEntry<S>> entries_;
};

namespace init {

// Orthogonal rows (or columns when fan-in < fan-out), scaled by `gain`.
template <typename S>
Tensor<S> orthogonal(Shape shape, Rng& rng, double gain) {
  const std::size_t rows = static_cast<std::size_t>(shape[0]);
  const std::size_t cols = shape.numel() / rows;
  Eigen::MatrixXd a(static_cast<Eigen::Index>(std::max(rows, cols)),
                    static_cast<Eigen::Index>(std::min(rows, cols)));
  for (Eigen::Index i = 0; i < a.rows(); ++i)
    for (Eigen::Index j = 0; j < a.cols(); ++j) a(i, j) = rng.normal();
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(a);
  Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(a.rows(), a.cols());
  // sign correction keeps the distribution uniform
  for (Eigen::Index j = 0; j < q.cols(); ++j)
    if (qr.matrixQR()(j, j) < 0) q.col(j) = -q.col(j);
  Tensor<S> t(shape);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) {
      const double v = (rows >= cols) ? q(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c))
                                      : q(static_cast<Eigen::Index>(c), static_cast<Eigen::Index>(r));
      t.data[r * cols + c] = static_cast<S>(gain * v);
    }
  return t;
}

}  // namespace init

template <typename S>
struct Conv2dLayer {
  Var<S> w, b;
  int stride = 1;

  Conv2dLayer() = default;
  Conv2dLayer(int cin, int cout, int k, int stride_, Rng& rng, double gain = std::sqrt(2.0),
              bool zero_init = false)
      : stride(stride_) {
    Tensor<S> wt = zero_init ? Tensor<S>(Shape{cout, cin, k, k})
                             : init::orthogonal<S>(Shape{cout, cin, k, k}, rng, gain);
    w = Var<S>::leaf(std::move(wt));
    b = Var<S>::leaf(Tensor<S>(Shape{cout}));
  }

  Var<S> operator()(const Var<S>& x) const { return conv2d(x, w, b, stride); }

  void collect(const std::string& prefix, ParamRegistry<S>& reg) const {
    reg.add(prefix + ".weight", w);
    reg.add(prefix + ".bias", b);
  }
};

template <typename S>
struct LinearLayer {
  Var<S> w, b;

  LinearLayer() = default;
  LinearLayer(int fin, int fout, Rng& rng, double gain = 1.0, bool zero_init = false) {
    Tensor<S> wt = zero_init ? Tensor<S>(Shape{fout, fin})
                             : init::orthogonal<S>(Shape{fout, fin}, rng, gain);
    w = Var<S>::leaf(std::move(wt));
    b = Var<S>::leaf(Tensor<S>(Shape{fout}));
  }

  Var<S> operator()(const Var<S>& x) const { return linear(x, w, b); }

  void collect(const std::string& prefix, ParamRegistry<S>& reg) const {
    reg.add(prefix + ".weight", w);
    reg.add(prefix + ".bias", b);
  }
};

// Instance norm with a learnable per-channel affine part. Statistics are computed
// per sample, so nothing here depends on batch composition.
template <typename S>
struct InstanceNormLayer {
  Var<S> gamma, beta;

  InstanceNormLayer() = default;
  explicit InstanceNormLayer(int channels) {
    gamma = Var<S>::leaf(Tensor<S>(Shape{1, channels, 1, 1}, S(1)));
    beta = Var<S>::leaf(Tensor<S>(Shape{1, channels, 1, 1}));
  }

  Var<S> operator()(const Var<S>& x) const {
    return add(mul(instance_norm(x), gamma), beta);
  }

  void collect(const std::string& prefix, ParamRegistry<S>& reg) const {
    reg.add(prefix + ".gamma", gamma);
    reg.add(prefix + ".beta", beta);
  }
};

// conv -> instance norm -> relu
template <typename S>
struct ConvBlock {
  Conv2dLayer<S> conv;
  InstanceNormLayer<S> norm;

  ConvBlock() = default;
  ConvBlock(int cin, int cout, int k, int stride, Rng& rng) : conv(cin, cout, k, stride, rng),
                                                              norm(cout) {}

  Var<S> operator()(const Var<S>& x) const { return relu(norm(conv(x))); }

  void collect(const std::string& prefix, ParamRegistry<S>& reg) const {
    conv.collect(prefix + ".conv", reg);
    norm.collect(prefix + ".norm", reg);
  }
};

}  // namespace adasr
