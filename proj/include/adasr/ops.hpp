#pragma once

#include <cmath>
#include <vector>

#include "adasr/autodiff.hpp"

namespace adasr {

// ---- elementwise binary with broadcasting ----

template <typename S>
Var<S> add(const Var<S>& a, const Var<S>& b) {
  Tensor<S> out = broadcast_apply(a.value(), b.value(), [](S x, S y) { return x + y; });
  return make_op<S>(std::move(out), {a, b}, [a, b](Node<S>& n) {
    if (a.requires_grad()) a.grad().array() += reduce_to(n.grad, a.shape()).array();
    if (b.requires_grad()) b.grad().array() += reduce_to(n.grad, b.shape()).array();
  });
}

template <typename S>
Var<S> sub(const Var<S>& a, const Var<S>& b) {
  Tensor<S> out = broadcast_apply(a.value(), b.value(), [](S x, S y) { return x - y; });
  return make_op<S>(std::move(out), {a, b}, [a, b](Node<S>& n) {
    if (a.requires_grad()) a.grad().array() += reduce_to(n.grad, a.shape()).array();
    if (b.requires_grad()) b.grad().array() -= reduce_to(n.grad, b.shape()).array();
  });
}

template <typename S>
Var<S> mul(const Var<S>& a, const Var<S>& b) {
  Tensor<S> out = broadcast_apply(a.value(), b.value(), [](S x, S y) { return x * y; });
  return make_op<S>(std::move(out), {a, b}, [a, b](Node<S>& n) {
    if (a.requires_grad()) {
      Tensor<S> t = broadcast_apply(n.grad, b.value(), [](S g, S y) { return g * y; });
      a.grad().array() += reduce_to(t, a.shape()).array();
    }
    if (b.requires_grad()) {
      Tensor<S> t = broadcast_apply(n.grad, a.value(), [](S g, S x) { return g * x; });
      b.grad().array() += reduce_to(t, b.shape()).array();
    }
  });
}

template <typename S>
Var<S> div(const Var<S>& a, const Var<S>& b) {
  Tensor<S> out = broadcast_apply(a.value(), b.value(), [](S x, S y) { return x / y; });
  return make_op<S>(std::move(out), {a, b}, [a, b](Node<S>& n) {
    if (a.requires_grad()) {
      Tensor<S> t = broadcast_apply(n.grad, b.value(), [](S g, S y) { return g / y; });
      a.grad().array() += reduce_to(t, a.shape()).array();
    }
    if (b.requires_grad()) {
      Tensor<S> q = broadcast_apply(a.value(), b.value(), [](S x, S y) { return -x / (y * y); });
      Tensor<S> t = broadcast_apply(n.grad, q, [](S g, S d) { return g * d; });
      b.grad().array() += reduce_to(t, b.shape()).array();
    }
  });
}

// ---- scalar / unary ----

template <typename S>
Var<S> add_scalar(const Var<S>& a, S c) {
  Tensor<S> out = a.value();
  out.array() += c;
  return make_op<S>(std::move(out), {a}, [a](Node<S>& n) {
    if (a.requires_grad()) a.grad().array() += n.grad.array();
  });
}

template <typename S>
Var<S> mul_scalar(const Var<S>& a, S c) {
  Tensor<S> out = a.value();
  out.array() *= c;
  return make_op<S>(std::move(out), {a}, [a, c](Node<S>& n) {
    if (a.requires_grad()) a.grad().array() += n.grad.array() * c;
  });
}

template <typename S>
Var<S> neg(const Var<S>& a) {
  return mul_scalar(a, S(-1));
}

template <typename S, typename FwdF, typename GradF>
Var<S> unary_op(const Var<S>& a, FwdF f, GradF dfdx_from_xy) {
  Tensor<S> out(a.shape());
  const auto& x = a.value();
  for (std::size_t i = 0; i < x.numel(); ++i) out.data[i] = f(x.data[i]);
  Tensor<S> y = out;
  return make_op<S>(std::move(out), {a}, [a, y, dfdx_from_xy](Node<S>& n) {
    if (!a.requires_grad()) return;
    auto& g = a.grad();
    const auto& x = a.value();
    for (std::size_t i = 0; i < x.numel(); ++i)
      g.data[i] += n.grad.data[i] * dfdx_from_xy(x.data[i], y.data[i]);
  });
}

template <typename S>
Var<S> relu(const Var<S>& a) {
  return unary_op(
      a, [](S x) { return x > S(0) ? x : S(0); }, [](S x, S) { return x > S(0) ? S(1) : S(0); });
}

template <typename S>
Var<S> leaky_relu(const Var<S>& a, S slope = S(0.2)) {
  return unary_op(
      a, [slope](S x) { return x > S(0) ? x : slope * x; },
      [slope](S x, S) { return x > S(0) ? S(1) : slope; });
}

template <typename S>
Var<S> sigmoid(const Var<S>& a) {
  return unary_op(
      a, [](S x) { return S(1) / (S(1) + std::exp(-x)); },
      [](S, S y) { return y * (S(1) - y); });
}

template <typename S>
Var<S> tanh_op(const Var<S>& a) {
  return unary_op(
      a, [](S x) { return std::tanh(x); }, [](S, S y) { return S(1) - y * y; });
}

template <typename S>
Var<S> exp_op(const Var<S>& a) {
  return unary_op(
      a, [](S x) { return std::exp(x); }, [](S, S y) { return y; });
}

template <typename S>
Var<S> log_op(const Var<S>& a) {
  return unary_op(
      a, [](S x) { return std::log(x); }, [](S x, S) { return S(1) / x; });
}

template <typename S>
Var<S> abs_op(const Var<S>& a) {
  return unary_op(
      a, [](S x) { return std::abs(x); },
      [](S x, S) { return x > S(0) ? S(1) : (x < S(0) ? S(-1) : S(0)); });
}

template <typename S>
Var<S> square(const Var<S>& a) {
  return unary_op(
      a, [](S x) { return x * x; }, [](S x, S) { return S(2) * x; });
}

template <typename S>
Var<S> sqrt_op(const Var<S>& a) {
  return unary_op(
      a, [](S x) { return std::sqrt(x); }, [](S, S y) { return S(0.5) / y; });
}

// ---- reductions ----

template <typename S>
Var<S> sum_all(const Var<S>& a) {
  Tensor<S> out = Tensor<S>::scalar(a.value().array().sum());
  return make_op<S>(std::move(out), {a}, [a](Node<S>& n) {
    if (a.requires_grad()) a.grad().array() += n.grad.data[0];
  });
}

template <typename S>
Var<S> mean_all(const Var<S>& a) {
  const S inv = S(1) / static_cast<S>(a.value().numel());
  Tensor<S> out = Tensor<S>::scalar(a.value().array().sum() * inv);
  return make_op<S>(std::move(out), {a}, [a, inv](Node<S>& n) {
    if (a.requires_grad()) a.grad().array() += n.grad.data[0] * inv;
  });
}

// Sum along one axis, keeping it as size 1.
template <typename S>
Var<S> sum_axis(const Var<S>& a, int axis) {
  const Shape& s = a.shape();
  Shape os = s;
  os[axis] = 1;
  Tensor<S> out(os);
  std::size_t outer = 1, inner = 1;
  for (int i = 0; i < axis; ++i) outer *= static_cast<std::size_t>(s[i]);
  for (int i = axis + 1; i < s.rank(); ++i) inner *= static_cast<std::size_t>(s[i]);
  const std::size_t n = static_cast<std::size_t>(s[axis]);
  const auto& x = a.value();
  for (std::size_t o = 0; o < outer; ++o)
    for (std::size_t k = 0; k < n; ++k) {
      const S* src = x.data.data() + (o * n + k) * inner;
      S* dst = out.data.data() + o * inner;
      for (std::size_t i = 0; i < inner; ++i) dst[i] += src[i];
    }
  return make_op<S>(std::move(out), {a}, [a, outer, inner, n](Node<S>& nd) {
    if (!a.requires_grad()) return;
    auto& g = a.grad();
    for (std::size_t o = 0; o < outer; ++o)
      for (std::size_t k = 0; k < n; ++k) {
        S* dst = g.data.data() + (o * n + k) * inner;
        const S* src = nd.grad.data.data() + o * inner;
        for (std::size_t i = 0; i < inner; ++i) dst[i] += src[i];
      }
  });
}

// ---- shaping ----

template <typename S>
Var<S> reshape(const Var<S>& a, Shape s) {
  Tensor<S> out = a.value().reshaped(s);
  return make_op<S>(std::move(out), {a}, [a](Node<S>& n) {
    if (a.requires_grad()) a.grad().array() += n.grad.array();
  });
}

template <typename S>
Var<S> concat(const std::vector<Var<S>>& parts, int axis) {
  check_shape(!parts.empty(), "concat: empty input");
  Shape os = parts[0].shape();
  int total = 0;
  for (const auto& p : parts) {
    check_shape(p.shape().rank() == os.rank(), "concat: rank mismatch");
    for (int i = 0; i < os.rank(); ++i)
      if (i != axis) check_shape(p.shape()[i] == os[i], "concat: dim mismatch");
    total += p.shape()[axis];
  }
  os[axis] = total;
  Tensor<S> out(os);
  std::size_t outer = 1, inner = 1;
  for (int i = 0; i < axis; ++i) outer *= static_cast<std::size_t>(os[i]);
  for (int i = axis + 1; i < os.rank(); ++i) inner *= static_cast<std::size_t>(os[i]);
  const std::size_t ostride = static_cast<std::size_t>(total) * inner;
  std::size_t off = 0;
  for (const auto& p : parts) {
    const std::size_t len = static_cast<std::size_t>(p.shape()[axis]) * inner;
    for (std::size_t o = 0; o < outer; ++o)
      std::copy_n(p.value().data.data() + o * len, len, out.data.data() + o * ostride + off);
    off += len;
  }
  std::vector<std::size_t> part_len;
  part_len.reserve(parts.size());
  for (const auto& p : parts) part_len.push_back(static_cast<std::size_t>(p.shape()[axis]) * inner);
  return make_op<S>(std::move(out), parts, [parts, part_len, outer, ostride](Node<S>& n) {
    std::size_t off = 0;
    for (std::size_t pi = 0; pi < parts.size(); ++pi) {
      const std::size_t plen = part_len[pi];
      const auto& p = parts[pi];
      if (p.requires_grad()) {
        auto& g = p.grad();
        for (std::size_t o = 0; o < outer; ++o) {
          const S* src = n.grad.data.data() + o * ostride + off;
          S* dst = g.data.data() + o * plen;
          for (std::size_t i = 0; i < plen; ++i) dst[i] += src[i];
        }
      }
      off += plen;
    }
  });
}

template <typename S>
Var<S> slice(const Var<S>& a, int axis, int start, int len) {
  const Shape& s = a.shape();
  check_shape(start >= 0 && start + len <= s[axis], "slice: out of range");
  Shape os = s;
  os[axis] = len;
  Tensor<S> out(os);
  std::size_t outer = 1, inner = 1;
  for (int i = 0; i < axis; ++i) outer *= static_cast<std::size_t>(s[i]);
  for (int i = axis + 1; i < s.rank(); ++i) inner *= static_cast<std::size_t>(s[i]);
  const std::size_t astride = static_cast<std::size_t>(s[axis]) * inner;
  const std::size_t olen = static_cast<std::size_t>(len) * inner;
  for (std::size_t o = 0; o < outer; ++o)
    std::copy_n(a.value().data.data() + o * astride + static_cast<std::size_t>(start) * inner,
                olen, out.data.data() + o * olen);
  return make_op<S>(std::move(out), {a}, [a, outer, inner, astride, olen, start](Node<S>& n) {
    if (!a.requires_grad()) return;
    auto& g = a.grad();
    for (std::size_t o = 0; o < outer; ++o) {
      const S* src = n.grad.data.data() + o * olen;
      S* dst = g.data.data() + o * astride + static_cast<std::size_t>(start) * inner;
      for (std::size_t i = 0; i < olen; ++i) dst[i] += src[i];
    }
  });
}

// ---- matmul / linear ----

template <typename S>
using MatMap = Eigen::Map<Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
template <typename S>
using CMatMap =
    Eigen::Map<const Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

template <typename S>
Var<S> matmul(const Var<S>& a, const Var<S>& b) {
  check_shape(a.shape().rank() == 2 && b.shape().rank() == 2, "matmul: rank-2 operands required");
  const int m = a.shape()[0], k = a.shape()[1], n = b.shape()[1];
  check_shape(b.shape()[0] == k, "matmul: inner dims " + a.shape().str() + " " + b.shape().str());
  Tensor<S> out(Shape{m, n});
  CMatMap<S> am(a.value().data.data(), m, k);
  CMatMap<S> bm(b.value().data.data(), k, n);
  MatMap<S> om(out.data.data(), m, n);
  om.noalias() = am * bm;
  return make_op<S>(std::move(out), {a, b}, [a, b, m, k, n](Node<S>& nd) {
    CMatMap<S> g(nd.grad.data.data(), m, n);
    if (a.requires_grad()) {
      CMatMap<S> bm(b.value().data.data(), k, n);
      MatMap<S> ga(a.grad().data.data(), m, k);
      ga.noalias() += g * bm.transpose();
    }
    if (b.requires_grad()) {
      CMatMap<S> am(a.value().data.data(), m, k);
      MatMap<S> gb(b.grad().data.data(), k, n);
      gb.noalias() += am.transpose() * g;
    }
  });
}

// x:(B,F) w:(O,F) b:(O) -> (B,O)
template <typename S>
Var<S> linear(const Var<S>& x, const Var<S>& w, const Var<S>& b) {
  const int B = x.shape()[0], F = x.shape()[1], O = w.shape()[0];
  check_shape(w.shape()[1] == F && b.shape()[0] == O, "linear: shape mismatch");
  Tensor<S> out(Shape{B, O});
  CMatMap<S> xm(x.value().data.data(), B, F);
  CMatMap<S> wm(w.value().data.data(), O, F);
  MatMap<S> om(out.data.data(), B, O);
  om.noalias() = xm * wm.transpose();
  om.rowwise() += Eigen::Map<const Eigen::Matrix<S, 1, Eigen::Dynamic>>(b.value().data.data(), O);
  return make_op<S>(std::move(out), {x, w, b}, [x, w, b, B, F, O](Node<S>& nd) {
    CMatMap<S> g(nd.grad.data.data(), B, O);
    if (x.requires_grad()) {
      CMatMap<S> wm(w.value().data.data(), O, F);
      MatMap<S> gx(x.grad().data.data(), B, F);
      gx.noalias() += g * wm;
    }
    if (w.requires_grad()) {
      CMatMap<S> xm(x.value().data.data(), B, F);
      MatMap<S> gw(w.grad().data.data(), O, F);
      gw.noalias() += g.transpose() * xm;
    }
    if (b.requires_grad()) {
      Eigen::Map<Eigen::Matrix<S, 1, Eigen::Dynamic>> gb(b.grad().data.data(), O);
      gb += g.colwise().sum();
    }
  });
}

// ---- softmax ----

// Softmax over axis 1 of (B,C,...) tensors.
template <typename S>
Var<S> softmax_channels(const Var<S>& a) {
  const Shape& s = a.shape();
  check_shape(s.rank() >= 2, "softmax_channels: rank >= 2 required");
  const std::size_t B = static_cast<std::size_t>(s[0]);
  const std::size_t C = static_cast<std::size_t>(s[1]);
  std::size_t inner = 1;
  for (int i = 2; i < s.rank(); ++i) inner *= static_cast<std::size_t>(s[i]);
  Tensor<S> out(s);
  const auto& x = a.value();
  for (std::size_t bgi = 0; bgi < B * inner; ++bgi) {
    const std::size_t bi = bgi / inner, ii = bgi % inner;
    const std::size_t base = bi * C * inner + ii;
    S m = x.data[base];
    for (std::size_t c = 1; c < C; ++c) m = std::max(m, x.data[base + c * inner]);
    S z = S(0);
    for (std::size_t c = 0; c < C; ++c) {
      const S e = std::exp(x.data[base + c * inner] - m);
      out.data[base + c * inner] = e;
      z += e;
    }
    const S invz = S(1) / z;
    for (std::size_t c = 0; c < C; ++c) out.data[base + c * inner] *= invz;
  }
  Tensor<S> y = out;
  return make_op<S>(std::move(out), {a}, [a, y, B, C, inner](Node<S>& nd) {
    if (!a.requires_grad()) return;
    auto& g = a.grad();
    for (std::size_t bgi = 0; bgi < B * inner; ++bgi) {
      const std::size_t bi = bgi / inner, ii = bgi % inner;
      const std::size_t base = bi * C * inner + ii;
      S dot = S(0);
      for (std::size_t c = 0; c < C; ++c)
        dot += nd.grad.data[base + c * inner] * y.data[base + c * inner];
      for (std::size_t c = 0; c < C; ++c) {
        const std::size_t k = base + c * inner;
        g.data[k] += y.data[k] * (nd.grad.data[k] - dot);
      }
    }
  });
}

// Softmax over the trailing H*W axes of (B,K,H,W).
template <typename S>
Var<S> softmax_spatial(const Var<S>& a) {
  const Shape& s = a.shape();
  check_shape(s.rank() == 4, "softmax_spatial: (B,K,H,W) required");
  const std::size_t groups = static_cast<std::size_t>(s[0]) * static_cast<std::size_t>(s[1]);
  const std::size_t n = static_cast<std::size_t>(s[2]) * static_cast<std::size_t>(s[3]);
  Tensor<S> out(s);
  const auto& x = a.value();
  for (std::size_t gi = 0; gi < groups; ++gi) {
    const S* px = x.data.data() + gi * n;
    S* po = out.data.data() + gi * n;
    S m = px[0];
    for (std::size_t i = 1; i < n; ++i) m = std::max(m, px[i]);
    S z = S(0);
    for (std::size_t i = 0; i < n; ++i) {
      po[i] = std::exp(px[i] - m);
      z += po[i];
    }
    const S invz = S(1) / z;
    for (std::size_t i = 0; i < n; ++i) po[i] *= invz;
  }
  Tensor<S> y = out;
  return make_op<S>(std::move(out), {a}, [a, y, groups, n](Node<S>& nd) {
    if (!a.requires_grad()) return;
    auto& g = a.grad();
    for (std::size_t gi = 0; gi < groups; ++gi) {
      const S* py = y.data.data() + gi * n;
      const S* pg = nd.grad.data.data() + gi * n;
      S* pa = g.data.data() + gi * n;
      S dot = S(0);
      for (std::size_t i = 0; i < n; ++i) dot += pg[i] * py[i];
      for (std::size_t i = 0; i < n; ++i) pa[i] += py[i] * (pg[i] - dot);
    }
  });
}

template <typename S>
Var<S> detach(const Var<S>& a) {
  return Var<S>::constant(a.value());
}

}  // namespace adasr
