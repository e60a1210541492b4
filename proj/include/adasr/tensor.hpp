#pragma once

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <vector>

#include "adasr/shape.hpp"

namespace adasr {

// 64-byte-aligned storage. Keeping every tensor (and GEMM scratch buffer) on
// the same alignment pins Eigen's kernel selection, which keeps results
// bit-reproducible across runs regardless of heap layout.
template <typename T, std::size_t Align = 64>
struct AlignedAllocator {
  using value_type = T;
  template <class U>
  struct rebind {
    using other = AlignedAllocator<U, Align>;
  };
  AlignedAllocator() = default;
  template <class U>
  AlignedAllocator(const AlignedAllocator<U, Align>&) {}
  T* allocate(std::size_t n) {
    return static_cast<T*>(::operator new(n * sizeof(T), std::align_val_t(Align)));
  }
  void deallocate(T* p, std::size_t) { ::operator delete(p, std::align_val_t(Align)); }
  bool operator==(const AlignedAllocator&) const { return true; }
  bool operator!=(const AlignedAllocator&) const { return false; }
};

template <typename S>
using AlignedVec = std::vector<S, AlignedAllocator<S>>;

// Flat dense tensor, row-major. Eigen maps give vectorized access where it matters.
template <typename S>
struct Tensor {
  Shape shape;
  AlignedVec<S> data;

  Tensor() = default;
  explicit Tensor(Shape s) : shape(s), data(s.numel(), S(0)) {}
  Tensor(Shape s, S fill) : shape(s), data(s.numel(), fill) {}

  static Tensor zeros(Shape s) { return Tensor(s); }
  static Tensor full(Shape s, S v) { return Tensor(s, v); }
  static Tensor from(Shape s, const std::vector<S>& v) {
    check_shape(v.size() == s.numel(), "tensor data size mismatch " + s.str());
    Tensor t;
    t.shape = s;
    t.data.assign(v.begin(), v.end());
    return t;
  }
  static Tensor scalar(S v) { return Tensor({1}, v); }

  std::vector<S> to_vector() const { return {data.begin(), data.end()}; }

  std::size_t numel() const { return data.size(); }
  bool empty() const { return data.empty(); }

  S* begin() { return data.data(); }
  const S* begin() const { return data.data(); }

  using EigenArray = Eigen::Array<S, Eigen::Dynamic, 1>;
  Eigen::Map<EigenArray> array() { return {data.data(), static_cast<Eigen::Index>(data.size())}; }
  Eigen::Map<const EigenArray> array() const {
    return {data.data(), static_cast<Eigen::Index>(data.size())};
  }

  S& operator[](std::size_t i) { return data[i]; }
  const S& operator[](std::size_t i) const { return data[i]; }

  // NCHW-style accessors for the common ranks.
  S& at(int a, int b) { return data[static_cast<std::size_t>(a) * shape[1] + b]; }
  const S& at(int a, int b) const { return data[static_cast<std::size_t>(a) * shape[1] + b]; }
  S& at(int a, int b, int c) {
    return data[(static_cast<std::size_t>(a) * shape[1] + b) * shape[2] + c];
  }
  const S& at(int a, int b, int c) const {
    return data[(static_cast<std::size_t>(a) * shape[1] + b) * shape[2] + c];
  }
  S& at(int a, int b, int c, int d) {
    return data[((static_cast<std::size_t>(a) * shape[1] + b) * shape[2] + c) * shape[3] + d];
  }
  const S& at(int a, int b, int c, int d) const {
    return data[((static_cast<std::size_t>(a) * shape[1] + b) * shape[2] + c) * shape[3] + d];
  }

  bool all_finite() const {
    for (const S& v : data)
      if (!std::isfinite(static_cast<double>(v))) return false;
    return true;
  }

  S min() const { return data.empty() ? S(0) : *std::min_element(data.begin(), data.end()); }
  S max() const { return data.empty() ? S(0) : *std::max_element(data.begin(), data.end()); }

  template <typename T>
  Tensor<T> cast() const {
    Tensor<T> out;
    out.shape = shape;
    out.data.resize(data.size());
    for (std::size_t i = 0; i < data.size(); ++i) out.data[i] = static_cast<T>(data[i]);
    return out;
  }

  Tensor reshaped(Shape s) const {
    check_shape(s.numel() == numel(), "reshape " + shape.str() + " -> " + s.str());
    Tensor t = *this;
    t.shape = s;
    return t;
  }
};

// Sum/accumulate src (broadcast-expanded) down to `target` shape. Used by autodiff
// to reduce gradients of broadcast operands.
template <typename S>
Tensor<S> reduce_to(const Tensor<S>& src, const Shape& target) {
  if (src.shape == target) return src;
  Tensor<S> out(target);
  const int sr = src.shape.rank();
  const int tr = target.rank();
  check_shape(tr <= sr, "reduce_to: target rank exceeds source rank");
  // Align target to trailing axes of src.
  std::array<std::size_t, Shape::kMaxRank> sstride{}, tstride{};
  std::size_t acc = 1;
  for (int i = sr - 1; i >= 0; --i) {
    sstride[static_cast<size_t>(i)] = acc;
    acc *= static_cast<std::size_t>(src.shape[i]);
  }
  acc = 1;
  std::array<std::size_t, Shape::kMaxRank> tmap{};  // src axis -> target stride (0 if broadcast)
  for (int i = tr - 1; i >= 0; --i) {
    tstride[static_cast<size_t>(i)] = acc;
    acc *= static_cast<std::size_t>(target[i]);
  }
  for (int i = 0; i < sr; ++i) {
    int ti = i - (sr - tr);
    if (ti < 0 || target[ti] == 1)
      tmap[static_cast<size_t>(i)] = 0;
    else {
      check_shape(target[ti] == src.shape[i], "reduce_to: incompatible shapes");
      tmap[static_cast<size_t>(i)] = tstride[static_cast<size_t>(ti)];
    }
  }
  std::array<int, Shape::kMaxRank> idx{};
  const std::size_t n = src.numel();
  std::size_t toff = 0;
  for (std::size_t flat = 0; flat < n; ++flat) {
    out.data[toff] += src.data[flat];
    // increment multi-index from the last axis
    for (int i = sr - 1; i >= 0; --i) {
      auto ui = static_cast<size_t>(i);
      idx[ui]++;
      toff += tmap[ui];
      if (idx[ui] < src.shape[i]) break;
      toff -= static_cast<std::size_t>(src.shape[i]) * tmap[ui];
      idx[ui] = 0;
    }
  }
  return out;
}

namespace detail {

inline Shape broadcast_shape(const Shape& a, const Shape& b) {
  const int r = std::max(a.rank(), b.rank());
  std::array<int, Shape::kMaxRank> dims{};
  for (int i = 0; i < r; ++i) {
    int ai = i - (r - a.rank());
    int bi = i - (r - b.rank());
    int da = ai >= 0 ? a[ai] : 1;
    int db = bi >= 0 ? b[bi] : 1;
    if (da != db && da != 1 && db != 1)
      throw ShapeError("broadcast mismatch " + a.str() + " vs " + b.str());
    dims[static_cast<size_t>(i)] = std::max(da, db);
  }
  switch (r) {
    case 0: return Shape{};
    case 1: return Shape{dims[0]};
    case 2: return Shape{dims[0], dims[1]};
    case 3: return Shape{dims[0], dims[1], dims[2]};
    case 4: return Shape{dims[0], dims[1], dims[2], dims[3]};
    case 5: return Shape{dims[0], dims[1], dims[2], dims[3], dims[4]};
    default: return Shape{dims[0], dims[1], dims[2], dims[3], dims[4], dims[5]};
  }
}

}  // namespace detail

// Elementwise binary with numpy-style broadcasting.
template <typename S, typename F>
Tensor<S> broadcast_apply(const Tensor<S>& a, const Tensor<S>& b, F&& f) {
  if (a.shape == b.shape) {
    Tensor<S> out(a.shape);
    for (std::size_t i = 0; i < a.numel(); ++i) out.data[i] = f(a.data[i], b.data[i]);
    return out;
  }
  const Shape os = detail::broadcast_shape(a.shape, b.shape);
  const int r = os.rank();
  Tensor<S> out(os);
  std::array<std::size_t, Shape::kMaxRank> astride{}, bstride{};
  std::size_t acc = 1;
  for (int i = a.shape.rank() - 1, j = r - 1; i >= 0; --i, --j) {
    astride[static_cast<size_t>(j)] = (a.shape[i] == 1) ? 0 : acc;
    acc *= static_cast<std::size_t>(a.shape[i]);
  }
  acc = 1;
  for (int i = b.shape.rank() - 1, j = r - 1; i >= 0; --i, --j) {
    bstride[static_cast<size_t>(j)] = (b.shape[i] == 1) ? 0 : acc;
    acc *= static_cast<std::size_t>(b.shape[i]);
  }
  std::array<int, Shape::kMaxRank> idx{};
  std::size_t aoff = 0, boff = 0;
  const std::size_t n = os.numel();
  for (std::size_t flat = 0; flat < n; ++flat) {
    out.data[flat] = f(a.data[aoff], b.data[boff]);
    for (int i = r - 1; i >= 0; --i) {
      auto ui = static_cast<size_t>(i);
      idx[ui]++;
      aoff += astride[ui];
      boff += bstride[ui];
      if (idx[ui] < os[i]) break;
      aoff -= static_cast<std::size_t>(os[i]) * astride[ui];
      boff -= static_cast<std::size_t>(os[i]) * bstride[ui];
      idx[ui] = 0;
    }
  }
  return out;
}

}  // namespace adasr
