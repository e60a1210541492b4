#pragma once

#include <array>
#include <cstddef>
#include <initializer_list>
#include <sstream>
#include <string>

#include "adasr/errors.hpp"

namespace adasr {

// Dense row-major extents, up to 6 axes.
class Shape {
 public:
  static constexpr int kMaxRank = 6;

  Shape() = default;
  Shape(std::initializer_list<int> dims) {
    if (static_cast<int>(dims.size()) > kMaxRank) throw ShapeError("shape rank > 6");
    for (int d : dims) d_[rank_++] = d;
  }

  int rank() const { return rank_; }
  int operator[](int i) const { return d_[static_cast<size_t>(i)]; }
  int& operator[](int i) { return d_[static_cast<size_t>(i)]; }

  std::size_t numel() const {
    std::size_t n = 1;
    for (int i = 0; i < rank_; ++i) n *= static_cast<std::size_t>(d_[static_cast<size_t>(i)]);
    return n;
  }

  bool operator==(const Shape& o) const {
    if (rank_ != o.rank_) return false;
    for (int i = 0; i < rank_; ++i)
      if (d_[static_cast<size_t>(i)] != o.d_[static_cast<size_t>(i)]) return false;
    return true;
  }
  bool operator!=(const Shape& o) const { return !(*this == o); }

  std::string str() const {
    std::ostringstream os;
    os << "(";
    for (int i = 0; i < rank_; ++i) os << (i ? "," : "") << d_[static_cast<size_t>(i)];
    os << ")";
    return os.str();
  }

 private:
  int rank_ = 0;
  std::array<int, kMaxRank> d_{};
};

inline void check_shape(bool ok, const std::string& what) {
  if (!ok) throw ShapeError(what);
}

}  // namespace adasr
