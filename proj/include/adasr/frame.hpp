#pragma once

#include <utility>
#include <vector>

#include "adasr/image.hpp"

namespace adasr {

// Normalized raster image, (3,H,W) in [0,1]. Sides must be multiples of 16
// (network stride) and at least 16.
template <typename S>
struct FrameT {
  Tensor<S> pixels;

  FrameT() = default;
  explicit FrameT(Tensor<S> px) : pixels(std::move(px)) {}

  int height() const { return pixels.shape[1]; }
  int width() const { return pixels.shape[2]; }

  void validate() const {
    check_shape(pixels.shape.rank() == 3 && pixels.shape[0] == 3,
                "frame: (3,H,W) tensor required, got " + pixels.shape.str());
    const int H = height(), W = width();
    if (H < 16 || W < 16 || H % 16 != 0 || W % 16 != 0)
      throw ShapeError("frame: sides must be >= 16 and divisible by 16, got " +
                       pixels.shape.str());
    for (const S& v : pixels.data) {
      if (!std::isfinite(static_cast<double>(v)) || v < S(0) || v > S(1))
        throw NumericError("frame: pixel values must be finite and within [0,1]");
    }
  }

  static FrameT checked(Tensor<S> px) {
    FrameT f(std::move(px));
    f.validate();
    return f;
  }

  template <typename T>
  FrameT<T> cast() const {
    return FrameT<T>(pixels.template cast<T>());
  }
};

using Frame = FrameT<float>;

template <typename S>
struct FrameSequenceT {
  std::vector<FrameT<S>> frames;
  double fps = 25.0;

  void validate() const {
    if (frames.empty()) throw ShapeError("frame sequence: empty");
    if (!(fps > 0)) throw ConfigError("frame sequence: fps must be > 0");
    const int H = frames[0].height(), W = frames[0].width();
    for (const auto& f : frames) {
      f.validate();
      if (f.height() != H || f.width() != W)
        throw ShapeError("frame sequence: frames must share one resolution");
    }
  }
};

using FrameSequence = FrameSequenceT<float>;

template <typename S>
double frame_l1(const FrameT<S>& a, const FrameT<S>& b) {
  check_shape(a.pixels.shape == b.pixels.shape, "frame_l1: size mismatch");
  double acc = 0.0;
  for (std::size_t i = 0; i < a.pixels.numel(); ++i)
    acc += std::abs(static_cast<double>(a.pixels.data[i]) - b.pixels.data[i]);
  return acc / static_cast<double>(a.pixels.numel());
}

}  // namespace adasr
