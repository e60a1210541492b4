#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "adasr/tensor.hpp"

namespace adasr {

enum class ResizeKernel { kArea, kBilinear, kBicubic };

inline const char* resize_kernel_name(ResizeKernel k) {
  switch (k) {
    case ResizeKernel::kArea: return "area";
    case ResizeKernel::kBilinear: return "bilinear";
    default: return "bicubic";
  }
}

inline ResizeKernel resize_kernel_from_name(const std::string& s) {
  if (s == "area") return ResizeKernel::kArea;
  if (s == "bilinear") return ResizeKernel::kBilinear;
  if (s == "bicubic") return ResizeKernel::kBicubic;
  throw ConfigError("unknown resize kernel '" + s + "'");
}

namespace detail {

// Catmull-Rom tap weights (a = -0.5).
template <typename S>
inline S cubic_weight(S t) {
  const S a = S(-0.5);
  const S at = std::abs(t);
  if (at <= S(1)) return ((a + S(2)) * at - (a + S(3))) * at * at + S(1);
  if (at < S(2)) return (((at - S(5)) * at + S(8)) * at - S(4)) * a;
  return S(0);
}

}  // namespace detail

// Resize a (C,H,W) image plane-by-plane. Half-pixel center convention, border
// clamp; identity size is an exact copy. Area is a true box filter when
// downscaling and falls back to bilinear when upscaling.
template <typename S>
Tensor<S> resize_image(const Tensor<S>& img, int Ho, int Wo, ResizeKernel kernel) {
  check_shape(img.shape.rank() == 3, "resize_image: (C,H,W) required");
  const int C = img.shape[0], H = img.shape[1], W = img.shape[2];
  if (Ho == H && Wo == W) return img;
  if (kernel == ResizeKernel::kArea && (Ho > H || Wo > W)) kernel = ResizeKernel::kBilinear;
  Tensor<S> out(Shape{C, Ho, Wo});
  const double sy = static_cast<double>(H) / Ho;
  const double sx = static_cast<double>(W) / Wo;

  auto clampi = [](int v, int lo, int hi) { return v < lo ? lo : (v > hi ? hi : v); };

  if (kernel == ResizeKernel::kArea) {
    for (int c = 0; c < C; ++c)
      for (int oy = 0; oy < Ho; ++oy) {
        const double y0 = oy * sy, y1 = (oy + 1) * sy;
        const int iy0 = static_cast<int>(std::floor(y0));
        const int iy1 = std::min(static_cast<int>(std::ceil(y1)), H);
        for (int ox = 0; ox < Wo; ++ox) {
          const double x0 = ox * sx, x1 = (ox + 1) * sx;
          const int ix0 = static_cast<int>(std::floor(x0));
          const int ix1 = std::min(static_cast<int>(std::ceil(x1)), W);
          double acc = 0.0, area = 0.0;
          for (int iy = iy0; iy < iy1; ++iy) {
            const double wy = std::min<double>(iy + 1, y1) - std::max<double>(iy, y0);
            for (int ix = ix0; ix < ix1; ++ix) {
              const double wx = std::min<double>(ix + 1, x1) - std::max<double>(ix, x0);
              acc += wy * wx * static_cast<double>(img.at(c, iy, ix));
              area += wy * wx;
            }
          }
          out.at(c, oy, ox) = static_cast<S>(acc / area);
        }
      }
    return out;
  }

  if (kernel == ResizeKernel::kBilinear) {
    for (int oy = 0; oy < Ho; ++oy) {
      const double py = (oy + 0.5) * sy - 0.5;
      int y0 = static_cast<int>(std::floor(py));
      const double fy = py - y0;
      const int y0c = clampi(y0, 0, H - 1), y1c = clampi(y0 + 1, 0, H - 1);
      for (int ox = 0; ox < Wo; ++ox) {
        const double px = (ox + 0.5) * sx - 0.5;
        int x0 = static_cast<int>(std::floor(px));
        const double fx = px - x0;
        const int x0c = clampi(x0, 0, W - 1), x1c = clampi(x0 + 1, 0, W - 1);
        for (int c = 0; c < C; ++c) {
          const double v = (1 - fy) * ((1 - fx) * img.at(c, y0c, x0c) + fx * img.at(c, y0c, x1c)) +
                           fy * ((1 - fx) * img.at(c, y1c, x0c) + fx * img.at(c, y1c, x1c));
          out.at(c, oy, ox) = static_cast<S>(v);
        }
      }
    }
    return out;
  }

  // bicubic
  for (int oy = 0; oy < Ho; ++oy) {
    const double py = (oy + 0.5) * sy - 0.5;
    const int y0 = static_cast<int>(std::floor(py));
    const double fy = py - y0;
    double wy[4];
    for (int k = 0; k < 4; ++k) wy[k] = detail::cubic_weight(fy - (k - 1));
    for (int ox = 0; ox < Wo; ++ox) {
      const double px = (ox + 0.5) * sx - 0.5;
      const int x0 = static_cast<int>(std::floor(px));
      const double fx = px - x0;
      double wx[4];
      for (int k = 0; k < 4; ++k) wx[k] = detail::cubic_weight(fx - (k - 1));
      for (int c = 0; c < C; ++c) {
        double acc = 0.0;
        for (int ky = 0; ky < 4; ++ky) {
          const int iy = clampi(y0 + ky - 1, 0, H - 1);
          double row = 0.0;
          for (int kx = 0; kx < 4; ++kx) row += wx[kx] * img.at(c, iy, clampi(x0 + kx - 1, 0, W - 1));
          acc += wy[ky] * row;
        }
        out.at(c, oy, ox) = static_cast<S>(acc);
      }
    }
  }
  return out;
}

template <typename S>
void clamp01_inplace(Tensor<S>& t) {
  for (auto& v : t.data) v = std::min(S(1), std::max(S(0), v));
}

// Luma (BT.601 weights) of a (3,H,W) image.
template <typename S>
Tensor<S> rgb_to_gray(const Tensor<S>& img) {
  check_shape(img.shape.rank() == 3 && img.shape[0] == 3, "rgb_to_gray: (3,H,W) required");
  const int H = img.shape[1], W = img.shape[2];
  Tensor<S> out(Shape{1, H, W});
  const std::size_t plane = static_cast<std::size_t>(H) * W;
  for (std::size_t i = 0; i < plane; ++i)
    out.data[i] = static_cast<S>(0.299) * img.data[i] + static_cast<S>(0.587) * img.data[plane + i] +
                  static_cast<S>(0.114) * img.data[2 * plane + i];
  return out;
}

// Mean absolute 4-neighbour Laplacian; a cheap high-frequency energy proxy.
template <typename S>
double mean_abs_laplacian(const Tensor<S>& t) {
  check_shape(t.shape.rank() >= 2, "mean_abs_laplacian: rank >= 2 required");
  const int W = t.shape[t.shape.rank() - 1];
  const int H = t.shape[t.shape.rank() - 2];
  const int C = static_cast<int>(t.numel() / (static_cast<std::size_t>(H) * W));
  double acc = 0.0;
  std::size_t count = 0;
  for (int c = 0; c < C; ++c) {
    const S* p = t.data.data() + static_cast<std::size_t>(c) * H * W;
    for (int y = 1; y + 1 < H; ++y)
      for (int x = 1; x + 1 < W; ++x) {
        const double v = 4.0 * p[y * W + x] - p[(y - 1) * W + x] - p[(y + 1) * W + x] -
                         p[y * W + x - 1] - p[y * W + x + 1];
        acc += std::abs(v);
        ++count;
      }
  }
  return count ? acc / static_cast<double>(count) : 0.0;
}

}  // namespace adasr
