#pragma once

#include <array>
#include <cmath>

#include "adasr/tensor.hpp"

namespace adasr {

// 8x8 block DCT quantization round trip, the classic baseline recipe: shift to
// [-128,127], forward DCT-II per block, quantize with the standard luminance
// table scaled by the quality factor, dequantize, inverse DCT. Quality 100
// bypasses the codec entirely (lossless).

namespace detail {

inline const std::array<int, 64>& jpeg_luma_table() {
  static const std::array<int, 64> t = {
      16, 11, 10, 16, 24,  40,  51,  61,  12, 12, 14, 19, 26,  58,  60,  55,
      14, 13, 16, 24, 40,  57,  69,  56,  14, 17, 22, 29, 51,  87,  80,  62,
      18, 22, 37, 56, 68,  109, 103, 77,  24, 35, 55, 64, 81,  104, 113, 92,
      49, 64, 78, 87, 103, 121, 120, 101, 72, 92, 95, 98, 112, 100, 103, 99};
  return t;
}

template <typename S>
const std::array<S, 64>& dct_basis() {
  static const std::array<S, 64> m = [] {
    std::array<S, 64> b{};
    for (int k = 0; k < 8; ++k) {
      const double a = k == 0 ? std::sqrt(1.0 / 8.0) : std::sqrt(2.0 / 8.0);
      for (int n = 0; n < 8; ++n)
        b[static_cast<std::size_t>(k * 8 + n)] =
            static_cast<S>(a * std::cos(M_PI * (2 * n + 1) * k / 16.0));
    }
    return b;
  }();
  return m;
}

}  // namespace detail

// Per-channel round trip on a (C,H,W) image in [0,1]. Edge blocks use edge
// replication padding.
template <typename S>
Tensor<S> dct_compress_roundtrip(const Tensor<S>& img, int quality) {
  check_shape(img.shape.rank() == 3, "dct_compress: (C,H,W) required");
  if (quality < 10 || quality > 100) throw ConfigError("dct_compress: quality must be in [10,100]");
  if (quality == 100) return img;

  const int C = img.shape[0], H = img.shape[1], W = img.shape[2];
  const int scale = quality < 50 ? 5000 / quality : 200 - 2 * quality;
  std::array<S, 64> q{};
  for (int i = 0; i < 64; ++i) {
    int v = (detail::jpeg_luma_table()[static_cast<std::size_t>(i)] * scale + 50) / 100;
    if (v < 1) v = 1;
    if (v > 255) v = 255;
    q[static_cast<std::size_t>(i)] = static_cast<S>(v);
  }
  const auto& D = detail::dct_basis<S>();

  Tensor<S> out(img.shape);
  const int bh = (H + 7) / 8, bw = (W + 7) / 8;
  std::array<S, 64> block{}, tmp{}, coef{};
  for (int c = 0; c < C; ++c)
    for (int by = 0; by < bh; ++by)
      for (int bx = 0; bx < bw; ++bx) {
        for (int y = 0; y < 8; ++y) {
          const int iy = std::min(by * 8 + y, H - 1);
          for (int x = 0; x < 8; ++x) {
            const int ix = std::min(bx * 8 + x, W - 1);
            block[static_cast<std::size_t>(y * 8 + x)] =
                img.at(c, iy, ix) * S(255) - S(128);
          }
        }
        // coef = D * block * D^T
        for (int i = 0; i < 8; ++i)
          for (int j = 0; j < 8; ++j) {
            S acc = S(0);
            for (int k = 0; k < 8; ++k)
              acc += D[static_cast<std::size_t>(i * 8 + k)] * block[static_cast<std::size_t>(k * 8 + j)];
            tmp[static_cast<std::size_t>(i * 8 + j)] = acc;
          }
        for (int i = 0; i < 8; ++i)
          for (int j = 0; j < 8; ++j) {
            S acc = S(0);
            for (int k = 0; k < 8; ++k)
              acc += tmp[static_cast<std::size_t>(i * 8 + k)] * D[static_cast<std::size_t>(j * 8 + k)];
            const std::size_t idx = static_cast<std::size_t>(i * 8 + j);
            coef[idx] = std::round(acc / q[idx]) * q[idx];
          }
        // block = D^T * coef * D
        for (int i = 0; i < 8; ++i)
          for (int j = 0; j < 8; ++j) {
            S acc = S(0);
            for (int k = 0; k < 8; ++k)
              acc += D[static_cast<std::size_t>(k * 8 + i)] * coef[static_cast<std::size_t>(k * 8 + j)];
            tmp[static_cast<std::size_t>(i * 8 + j)] = acc;
          }
        for (int y = 0; y < 8; ++y) {
          const int iy = by * 8 + y;
          if (iy >= H) break;
          for (int x = 0; x < 8; ++x) {
            const int ix = bx * 8 + x;
            if (ix >= W) break;
            S acc = S(0);
            for (int k = 0; k < 8; ++k)
              acc += tmp[static_cast<std::size_t>(y * 8 + k)] * D[static_cast<std::size_t>(k * 8 + x)];
            S v = (acc + S(128)) / S(255);
            out.at(c, iy, ix) = std::min(S(1), std::max(S(0), v));
          }
        }
      }
  return out;
}

}  // namespace adasr
