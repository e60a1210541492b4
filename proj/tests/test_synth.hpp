#pragma once

#include <cmath>
#include <filesystem>
#include <string>

#include "adasr/dataset.hpp"
#include "adasr/frame.hpp"
#include "adasr/video_io.hpp"

namespace adasr::testing {

inline double cell_noise(int ix, int iy, std::uint64_t seed) {
  const std::uint64_t h =
      splitmix64(splitmix64(static_cast<std::uint64_t>(ix) * 0x9e3779b9ULL + seed) ^
                 (static_cast<std::uint64_t>(iy) * 0x85ebca6bULL));
  return static_cast<double>(h >> 11) * 0x1.0p-53 * 2.0 - 1.0;
}

// Multi-octave value noise; statistically "natural" texture for codec tests.
inline Tensor<float> synth_natural_image(int size, std::uint64_t seed) {
  Tensor<float> img(Shape{3, size, size});
  for (int c = 0; c < 3; ++c) {
    const std::uint64_t cs = seed + static_cast<std::uint64_t>(c) * 7919;
    for (int y = 0; y < size; ++y)
      for (int x = 0; x < size; ++x) {
        double v = 0.0, amp = 0.5;
        for (int oct = 0; oct < 6; ++oct) {
          const double cell = size / (6.0 * (1 << oct));
          if (cell < 1) break;
          const double fx = x / cell, fy = y / cell;
          const int ix = static_cast<int>(std::floor(fx)), iy = static_cast<int>(std::floor(fy));
          const double tx = fx - ix, ty = fy - iy;
          const double n00 = cell_noise(ix, iy, cs + static_cast<std::uint64_t>(oct) * 131);
          const double n01 = cell_noise(ix + 1, iy, cs + static_cast<std::uint64_t>(oct) * 131);
          const double n10 = cell_noise(ix, iy + 1, cs + static_cast<std::uint64_t>(oct) * 131);
          const double n11 = cell_noise(ix + 1, iy + 1, cs + static_cast<std::uint64_t>(oct) * 131);
          v += amp * ((1 - ty) * ((1 - tx) * n00 + tx * n01) + ty * ((1 - tx) * n10 + tx * n11));
          amp *= 0.55;
        }
        img.at(c, y, x) = static_cast<float>(std::clamp(0.5 + 0.35 * v + 0.1 * (x + y) /
                                                                  static_cast<double>(2 * size),
                                                        0.0, 1.0));
      }
  }
  return img;
}

// A textured moving "head" over a static background. Content moves rigidly
// with the head so motion estimation has something real to learn, and the
// fine-grained texture gives degradation something to destroy.
inline Frame synth_frame(int size, int t, int period, std::uint64_t seed) {
  Tensor<float> img(Shape{3, size, size});
  const double phase = 2.0 * M_PI * t / std::max(1, period);
  const double cx = 0.5 + 0.10 * std::sin(phase);
  const double cy = 0.5 + 0.07 * std::cos(phase);
  const double theta = 0.25 * std::sin(phase + 0.7);
  const double ct = std::cos(theta), st = std::sin(theta);

  for (int y = 0; y < size; ++y)
    for (int x = 0; x < size; ++x) {
      const double u = (x + 0.5) / size, v = (y + 0.5) / size;
      // static background: soft gradient + broad stripes
      double r = 0.25 + 0.25 * u;
      double g = 0.3 + 0.2 * v;
      double b = 0.45 + 0.08 * std::sin(14.0 * u) * std::sin(10.0 * v);
      // head-local coordinates (rotated, translated)
      const double dx = u - cx, dy = v - cy;
      const double xl = ct * dx + st * dy;
      const double yl = -st * dx + ct * dy;
      const double e = (xl * xl) / (0.22 * 0.22) + (yl * yl) / (0.28 * 0.28);
      if (e < 1.0) {
        const double tex = 0.10 * std::sin(55.0 * xl) * std::sin(47.0 * yl) +
                           0.12 * cell_noise(static_cast<int>(std::floor(xl * 40)),
                                             static_cast<int>(std::floor(yl * 40)), seed);
        r = 0.78 + tex;
        g = 0.62 + 0.9 * tex;
        b = 0.52 + 0.8 * tex;
        auto disk = [&](double ex, double ey, double rad) {
          const double d2 = (xl - ex) * (xl - ex) + (yl - ey) * (yl - ey);
          return d2 < rad * rad;
        };
        if (disk(-0.08, -0.08, 0.030) || disk(0.08, -0.08, 0.030)) { r = 0.10; g = 0.10; b = 0.12; }
        if (disk(-0.085, -0.085, 0.008) || disk(0.075, -0.085, 0.008)) { r = 0.95; g = 0.95; b = 0.95; }
        const double mx = xl / 0.09, my = (yl - 0.14) / (0.035 + 0.02 * std::sin(phase * 2));
        if (mx * mx + my * my < 1.0) { r = 0.35; g = 0.12; b = 0.12; }
      }
      img.at(0, y, x) = static_cast<float>(std::clamp(r, 0.0, 1.0));
      img.at(1, y, x) = static_cast<float>(std::clamp(g, 0.0, 1.0));
      img.at(2, y, x) = static_cast<float>(std::clamp(b, 0.0, 1.0));
    }
  return Frame(std::move(img));
}

inline FrameSequence synth_clip(int size, int n_frames, std::uint64_t seed, double fps = 25.0) {
  FrameSequence seq;
  seq.fps = fps;
  for (int t = 0; t < n_frames; ++t) seq.frames.push_back(synth_frame(size, t, n_frames, seed));
  return seq;
}

inline DatasetIndex write_toy_dataset(const std::string& root, int n_clips, int frames_per_clip,
                                      int size, std::uint64_t seed) {
  namespace fs = std::filesystem;
  fs::create_directories(root);
  for (int c = 0; c < n_clips; ++c) {
    char name[32];
    std::snprintf(name, sizeof(name), "clip%03d", c);
    write_video(synth_clip(size, frames_per_clip, seed + static_cast<std::uint64_t>(c)),
                (fs::path(root) / name).string() + "/");
  }
  return DatasetIndex::scan(root);
}

}  // namespace adasr::testing
