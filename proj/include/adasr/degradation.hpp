#pragma once

#include <functional>
#include <optional>

#include "adasr/config.hpp"
#include "adasr/dct_codec.hpp"
#include "adasr/frame.hpp"
#include "adasr/rng.hpp"

namespace adasr {

// Pluggable super-quality refiner for the target frame. The identity stands in
// for an external video super-resolution model.
using TeacherInterface = std::function<Frame(const Frame&)>;

inline TeacherInterface identity_teacher() {
  return [](const Frame& f) { return f; };
}

// Call counter so tests can assert that inference paths never degrade.
inline std::uint64_t& degrade_call_count() {
  static std::uint64_t count = 0;
  return count;
}

// Stochastic quality destruction for the source image. Each stage runs
// downscale -> Gaussian noise -> compression round trip -> upscale back, with
// kernels and strengths drawn from the configured ranges. Deterministic in
// (frame, cfg, seed).
inline Frame degrade(const Frame& frame, const DegradationConfig& cfg, std::uint64_t seed) {
  ++degrade_call_count();
  frame.validate();
  cfg.validate();
  Rng rng(splitmix64(seed ^ 0x64656772616465ULL));

  const int out_size = cfg.final_output_size > 0 ? cfg.final_output_size : frame.height();
  Tensor<float> img = frame.pixels;

  auto pick_kernel = [&]() {
    const auto i = rng.uniform_int(0, static_cast<int>(cfg.resize_kernels.size()) - 1);
    return cfg.resize_kernels[static_cast<std::size_t>(i)];
  };

  for (int stage = 0; stage < cfg.stage_count; ++stage) {
    const int H = img.shape[1], W = img.shape[2];
    const double factor =
        rng.uniform(cfg.downscale_factor_range[0], cfg.downscale_factor_range[1]);
    const int dh = static_cast<int>(std::lround(H / factor));
    const int dw = static_cast<int>(std::lround(W / factor));
    if (dh < 8 || dw < 8)
      throw ConfigError("degrade: downscale factor leaves image below 8px");
    const ResizeKernel down = pick_kernel();
    const ResizeKernel up = pick_kernel();
    const double sigma = rng.uniform(cfg.noise_sigma_range[0], cfg.noise_sigma_range[1]);
    const int quality = static_cast<int>(
        rng.uniform_int(cfg.compression_quality_range[0], cfg.compression_quality_range[1]));

    if (dh != H || dw != W) img = resize_image(img, dh, dw, down);
    // Draw the noise field unconditionally so that raising sigma with the same
    // seed perturbs the same realization.
    {
      Tensor<float> noise(img.shape);
      for (auto& v : noise.data) v = static_cast<float>(rng.normal());
      if (sigma > 0) {
        for (std::size_t i = 0; i < img.numel(); ++i)
          img.data[i] += static_cast<float>(sigma) * noise.data[i];
        clamp01_inplace(img);
      }
    }
    if (quality < 100) img = dct_compress_roundtrip(img, quality);
    if (img.shape[1] != H || img.shape[2] != W) img = resize_image(img, H, W, up);
    clamp01_inplace(img);
  }

  if (img.shape[1] != out_size || img.shape[2] != out_size) {
    img = resize_image(img, out_size, out_size, ResizeKernel::kBicubic);
    clamp01_inplace(img);
  }
  return Frame::checked(std::move(img));
}

// The cross-quality training unit: degraded source, pristine source, driving
// frame, high-quality target, and (optionally) a teacher-refined target.
struct CrossQualityPair {
  Frame source_lq;
  Frame source_hq;
  Frame driving;
  Frame target_hq;
  std::optional<Frame> target_sh;
  std::uint64_t degrade_seed = 0;
};

// Degradation touches only the source; driving and targets stay pristine.
inline CrossQualityPair build_quadruple(const Frame& source, const Frame& driving,
                                        const Frame& target, const DegradationConfig& cfg,
                                        const TeacherInterface& teacher, std::uint64_t seed) {
  check_shape(source.pixels.shape == driving.pixels.shape &&
                  source.pixels.shape == target.pixels.shape,
              "build_quadruple: frames must share one resolution");
  CrossQualityPair q;
  q.source_hq = source;
  q.source_lq = degrade(source, cfg, seed);
  q.driving = driving;
  q.target_hq = target;
  q.degrade_seed = seed;
  if (teacher) {
    Frame sh = teacher(target);
    check_shape(sh.pixels.shape == target.pixels.shape,
                "build_quadruple: teacher changed the resolution");
    q.target_sh = std::move(sh);
  }
  return q;
}

}  // namespace adasr
