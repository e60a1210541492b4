#pragma once

#include <filesystem>

#include "adasr/animate.hpp"

namespace adasr {

namespace detail {

// Channel-mean of a (1,C,H,W) map, min-max normalized to [0,1], replicated to
// RGB for writing.
template <typename S>
Tensor<float> map_to_image(const Var<S>& map) {
  const int C = map.shape()[1], H = map.shape()[2], W = map.shape()[3];
  Tensor<float> mean(Shape{1, H, W});
  const std::size_t plane = static_cast<std::size_t>(H) * W;
  for (std::size_t i = 0; i < plane; ++i) {
    double acc = 0;
    for (int c = 0; c < C; ++c)
      acc += static_cast<double>(map.value().data[static_cast<std::size_t>(c) * plane + i]);
    mean.data[i] = static_cast<float>(acc / C);
  }
  const float lo = mean.min(), hi = mean.max();
  const float span = hi - lo > 1e-12f ? hi - lo : 1.0f;
  Tensor<float> rgb(Shape{3, H, W});
  for (std::size_t i = 0; i < plane; ++i) {
    const float v = (mean.data[i] - lo) / span;
    rgb.data[i] = rgb.data[plane + i] = rgb.data[2 * plane + i] = v;
  }
  return rgb;
}

// Flow field rendered as color: x displacement in red, y in green, magnitude
// in blue, each min-max normalized.
template <typename S>
Tensor<float> flow_to_image(const Var<S>& flow, const Tensor<S>& grid) {
  const int H = flow.shape()[2], W = flow.shape()[3];
  const std::size_t plane = static_cast<std::size_t>(H) * W;
  Tensor<float> rgb(Shape{3, H, W});
  std::vector<float> dx(plane), dy(plane), mag(plane);
  for (std::size_t i = 0; i < plane; ++i) {
    dx[i] = static_cast<float>(flow.value().data[i] - grid.data[i]);
    dy[i] = static_cast<float>(flow.value().data[plane + i] - grid.data[plane + i]);
    mag[i] = std::sqrt(dx[i] * dx[i] + dy[i] * dy[i]);
  }
  auto normalize = [&](std::vector<float>& v, float* out) {
    float lo = v[0], hi = v[0];
    for (float x : v) {
      lo = std::min(lo, x);
      hi = std::max(hi, x);
    }
    const float span = hi - lo > 1e-12f ? hi - lo : 1.0f;
    for (std::size_t i = 0; i < v.size(); ++i) out[i] = (v[i] - lo) / span;
  };
  normalize(dx, rgb.data.data());
  normalize(dy, rgb.data.data() + plane);
  normalize(mag, rgb.data.data() + 2 * plane);
  return rgb;
}

}  // namespace detail

// Dumps encoder feature maps before and after deformation, plus the dense
// flow and occlusion mask, as labeled images. The accompanying diagnostics
// json records the high-frequency energy (mean absolute Laplacian) of every
// map; comparisons across checkpoints are up to the caller.
inline std::vector<std::string> visualize_features(const std::string& checkpoint,
                                                   const std::string& source_path,
                                                   const std::string& driving_path,
                                                   const std::string& out_dir) {
  namespace fs = std::filesystem;
  Checkpoint<float> ckpt = load_checkpoint<float>(checkpoint);
  AdaSRModel<float> model = model_from_checkpoint(ckpt);
  const int R = model.cfg.resolution;
  Frame source = load_video_clip(source_path, {0}, R).frames[0];
  Frame driving = load_video_clip(driving_path, {0}, R).frames[0];

  NoGradGuard ng;
  auto inter = forward_pipeline(model, frame_to_var(source), frame_to_var(driving));

  fs::create_directories(out_dir);
  std::vector<std::string> files;
  json hf;
  auto dump = [&](const std::string& name, const Tensor<float>& img, double hf_energy) {
    const std::string path = (fs::path(out_dir) / (name + ".ppm")).string();
    write_ppm_file(path, img);
    files.push_back(path);
    hf[name] = hf_energy;
  };

  for (std::size_t i = 0; i < inter.src.app.maps.size(); ++i) {
    const auto& m = inter.src.app.maps[i];
    dump("pre_warp_scale" + std::to_string(i), detail::map_to_image(m),
         mean_abs_laplacian(m.value()));
  }
  for (std::size_t i = 0; i < inter.warped_masked.size(); ++i) {
    const auto& m = inter.warped_masked[i];
    dump("post_warp_scale" + std::to_string(i), detail::map_to_image(m),
         mean_abs_laplacian(m.value()));
  }
  {
    const int h = model.cfg.feature_resolution();
    dump("flow", detail::flow_to_image(inter.flow, coord_grid<float>(h, h)),
         mean_abs_laplacian(inter.flow.value()));
    dump("occlusion", detail::map_to_image(inter.occlusion),
         mean_abs_laplacian(inter.occlusion.value()));
  }
  dump("output", var_to_frame(inter.output).pixels, mean_abs_laplacian(inter.output.value()));

  std::ofstream diag((fs::path(out_dir) / "diagnostics.json").string());
  diag << hf.dump(2) << "\n";
  files.push_back((fs::path(out_dir) / "diagnostics.json").string());
  return files;
}

}  // namespace adasr
