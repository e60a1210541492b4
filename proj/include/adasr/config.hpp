#pragma once

#include <array>
#include <cmath>
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "adasr/image.hpp"

namespace adasr {

using nlohmann::json;

namespace detail {

// Tracks consumed keys so unknown ones can be rejected.
class JsonReader {
 public:
  JsonReader(const json& j, std::string ctx) : j_(j), ctx_(std::move(ctx)) {
    if (!j_.is_object()) throw ConfigError(ctx_ + ": expected an object");
  }

  template <typename T>
  void get(const char* key, T& out) {
    used_.insert(key);
    if (!j_.contains(key)) return;
    try {
      out = j_.at(key).get<T>();
    } catch (const json::exception& e) {
      throw ConfigError(ctx_ + "." + key + ": " + e.what());
    }
  }

  bool has(const char* key) {
    used_.insert(key);
    return j_.contains(key);
  }

  const json& raw(const char* key) {
    used_.insert(key);
    return j_.at(key);
  }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it)
      if (!used_.count(it.key()))
        throw ConfigError(ctx_ + ": unknown key '" + it.key() + "'");
  }

 private:
  const json& j_;
  std::string ctx_;
  std::set<std::string> used_;
};

}  // namespace detail

struct DegradationConfig {
  int stage_count = 2;
  std::array<double, 2> downscale_factor_range{1.5, 3.0};
  std::vector<ResizeKernel> resize_kernels{ResizeKernel::kArea, ResizeKernel::kBilinear,
                                           ResizeKernel::kBicubic};
  std::array<double, 2> noise_sigma_range{0.0, 0.08};
  std::array<int, 2> compression_quality_range{30, 90};
  int final_output_size = 0;  // 0: keep the input size

  void validate() const {
    if (stage_count < 0) throw ConfigError("degradation.stage_count must be >= 0");
    if (downscale_factor_range[0] > downscale_factor_range[1] ||
        downscale_factor_range[0] < 1.0)
      throw ConfigError("degradation.downscale_factor_range must be ordered and >= 1");
    if (resize_kernels.empty()) throw ConfigError("degradation.resize_kernels must be nonempty");
    if (noise_sigma_range[0] > noise_sigma_range[1] || noise_sigma_range[0] < 0)
      throw ConfigError("degradation.noise_sigma_range must be ordered and >= 0");
    if (compression_quality_range[0] > compression_quality_range[1] ||
        compression_quality_range[0] < 10 || compression_quality_range[1] > 100)
      throw ConfigError("degradation.compression_quality_range must be ordered within [10,100]");
    for (double v : downscale_factor_range)
      if (!std::isfinite(v)) throw ConfigError("degradation: non-finite range value");
  }

  static DegradationConfig from_json(const json& j) {
    DegradationConfig c;
    detail::JsonReader r(j, "degradation");
    r.get("stage_count", c.stage_count);
    r.get("downscale_factor_range", c.downscale_factor_range);
    if (r.has("resize_kernels")) {
      c.resize_kernels.clear();
      for (const auto& name : r.raw("resize_kernels"))
        c.resize_kernels.push_back(resize_kernel_from_name(name.get<std::string>()));
    }
    r.get("noise_sigma_range", c.noise_sigma_range);
    r.get("compression_quality_range", c.compression_quality_range);
    r.get("final_output_size", c.final_output_size);
    r.finish();
    c.validate();
    return c;
  }

  json to_json() const {
    std::vector<std::string> kernels;
    for (auto k : resize_kernels) kernels.emplace_back(resize_kernel_name(k));
    return json{{"stage_count", stage_count},
                {"downscale_factor_range", downscale_factor_range},
                {"resize_kernels", kernels},
                {"noise_sigma_range", noise_sigma_range},
                {"compression_quality_range", compression_quality_range},
                {"final_output_size", final_output_size}};
  }
};

struct LossWeights {
  double keypoint = 10.0;
  double pose = 20.0;
  double expression = 5.0;
  double equivariance = 10.0;
  double deformation = 10.0;
  double perceptual = 10.0;
  double gan = 1.0;
  double feature_matching = 10.0;

  void validate() const {
    double total = 0;
    for (double w : {keypoint, pose, expression, equivariance, deformation, perceptual, gan,
                     feature_matching}) {
      if (!std::isfinite(w)) throw ConfigError("loss_weights: weights must be finite");
      if (w < 0) throw ConfigError("loss_weights: weights must be >= 0");
      total += w;
    }
    if (total <= 0) throw ConfigError("loss_weights: at least one weight must be > 0");
  }

  static LossWeights from_json(const json& j) {
    LossWeights w;
    detail::JsonReader r(j, "loss_weights");
    r.get("keypoint", w.keypoint);
    r.get("pose", w.pose);
    r.get("expression", w.expression);
    r.get("equivariance", w.equivariance);
    r.get("deformation", w.deformation);
    r.get("perceptual", w.perceptual);
    r.get("gan", w.gan);
    r.get("feature_matching", w.feature_matching);
    r.finish();
    w.validate();
    return w;
  }

  json to_json() const {
    return json{{"keypoint", keypoint},
                {"pose", pose},
                {"expression", expression},
                {"equivariance", equivariance},
                {"deformation", deformation},
                {"perceptual", perceptual},
                {"gan", gan},
                {"feature_matching", feature_matching}};
  }
};

struct OptimizerConfig {
  double lr = 2e-4;
  double beta1 = 0.5;
  double beta2 = 0.999;
  double grad_clip_norm = 10.0;

  void validate() const {
    if (!(lr >= 0) || !std::isfinite(lr)) throw ConfigError("optimizer.lr must be >= 0");
    if (beta1 < 0 || beta1 >= 1 || beta2 < 0 || beta2 >= 1)
      throw ConfigError("optimizer.betas must be in [0,1)");
  }

  static OptimizerConfig from_json(const json& j) {
    OptimizerConfig c;
    detail::JsonReader r(j, "optimizer");
    r.get("lr", c.lr);
    r.get("beta1", c.beta1);
    r.get("beta2", c.beta2);
    r.get("grad_clip_norm", c.grad_clip_norm);
    r.finish();
    c.validate();
    return c;
  }

  json to_json() const {
    return json{{"lr", lr}, {"beta1", beta1}, {"beta2", beta2}, {"grad_clip_norm", grad_clip_norm}};
  }
};

struct TrainingConfig {
  int batch_size = 4;
  int steps = 2000;
  int checkpoint_every = 500;
  double p_hq = 0.25;           // chance of an extra pristine-source pass (no teacher)
  std::string teacher = "none";  // none | identity
  bool deterministic = false;
  std::string log_file = "metrics.csv";

  void validate() const {
    if (batch_size < 1) throw ConfigError("training.batch_size must be >= 1");
    if (steps < 0) throw ConfigError("training.steps must be >= 0");
    if (checkpoint_every < 1) throw ConfigError("training.checkpoint_every must be >= 1");
    if (p_hq < 0 || p_hq > 1) throw ConfigError("training.p_hq must be in [0,1]");
    if (teacher != "none" && teacher != "identity")
      throw ConfigError("training.teacher must be 'none' or 'identity'");
  }

  static TrainingConfig from_json(const json& j) {
    TrainingConfig c;
    detail::JsonReader r(j, "training");
    r.get("batch_size", c.batch_size);
    r.get("steps", c.steps);
    r.get("checkpoint_every", c.checkpoint_every);
    r.get("p_hq", c.p_hq);
    r.get("teacher", c.teacher);
    r.get("deterministic", c.deterministic);
    r.get("log_file", c.log_file);
    r.finish();
    c.validate();
    return c;
  }

  json to_json() const {
    return json{{"batch_size", batch_size},   {"steps", steps},
                {"checkpoint_every", checkpoint_every}, {"p_hq", p_hq},
                {"teacher", teacher},         {"deterministic", deterministic},
                {"log_file", log_file}};
  }
};

struct Config {
  int resolution = 64;
  int keypoint_count = 15;
  std::uint64_t seed = 0;
  int base_channels = 32;
  bool use_jacobians = true;
  bool warp_all_scales = true;
  double heatmap_sigma = 0.1;
  int pair_max_gap = 0;  // 0: uniform over the whole clip
  double deformation_delta_prior = 0.1;
  std::string data_root;
  LossWeights loss_weights;
  DegradationConfig degradation;
  OptimizerConfig optimizer;
  TrainingConfig training;

  int feature_resolution() const { return resolution / 4; }

  void validate() const {
    if (resolution % 16 != 0) throw ConfigError("resolution must be divisible by 16");
    if (resolution != 64 && resolution != 128 && resolution != 256 && resolution != 512)
      throw ConfigError("resolution must be one of 64, 128, 256, 512");
    if (keypoint_count < 1) throw ConfigError("keypoint_count must be >= 1");
    if (base_channels < 4) throw ConfigError("base_channels must be >= 4");
    if (!(heatmap_sigma > 0)) throw ConfigError("heatmap_sigma must be > 0");
    if (pair_max_gap < 0) throw ConfigError("pair_max_gap must be >= 0");
    if (deformation_delta_prior < 0) throw ConfigError("deformation_delta_prior must be >= 0");
    loss_weights.validate();
    degradation.validate();
    optimizer.validate();
    training.validate();
  }

  static Config from_json(const json& j) {
    Config c;
    detail::JsonReader r(j, "config");
    r.get("resolution", c.resolution);
    r.get("keypoint_count", c.keypoint_count);
    r.get("seed", c.seed);
    r.get("base_channels", c.base_channels);
    r.get("use_jacobians", c.use_jacobians);
    r.get("warp_all_scales", c.warp_all_scales);
    r.get("heatmap_sigma", c.heatmap_sigma);
    r.get("pair_max_gap", c.pair_max_gap);
    r.get("deformation_delta_prior", c.deformation_delta_prior);
    r.get("data_root", c.data_root);
    if (r.has("loss_weights")) c.loss_weights = LossWeights::from_json(r.raw("loss_weights"));
    if (r.has("degradation")) c.degradation = DegradationConfig::from_json(r.raw("degradation"));
    if (r.has("optimizer")) c.optimizer = OptimizerConfig::from_json(r.raw("optimizer"));
    if (r.has("training")) c.training = TrainingConfig::from_json(r.raw("training"));
    r.finish();
    c.validate();
    return c;
  }

  json to_json() const {
    return json{{"resolution", resolution},
                {"keypoint_count", keypoint_count},
                {"seed", seed},
                {"base_channels", base_channels},
                {"use_jacobians", use_jacobians},
                {"warp_all_scales", warp_all_scales},
                {"heatmap_sigma", heatmap_sigma},
                {"pair_max_gap", pair_max_gap},
                {"deformation_delta_prior", deformation_delta_prior},
                {"data_root", data_root},
                {"loss_weights", loss_weights.to_json()},
                {"degradation", degradation.to_json()},
                {"optimizer", optimizer.to_json()},
                {"training", training.to_json()}};
  }

  static Config load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config '" + path + "'");
    json j;
    try {
      in >> j;
    } catch (const json::exception& e) {
      throw ConfigError("config parse error in '" + path + "': " + e.what());
    }
    return from_json(j);
  }
};

}  // namespace adasr
