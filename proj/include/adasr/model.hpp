#pragma once

#include "adasr/networks.hpp"

namespace adasr {

// The full learnable bundle plus the composed source->driving pipeline.
template <typename S>
struct AdaSRModel {
  Config cfg;
  AppearanceEncoder<S> encoder;
  KeypointDetector<S> detector;
  PoseExpressionHead<S> pose_head;
  DenseMotionNet<S> dense_motion;
  Generator<S> generator;
  PatchDiscriminator<S> discriminator;

  static AdaSRModel init(const Config& cfg) {
    cfg.validate();
    Rng rng(splitmix64(cfg.seed ^ 0x6d6f64656cULL));
    AdaSRModel m;
    m.cfg = cfg;
    m.encoder = AppearanceEncoder<S>(cfg.base_channels, rng);
    m.detector = KeypointDetector<S>(cfg.base_channels, cfg.keypoint_count, cfg.use_jacobians, rng);
    m.pose_head = PoseExpressionHead<S>(cfg.base_channels, cfg.keypoint_count, rng);
    m.dense_motion = DenseMotionNet<S>(cfg.base_channels, cfg.keypoint_count, rng);
    m.generator = Generator<S>(cfg.base_channels, cfg.warp_all_scales, rng);
    m.discriminator = PatchDiscriminator<S>(cfg.base_channels, rng);
    return m;
  }

  ParamRegistry<S> generator_params() const {
    ParamRegistry<S> reg;
    encoder.collect("encoder", reg);
    detector.collect("detector", reg);
    pose_head.collect("pose_head", reg);
    dense_motion.collect("dense_motion", reg);
    generator.collect("generator", reg);
    return reg;
  }

  ParamRegistry<S> discriminator_params() const {
    ParamRegistry<S> reg;
    discriminator.collect("discriminator", reg);
    return reg;
  }

  ParamRegistry<S> all_params() const {
    ParamRegistry<S> reg = generator_params();
    discriminator.collect("discriminator", reg);
    return reg;
  }
};

// Everything derived from the source frame once per animation job.
template <typename S>
struct SourceCache {
  Var<S> source;
  AppearanceFeatures<S> app;
  KeypointOutput<S> kp;
  MotionParamsOutput<S> mp;
  Var<S> canonical;      // (B,K,3)
  Var<S> jac_canonical;  // (B,K,2,2) or undefined
};

template <typename S>
SourceCache<S> analyze_source(const AdaSRModel<S>& model, const Var<S>& source) {
  SourceCache<S> c;
  c.source = source;
  c.app = model.encoder(source);
  c.kp = model.detector(source);
  c.mp = model.pose_head(source);
  c.canonical = unpose_points(c.kp.positions3, c.mp.rotation, c.mp.translation, c.mp.deltas);
  if (c.kp.jacobians.defined())
    c.jac_canonical = rotate_jacobians(c.kp.jacobians, c.mp.rotation, /*transpose_r=*/true);
  return c;
}

template <typename S>
struct PipelineIntermediates {
  SourceCache<S> src;
  MotionParamsOutput<S> mp_drv;
  Var<S> kp_drv_pos3;  // (B,K,3) posed canonical keypoints under driving params
  Var<S> jac_drv;      // (B,K,2,2) or undefined
  Var<S> heatmaps;     // (B,K,h,w) signed difference
  Var<S> sparse_flows;  // (B,K+1,2,h,w)
  Var<S> mask_logits;   // (B,K+1,h,w)
  Var<S> occlusion_logits;  // (B,1,h,w)
  Var<S> flow;          // (B,2,h,w)
  Var<S> occlusion;     // (B,1,h,w), sigmoid'd
  std::vector<Var<S>> warped;         // per encoder scale, before occlusion
  std::vector<Var<S>> warped_masked;  // per encoder scale, occlusion applied
  Var<S> output;        // (B,3,R,R)
};

// Core of the pipeline once driving motion params are known: pose the
// canonical keypoints, build heatmaps and sparse flows, predict the dense
// flow and occlusion, warp every encoder scale, and decode.
template <typename S>
void synthesize_with_params(const AdaSRModel<S>& model, const SourceCache<S>& src,
                            const Var<S>& R_drv, const Var<S>& t_drv, const Var<S>& delta_drv,
                            PipelineIntermediates<S>& inter) {
  const Config& cfg = model.cfg;
  const int h = cfg.feature_resolution();
  const int B = src.source.shape()[0];
  const int K = cfg.keypoint_count;

  inter.src = src;
  inter.kp_drv_pos3 = pose_points(src.canonical, R_drv, t_drv, delta_drv);
  if (src.jac_canonical.defined())
    inter.jac_drv = rotate_jacobians(src.jac_canonical, R_drv);

  Var<S> pos2_src = slice(src.kp.positions3, 2, 0, 2);
  Var<S> pos2_drv = slice(inter.kp_drv_pos3, 2, 0, 2);
  inter.heatmaps = difference_heatmaps_op(pos2_src, pos2_drv, h, h, static_cast<S>(cfg.heatmap_sigma));
  inter.sparse_flows = sparse_motion_op(pos2_src, src.kp.jacobians, pos2_drv, inter.jac_drv, h, h);

  Var<S> down_src = avg_pool2(avg_pool2(src.source));
  Var<S> dm_input = concat<S>(
      {inter.heatmaps, reshape(inter.sparse_flows, Shape{B, (K + 1) * 2, h, h}), down_src}, 1);
  auto heads = model.dense_motion(dm_input);
  inter.mask_logits = heads.first;
  inter.occlusion_logits = heads.second;
  inter.flow = combine_dense_motion_op(inter.mask_logits, inter.sparse_flows);
  inter.occlusion = sigmoid(inter.occlusion_logits);

  inter.warped.clear();
  inter.warped_masked.clear();
  for (std::size_t i = 0; i < src.app.maps.size(); ++i) {
    const Var<S>& m = src.app.maps[i];
    const int mh = m.shape()[2], mw = m.shape()[3];
    Var<S> flow_i = (mh == h && mw == h) ? inter.flow : upsample_bilinear(inter.flow, mh, mw);
    Var<S> occ_i = (mh == h && mw == h) ? inter.occlusion : upsample_bilinear(inter.occlusion, mh, mw);
    const bool warp_this = cfg.warp_all_scales || i + 1 == src.app.maps.size();
    Var<S> w = warp_this ? grid_sample(m, flow_i) : m;
    inter.warped.push_back(w);
    inter.warped_masked.push_back(apply_occlusion(w, occ_i));
  }
  inter.output = model.generator(inter.warped_masked);
}

// Self-reconstruction pipeline: both frames go through the detector and pose
// head; the driving keypoints come from the source's canonical set posed with
// the driving frame's motion params.
template <typename S>
PipelineIntermediates<S> forward_pipeline(const AdaSRModel<S>& model, const Var<S>& source,
                                          const Var<S>& driving) {
  check_shape(source.shape() == driving.shape(), "forward_pipeline: frame shape mismatch");
  check_shape(source.shape()[2] == model.cfg.resolution &&
                  source.shape()[3] == model.cfg.resolution,
              "forward_pipeline: frames must match the configured resolution");
  PipelineIntermediates<S> inter;
  SourceCache<S> src = analyze_source(model, source);
  inter.mp_drv = model.pose_head(driving);
  synthesize_with_params(model, src, inter.mp_drv.rotation, inter.mp_drv.translation,
                         inter.mp_drv.deltas, inter);
  return inter;
}

// ---- struct-level contract wrappers ----

template <typename S>
Var<S> frame_to_var(const FrameT<S>& f) {
  return Var<S>::constant(f.pixels.reshaped(Shape{1, 3, f.height(), f.width()}));
}

template <typename S>
FrameT<S> var_to_frame(const Var<S>& v) {
  const Shape& s = v.shape();
  Tensor<S> px = v.value().reshaped(Shape{s[1], s[2], s[3]});
  clamp01_inplace(px);
  return FrameT<S>(std::move(px));
}

template <typename S>
std::vector<Tensor<S>> encode_appearance(const AdaSRModel<S>& model, const FrameT<S>& frame) {
  if (frame.height() != model.cfg.resolution || frame.width() != model.cfg.resolution)
    throw ShapeError("encode_appearance: frame must match the configured resolution");
  NoGradGuard ng;
  auto maps = model.encoder(frame_to_var(frame)).maps;
  std::vector<Tensor<S>> out;
  out.reserve(maps.size());
  for (auto& m : maps)
    out.push_back(m.value().reshaped(Shape{m.shape()[1], m.shape()[2], m.shape()[3]}));
  return out;
}

template <typename S>
KeypointSetT<S> detect_keypoints(const AdaSRModel<S>& model, const FrameT<S>& frame) {
  NoGradGuard ng;
  auto out = model.detector(frame_to_var(frame));
  KeypointSetT<S> set;
  const int K = model.cfg.keypoint_count;
  set.points.resize(static_cast<std::size_t>(K));
  for (int k = 0; k < K; ++k) {
    set.points[static_cast<std::size_t>(k)].position = {out.positions3.value().at(0, k, 0),
                                                        out.positions3.value().at(0, k, 1)};
    set.points[static_cast<std::size_t>(k)].depth = out.positions3.value().at(0, k, 2);
  }
  if (out.jacobians.defined()) {
    set.jacobians.emplace();
    for (int k = 0; k < K; ++k) {
      Eigen::Matrix<S, 2, 2> j;
      j << out.jacobians.value().at(0, k, 0, 0), out.jacobians.value().at(0, k, 0, 1),
          out.jacobians.value().at(0, k, 1, 0), out.jacobians.value().at(0, k, 1, 1);
      set.jacobians->push_back(j);
    }
  }
  set.validate();
  return set;
}

template <typename S>
MotionParamsT<S> estimate_motion_params(const AdaSRModel<S>& model, const FrameT<S>& frame) {
  NoGradGuard ng;
  auto out = model.pose_head(frame_to_var(frame));
  MotionParamsT<S> mp;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) mp.rotation(i, j) = out.rotation.value().at(0, i, j);
  mp.translation = {out.translation.value().at(0, 0), out.translation.value().at(0, 1),
                    out.translation.value().at(0, 2)};
  mp.expression_deltas.resize(static_cast<std::size_t>(model.cfg.keypoint_count));
  for (int k = 0; k < model.cfg.keypoint_count; ++k)
    mp.expression_deltas[static_cast<std::size_t>(k)] = {out.deltas.value().at(0, k, 0),
                                                         out.deltas.value().at(0, k, 1),
                                                         out.deltas.value().at(0, k, 2)};
  return mp;
}

// Structural scan proving no batch statistics exist in the weights.
template <typename S>
int count_batch_stat_buffers(const ParamRegistry<S>& reg) {
  int n = reg.batch_stat_buffers();
  for (const auto& e : reg.entries()) {
    if (e.name.find("running_mean") != std::string::npos ||
        e.name.find("running_var") != std::string::npos)
      ++n;
  }
  return n;
}

}  // namespace adasr
