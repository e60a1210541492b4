#pragma once

#include "adasr/checkpoint.hpp"
#include "adasr/metrics.hpp"
#include "adasr/video_io.hpp"

namespace adasr {

// Whether driving motion is applied directly (self-reenactment) or as a delta
// from an anchor frame of the driving clip (cross-identity transfer).
enum class TransferMode { kAbsolute, kRelative };

struct AnimationJob {
  std::string source_image;
  std::string driving_video;
  std::string checkpoint;
  std::string output;
  TransferMode mode = TransferMode::kRelative;
  int anchor_frame = 0;
  double fps = 0;  // 0: keep the driving clip's rate
};

namespace detail {

template <typename S>
MotionParamsT<S> params_from_output(const MotionParamsOutput<S>& out, int K) {
  MotionParamsT<S> mp;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) mp.rotation(i, j) = out.rotation.value().at(0, i, j);
  for (int i = 0; i < 3; ++i) mp.translation[i] = out.translation.value().at(0, i);
  mp.expression_deltas.resize(static_cast<std::size_t>(K));
  for (int k = 0; k < K; ++k)
    for (int i = 0; i < 3; ++i)
      mp.expression_deltas[static_cast<std::size_t>(k)][i] = out.deltas.value().at(0, k, i);
  return mp;
}

template <typename S>
void params_to_vars(const MotionParamsT<S>& mp, int K, Var<S>& R, Var<S>& t, Var<S>& d) {
  Tensor<S> rt(Shape{1, 3, 3}), tt(Shape{1, 3}), dt(Shape{1, K, 3});
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) rt.at(0, i, j) = mp.rotation(i, j);
  for (int i = 0; i < 3; ++i) tt.at(0, i) = mp.translation[i];
  for (int k = 0; k < K && k < static_cast<int>(mp.expression_deltas.size()); ++k)
    for (int i = 0; i < 3; ++i)
      dt.at(0, k, i) = mp.expression_deltas[static_cast<std::size_t>(k)][i];
  R = Var<S>::constant(std::move(rt));
  t = Var<S>::constant(std::move(tt));
  d = Var<S>::constant(std::move(dt));
}

}  // namespace detail

// Reusable per-source animator: analyze the source once, then synthesize one
// output frame per driving frame.
template <typename S>
class Animator {
 public:
  Animator(const AdaSRModel<S>& model, const FrameT<S>& source) : model_(&model) {
    NoGradGuard ng;
    if (source.height() != model.cfg.resolution || source.width() != model.cfg.resolution)
      throw ShapeError("animate: source must match the checkpoint resolution");
    src_ = analyze_source(*model_, frame_to_var(source));
    mp_source_ = detail::params_from_output(src_.mp, model.cfg.keypoint_count);
  }

  const MotionParamsT<S>& source_params() const { return mp_source_; }

  MotionParamsT<S> frame_params(const FrameT<S>& driving) const {
    return estimate_motion_params(*model_, driving);
  }

  // mode-resolved effective params for one driving frame
  MotionParamsT<S> effective_params(const MotionParamsT<S>& mp_frame,
                                    const MotionParamsT<S>& mp_anchor, TransferMode mode) const {
    return mode == TransferMode::kAbsolute ? mp_frame
                                           : relative_params(mp_source_, mp_anchor, mp_frame);
  }

  FrameT<S> synthesize(const MotionParamsT<S>& mp) const {
    NoGradGuard ng;
    Var<S> R, t, d;
    detail::params_to_vars(mp, model_->cfg.keypoint_count, R, t, d);
    PipelineIntermediates<S> inter;
    synthesize_with_params(*model_, src_, R, t, d, inter);
    return var_to_frame(inter.output);
  }

  FrameT<S> operator()(const FrameT<S>& driving, const MotionParamsT<S>& mp_anchor,
                       TransferMode mode) const {
    return synthesize(effective_params(frame_params(driving), mp_anchor, mode));
  }

 private:
  const AdaSRModel<S>* model_;
  SourceCache<S> src_;
  MotionParamsT<S> mp_source_;
};

// Full job: load checkpoint + media, animate every driving frame, write the
// clip. No degradation happens anywhere on this path.
inline FrameSequence animate(const AnimationJob& job) {
  Checkpoint<float> ckpt = load_checkpoint<float>(job.checkpoint);
  AdaSRModel<float> model = model_from_checkpoint(ckpt);
  const int R = model.cfg.resolution;

  Frame source = load_video_clip(job.source_image, {0}, R).frames[0];
  const int n = count_clip_frames(job.driving_video);
  if (n < 1) throw DecodeError("animate: empty driving clip");
  std::vector<int> all(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) all[static_cast<std::size_t>(i)] = i;
  FrameSequence driving = load_video_clip(job.driving_video, all, R);

  if (job.anchor_frame < 0 || job.anchor_frame >= n)
    throw BoundsError("animate: anchor frame out of range");

  Animator<float> animator(model, source);
  const MotionParamsT<float> mp_anchor =
      animator.frame_params(driving.frames[static_cast<std::size_t>(job.anchor_frame)]);

  FrameSequence out;
  out.fps = job.fps > 0 ? job.fps : driving.fps;
  out.frames.reserve(driving.frames.size());
  for (const Frame& frame : driving.frames)
    out.frames.push_back(animator(frame, mp_anchor, job.mode));

  if (!job.output.empty()) write_video(out, job.output);
  return out;
}

// Evaluation adapter: absolute-mode self-reenactment per frame.
template <typename S>
std::function<Frame(const Frame&, const Frame&)> checkpoint_generator(
    std::shared_ptr<const AdaSRModel<S>> model) {
  // one animator per source frame, cached across driving frames
  struct State {
    std::shared_ptr<const AdaSRModel<S>> model;
    std::optional<Animator<S>> animator;
    Tensor<float> source_px;
  };
  auto state = std::make_shared<State>();
  state->model = std::move(model);
  return [state](const Frame& source, const Frame& driving) {
    if (!state->animator || !(state->source_px.shape == source.pixels.shape) ||
        !(state->source_px.data == source.pixels.data)) {
      state->animator.emplace(*state->model, source.cast<S>());
      state->source_px = source.pixels;
    }
    MotionParamsT<S> mp = state->animator->frame_params(driving.cast<S>());
    return state->animator->synthesize(mp).template cast<float>();
  };
}

}  // namespace adasr
