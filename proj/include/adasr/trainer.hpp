#pragma once

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "adasr/adam.hpp"
#include "adasr/checkpoint.hpp"
#include "adasr/dataset.hpp"
#include "adasr/degradation.hpp"
#include "adasr/losses.hpp"

namespace adasr {

inline bool deterministic_env() {
  const char* v = std::getenv("ADASR_DETERMINISTIC");
  return v && std::string(v) == "1";
}

inline void apply_determinism_settings(bool deterministic) {
  if (deterministic) Eigen::setNbThreads(1);
}

// Optional pose supervision plug-in; when absent the pose/expression families
// stay inactive (reported as zero and flagged).
template <typename S>
using PoseOracle = std::function<MotionParamsT<S>(const FrameT<S>&)>;

template <typename S>
struct TrainBatch {
  std::vector<CrossQualityPair> pairs;
  std::uint64_t seed = 0;  // the draw that generated this batch, for diagnostics
};

// Cross-quality training loop: one discriminator update then one generator
// update per step. The generator pass runs (degraded source -> hq target) and,
// when a teacher is wired, (pristine source -> teacher target); without a
// teacher an extra pristine pass fires with probability p_hq so high-quality
// inputs stay in-distribution for inference.
template <typename S>
class Trainer {
 public:
  Trainer(const Config& cfg, DatasetIndex dataset, std::string out_dir,
          PoseOracle<S> pose_oracle = nullptr)
      : cfg_(cfg),
        dataset_(std::move(dataset)),
        cache_(dataset_, cfg.resolution),
        out_dir_(std::move(out_dir)),
        model_(AdaSRModel<S>::init(cfg)),
        adam_g_(cfg.optimizer),
        adam_d_(cfg.optimizer),
        rng_(cfg.seed),
        pose_oracle_(std::move(pose_oracle)) {
    if (cfg_.training.teacher == "identity") teacher_ = identity_teacher();
    apply_determinism_settings(cfg_.training.deterministic || deterministic_env());
    std::filesystem::create_directories(out_dir_);
  }

  AdaSRModel<S>& model() { return model_; }
  const AdaSRModel<S>& model() const { return model_; }
  std::uint64_t step() const { return step_; }
  Rng& rng() { return rng_; }

  TrainBatch<S> sample_batch() {
    TrainBatch<S> batch;
    batch.seed = rng_.next_u64();
    Rng brng(batch.seed);
    for (int i = 0; i < cfg_.training.batch_size; ++i) {
      const PairIndices pi = sample_pair_indices(dataset_, brng, cfg_.pair_max_gap);
      Frame source = cache_.frame(pi.clip, pi.source_frame);
      Frame driving = cache_.frame(pi.clip, pi.driving_frame);
      // self-reconstruction: the driving frame is the high-quality target
      batch.pairs.push_back(build_quadruple(source, driving, driving, cfg_.degradation, teacher_,
                                            brng.next_u64()));
    }
    return batch;
  }

  LossReport train_step() { return train_step_on(sample_batch()); }

  LossReport train_step_on(const TrainBatch<S>& batch) {
    const int B = static_cast<int>(batch.pairs.size());
    check_shape(B >= 1, "train_step: empty batch");
    const int R = cfg_.resolution;

    auto stack = [&](auto&& pick) {
      Tensor<S> t(Shape{B, 3, R, R});
      for (int i = 0; i < B; ++i) {
        const Tensor<float>& px = pick(batch.pairs[static_cast<std::size_t>(i)]).pixels;
        for (std::size_t j = 0; j < px.numel(); ++j)
          t.data[static_cast<std::size_t>(i) * px.numel() + j] = static_cast<S>(px.data[j]);
      }
      return t;
    };
    Tensor<S> src_lq = stack([](const CrossQualityPair& p) -> const Frame& { return p.source_lq; });
    Tensor<S> src_hq = stack([](const CrossQualityPair& p) -> const Frame& { return p.source_hq; });
    Tensor<S> driving = stack([](const CrossQualityPair& p) -> const Frame& { return p.driving; });
    Tensor<S> target = stack([](const CrossQualityPair& p) -> const Frame& { return p.target_hq; });

    // extra-pass decision and per-sample equivariance transforms, drawn before
    // any compute so the rng stream is stable
    const bool teacher_pass = static_cast<bool>(teacher_);
    const bool hq_pass = !teacher_pass && rng_.uniform() < cfg_.training.p_hq;
    std::vector<TpsTransform<S>> tps;
    tps.reserve(static_cast<std::size_t>(B));
    for (int i = 0; i < B; ++i) tps.push_back(TpsTransform<S>::random(rng_, 0.05));

    LossReport report;

    // ---- discriminator update ----
    Tensor<S> fake_lq;
    {
      NoGradGuard ng;
      fake_lq = forward_pipeline(model_, Var<S>::constant(src_lq), Var<S>::constant(driving))
                    .output.value();
    }
    {
      model_.discriminator_params().zero_grads();
      auto real_out = model_.discriminator(Var<S>::constant(target));
      auto fake_out = model_.discriminator(Var<S>::constant(fake_lq));
      Var<S> d_loss = hinge_d_loss(real_out.logits, fake_out.logits);
      report.discriminator = static_cast<double>(d_loss.value().data[0]);
      backward(d_loss);
      adam_d_.step(model_.discriminator_params());
    }

    // ---- generator update ----
    auto gparams = model_.generator_params();
    gparams.zero_grads();
    model_.discriminator_params().zero_grads();

    Var<S> total;
    int n_passes = 0;
    auto add_pass = [&](const Tensor<S>& src, const Tensor<S>& tgt, bool record) {
      Var<S> src_v = Var<S>::constant(src);
      Var<S> drv_v = Var<S>::constant(driving);
      Var<S> tgt_v = Var<S>::constant(tgt);
      auto inter = forward_pipeline(model_, src_v, drv_v);

      auto det_out = model_.detector(inter.output);
      auto det_gt = model_.detector(tgt_v);
      Var<S> l_k = keypoint_loss_op(det_out.positions3, detach(det_gt.positions3));

      Var<S> l_e = equivariance_loss_op<S>(
          [&](const Var<S>& frames) {
            return slice(model_.detector(frames).positions3, 2, 0, 2);
          },
          drv_v, tps);

      Var<S> l_delta = deformation_loss_op<S>(
          inter.src.canonical, inter.mp_drv.rotation, inter.mp_drv.translation,
          inter.mp_drv.deltas, detach(det_gt.positions3),
          static_cast<S>(cfg_.deformation_delta_prior));

      Var<S> l_p = perceptual_loss_op(PerceptualPyramid<S>::fixed(), inter.output, tgt_v);
      auto adv = adversarial_losses_op(model_.discriminator, tgt_v, inter.output);

      Var<S> l_pose, l_expr;
      if (pose_oracle_) {
        // supervise both the synthesized frame and the real driving frame
        Tensor<S> oracle_angles(Shape{B, 3}), oracle_deltas(Shape{B, model_.cfg.keypoint_count, 3});
        for (int i = 0; i < B; ++i) {
          const MotionParamsT<S> mp =
              pose_oracle_(FrameT<S>(Tensor<S>::from(Shape{3, R, R}, batch_slice(tgt, i))));
          const auto angles = euler_from_rotation(mp.rotation);
          for (int j = 0; j < 3; ++j) oracle_angles.at(i, j) = angles[j];
          for (int k = 0; k < model_.cfg.keypoint_count; ++k)
            for (int j = 0; j < 3; ++j)
              oracle_deltas.at(i, k, j) =
                  k < static_cast<int>(mp.expression_deltas.size())
                      ? mp.expression_deltas[static_cast<std::size_t>(k)][j]
                      : S(0);
        }
        auto oracle_a = Var<S>::constant(std::move(oracle_angles));
        auto oracle_d = Var<S>::constant(std::move(oracle_deltas));
        auto mp_out = model_.pose_head(inter.output);
        l_pose = mul_scalar(
            add(pose_loss_op(mp_out.angles, oracle_a), pose_loss_op(inter.mp_drv.angles, oracle_a)),
            S(0.5));
        l_expr = mul_scalar(add(expression_loss_op(mp_out.deltas, oracle_d),
                                expression_loss_op(inter.mp_drv.deltas, oracle_d)),
                            S(0.5));
      }

      const LossWeights& w = cfg_.loss_weights;
      Var<S> pass_total = mul_scalar(l_k, static_cast<S>(w.keypoint));
      pass_total = add(pass_total, mul_scalar(l_e, static_cast<S>(w.equivariance)));
      pass_total = add(pass_total, mul_scalar(l_delta, static_cast<S>(w.deformation)));
      pass_total = add(pass_total, mul_scalar(l_p, static_cast<S>(w.perceptual)));
      pass_total = add(pass_total, mul_scalar(adv.g_loss, static_cast<S>(w.gan)));
      pass_total = add(pass_total, mul_scalar(adv.fm_loss, static_cast<S>(w.feature_matching)));
      if (l_pose.defined()) {
        pass_total = add(pass_total, mul_scalar(l_pose, static_cast<S>(w.pose)));
        pass_total = add(pass_total, mul_scalar(l_expr, static_cast<S>(w.expression)));
      }

      if (record) {
        report.keypoint = static_cast<double>(l_k.value().data[0]);
        report.equivariance = static_cast<double>(l_e.value().data[0]);
        report.deformation = static_cast<double>(l_delta.value().data[0]);
        report.perceptual = static_cast<double>(l_p.value().data[0]);
        report.gan_g = static_cast<double>(adv.g_loss.value().data[0]);
        report.feature_matching = static_cast<double>(adv.fm_loss.value().data[0]);
        if (l_pose.defined()) {
          report.pose = static_cast<double>(l_pose.value().data[0]);
          report.expression = static_cast<double>(l_expr.value().data[0]);
          report.pose_active = report.expression_active = true;
        }
      }
      total = total.defined() ? add(total, pass_total) : pass_total;
      ++n_passes;
    };

    add_pass(src_lq, target, /*record=*/true);
    if (teacher_pass) {
      Tensor<S> target_sh = stack([](const CrossQualityPair& p) -> const Frame& {
        return p.target_sh ? *p.target_sh : p.target_hq;
      });
      add_pass(src_hq, target_sh, /*record=*/false);
    } else if (hq_pass) {
      add_pass(src_hq, target, /*record=*/false);
    }
    if (n_passes > 1) total = mul_scalar(total, S(1) / static_cast<S>(n_passes));

    const std::string diag =
        " at step " + std::to_string(step_ + 1) + " (batch seed " + std::to_string(batch.seed) + ")";
    try {
      report = total_loss(report, cfg_.loss_weights);
    } catch (const NumericError& e) {
      throw NumericError(std::string(e.what()) + diag);
    }
    const double total_value = static_cast<double>(total.value().data[0]);
    if (!std::isfinite(total_value) || !std::isfinite(report.discriminator))
      throw NumericError("train_step: non-finite loss" + diag);
    backward(total);
    adam_g_.step(gparams);

    ++step_;
    return report;
  }

  // Full loop: metrics log plus periodic checkpoints; returns the last report.
  LossReport run(std::ostream* progress = nullptr) {
    const std::string log_path = out_dir_ + "/" + cfg_.training.log_file;
    const bool fresh_log = step_ == 0;
    std::ofstream log(log_path, fresh_log ? std::ios::trunc : std::ios::app);
    if (!log) throw IoError("trainer: cannot open metrics log '" + log_path + "'");
    if (fresh_log) log << LossReport::csv_header() << "\n";

    LossReport last;
    while (step_ < static_cast<std::uint64_t>(cfg_.training.steps)) {
      last = train_step();
      log << last.csv_row(step_) << "\n";
      log.flush();
      if (progress && step_ % 50 == 0)
        (*progress) << "step " << step_ << " total " << last.total << " perceptual "
                    << last.perceptual << " d " << last.discriminator << std::endl;
      if (step_ % static_cast<std::uint64_t>(cfg_.training.checkpoint_every) == 0 ||
          step_ == static_cast<std::uint64_t>(cfg_.training.steps))
        save(checkpoint_path(step_));
    }
    save(checkpoint_path(step_));
    save(out_dir_ + "/latest.ckpt");
    return last;
  }

  std::string checkpoint_path(std::uint64_t s) const {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "/ckpt_%06llu.ckpt", static_cast<unsigned long long>(s));
    return out_dir_ + buf;
  }

  void save(const std::string& path) const {
    Checkpoint<S> c;
    c.config = cfg_;
    c.step = step_;
    c.rng_state = rng_.serialize();
    c.weights = snapshot_weights(model_.all_params());
    c.has_optimizer = true;
    c.adam_step = adam_g_.t();
    for (const auto& [k, v] : adam_g_.m_state()) c.adam_m.emplace("g:" + k, v);
    for (const auto& [k, v] : adam_d_.m_state()) c.adam_m.emplace("d:" + k, v);
    for (const auto& [k, v] : adam_g_.v_state()) c.adam_v.emplace("g:" + k, v);
    for (const auto& [k, v] : adam_d_.v_state()) c.adam_v.emplace("d:" + k, v);
    save_checkpoint(path, c);
  }

  void resume(const std::string& path) {
    Checkpoint<S> c = load_checkpoint<S>(path);
    if (c.config.to_json() != cfg_.to_json())
      throw VersionError("trainer: checkpoint config does not match the active config");
    restore_weights(model_.all_params(), c.weights);
    step_ = c.step;
    rng_.deserialize(c.rng_state);
    if (c.has_optimizer) {
      auto split = [](const std::map<std::string, Tensor<S>>& in, const std::string& prefix) {
        std::map<std::string, Tensor<S>> out;
        for (const auto& [k, v] : in)
          if (k.rfind(prefix, 0) == 0) out.emplace(k.substr(prefix.size()), v);
        return out;
      };
      adam_g_.restore(c.adam_step, split(c.adam_m, "g:"), split(c.adam_v, "g:"));
      adam_d_.restore(c.adam_step, split(c.adam_m, "d:"), split(c.adam_v, "d:"));
    }
  }

 private:
  static std::vector<S> batch_slice(const Tensor<S>& t, int i) {
    const std::size_t n = t.numel() / static_cast<std::size_t>(t.shape[0]);
    return {t.data.begin() + static_cast<std::ptrdiff_t>(n) * i,
            t.data.begin() + static_cast<std::ptrdiff_t>(n) * (i + 1)};
  }

  Config cfg_;
  DatasetIndex dataset_;
  ClipCache cache_;
  std::string out_dir_;
  AdaSRModel<S> model_;
  AdamOptimizer<S> adam_g_, adam_d_;
  Rng rng_;
  PoseOracle<S> pose_oracle_;
  TeacherInterface teacher_;
  std::uint64_t step_ = 0;
};

// Dataset comes from config.data_root; checkpoints and the metrics log land in
// out_dir.
template <typename S>
LossReport run_training(const Config& cfg, const std::string& out_dir,
                        const std::string& resume_path = "", std::ostream* progress = nullptr) {
  if (cfg.data_root.empty()) throw ConfigError("run_training: config.data_root is required");
  DatasetIndex idx = DatasetIndex::scan(cfg.data_root);
  Trainer<S> trainer(cfg, std::move(idx), out_dir);
  if (!resume_path.empty()) trainer.resume(resume_path);
  return trainer.run(progress);
}

}  // namespace adasr
