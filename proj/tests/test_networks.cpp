#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>

#include "adasr/checkpoint.hpp"
#include "adasr/model.hpp"
#include "adasr/perceptual.hpp"
#include "test_synth.hpp"
#include "test_util.hpp"

using namespace adasr;

static Config tiny_config(int K = 5, int base = 8) {
  Config c;
  c.resolution = 64;
  c.keypoint_count = K;
  c.base_channels = base;
  return c;
}

TEST_CASE("encoder produces the contracted multi-scale maps, BN-free") {
  Config cfg = tiny_config();
  auto model = AdaSRModel<float>::init(cfg);
  Frame f = testing::synth_frame(64, 0, 8, 1);
  auto maps = encode_appearance(model, f);
  REQUIRE(maps.size() == 3);
  CHECK(maps[0].shape == Shape{8, 64, 64});
  CHECK(maps[1].shape == Shape{16, 32, 32});
  CHECK(maps[2].shape == Shape{32, 16, 16});  // deepest at feature resolution
  for (const auto& m : maps) CHECK(m.all_finite());

  // zero image stays finite
  Frame zero(Tensor<float>(Shape{3, 64, 64}, 0.0f));
  for (const auto& m : encode_appearance(model, zero)) CHECK(m.all_finite());

  CHECK_THROWS_AS(encode_appearance(model, testing::synth_frame(32, 0, 8, 1)), ShapeError);
}

TEST_CASE("structural scan: no batch statistics anywhere") {
  auto model = AdaSRModel<float>::init(tiny_config());
  auto all = model.all_params();
  CHECK(all.entries().size() > 0);
  CHECK(count_batch_stat_buffers(all) == 0);
  auto gen = model.generator_params();
  CHECK(count_batch_stat_buffers(gen) == 0);
}

TEST_CASE("batch independence of encoder and full pipeline") {
  auto model = AdaSRModel<float>::init(tiny_config());
  Rng rng(5);
  Frame a = testing::synth_frame(64, 0, 8, 2);
  Frame d = testing::synth_frame(64, 3, 8, 2);

  NoGradGuard ng;
  // alone
  auto alone = forward_pipeline(model, frame_to_var(a), frame_to_var(d));
  // inside a batch of 4 with random companions
  Tensor<float> src_b(Shape{4, 3, 64, 64}), drv_b(Shape{4, 3, 64, 64});
  std::copy(a.pixels.data.begin(), a.pixels.data.end(), src_b.data.begin());
  std::copy(d.pixels.data.begin(), d.pixels.data.end(), drv_b.data.begin());
  for (std::size_t i = a.pixels.numel(); i < src_b.numel(); ++i) {
    src_b.data[i] = static_cast<float>(rng.uniform());
    drv_b.data[i] = static_cast<float>(rng.uniform());
  }
  auto batched = forward_pipeline(model, Var<float>::constant(src_b), Var<float>::constant(drv_b));
  const std::size_t n = 3 * 64 * 64;
  for (std::size_t i = 0; i < n; ++i)
    CHECK(std::abs(alone.output.value().data[i] - batched.output.value().data[i]) <= 1e-6f);

  // encoder alone
  auto e1 = model.encoder(frame_to_var(a)).maps[2];
  auto e4 = model.encoder(Var<float>::constant(src_b)).maps[2];
  const std::size_t en = e1.value().numel();
  for (std::size_t i = 0; i < en; ++i)
    CHECK(std::abs(e1.value().data[i] - e4.value().data[i]) <= 1e-6f);
}

TEST_CASE("soft-argmax of a peaked score map recovers the peak cell") {
  // same composition the detector head uses
  const int h = 16;
  Tensor<double> scores(Shape{1, 1, h, h}, 0.0);
  scores.at(0, 0, 8, 8) = 50.0;
  auto w = softmax_spatial(Var<double>::constant(scores));
  Tensor<double> grid = coord_grid<double>(h, h);
  double px = 0, py = 0;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < h; ++x) {
      px += w.value().at(0, 0, y, x) * grid.at(0, y, x);
      py += w.value().at(0, 0, y, x) * grid.at(1, y, x);
    }
  // peak cell center is (2*8+1)/16-1; "center" is within one lattice step of 0
  CHECK(std::abs(px - ((2.0 * 8 + 1) / h - 1)) < 1e-9);
  CHECK(std::abs(px) <= 2.0 / h);
  CHECK(std::abs(py) <= 2.0 / h);
}

TEST_CASE("detector emits valid keypoints; jacobians follow the config flag") {
  Config cfg = tiny_config();
  auto model = AdaSRModel<float>::init(cfg);
  Frame f = testing::synth_frame(64, 2, 8, 3);
  KeypointSet set = detect_keypoints(model, f);
  CHECK(set.size() == cfg.keypoint_count);
  for (const auto& p : set.points) {
    CHECK(std::abs(p.position.x()) <= 1.0f);
    CHECK(std::abs(p.position.y()) <= 1.0f);
  }
  REQUIRE(set.jacobians.has_value());
  // zero-init jacobian head starts at the identity
  for (const auto& j : *set.jacobians) CHECK((j - Eigen::Matrix2f::Identity()).norm() < 1e-5f);

  Config no_jac = cfg;
  no_jac.use_jacobians = false;
  auto m2 = AdaSRModel<float>::init(no_jac);
  CHECK_FALSE(detect_keypoints(m2, f).jacobians.has_value());
}

TEST_CASE("pose head: bounded angles, orthonormal rotation, zero-init identity") {
  auto model = AdaSRModel<float>::init(tiny_config());
  Frame f = testing::synth_frame(64, 1, 8, 4);
  MotionParams mp = estimate_motion_params(model, f);
  mp.validate();  // orthonormal, det +1
  // small-gain heads -> near-identity pose at start
  CHECK((mp.rotation - Eigen::Matrix3f::Identity()).norm() < 0.2f);
  CHECK(mp.translation.norm() < 0.2f);
  CHECK(mp.expression_deltas.size() == 5);

  // angles squashed into (-pi/2, pi/2) by construction
  NoGradGuard ng;
  auto out = model.pose_head(frame_to_var(f));
  for (float a : out.angles.value().data) CHECK(std::abs(a) < M_PI / 2);
}

TEST_CASE("dense motion predictor: shape contract and occlusion range") {
  Config cfg = tiny_config(15, 8);
  auto model = AdaSRModel<float>::init(cfg);
  NoGradGuard ng;
  Frame s = testing::synth_frame(64, 0, 8, 6);
  Frame d = testing::synth_frame(64, 4, 8, 6);
  auto inter = forward_pipeline(model, frame_to_var(s), frame_to_var(d));
  CHECK(inter.mask_logits.shape() == Shape{1, 16, 16, 16});
  CHECK(inter.occlusion_logits.shape() == Shape{1, 1, 16, 16});
  CHECK(inter.flow.shape() == Shape{1, 2, 16, 16});
  for (float v : inter.occlusion.value().data) {
    CHECK(v > 0.0f);
    CHECK(v < 1.0f);
  }
  CHECK(inter.heatmaps.shape() == Shape{1, 15, 16, 16});
  CHECK(inter.sparse_flows.shape() == Shape{1, 16, 2, 16, 16});
}

TEST_CASE("generator output lands in [0,1] at the configured resolution") {
  auto model = AdaSRModel<float>::init(tiny_config());
  NoGradGuard ng;
  Frame s = testing::synth_frame(64, 0, 8, 7);
  Frame d = testing::synth_frame(64, 2, 8, 7);
  auto inter = forward_pipeline(model, frame_to_var(s), frame_to_var(d));
  CHECK(inter.output.shape() == Shape{1, 3, 64, 64});
  CHECK(inter.output.value().min() >= 0.0f);
  CHECK(inter.output.value().max() <= 1.0f);
}

TEST_CASE("discriminator: two scales, finite patch logits, nonempty features") {
  auto model = AdaSRModel<float>::init(tiny_config());
  NoGradGuard ng;
  Frame f = testing::synth_frame(64, 0, 8, 8);
  auto out = model.discriminator(frame_to_var(f));
  REQUIRE(out.logits.size() == 2);
  REQUIRE(out.features.size() == 2);
  CHECK(out.logits[0].shape() == Shape{1, 1, 8, 8});
  CHECK(out.logits[1].shape() == Shape{1, 1, 4, 4});
  for (const auto& l : out.logits) CHECK(l.value().all_finite());
  for (const auto& feats : out.features) CHECK(feats.size() == 3);
}

TEST_CASE("end-to-end differentiability: every parameter group gets gradients") {
  auto model = AdaSRModel<float>::init(tiny_config());
  Frame s = testing::synth_frame(64, 0, 8, 9);
  Frame d = testing::synth_frame(64, 5, 8, 9);
  auto inter = forward_pipeline(model, frame_to_var(s), frame_to_var(d));
  auto loss = mean_all(square(inter.output));
  backward(loss);

  auto group_grad_norm = [&](const ParamRegistry<float>& reg) {
    double n = 0;
    for (const auto& e : reg.entries()) {
      if (!e.var.has_grad()) continue;
      for (float g : e.var.grad().data) {
        REQUIRE(std::isfinite(g));
        n += static_cast<double>(g) * g;
      }
    }
    return std::sqrt(n);
  };
  ParamRegistry<float> enc, det, pose, dmn, gen;
  model.encoder.collect("e", enc);
  model.detector.collect("d", det);
  model.pose_head.collect("p", pose);
  model.dense_motion.collect("m", dmn);
  model.generator.collect("g", gen);
  CHECK(group_grad_norm(enc) > 0.0);
  CHECK(group_grad_norm(det) > 0.0);
  CHECK(group_grad_norm(pose) > 0.0);
  CHECK(group_grad_norm(dmn) > 0.0);
  CHECK(group_grad_norm(gen) > 0.0);

  // gradients reach the encoder's first layer specifically
  ParamRegistry<float> first;
  model.encoder.c1.collect("c1", first);
  CHECK(group_grad_norm(first) > 0.0);
}

TEST_CASE("parameter budget at the default configuration") {
  Config cfg;  // resolution 64, K 15, base 32
  auto model = AdaSRModel<float>::init(cfg);
  const std::size_t count = model.all_params().parameter_count();
  MESSAGE("parameter count: " << count);
  CHECK(count < 30'000'000);
}

TEST_CASE("checkpoint round trip reproduces forward outputs") {
  namespace fs = std::filesystem;
  const auto path = (fs::temp_directory_path() / "adasr_ckpt_test.bin").string();
  Config cfg = tiny_config();
  auto model = AdaSRModel<float>::init(cfg);
  save_model(path, model, 17, "rngstate");

  Checkpoint<float> ckpt = load_checkpoint<float>(path);
  CHECK(ckpt.step == 17);
  CHECK(ckpt.rng_state == "rngstate");
  CHECK(ckpt.config.keypoint_count == cfg.keypoint_count);
  auto restored = model_from_checkpoint(ckpt);

  NoGradGuard ng;
  Frame s = testing::synth_frame(64, 0, 8, 10);
  Frame d = testing::synth_frame(64, 3, 8, 10);
  auto a = forward_pipeline(model, frame_to_var(s), frame_to_var(d));
  auto b = forward_pipeline(restored, frame_to_var(s), frame_to_var(d));
  for (std::size_t i = 0; i < a.output.value().numel(); ++i)
    CHECK(std::abs(a.output.value().data[i] - b.output.value().data[i]) <= 1e-6f);

  // corrupting the magic is a version error
  {
    std::ofstream bad(path, std::ios::binary);
    bad << "NOTACKPT";
  }
  CHECK_THROWS_AS(load_checkpoint<float>(path), VersionError);
}

TEST_CASE("perceptual pyramid: fixed, deterministic, multi-scale") {
  const auto& p = PerceptualPyramid<float>::fixed();
  Frame f = testing::synth_frame(64, 0, 8, 11);
  NoGradGuard ng;
  auto feats = p.features(frame_to_var(f));
  REQUIRE(feats.size() == 4);
  CHECK(feats[0].shape() == Shape{1, 3, 64, 64});
  CHECK(feats[3].shape() == Shape{1, 32, 8, 8});
  auto e1 = p.embed(frame_to_var(f));
  auto e2 = PerceptualPyramid<float>::fixed().embed(frame_to_var(f));
  CHECK(e1.value().data == e2.value().data);
  CHECK(e1.shape() == Shape{1, 32});
}
