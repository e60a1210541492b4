#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "adasr/cli.hpp"
#include "test_synth.hpp"

using namespace adasr;
namespace fs = std::filesystem;

static fs::path temp_dir(const char* tag) {
  fs::path p = fs::temp_directory_path() / (std::string("adasr_cli_") + tag);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

static int dispatch(std::initializer_list<const char*> args) {
  std::vector<const char*> argv{"adasr"};
  argv.insert(argv.end(), args.begin(), args.end());
  return cli_dispatch(static_cast<int>(argv.size()), argv.data());
}

// a small trained-enough checkpoint shared by the animate/viz tests
static std::string make_checkpoint(const fs::path& dir) {
  Config cfg;
  cfg.resolution = 64;
  cfg.keypoint_count = 5;
  cfg.base_channels = 8;
  cfg.seed = 3;
  auto model = AdaSRModel<float>::init(cfg);
  const std::string path = (dir / "model.ckpt").string();
  save_model(path, model, 0, Rng(3).serialize());
  return path;
}

TEST_CASE("help exits 0; unknown flags exit 1 naming the flag") {
  CHECK(dispatch({"animate", "--help"}) == 0);
  CHECK(dispatch({"--help"}) == 0);
  CHECK(dispatch({"degrade", "--in", "a.ppm", "--out", "b.ppm", "--bogus-flag"}) == 1);
  CHECK(dispatch({"no-such-command"}) == 1);
  CHECK(dispatch({}) == 1);
}

TEST_CASE("degrade round trip produces a readable output file") {
  auto dir = temp_dir("degrade");
  write_ppm_file((dir / "in.ppm").string(), testing::synth_frame(64, 0, 8, 1).pixels);
  const std::string in = (dir / "in.ppm").string(), out = (dir / "out.ppm").string();
  CHECK(dispatch({"degrade", "--in", in.c_str(), "--out", out.c_str(), "--seed", "7"}) == 0);
  Tensor<float> img = read_ppm_file<float>(out);
  CHECK(img.shape == Shape{3, 64, 64});
  // missing input -> runtime error
  CHECK(dispatch({"degrade", "--in", (dir / "nope.ppm").string().c_str(), "--out", out.c_str()}) ==
        2);
}

TEST_CASE("animate: output length, modes, determinism, zero degradation") {
  auto dir = temp_dir("animate");
  const std::string ckpt = make_checkpoint(dir);
  write_ppm_file((dir / "source.ppm").string(), testing::synth_frame(64, 0, 8, 2).pixels);
  write_video(testing::synth_clip(64, 3, 5), (dir / "driving.ppm").string());

  const std::uint64_t degrade_before = degrade_call_count();
  AnimationJob job;
  job.checkpoint = ckpt;
  job.source_image = (dir / "source.ppm").string();
  job.driving_video = (dir / "driving.ppm").string();
  job.output = (dir / "out.ppm").string();
  job.mode = TransferMode::kAbsolute;
  FrameSequence out = animate(job);
  CHECK(out.frames.size() == 3);  // output frame count == driving frame count
  CHECK(fs::exists(job.output));
  CHECK(degrade_call_count() == degrade_before);  // no degradation at inference

  // bit-identical on a repeated run
  FrameSequence out2 = animate(job);
  for (std::size_t t = 0; t < out.frames.size(); ++t)
    CHECK(out.frames[t].pixels.data == out2.frames[t].pixels.data);

  // relative mode runs and respects the anchor flag
  job.mode = TransferMode::kRelative;
  job.anchor_frame = 1;
  CHECK(animate(job).frames.size() == 3);
  job.anchor_frame = 99;
  CHECK_THROWS_AS(animate(job), BoundsError);

  // corrupt checkpoint -> version error
  std::ofstream((dir / "bad.ckpt").string()) << "junk";
  job.checkpoint = (dir / "bad.ckpt").string();
  job.anchor_frame = 0;
  CHECK_THROWS_AS(animate(job), VersionError);
}

TEST_CASE("relative mode anchored at the source pose equals absolute mode") {
  auto dir = temp_dir("relabs");
  Config cfg;
  cfg.resolution = 64;
  cfg.keypoint_count = 5;
  cfg.base_channels = 8;
  auto model = AdaSRModel<float>::init(cfg);
  Frame source = testing::synth_frame(64, 0, 8, 4);
  Frame driving = testing::synth_frame(64, 3, 8, 4);

  Animator<float> animator(model, source);
  // anchor whose params equal the source's own estimate
  MotionParamsT<float> anchor = animator.source_params();
  MotionParamsT<float> frame = animator.frame_params(driving);
  MotionParamsT<float> rel = animator.effective_params(frame, anchor, TransferMode::kRelative);
  MotionParamsT<float> abs = animator.effective_params(frame, anchor, TransferMode::kAbsolute);
  CHECK((rel.rotation - abs.rotation).norm() < 1e-6f);
  CHECK((rel.translation - abs.translation).norm() < 1e-6f);
  for (std::size_t k = 0; k < rel.expression_deltas.size(); ++k)
    CHECK((rel.expression_deltas[k] - abs.expression_deltas[k]).norm() < 1e-6f);
}

TEST_CASE("visualize-features emits labeled maps and diagnostics") {
  auto dir = temp_dir("viz");
  const std::string ckpt = make_checkpoint(dir);
  write_ppm_file((dir / "source.ppm").string(), testing::synth_frame(64, 0, 8, 6).pixels);
  write_ppm_file((dir / "driving.ppm").string(), testing::synth_frame(64, 4, 8, 6).pixels);

  auto files = visualize_features(ckpt, (dir / "source.ppm").string(),
                                  (dir / "driving.ppm").string(), (dir / "viz").string());
  int pre = 0, post = 0;
  bool flow = false, occ = false, diag = false;
  for (const auto& f : files) {
    CHECK(fs::exists(f));
    if (f.find("pre_warp") != std::string::npos) ++pre;
    if (f.find("post_warp") != std::string::npos) ++post;
    if (f.find("flow") != std::string::npos) flow = true;
    if (f.find("occlusion") != std::string::npos) occ = true;
    if (f.find("diagnostics") != std::string::npos) diag = true;
  }
  CHECK(pre >= 2);
  CHECK(post >= 2);
  CHECK(flow);
  CHECK(occ);
  CHECK(diag);

  // pre-warp maps depend only on the source: identical for another driving
  auto files2 = visualize_features(ckpt, (dir / "source.ppm").string(),
                                   (dir / "source.ppm").string(), (dir / "viz2").string());
  for (int s = 0; s < 3; ++s) {
    const std::string name = "pre_warp_scale" + std::to_string(s) + ".ppm";
    Tensor<float> a = read_ppm_file<float>((dir / "viz" / name).string());
    Tensor<float> b = read_ppm_file<float>((dir / "viz2" / name).string());
    CHECK(a.data == b.data);
  }

  // diagnostics carry per-map high-frequency energy numbers
  std::ifstream din((dir / "viz" / "diagnostics.json").string());
  json j;
  din >> j;
  CHECK(j.contains("post_warp_scale2"));
  CHECK(j["post_warp_scale2"].get<double>() >= 0.0);
}

TEST_CASE("cli end-to-end: short train, evaluate, animate") {
  auto dir = temp_dir("e2e");
  testing::write_toy_dataset((dir / "data").string(), 1, 3, 64, 7);
  json cfg{{"resolution", 64},
           {"keypoint_count", 4},
           {"base_channels", 8},
           {"data_root", (dir / "data").string()},
           {"training", json{{"steps", 2}, {"batch_size", 1}, {"deterministic", true}}}};
  std::ofstream((dir / "config.json").string()) << cfg.dump();

  const std::string cfg_path = (dir / "config.json").string();
  const std::string out_dir = (dir / "run").string();
  CHECK(dispatch({"train", "--config", cfg_path.c_str(), "--out-dir", out_dir.c_str()}) == 0);
  const std::string ckpt = out_dir + "/latest.ckpt";
  REQUIRE(fs::exists(ckpt));

  const std::string report = (dir / "report.json").string();
  CHECK(dispatch({"evaluate", "--ckpt", ckpt.c_str(), "--data",
                  (dir / "data").string().c_str(), "--out", report.c_str()}) == 0);
  std::ifstream rin(report);
  json r;
  rin >> r;
  CHECK(r.contains("psnr_db"));
  CHECK(r.contains("akd"));
  CHECK(r["sample_count"].get<int>() == 3);

  write_ppm_file((dir / "src.ppm").string(), testing::synth_frame(64, 0, 8, 8).pixels);
  const std::string src = (dir / "src.ppm").string();
  const std::string drv = (dir / "data" / "clip000").string();
  const std::string out = (dir / "anim.ppm").string();
  CHECK(dispatch({"animate", "--ckpt", ckpt.c_str(), "--source", src.c_str(), "--driving",
                  drv.c_str(), "--out", out.c_str(), "--same-identity"}) == 0);
  CHECK(count_clip_frames(out) == 3);
}
