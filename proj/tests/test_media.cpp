#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "adasr/config.hpp"
#include "adasr/dataset.hpp"
#include "adasr/video_io.hpp"
#include "test_synth.hpp"

using namespace adasr;
namespace fs = std::filesystem;

static fs::path temp_dir(const char* tag) {
  fs::path p = fs::temp_directory_path() / (std::string("adasr_media_") + tag);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

// Quantize a frame the way one write/read cycle would.
static Frame quantized(const Frame& f) {
  Tensor<float> t = f.pixels;
  for (auto& v : t.data) v = std::lround(std::clamp(v, 0.0f, 1.0f) * 255.0f) / 255.0f;
  return Frame(std::move(t));
}

TEST_CASE("ppm lossless round trip is exact after initial quantization") {
  auto dir = temp_dir("roundtrip");
  Frame f = quantized(testing::synth_frame(64, 0, 10, 1));
  FrameSequence seq;
  seq.frames = {f};
  write_video(seq, (dir / "one.ppm").string());
  FrameSequence back = load_video_clip((dir / "one.ppm").string(), {0}, 64);
  REQUIRE(back.frames.size() == 1);
  CHECK(back.frames[0].pixels.data == f.pixels.data);
}

TEST_CASE("multi-frame file carries fps and frame order") {
  auto dir = temp_dir("multi");
  FrameSequence seq = testing::synth_clip(32, 3, 2, 12.5);
  write_video(seq, (dir / "clip.ppm").string());
  FrameSequence back = load_video_clip((dir / "clip.ppm").string(), {0, 1, 2}, 32);
  CHECK(back.fps == doctest::Approx(12.5));
  CHECK(back.frames.size() == 3);
  // single-index load
  FrameSequence one = load_video_clip((dir / "clip.ppm").string(), {0}, 32);
  CHECK(one.frames.size() == 1);
  // repeated index decodes identically
  FrameSequence twice = load_video_clip((dir / "clip.ppm").string(), {1, 1}, 32);
  CHECK(twice.frames[0].pixels.data == twice.frames[1].pixels.data);
}

TEST_CASE("load_video_clip matches an independent decoder within 1/255") {
  auto dir = temp_dir("oracle");
  const std::string path = (dir / "clip.ppm").string();
  FrameSequence seq = testing::synth_clip(32, 10, 3);
  write_video(seq, path);

  // independent little decoder, sharing nothing with the library path
  std::FILE* fp = std::fopen(path.c_str(), "rb");
  REQUIRE(fp != nullptr);
  std::vector<std::vector<unsigned char>> ref;
  for (;;) {
    char magic[3] = {};
    if (std::fscanf(fp, "%2s", magic) != 1) break;
    REQUIRE(std::string(magic) == "P6");
    int w = 0, h = 0, maxv = 0;
    int c = std::fgetc(fp);
    // skip whitespace/comments, then read three ints
    auto skip_ws = [&]() {
      while (c == ' ' || c == '\n' || c == '\t' || c == '\r' || c == '#') {
        if (c == '#')
          while (c != '\n' && c != EOF) c = std::fgetc(fp);
        c = std::fgetc(fp);
      }
    };
    auto read_int = [&](int& out) {
      skip_ws();
      out = 0;
      while (c >= '0' && c <= '9') {
        out = out * 10 + (c - '0');
        c = std::fgetc(fp);
      }
    };
    read_int(w);
    read_int(h);
    read_int(maxv);
    REQUIRE(w == 32);
    REQUIRE(maxv == 255);
    std::vector<unsigned char> px(static_cast<std::size_t>(w) * h * 3);
    REQUIRE(std::fread(px.data(), 1, px.size(), fp) == px.size());
    ref.push_back(std::move(px));
  }
  std::fclose(fp);
  REQUIRE(ref.size() == 10);

  std::vector<int> all(10);
  for (int i = 0; i < 10; ++i) all[static_cast<std::size_t>(i)] = i;
  FrameSequence got = load_video_clip(path, all, 32);
  for (int t = 0; t < 10; ++t)
    for (int y = 0; y < 32; ++y)
      for (int x = 0; x < 32; ++x)
        for (int ch = 0; ch < 3; ++ch) {
          const double mine = got.frames[static_cast<std::size_t>(t)].pixels.at(ch, y, x);
          const double theirs =
              ref[static_cast<std::size_t>(t)][(static_cast<std::size_t>(y) * 32 + x) * 3 +
                                               static_cast<std::size_t>(ch)] /
              255.0;
          CHECK(std::abs(mine - theirs) <= 1.0 / 255.0);
        }
}

TEST_CASE("load errors: bounds and decode") {
  auto dir = temp_dir("errors");
  write_video(testing::synth_clip(32, 2, 4), (dir / "c.ppm").string());
  CHECK_THROWS_AS(load_video_clip((dir / "c.ppm").string(), {5}, 32), BoundsError);
  CHECK_THROWS_AS(load_video_clip((dir / "missing.ppm").string(), {0}, 32), DecodeError);
  std::ofstream((dir / "junk.ppm").string()) << "not a ppm";
  CHECK_THROWS_AS(load_video_clip((dir / "junk.ppm").string(), {0}, 32), DecodeError);
}

TEST_CASE("lossy write stays within codec tolerance") {
  auto dir = temp_dir("lossy");
  FrameSequence seq;
  seq.frames = {quantized(testing::synth_frame(64, 0, 10, 7))};
  write_video(seq, (dir / "lossy.ppm").string(), VideoMode::kLossy, 90);
  FrameSequence back = load_video_clip((dir / "lossy.ppm").string(), {0}, 64);
  const double mad = frame_l1(back.frames[0], seq.frames[0]);
  CHECK(mad < 1.5 / 255.0);
  CHECK(mad > 0.0);  // it is actually lossy
}

TEST_CASE("directory clips and dataset index") {
  auto dir = temp_dir("dataset");
  DatasetIndex idx = testing::write_toy_dataset((dir / "data").string(), 3, 5, 32, 11);
  CHECK(idx.clips.size() == 3);
  for (const auto& c : idx.clips) CHECK(c.frame_count == 5);

  idx.write_manifest((dir / "manifest.tsv").string());
  DatasetIndex idx2 =
      DatasetIndex::from_manifest((dir / "data").string(), (dir / "manifest.tsv").string());
  CHECK(idx2.clips.size() == 3);
  CHECK(idx2.clips[0].id == idx.clips[0].id);

  // manifest with a 1-frame clip violates the pairing invariant
  std::ofstream bad((dir / "bad.tsv").string());
  bad << idx.clips[0].id << "\t" << idx.clips[0].path << "\t1\n";
  bad.close();
  CHECK_THROWS_AS(DatasetIndex::from_manifest((dir / "data").string(), (dir / "bad.tsv").string()),
                  ConfigError);
}

TEST_CASE("pair sampling: same clip, distinct frames, deterministic") {
  auto dir = temp_dir("pairs");
  DatasetIndex idx = testing::write_toy_dataset((dir / "data").string(), 2, 4, 32, 5);

  Rng r1(33), r2(33);
  for (int i = 0; i < 50; ++i) {
    PairIndices a = sample_pair_indices(idx, r1);
    PairIndices b = sample_pair_indices(idx, r2);
    CHECK(a.clip == b.clip);
    CHECK(a.source_frame == b.source_frame);
    CHECK(a.driving_frame == b.driving_frame);
    CHECK(a.source_frame != a.driving_frame);
    CHECK(a.source_frame >= 0);
    CHECK(a.source_frame < 4);
  }

  // max_gap confines the temporal distance
  Rng r3(9);
  for (int i = 0; i < 200; ++i) {
    PairIndices p = sample_pair_indices(idx, r3, 1);
    CHECK(std::abs(p.source_frame - p.driving_frame) == 1);
  }

  TrainingPair tp = sample_training_pair(idx, r1, 32);
  CHECK(tp.source.height() == 32);
  CHECK(tp.clip_id.substr(0, 4) == "clip");
}

TEST_CASE("clip sampling is uniform (chi-square)") {
  // 100 clips, 10k draws; chi-square against uniform must sit within 3 sigma
  // of the df=99 reference (mean 99, sd sqrt(198)).
  DatasetIndex idx;
  idx.root = ".";
  for (int i = 0; i < 100; ++i)
    idx.clips.push_back({"c" + std::to_string(i), ".", 8});
  Rng rng(1234);
  std::vector<int> counts(100, 0);
  const int draws = 10000;
  for (int i = 0; i < draws; ++i) counts[static_cast<std::size_t>(sample_pair_indices(idx, rng).clip)]++;
  double chi2 = 0;
  const double expected = draws / 100.0;
  for (int c : counts) chi2 += (c - expected) * (c - expected) / expected;
  CHECK(chi2 < 99.0 + 3.0 * std::sqrt(2.0 * 99.0));
  CHECK(chi2 > 99.0 - 3.0 * std::sqrt(2.0 * 99.0));
}

TEST_CASE("empty dataset is a configuration error") {
  DatasetIndex idx;
  Rng rng(0);
  CHECK_THROWS_AS(sample_pair_indices(idx, rng), ConfigError);
}

TEST_CASE("config: defaults, validation messages, unknown keys") {
  auto dir = temp_dir("config");
  {
    std::ofstream((dir / "minimal.json").string()) << "{}";
    Config c = Config::load((dir / "minimal.json").string());
    CHECK(c.resolution == 64);
    CHECK(c.keypoint_count == 15);
    CHECK(c.loss_weights.pose == 20.0);
    CHECK(c.degradation.stage_count == 2);
    CHECK(c.optimizer.lr == doctest::Approx(2e-4));
  }
  {
    std::ofstream((dir / "res100.json").string()) << R"({"resolution": 100})";
    try {
      Config::load((dir / "res100.json").string());
      FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
      CHECK(std::string(e.what()).find("divisible by 16") != std::string::npos);
    }
  }
  {
    std::ofstream((dir / "res96.json").string()) << R"({"resolution": 96})";
    CHECK_THROWS_AS(Config::load((dir / "res96.json").string()), ConfigError);
  }
  {
    std::ofstream((dir / "negw.json").string())
        << R"({"loss_weights": {"perceptual": -1}})";
    CHECK_THROWS_AS(Config::load((dir / "negw.json").string()), ConfigError);
  }
  {
    std::ofstream((dir / "unknown.json").string()) << R"({"resolutionn": 64})";
    try {
      Config::load((dir / "unknown.json").string());
      FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
      CHECK(std::string(e.what()).find("resolutionn") != std::string::npos);
    }
  }
  {
    // round trip through json preserves everything
    Config c;
    c.resolution = 128;
    c.training.p_hq = 0.5;
    Config c2 = Config::from_json(c.to_json());
    CHECK(c2.resolution == 128);
    CHECK(c2.training.p_hq == doctest::Approx(0.5));
  }
}
