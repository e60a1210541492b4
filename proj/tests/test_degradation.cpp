#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "adasr/degradation.hpp"
#include "test_synth.hpp"

using namespace adasr;

static double psnr_db_ref(const Tensor<float>& a, const Tensor<float>& b) {
  double mse = 0;
  for (std::size_t i = 0; i < a.numel(); ++i) {
    const double d = static_cast<double>(a.data[i]) - b.data[i];
    mse += d * d;
  }
  mse /= static_cast<double>(a.numel());
  return 10.0 * std::log10(1.0 / mse);
}

static DegradationConfig identity_cfg() {
  DegradationConfig cfg;
  cfg.stage_count = 2;
  cfg.downscale_factor_range = {1.0, 1.0};
  cfg.noise_sigma_range = {0.0, 0.0};
  cfg.compression_quality_range = {100, 100};
  return cfg;
}

TEST_CASE("identity configuration is the exact identity") {
  Frame f = testing::synth_frame(64, 0, 10, 1);
  Frame out = degrade(f, identity_cfg(), 42);
  CHECK(out.pixels.data == f.pixels.data);
}

TEST_CASE("degrade is deterministic in (frame, cfg, seed)") {
  Frame f = testing::synth_frame(64, 2, 10, 3);
  DegradationConfig cfg;  // defaults
  Frame a = degrade(f, cfg, 42);
  Frame b = degrade(f, cfg, 42);
  CHECK(a.pixels.data == b.pixels.data);
  Frame c = degrade(f, cfg, 43);
  CHECK(a.pixels.data != c.pixels.data);
}

TEST_CASE("output stays in range and at the requested size") {
  Frame f = testing::synth_frame(64, 1, 10, 9);
  DegradationConfig cfg;
  Frame out = degrade(f, cfg, 7);
  CHECK(out.height() == 64);
  CHECK(out.width() == 64);
  CHECK(out.pixels.min() >= 0.0f);
  CHECK(out.pixels.max() <= 1.0f);
}

TEST_CASE("noise sigma statistics: std within 10% of configured value") {
  // mid-gray frame avoids clamping bias
  Frame f(Tensor<float>(Shape{3, 64, 64}, 0.5f));
  DegradationConfig cfg;
  cfg.stage_count = 1;
  cfg.downscale_factor_range = {1.0, 1.0};
  cfg.noise_sigma_range = {0.1, 0.1};
  cfg.compression_quality_range = {100, 100};
  CrossQualityPair q = build_quadruple(f, f, f, cfg, nullptr, 5);
  double var = 0;
  for (std::size_t i = 0; i < q.source_lq.pixels.numel(); ++i) {
    const double d = static_cast<double>(q.source_lq.pixels.data[i]) - 0.5;
    var += d * d;
  }
  const double std_dev = std::sqrt(var / static_cast<double>(q.source_lq.pixels.numel()));
  CHECK(std_dev == doctest::Approx(0.1).epsilon(0.10));
}

TEST_CASE("raising noise sigma does not raise psnr (same seed)") {
  Frame f = testing::synth_frame(64, 0, 10, 21);
  auto run = [&](double sigma) {
    DegradationConfig cfg;
    cfg.stage_count = 1;
    cfg.downscale_factor_range = {2.0, 2.0};
    cfg.noise_sigma_range = {sigma, sigma};
    cfg.compression_quality_range = {100, 100};
    return psnr_db_ref(degrade(f, cfg, 77).pixels, f.pixels);
  };
  const double p0 = run(0.0), p1 = run(0.03), p2 = run(0.08);
  CHECK(p1 <= p0);
  CHECK(p2 <= p1);
}

TEST_CASE("paper-style 512->256->512 round trip lands in the measured psnr window") {
  Tensor<float> img = testing::synth_natural_image(512, 99);
  Frame f = Frame::checked(std::move(img));
  DegradationConfig cfg;  // two-stage defaults
  Frame out = degrade(f, cfg, 1234);
  const double psnr = psnr_db_ref(out.pixels, f.pixels);
  MESSAGE("degradation psnr on natural image: " << psnr << " dB");
  CHECK(psnr > 20.0);
  CHECK(psnr < 40.0);
  // frozen from a measurement run (24.91 dB), +/- 1 dB
  CHECK(psnr > 23.91);
  CHECK(psnr < 25.91);
}

TEST_CASE("degenerate downscale is a configuration error") {
  Frame f = testing::synth_frame(16, 0, 10, 2);
  DegradationConfig cfg;
  cfg.downscale_factor_range = {3.0, 3.0};
  CHECK_THROWS_AS(degrade(f, cfg, 0), ConfigError);
}

TEST_CASE("build_quadruple: teacher wiring and shape checks") {
  Frame f = testing::synth_frame(64, 0, 8, 5);
  Frame d = testing::synth_frame(64, 3, 8, 5);
  DegradationConfig cfg;

  CrossQualityPair with_teacher = build_quadruple(f, d, d, cfg, identity_teacher(), 11);
  REQUIRE(with_teacher.target_sh.has_value());
  CHECK(with_teacher.target_sh->pixels.data == with_teacher.target_hq.pixels.data);

  CrossQualityPair no_teacher = build_quadruple(f, d, d, cfg, nullptr, 11);
  CHECK_FALSE(no_teacher.target_sh.has_value());
  CHECK(no_teacher.source_hq.pixels.data == f.pixels.data);
  CHECK(no_teacher.driving.pixels.data == d.pixels.data);
  // degradation touched only the source
  CHECK(no_teacher.source_lq.pixels.data != f.pixels.data);

  Frame small = testing::synth_frame(32, 0, 8, 5);
  CHECK_THROWS_AS(build_quadruple(f, small, d, cfg, nullptr, 0), ShapeError);
}
