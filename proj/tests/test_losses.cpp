#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "adasr/losses.hpp"
#include "test_synth.hpp"
#include "test_util.hpp"

using namespace adasr;
using testing::grad_check;
using testing::random_tensor;

static KeypointSetT<double> set_from(std::initializer_list<std::array<double, 3>> pts) {
  KeypointSetT<double> s;
  for (const auto& p : pts) {
    KeypointT<double> k;
    k.position = {p[0], p[1]};
    k.depth = p[2];
    s.points.push_back(k);
  }
  return s;
}

TEST_CASE("keypoint loss closed forms") {
  auto a = set_from({{0.1, 0.2, 0.3}});
  CHECK(keypoint_loss(a, a) == doctest::Approx(0.0).epsilon(1e-9));

  // offset (3,4,0) -> distance 5 (positions scaled down to stay in range)
  auto p = set_from({{0, 0, 0}});
  auto q = set_from({{0.3, 0.4, 0}});
  CHECK(keypoint_loss(p, q) == doctest::Approx(0.5).epsilon(1e-7));

  // mean of unit norms
  auto m0 = set_from({{0, 0, 0}, {0, 0, 0}});
  auto m1 = set_from({{1.0, 0, 0}, {0, 1.0, 0}});
  CHECK(keypoint_loss(m0, m1) == doctest::Approx(1.0).epsilon(1e-7));

  auto three = set_from({{0, 0, 0}, {0, 0, 0}, {0, 0, 0}});
  CHECK_THROWS_AS(keypoint_loss(a, three), ShapeError);
}

TEST_CASE("pose and expression loss closed forms") {
  MotionParamsT<double> a, b;
  a.rotation = euler_to_rotation<double>({0.1, 0.05, -0.2});
  b.rotation = euler_to_rotation<double>({0.3, 0.05, -0.2});
  CHECK(pose_loss(a, a) == doctest::Approx(0.0));
  CHECK(pose_loss(a, b) == doctest::Approx(0.2 / 3.0).epsilon(1e-9));

  MotionParamsT<double> ea, eb;
  ea.expression_deltas.assign(15, Eigen::Vector3d::Zero());
  eb.expression_deltas.assign(15, Eigen::Vector3d::Zero());
  eb.expression_deltas[4][1] = 0.3;
  CHECK(expression_loss(ea, ea) == doctest::Approx(0.0));
  CHECK(expression_loss(ea, eb) == doctest::Approx(0.3 / 45.0).epsilon(1e-12));
}

TEST_CASE("equivariance: identity transform gives exactly zero for any detector") {
  Rng rng(1);
  // deliberately arbitrary detector
  auto detector = [&](const FrameT<double>& f) {
    KeypointSetT<double> s;
    for (int k = 0; k < 4; ++k) {
      KeypointT<double> p;
      p.position = {std::sin(f.pixels.data[0] + k) * 0.5, std::cos(k * 2.0) * 0.5};
      s.points.push_back(p);
    }
    return s;
  };
  FrameT<double> frame = testing::synth_frame(32, 0, 8, 5).cast<double>();
  const double loss = equivariance_loss<double>(detector, frame, rng, /*tps_sigma=*/0.0);
  CHECK(loss == 0.0);
}

TEST_CASE("equivariance: covariant detector under pure translation scores zero") {
  // detector reporting the brightest red pixel in normalized coordinates
  auto detector = [](const FrameT<double>& f) {
    const int H = f.height(), W = f.width();
    int best = 0;
    for (int i = 1; i < H * W; ++i)
      if (f.pixels.data[static_cast<std::size_t>(i)] >
          f.pixels.data[static_cast<std::size_t>(best)])
        best = i;
    KeypointSetT<double> s;
    KeypointT<double> p;
    p.position = {(2.0 * (best % W) + 1) / W - 1.0, (2.0 * (best / W) + 1) / H - 1.0};
    s.points.push_back(p);
    return s;
  };
  const int n = 32;
  Tensor<double> img(Shape{3, n, n}, 0.2);
  img.at(0, 12, 20) = 1.0;  // marker
  FrameT<double> frame(std::move(img));

  // shift by an exact lattice step so interpolation stays exact
  const auto tps = TpsTransform<double>::translation(2.0 * 3 / n, 2.0 * -2 / n);
  KeypointSetT<double> orig = detector(frame);
  FrameT<double> warped(tps.warp_image(frame.pixels));
  KeypointSetT<double> moved = detector(warped);
  const Eigen::Vector2d mapped =
      tps.map_point(moved.points[0].position.x(), moved.points[0].position.y());
  CHECK(std::abs(mapped.x() - orig.points[0].position.x()) < 1e-6);
  CHECK(std::abs(mapped.y() - orig.points[0].position.y()) < 1e-6);
}

TEST_CASE("equivariance: random transforms give strictly positive loss") {
  Rng rng(7);
  auto constant_detector = [](const FrameT<double>&) {
    return KeypointSetT<double>{{KeypointT<double>{{0.31, -0.17}, 0.0}}, std::nullopt};
  };
  FrameT<double> frame = testing::synth_frame(32, 1, 8, 9).cast<double>();
  for (int i = 0; i < 100; ++i) {
    const double loss = equivariance_loss<double>(constant_detector, frame, rng, 0.05);
    CHECK(loss > 0.0);
  }
}

TEST_CASE("deformation loss closed forms") {
  auto canonical = set_from({{0.1, 0.0, 0.2}, {-0.2, 0.3, 0.0}});
  MotionParamsT<double> mp;
  mp.rotation = euler_to_rotation<double>({0.2, 0.1, 0.0});
  mp.translation = {0.05, -0.02, 0.1};
  mp.expression_deltas.assign(2, Eigen::Vector3d::Zero());
  auto detected = canonical_to_posed(canonical, mp);
  CHECK(deformation_loss(canonical, mp, detected) == doctest::Approx(0.0).epsilon(1e-12));

  // delta magnitude prior alone
  MotionParamsT<double> dp;
  dp.expression_deltas.assign(2, Eigen::Vector3d::Constant(0.1));
  auto posed2 = canonical_to_posed(canonical, dp);
  const double lambda = 0.7;
  CHECK(deformation_loss(canonical, dp, posed2, lambda) ==
        doctest::Approx(0.1 * lambda).epsilon(1e-12));

  // nonnegative on arbitrary inputs
  auto other = set_from({{0.5, 0.5, 0.5}, {-0.5, -0.5, -0.5}});
  CHECK(deformation_loss(canonical, mp, other) >= 0.0);
}

TEST_CASE("perceptual loss: zero at equality, symmetric, monotone in noise") {
  const auto& pyr = PerceptualPyramid<double>::fixed();
  FrameT<double> t = testing::synth_frame(32, 0, 8, 3).cast<double>();
  CHECK(perceptual_loss(pyr, t, t) == doctest::Approx(0.0));

  Rng rng(5);
  Tensor<double> mid(Shape{3, 32, 32});
  for (auto& v : mid.data) v = 0.2 + 0.6 * rng.uniform();
  FrameT<double> base(mid);
  Tensor<double> noise(Shape{3, 32, 32});
  for (auto& v : noise.data) v = rng.uniform(-1, 1);

  auto noisy = [&](double eps) {
    Tensor<double> px = base.pixels;
    for (std::size_t i = 0; i < px.numel(); ++i) px.data[i] += eps * noise.data[i];
    return FrameT<double>(std::move(px));
  };
  const double l1 = perceptual_loss(pyr, noisy(0.01), base);
  const double l2 = perceptual_loss(pyr, noisy(0.05), base);
  const double l3 = perceptual_loss(pyr, noisy(0.1), base);
  CHECK(l1 < l2);
  CHECK(l2 < l3);
  CHECK(perceptual_loss(pyr, noisy(0.05), base) ==
        doctest::Approx(perceptual_loss(pyr, base, noisy(0.05))).epsilon(1e-9));
}

TEST_CASE("hinge arithmetic closed forms") {
  auto logit = [](double v) {
    return Var<double>::constant(Tensor<double>(Shape{1, 1, 2, 2}, v));
  };
  // logits all zero -> d = 2, g = 0
  auto d0 = hinge_d_loss<double>({logit(0), logit(0)}, {logit(0), logit(0)});
  auto g0 = hinge_g_loss<double>({logit(0), logit(0)});
  CHECK(d0.value().data[0] == doctest::Approx(2.0));
  CHECK(g0.value().data[0] == doctest::Approx(0.0));
  // satisfied hinge: real +2, fake -2 -> d = 0
  auto dsat = hinge_d_loss<double>({logit(2)}, {logit(-2)});
  CHECK(dsat.value().data[0] == doctest::Approx(0.0));
  // g pushes fake logits up
  auto gneg = hinge_g_loss<double>({logit(-2)});
  CHECK(gneg.value().data[0] == doctest::Approx(2.0));
}

TEST_CASE("adversarial losses on a real discriminator") {
  Config cfg;
  cfg.resolution = 64;
  cfg.keypoint_count = 3;
  cfg.base_channels = 4;
  auto model = AdaSRModel<double>::init(cfg);
  Rng rng(9);
  Var<double> real = Var<double>::constant(random_tensor(Shape{1, 3, 32, 32}, rng, 0, 1));

  // real == fake -> fm is exactly zero
  auto same = adversarial_losses_op(model.discriminator, real, real);
  CHECK(same.fm_loss.value().data[0] == doctest::Approx(0.0));

  // d_loss gradient does not reach the fake's producer (detached inside)
  auto fake_leaf = Var<double>::leaf(random_tensor(Shape{1, 3, 32, 32}, rng, 0, 1));
  auto adv = adversarial_losses_op(model.discriminator, real, fake_leaf);
  backward(adv.d_loss);
  bool any_nonzero = false;
  if (fake_leaf.has_grad())
    for (double g : fake_leaf.grad().data) any_nonzero |= g != 0.0;
  CHECK_FALSE(any_nonzero);
  // but the generator hinge does
  backward(adv.g_loss);
  double norm = 0;
  for (double g : fake_leaf.grad().data) norm += g * g;
  CHECK(norm > 0.0);
}

TEST_CASE("total loss behaviors") {
  LossWeights wdef;
  LossReport zero;
  CHECK(total_loss(zero, wdef).total == doctest::Approx(0.0));

  LossReport r;
  r.keypoint = 0.5;
  r.perceptual = 2.0;
  r.gan_g = -0.25;
  LossWeights w;
  const double t1 = total_loss(r, w).total;
  LossWeights w2 = w;
  w2.keypoint *= 2;
  w2.pose *= 2;
  w2.expression *= 2;
  w2.equivariance *= 2;
  w2.deformation *= 2;
  w2.perceptual *= 2;
  w2.gan *= 2;
  w2.feature_matching *= 2;
  CHECK(total_loss(r, w2).total == doctest::Approx(2.0 * t1).epsilon(1e-12));

  LossWeights single;
  single.keypoint = 10;
  single.pose = single.expression = single.equivariance = single.deformation = single.perceptual =
      single.gan = single.feature_matching = 0;
  LossReport one;
  one.keypoint = 1.0;
  CHECK(total_loss(one, single).total == doctest::Approx(10.0));

  LossReport bad;
  bad.deformation = std::nan("");
  try {
    total_loss(bad, w);
    FAIL("expected NumericError");
  } catch (const NumericError& e) {
    CHECK(std::string(e.what()).find("deformation") != std::string::npos);
  }
}

// ---- finite-difference gradient checks, one per loss family ----

TEST_CASE("gradients: keypoint loss") {
  Rng rng(21);
  auto f = [](const std::vector<Var<double>>& v) { return keypoint_loss_op(v[0], v[1]); };
  auto r = grad_check(f, {random_tensor(Shape{2, 5, 3}, rng), random_tensor(Shape{2, 5, 3}, rng)},
                      200, rng);
  CHECK(r.pass_fraction() >= 0.95);
}

TEST_CASE("gradients: pose and expression losses") {
  Rng rng(22);
  auto f = [](const std::vector<Var<double>>& v) {
    return add(pose_loss_op(v[0], v[1]), expression_loss_op(v[2], v[3]));
  };
  auto r = grad_check(f,
                      {random_tensor(Shape{2, 3}, rng), random_tensor(Shape{2, 3}, rng),
                       random_tensor(Shape{2, 5, 3}, rng), random_tensor(Shape{2, 5, 3}, rng)},
                      200, rng);
  CHECK(r.pass_fraction() >= 0.95);
}

TEST_CASE("gradients: deformation loss") {
  Rng rng(23);
  auto f = [](const std::vector<Var<double>>& v) {
    auto R = euler_rotation_op(v[1]);
    return deformation_loss_op(v[0], R, v[2], v[3], v[4], 0.3);
  };
  auto r = grad_check(f,
                      {random_tensor(Shape{1, 4, 3}, rng), random_tensor(Shape{1, 3}, rng),
                       random_tensor(Shape{1, 3}, rng), random_tensor(Shape{1, 4, 3}, rng),
                       random_tensor(Shape{1, 4, 3}, rng)},
                      200, rng);
  CHECK(r.pass_fraction() >= 0.95);
}

TEST_CASE("gradients: perceptual loss") {
  Rng rng(24);
  PerceptualPyramid<double> pyr(123);
  auto f = [&](const std::vector<Var<double>>& v) {
    return perceptual_loss_op(pyr, v[0], v[1]);
  };
  auto r = grad_check(
      f, {random_tensor(Shape{1, 3, 16, 16}, rng, 0, 1), random_tensor(Shape{1, 3, 16, 16}, rng, 0, 1)},
      200, rng);
  CHECK(r.pass_fraction() >= 0.95);
}

TEST_CASE("gradients: equivariance loss through a differentiable detector") {
  Rng rng(25);
  auto tps = TpsTransform<double>::random(rng, 0.05);
  Tensor<double> grid = coord_grid<double>(8, 8);
  auto detect_with = [&grid](const Var<double>& w, const Var<double>& frames) {
    // conv scores -> spatial soft-argmax, the detector head recipe
    Var<double> none;
    auto scores = conv2d(frames, w, none, 2, 1);  // (B,K,8,8) from 16x16 frames
    auto sm = softmax_spatial(scores);
    const int B = scores.shape()[0], K = scores.shape()[1];
    auto gx = Var<double>::constant(grid.reshaped(Shape{2, 8, 8}));
    auto gxc = reshape(slice(gx, 0, 0, 1), Shape{1, 1, 8, 8});
    auto gyc = reshape(slice(gx, 0, 1, 1), Shape{1, 1, 8, 8});
    auto px = reshape(sum_axis(sum_axis(mul(sm, gxc), 3), 2), Shape{B, K, 1});
    auto py = reshape(sum_axis(sum_axis(mul(sm, gyc), 3), 2), Shape{B, K, 1});
    return concat<double>({px, py}, 2);
  };
  // Differentiable in the detector weights; the warped-image branch is data
  // augmentation, so the frames themselves are held fixed.
  Var<double> frames = Var<double>::constant(random_tensor(Shape{2, 3, 16, 16}, rng, 0, 1));
  auto f = [&](const std::vector<Var<double>>& v) {
    auto detect = [&](const Var<double>& fr) { return detect_with(v[0], fr); };
    return equivariance_loss_op<double>(detect, frames, {tps, tps});
  };
  auto r = grad_check(f, {random_tensor(Shape{2, 3, 3, 3}, rng)}, 200, rng);
  CHECK(r.pass_fraction() >= 0.95);
}

TEST_CASE("gradients: adversarial losses") {
  Rng rng(26);
  Config cfg;
  cfg.resolution = 64;
  cfg.keypoint_count = 3;
  cfg.base_channels = 4;
  auto model = AdaSRModel<double>::init(cfg);

  // g + fm are differentiable in the fake frame; the real side is a detached
  // target inside the feature-matching term.
  Var<double> real = Var<double>::constant(random_tensor(Shape{1, 3, 16, 16}, rng, 0, 1));
  auto g_and_fm = [&](const std::vector<Var<double>>& v) {
    auto adv = adversarial_losses_op(model.discriminator, real, v[0]);
    return add(adv.g_loss, adv.fm_loss);
  };
  auto r = grad_check(g_and_fm, {random_tensor(Shape{1, 3, 16, 16}, rng, 0, 1)}, 200, rng);
  CHECK(r.pass_fraction() >= 0.95);

  // d_loss is differentiable in the discriminator weights and the real frame;
  // the fake enters detached.
  Var<double> fake = Var<double>::constant(random_tensor(Shape{1, 3, 16, 16}, rng, 0, 1));
  auto d_wrt_weights = [&](const std::vector<Var<double>>& v) {
    Var<double> none;
    auto patch = [&](const Var<double>& img) {
      return conv2d(leaky_relu(conv2d(img, v[0], none, 2, 1)), v[1], none, 2, 1);
    };
    return hinge_d_loss<double>({patch(v[2])}, {patch(detach(fake))});
  };
  r = grad_check(d_wrt_weights,
                 {random_tensor(Shape{4, 3, 3, 3}, rng), random_tensor(Shape{1, 4, 3, 3}, rng),
                  random_tensor(Shape{1, 3, 16, 16}, rng, 0, 1)},
                 200, rng);
  CHECK(r.pass_fraction() >= 0.95);
}
