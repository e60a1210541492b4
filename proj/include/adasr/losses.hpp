#pragma once

#include <functional>
#include <sstream>

#include "adasr/model.hpp"
#include "adasr/perceptual.hpp"
#include "adasr/tps.hpp"

namespace adasr {

// ---- differentiable (Var) forms ----

// Mean over keypoints of the Euclidean distance between (x, y, depth) triples.
template <typename S>
Var<S> keypoint_loss_op(const Var<S>& kp_a, const Var<S>& kp_b) {
  check_shape(kp_a.shape() == kp_b.shape(), "keypoint_loss: keypoint count mismatch");
  Var<S> d = sub(kp_a, kp_b);
  Var<S> sq = sum_axis(square(d), kp_a.shape().rank() - 1);
  return mean_all(sqrt_op(add_scalar(sq, S(1e-24))));
}

// Mean absolute difference of Euler angles (radians).
template <typename S>
Var<S> pose_loss_op(const Var<S>& angles_a, const Var<S>& angles_b) {
  return mean_all(abs_op(sub(angles_a, angles_b)));
}

// Mean absolute difference over all expression delta components.
template <typename S>
Var<S> expression_loss_op(const Var<S>& deltas_a, const Var<S>& deltas_b) {
  check_shape(deltas_a.shape() == deltas_b.shape(), "expression_loss: delta shape mismatch");
  return mean_all(abs_op(sub(deltas_a, deltas_b)));
}

// L1 between the posed canonical set and an independently detected set, plus a
// magnitude prior keeping expression deltas from absorbing pose.
template <typename S>
Var<S> deformation_loss_op(const Var<S>& canonical, const Var<S>& R, const Var<S>& t,
                           const Var<S>& delta, const Var<S>& detected_posed, S delta_prior) {
  check_shape(canonical.shape() == detected_posed.shape(),
              "deformation_loss: keypoint count mismatch");
  Var<S> predicted = pose_points(canonical, R, t, delta);
  Var<S> fit = mean_all(abs_op(sub(predicted, detected_posed)));
  if (!delta.defined() || delta_prior == S(0)) return fit;
  return add(fit, mul_scalar(mean_all(abs_op(delta)), delta_prior));
}

// Sum over pyramid layers of mean absolute feature difference, evaluated at
// full and half resolution.
template <typename S>
Var<S> perceptual_loss_op(const PerceptualPyramid<S>& pyramid, const Var<S>& pred,
                          const Var<S>& target) {
  check_shape(pred.shape() == target.shape(), "perceptual_loss: frame size mismatch");
  auto layer_sum = [&](const Var<S>& a, const Var<S>& b) {
    auto fa = pyramid.features(a);
    auto fb = pyramid.features(b);
    Var<S> acc;
    for (std::size_t l = 0; l < fa.size(); ++l) {
      Var<S> term = mean_all(abs_op(sub(fa[l], fb[l])));
      acc = acc.defined() ? add(acc, term) : term;
    }
    return acc;
  };
  Var<S> full = layer_sum(pred, target);
  Var<S> half = layer_sum(avg_pool2(pred), avg_pool2(target));
  return add(full, half);
}

// Keypoint consistency under a known geometric deformation:
//   mean_1 | detect(frame) - T(detect(T-warped frame)) |  over the 2D
// projection. `detect` maps a (B,3,H,W) tensor to (B,K,2) positions. One
// transform per batch sample.
template <typename S, typename DetectFn>
Var<S> equivariance_loss_op(DetectFn&& detect, const Var<S>& frames,
                            const std::vector<TpsTransform<S>>& transforms) {
  const Shape& fs = frames.shape();
  check_shape(fs.rank() == 4, "equivariance_loss: (B,3,H,W) frames required");
  const int B = fs[0];
  check_shape(static_cast<int>(transforms.size()) == B,
              "equivariance_loss: one transform per sample required");
  Var<S> p_orig = detect(frames);  // (B,K,2)

  // Warp each sample with its own transform (data path, no gradients needed).
  Tensor<S> warped(fs);
  for (int b = 0; b < B; ++b) {
    Tensor<S> one(Shape{fs[1], fs[2], fs[3]});
    std::copy_n(frames.value().data.data() + static_cast<std::size_t>(b) * one.numel(),
                one.numel(), one.data.data());
    Tensor<S> w = transforms[static_cast<std::size_t>(b)].warp_image(one);
    std::copy_n(w.data.data(), w.numel(),
                warped.data.data() + static_cast<std::size_t>(b) * one.numel());
  }
  Var<S> p_warped = detect(Var<S>::constant(std::move(warped)));  // (B,K,2)

  // Map the warped-frame detections back through each sample's transform.
  std::vector<Var<S>> mapped;
  mapped.reserve(static_cast<std::size_t>(B));
  for (int b = 0; b < B; ++b)
    mapped.push_back(
        transforms[static_cast<std::size_t>(b)].transform_points(slice(p_warped, 0, b, 1)));
  Var<S> p_mapped = B == 1 ? mapped[0] : concat<S>(mapped, 0);
  return mean_all(abs_op(sub(p_orig, p_mapped)));
}

template <typename S>
struct AdversarialLosses {
  Var<S> g_loss;   // generator hinge term, signed
  Var<S> d_loss;   // discriminator hinge objective
  Var<S> fm_loss;  // feature matching
};

// Hinge terms over per-scale patch logits, averaged across scales:
//   d = mean(relu(1 - real)) + mean(relu(1 + fake)),  g = -mean(fake).
template <typename S>
Var<S> hinge_d_loss(const std::vector<Var<S>>& real_logits,
                    const std::vector<Var<S>>& fake_logits) {
  check_shape(!real_logits.empty() && real_logits.size() == fake_logits.size(),
              "hinge_d_loss: scale count mismatch");
  Var<S> acc;
  for (std::size_t s = 0; s < real_logits.size(); ++s) {
    Var<S> term = add(mean_all(relu(add_scalar(neg(real_logits[s]), S(1)))),
                      mean_all(relu(add_scalar(fake_logits[s], S(1)))));
    acc = acc.defined() ? add(acc, term) : term;
  }
  return mul_scalar(acc, S(1) / static_cast<S>(real_logits.size()));
}

template <typename S>
Var<S> hinge_g_loss(const std::vector<Var<S>>& fake_logits) {
  check_shape(!fake_logits.empty(), "hinge_g_loss: no logits");
  Var<S> acc;
  for (const auto& l : fake_logits) {
    Var<S> term = neg(mean_all(l));
    acc = acc.defined() ? add(acc, term) : term;
  }
  return mul_scalar(acc, S(1) / static_cast<S>(fake_logits.size()));
}

// Hinge GAN on multi-scale patch logits; the fake is input-detached inside the
// discriminator objective. Feature matching pulls fake features toward
// (detached) real ones, averaged over scales and layers.
template <typename S>
AdversarialLosses<S> adversarial_losses_op(const PatchDiscriminator<S>& disc, const Var<S>& real,
                                           const Var<S>& fake) {
  check_shape(real.shape() == fake.shape(), "adversarial_losses: frame size mismatch");
  auto real_out = disc(real);
  auto fake_out = disc(fake);
  auto fake_det_out = disc(detach(fake));
  const auto n_scales = real_out.logits.size();

  AdversarialLosses<S> out;
  out.d_loss = hinge_d_loss(real_out.logits, fake_det_out.logits);
  out.g_loss = hinge_g_loss(fake_out.logits);
  for (std::size_t s = 0; s < n_scales; ++s) {
    Var<S> fm_scale;
    const auto& rf = real_out.features[s];
    const auto& ff = fake_out.features[s];
    for (std::size_t l = 0; l < rf.size(); ++l) {
      Var<S> term = mean_all(abs_op(sub(ff[l], detach(rf[l]))));
      fm_scale = fm_scale.defined() ? add(fm_scale, term) : term;
    }
    fm_scale = mul_scalar(fm_scale, S(1) / static_cast<S>(rf.size()));
    out.fm_loss = out.fm_loss.defined() ? add(out.fm_loss, fm_scale) : fm_scale;
  }
  out.fm_loss = mul_scalar(out.fm_loss, S(1) / static_cast<S>(n_scales));
  return out;
}

// ---- report & weighted objective ----

struct LossReport {
  double keypoint = 0, pose = 0, expression = 0, equivariance = 0, deformation = 0,
         perceptual = 0, gan_g = 0, feature_matching = 0;
  double discriminator = 0;  // trained separately, reported alongside
  double total = 0;
  bool pose_active = false, expression_active = false;

  static std::string csv_header() {
    return "step,keypoint,pose,expression,equivariance,deformation,perceptual,gan_g,"
           "feature_matching,discriminator,total";
  }
  std::string csv_row(std::uint64_t step) const {
    std::ostringstream os;
    os.precision(10);
    os << step << "," << keypoint << "," << pose << "," << expression << "," << equivariance
       << "," << deformation << "," << perceptual << "," << gan_g << "," << feature_matching
       << "," << discriminator << "," << total;
    return os.str();
  }
};

// Weighted sum of the generator-side families. Inactive (oracle-gated)
// components contribute zero and stay flagged in the report.
inline LossReport total_loss(LossReport components, const LossWeights& w) {
  auto checked = [](double v, const char* name) {
    if (!std::isfinite(v))
      throw NumericError(std::string("total_loss: non-finite component '") + name + "'");
    return v;
  };
  components.total = w.keypoint * checked(components.keypoint, "keypoint") +
                     w.pose * checked(components.pose, "pose") +
                     w.expression * checked(components.expression, "expression") +
                     w.equivariance * checked(components.equivariance, "equivariance") +
                     w.deformation * checked(components.deformation, "deformation") +
                     w.perceptual * checked(components.perceptual, "perceptual") +
                     w.gan * checked(components.gan_g, "gan_g") +
                     w.feature_matching * checked(components.feature_matching, "feature_matching");
  return components;
}

// ---- struct-level contract wrappers ----

template <typename S>
double keypoint_loss(const KeypointSetT<S>& a, const KeypointSetT<S>& b) {
  if (a.size() != b.size()) throw ShapeError("keypoint_loss: keypoint count mismatch");
  NoGradGuard ng;
  auto ta = Var<S>::constant(detail::keypoints_to_tensor(a));
  auto tb = Var<S>::constant(detail::keypoints_to_tensor(b));
  return static_cast<double>(keypoint_loss_op(ta, tb).value().data[0]);
}

template <typename S>
Eigen::Matrix<S, 3, 1> euler_from_rotation(const Eigen::Matrix<S, 3, 3>& R) {
  Eigen::Matrix<S, 3, 1> a;
  a[1] = std::asin(std::clamp(-R(2, 0), S(-1), S(1)));
  a[0] = std::atan2(R(1, 0), R(0, 0));
  a[2] = std::atan2(R(2, 1), R(2, 2));
  return a;
}

template <typename S>
double pose_loss(const MotionParamsT<S>& a, const MotionParamsT<S>& b) {
  const auto ea = euler_from_rotation(a.rotation);
  const auto eb = euler_from_rotation(b.rotation);
  return (ea - eb).template lpNorm<1>() / 3.0;
}

template <typename S>
double expression_loss(const MotionParamsT<S>& a, const MotionParamsT<S>& b) {
  if (a.expression_deltas.size() != b.expression_deltas.size())
    throw ShapeError("expression_loss: delta count mismatch");
  double acc = 0;
  for (std::size_t k = 0; k < a.expression_deltas.size(); ++k)
    acc += (a.expression_deltas[k] - b.expression_deltas[k]).template lpNorm<1>();
  return acc / (3.0 * static_cast<double>(a.expression_deltas.size()));
}

template <typename S>
double deformation_loss(const KeypointSetT<S>& canonical, const MotionParamsT<S>& mp,
                        const KeypointSetT<S>& detected_posed, double delta_prior = 0.1) {
  if (canonical.size() != detected_posed.size())
    throw ShapeError("deformation_loss: keypoint count mismatch");
  auto predicted = canonical_to_posed(canonical, mp);
  double fit = 0;
  for (int k = 0; k < canonical.size(); ++k)
    fit += (predicted.points[static_cast<std::size_t>(k)].xyz() -
            detected_posed.points[static_cast<std::size_t>(k)].xyz())
               .template lpNorm<1>();
  fit /= 3.0 * static_cast<double>(canonical.size());
  double prior = 0;
  if (!mp.expression_deltas.empty()) {
    for (const auto& d : mp.expression_deltas) prior += d.template lpNorm<1>();
    prior /= 3.0 * static_cast<double>(mp.expression_deltas.size());
  }
  return fit + delta_prior * prior;
}

template <typename S>
double perceptual_loss(const PerceptualPyramid<S>& pyramid, const FrameT<S>& pred,
                       const FrameT<S>& target) {
  NoGradGuard ng;
  return static_cast<double>(
      perceptual_loss_op(pyramid, frame_to_var(pred), frame_to_var(target)).value().data[0]);
}

// Struct-level equivariance contract: any keypoint-returning callable.
template <typename S>
double equivariance_loss(const std::function<KeypointSetT<S>(const FrameT<S>&)>& detector,
                         const FrameT<S>& frame, Rng& rng, double tps_sigma = 0.05) {
  const auto tps = TpsTransform<S>::random(rng, tps_sigma);
  KeypointSetT<S> orig = detector(frame);
  FrameT<S> warped(tps.warp_image(frame.pixels));
  KeypointSetT<S> moved = detector(warped);
  if (orig.size() != moved.size()) throw ShapeError("equivariance_loss: keypoint count mismatch");
  double acc = 0;
  for (int k = 0; k < orig.size(); ++k) {
    const auto& p = orig.points[static_cast<std::size_t>(k)].position;
    const auto& q = moved.points[static_cast<std::size_t>(k)].position;
    const Eigen::Vector2d mapped = tps.map_point(q.x(), q.y());
    acc += std::abs(static_cast<double>(p.x()) - mapped.x()) +
           std::abs(static_cast<double>(p.y()) - mapped.y());
  }
  return acc / (2.0 * static_cast<double>(orig.size()));
}

}  // namespace adasr
