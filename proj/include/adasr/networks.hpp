#pragma once

#include "adasr/config.hpp"
#include "adasr/frame.hpp"
#include "adasr/keypoints.hpp"
#include "adasr/motion.hpp"
#include "adasr/nn.hpp"

namespace adasr {

// Multi-scale appearance maps, shallow to deep; the deepest sits at the
// motion-field feature resolution (input/4).
template <typename S>
struct AppearanceFeatures {
  std::vector<Var<S>> maps;
};

// High-frequency appearance encoder. No batch statistics anywhere: all
// normalization is per-sample instance norm.
template <typename S>
struct AppearanceEncoder {
  ConvBlock<S> c1, c2, c3, c4, c5;
  int base = 0;

  AppearanceEncoder() = default;
  AppearanceEncoder(int base_channels, Rng& rng)
      : c1(3, base_channels, 3, 1, rng),
        c2(base_channels, 2 * base_channels, 3, 2, rng),
        c3(2 * base_channels, 2 * base_channels, 3, 1, rng),
        c4(2 * base_channels, 4 * base_channels, 3, 2, rng),
        c5(4 * base_channels, 4 * base_channels, 3, 1, rng),
        base(base_channels) {}

  AppearanceFeatures<S> operator()(const Var<S>& frame) const {
    AppearanceFeatures<S> out;
    Var<S> h0 = c1(frame);
    Var<S> h1 = c3(c2(h0));
    Var<S> h2 = c5(c4(h1));
    out.maps = {h0, h1, h2};
    return out;
  }

  void collect(const std::string& p, ParamRegistry<S>& reg) const {
    c1.collect(p + ".c1", reg);
    c2.collect(p + ".c2", reg);
    c3.collect(p + ".c3", reg);
    c4.collect(p + ".c4", reg);
    c5.collect(p + ".c5", reg);
  }
};

template <typename S>
struct KeypointOutput {
  Var<S> positions3;  // (B,K,3): x, y, depth
  Var<S> jacobians;   // (B,K,2,2) or undefined
  Var<S> score_maps;  // (B,K,h,w) raw logits
};

// U-Net score-map detector with spatial soft-argmax heads. Works on the
// half-resolution frame; score maps live at input/4.
template <typename S>
struct KeypointDetector {
  ConvBlock<S> d0, d1, d2, mid, u1, u2;
  Conv2dLayer<S> score_head, depth_head, jac_head;
  int K = 0;
  bool use_jacobians = true;

  KeypointDetector() = default;
  KeypointDetector(int base_channels, int keypoints, bool jacobians, Rng& rng)
      : d0(3, base_channels, 3, 1, rng),
        d1(base_channels, 2 * base_channels, 3, 2, rng),
        d2(2 * base_channels, 4 * base_channels, 3, 2, rng),
        mid(4 * base_channels, 4 * base_channels, 3, 1, rng),
        u1(4 * base_channels, 2 * base_channels, 3, 1, rng),
        u2(2 * base_channels, 2 * base_channels, 3, 1, rng),
        score_head(2 * base_channels, keypoints, 3, 1, rng, 1.0),
        depth_head(2 * base_channels, keypoints, 3, 1, rng, 0.1),
        jac_head(2 * base_channels, 4 * keypoints, 3, 1, rng, 1.0, /*zero_init=*/true),
        K(keypoints),
        use_jacobians(jacobians) {}

  KeypointOutput<S> operator()(const Var<S>& frame) const {
    Var<S> half = avg_pool2(frame);
    Var<S> h0 = d0(half);
    Var<S> h1 = d1(h0);
    Var<S> h2 = mid(d2(h1));
    Var<S> up = u1(upsample_nearest2(h2));
    Var<S> feat = u2(add(up, h1));

    const int B = feat.shape()[0], h = feat.shape()[2], w = feat.shape()[3];
    KeypointOutput<S> out;
    out.score_maps = score_head(feat);
    Var<S> weights = softmax_spatial(out.score_maps);  // (B,K,h,w)

    Tensor<S> grid = coord_grid<S>(h, w);
    auto gx = Var<S>::constant(grid.reshaped(Shape{2, h, w}));
    Var<S> gxc = reshape(slice(gx, 0, 0, 1), Shape{1, 1, h, w});
    Var<S> gyc = reshape(slice(gx, 0, 1, 1), Shape{1, 1, h, w});
    auto reduce_hw = [&](const Var<S>& t) {
      return reshape(sum_axis(sum_axis(t, 3), 2), Shape{B, K, 1});
    };
    Var<S> px = reduce_hw(mul(weights, gxc));
    Var<S> py = reduce_hw(mul(weights, gyc));
    Var<S> pd = reduce_hw(mul(weights, depth_head(feat)));
    out.positions3 = concat<S>({px, py, pd}, 2);

    if (use_jacobians) {
      Var<S> jmaps = reshape(jac_head(feat), Shape{B, K, 4, h, w});
      Var<S> w5 = reshape(weights, Shape{B, K, 1, h, w});
      Var<S> pooled = reshape(sum_axis(sum_axis(mul(w5, jmaps), 4), 3), Shape{B, K, 2, 2});
      Tensor<S> eye(Shape{1, 1, 2, 2});
      eye.data = {S(1), S(0), S(0), S(1)};
      out.jacobians = add(pooled, Var<S>::constant(std::move(eye)));
    }
    return out;
  }

  void collect(const std::string& p, ParamRegistry<S>& reg) const {
    d0.collect(p + ".d0", reg);
    d1.collect(p + ".d1", reg);
    d2.collect(p + ".d2", reg);
    mid.collect(p + ".mid", reg);
    u1.collect(p + ".u1", reg);
    u2.collect(p + ".u2", reg);
    score_head.collect(p + ".score", reg);
    depth_head.collect(p + ".depth", reg);
    jac_head.collect(p + ".jac", reg);
  }
};

template <typename S>
struct MotionParamsOutput {
  Var<S> angles;    // (B,3), squashed to (-pi/2, pi/2)
  Var<S> rotation;  // (B,3,3)
  Var<S> translation;  // (B,3)
  Var<S> deltas;    // (B,K,3)
};

// Small pose/expression head standing in for an external pose estimator.
// Zero-initialized output heads start at the identity pose.
template <typename S>
struct PoseExpressionHead {
  ConvBlock<S> c1, c2, c3;
  LinearLayer<S> trunk, angle_head, trans_head, delta_head;
  int K = 0;

  PoseExpressionHead() = default;
  // Output heads start near (not exactly at) the identity pose; an exact zero
  // makes source and posed-driving keypoints coincide and their gradients
  // cancel, stranding the detector at a saddle.
  PoseExpressionHead(int base_channels, int keypoints, Rng& rng)
      : c1(3, base_channels, 3, 2, rng),
        c2(base_channels, 2 * base_channels, 3, 2, rng),
        c3(2 * base_channels, 4 * base_channels, 3, 2, rng),
        trunk(4 * base_channels, 64, rng, std::sqrt(2.0)),
        angle_head(64, 3, rng, 0.02),
        trans_head(64, 3, rng, 0.02),
        delta_head(64, 3 * keypoints, rng, 0.02),
        K(keypoints) {}

  MotionParamsOutput<S> operator()(const Var<S>& frame) const {
    Var<S> h = c3(c2(c1(avg_pool2(frame))));
    Var<S> f = relu(trunk(spatial_mean(h)));
    MotionParamsOutput<S> out;
    out.angles = mul_scalar(tanh_op(angle_head(f)), S(M_PI / 2));
    out.rotation = euler_rotation_op(out.angles);
    out.translation = trans_head(f);
    out.deltas = reshape(mul_scalar(delta_head(f), S(0.1)), Shape{frame.shape()[0], K, 3});
    return out;
  }

  void collect(const std::string& p, ParamRegistry<S>& reg) const {
    c1.collect(p + ".c1", reg);
    c2.collect(p + ".c2", reg);
    c3.collect(p + ".c3", reg);
    trunk.collect(p + ".trunk", reg);
    angle_head.collect(p + ".angles", reg);
    trans_head.collect(p + ".translation", reg);
    delta_head.collect(p + ".deltas", reg);
  }
};

// Dense-motion CNN: eats difference heatmaps, flattened sparse flows and the
// downsampled source; emits K+1 mask logits plus one occlusion logit map.
template <typename S>
struct DenseMotionNet {
  ConvBlock<S> in1, in2, down, mid, up1, up2;
  Conv2dLayer<S> out_head;
  int K = 0;

  DenseMotionNet() = default;
  DenseMotionNet(int base_channels, int keypoints, Rng& rng)
      : in1(keypoints + 2 * (keypoints + 1) + 3, 2 * base_channels, 3, 1, rng),
        in2(2 * base_channels, 2 * base_channels, 3, 1, rng),
        down(2 * base_channels, 4 * base_channels, 3, 2, rng),
        mid(4 * base_channels, 4 * base_channels, 3, 1, rng),
        up1(4 * base_channels, 2 * base_channels, 3, 1, rng),
        up2(2 * base_channels, 2 * base_channels, 3, 1, rng),
        out_head(2 * base_channels, keypoints + 2, 3, 1, rng, 1.0, /*zero_init=*/true),
        K(keypoints) {}

  // returns (mask_logits (B,K+1,h,w), occlusion_logits (B,1,h,w))
  std::pair<Var<S>, Var<S>> operator()(const Var<S>& input) const {
    Var<S> h = in2(in1(input));
    Var<S> d = mid(down(h));
    Var<S> u = up2(add(u1_up(d), h));
    Var<S> heads = out_head(u);
    return {slice(heads, 1, 0, K + 1), slice(heads, 1, K + 1, 1)};
  }

  Var<S> u1_up(const Var<S>& d) const { return up1(upsample_nearest2(d)); }

  void collect(const std::string& p, ParamRegistry<S>& reg) const {
    in1.collect(p + ".in1", reg);
    in2.collect(p + ".in2", reg);
    down.collect(p + ".down", reg);
    mid.collect(p + ".mid", reg);
    up1.collect(p + ".up1", reg);
    up2.collect(p + ".up2", reg);
    out_head.collect(p + ".out", reg);
  }
};

// Spatially-adaptive modulation block: parameter-free instance norm, then a
// scale/shift predicted from the warped appearance features.
template <typename S>
struct SpadeBlock {
  Conv2dLayer<S> gamma_conv, beta_conv, conv;
  int up_factor = 1;  // modulation maps are predicted at the deepest scale

  SpadeBlock() = default;
  SpadeBlock(int mod_channels, int channels, int up, Rng& rng)
      : gamma_conv(mod_channels, channels, 3, 1, rng, 1.0, /*zero_init=*/true),
        beta_conv(mod_channels, channels, 3, 1, rng, 1.0, /*zero_init=*/true),
        conv(channels, channels, 3, 1, rng),
        up_factor(up) {}

  Var<S> operator()(const Var<S>& x, const Var<S>& mod) const {
    Var<S> gamma = gamma_conv(mod);
    Var<S> beta = beta_conv(mod);
    if (up_factor > 1) {
      const int H = x.shape()[2], W = x.shape()[3];
      gamma = upsample_bilinear(gamma, H, W);
      beta = upsample_bilinear(beta, H, W);
    }
    Var<S> y = add(mul(instance_norm(x), add_scalar(gamma, S(1))), beta);
    return conv(relu(y));
  }

  void collect(const std::string& p, ParamRegistry<S>& reg) const {
    gamma_conv.collect(p + ".gamma", reg);
    beta_conv.collect(p + ".beta", reg);
    conv.collect(p + ".conv", reg);
  }
};

// SPADE-style generator. The deepest warped map drives both the feature
// stream and the modulation; shallower warped maps enter as 1x1 skips.
// BN-free by construction.
template <typename S>
struct Generator {
  Conv2dLayer<S> mod_shared, conv_in, up_a, up_b, skip_mid, skip_shallow, out_conv;
  SpadeBlock<S> block16, block32, block64;
  int base = 0;
  bool use_skips = true;

  Generator() = default;
  Generator(int base_channels, bool skips, Rng& rng)
      : mod_shared(4 * base_channels, 2 * base_channels, 3, 1, rng),
        conv_in(4 * base_channels, 4 * base_channels, 3, 1, rng),
        up_a(4 * base_channels, 2 * base_channels, 3, 1, rng),
        up_b(2 * base_channels, base_channels, 3, 1, rng),
        skip_mid(2 * base_channels, 2 * base_channels, 1, 1, rng, 1.0),
        skip_shallow(base_channels, base_channels, 1, 1, rng, 1.0),
        out_conv(base_channels, 3, 3, 1, rng, 1.0),
        block16(2 * base_channels, 4 * base_channels, 1, rng),
        block32(2 * base_channels, 2 * base_channels, 2, rng),
        block64(2 * base_channels, base_channels, 4, rng),
        base(base_channels),
        use_skips(skips) {}

  // warped maps, shallow to deep, already occlusion-gated.
  Var<S> operator()(const std::vector<Var<S>>& warped) const {
    const Var<S>& deep = warped[2];
    Var<S> mod = relu(mod_shared(deep));
    Var<S> x = conv_in(deep);
    x = block16(x, mod);
    x = up_a(upsample_nearest2(x));
    if (use_skips) x = add(x, skip_mid(warped[1]));
    x = block32(x, mod);
    x = up_b(upsample_nearest2(x));
    if (use_skips) x = add(x, skip_shallow(warped[0]));
    x = block64(x, mod);
    return sigmoid(out_conv(relu(x)));
  }

  void collect(const std::string& p, ParamRegistry<S>& reg) const {
    mod_shared.collect(p + ".mod_shared", reg);
    conv_in.collect(p + ".conv_in", reg);
    up_a.collect(p + ".up_a", reg);
    up_b.collect(p + ".up_b", reg);
    skip_mid.collect(p + ".skip_mid", reg);
    skip_shallow.collect(p + ".skip_shallow", reg);
    out_conv.collect(p + ".out", reg);
    block16.collect(p + ".block16", reg);
    block32.collect(p + ".block32", reg);
    block64.collect(p + ".block64", reg);
  }
};

template <typename S>
struct DiscriminatorOutput {
  std::vector<Var<S>> logits;                 // per scale, (B,1,h,w)
  std::vector<std::vector<Var<S>>> features;  // per scale, per layer
};

// Multi-scale patch discriminator: full and half resolution.
template <typename S>
struct PatchDiscriminator {
  struct Scale {
    Conv2dLayer<S> c1;
    ConvBlock<S> c2, c3;
    Conv2dLayer<S> logit;

    Scale() = default;
    Scale(int base, Rng& rng)
        : c1(3, base, 3, 2, rng),
          c2(base, 2 * base, 3, 2, rng),
          c3(2 * base, 4 * base, 3, 2, rng),
          logit(4 * base, 1, 3, 1, rng, 1.0) {}

    void run(const Var<S>& x, std::vector<Var<S>>& feats, Var<S>& out) const {
      Var<S> h1 = leaky_relu(c1(x));
      Var<S> h2 = c2(h1);
      Var<S> h3 = c3(h2);
      feats = {h1, h2, h3};
      out = logit(h3);
    }

    void collect(const std::string& p, ParamRegistry<S>& reg) const {
      c1.collect(p + ".c1", reg);
      c2.collect(p + ".c2", reg);
      c3.collect(p + ".c3", reg);
      logit.collect(p + ".logit", reg);
    }
  };

  Scale full, half;

  PatchDiscriminator() = default;
  PatchDiscriminator(int base_channels, Rng& rng) : full(base_channels, rng),
                                                    half(base_channels, rng) {}

  DiscriminatorOutput<S> operator()(const Var<S>& frame) const {
    DiscriminatorOutput<S> out;
    out.logits.resize(2);
    out.features.resize(2);
    full.run(frame, out.features[0], out.logits[0]);
    half.run(avg_pool2(frame), out.features[1], out.logits[1]);
    return out;
  }

  void collect(const std::string& p, ParamRegistry<S>& reg) const {
    full.collect(p + ".full", reg);
    half.collect(p + ".half", reg);
  }
};

}  // namespace adasr
