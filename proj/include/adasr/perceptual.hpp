#pragma once

#include "adasr/nn.hpp"

namespace adasr {

// Fixed (non-trained) multi-layer convolutional feature pyramid. Layer 0 is
// the image itself, followed by three conv/relu/pool stages. Weights come
// from a pinned seed, so the extractor reproduces bit-identically without any
// downloaded model; a pretrained extractor can be plugged in through the same
// interface.
template <typename S>
class PerceptualPyramid {
 public:
  static const PerceptualPyramid& fixed() {
    static const PerceptualPyramid p{0x70657263ULL};
    return p;
  }

  explicit PerceptualPyramid(std::uint64_t seed) {
    Rng rng(seed);
    w1_ = Var<S>::constant(init::orthogonal<S>(Shape{8, 3, 3, 3}, rng, std::sqrt(2.0)));
    w2_ = Var<S>::constant(init::orthogonal<S>(Shape{16, 8, 3, 3}, rng, std::sqrt(2.0)));
    w3_ = Var<S>::constant(init::orthogonal<S>(Shape{32, 16, 3, 3}, rng, std::sqrt(2.0)));
  }

  // [image, f1, f2, f3], each (B,C_i,H_i,W_i).
  std::vector<Var<S>> features(const Var<S>& img) const {
    Var<S> none;
    Var<S> f1 = avg_pool2(relu(conv2d(img, w1_, none)));
    Var<S> f2 = avg_pool2(relu(conv2d(f1, w2_, none)));
    Var<S> f3 = avg_pool2(relu(conv2d(f2, w3_, none)));
    return {img, f1, f2, f3};
  }

  // Pooled deepest layer, (B,32). Default embedding for FID / identity
  // distance.
  Var<S> embed(const Var<S>& img) const { return spatial_mean(features(img).back()); }

  static constexpr int embed_dim() { return 32; }

 private:
  Var<S> w1_, w2_, w3_;
};

}  // namespace adasr
