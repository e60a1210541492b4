#pragma once

#include <Eigen/Dense>
#include <functional>
#include <optional>

#include "adasr/dataset.hpp"
#include "adasr/model.hpp"
#include "adasr/perceptual.hpp"

namespace adasr {

// Peak signal-to-noise ratio in dB for [0,1] frames; identical inputs report
// the 99.0 cap standing in for +inf.
template <typename S>
double psnr(const FrameT<S>& a, const FrameT<S>& b) {
  check_shape(a.pixels.shape == b.pixels.shape, "psnr: shape mismatch");
  double mse = 0;
  for (std::size_t i = 0; i < a.pixels.numel(); ++i) {
    const double d = static_cast<double>(a.pixels.data[i]) - b.pixels.data[i];
    mse += d * d;
  }
  mse /= static_cast<double>(a.pixels.numel());
  if (mse <= 0) return 99.0;
  return std::min(10.0 * std::log10(1.0 / mse), 99.0);
}

// Windowed SSIM on the luma channel: 11x11 Gaussian window (sigma 1.5),
// constants (0.01 L)^2 and (0.03 L)^2 with L = 1, averaged over the valid
// region (window fully inside the image).
template <typename S>
double ssim(const FrameT<S>& fa, const FrameT<S>& fb) {
  check_shape(fa.pixels.shape == fb.pixels.shape, "ssim: shape mismatch");
  constexpr int kWin = 11;
  const int H = fa.height(), W = fa.width();
  if (H < kWin || W < kWin) throw ConfigError("ssim: image smaller than the 11x11 window");

  Tensor<S> ga = rgb_to_gray(fa.pixels);
  Tensor<S> gb = rgb_to_gray(fb.pixels);

  // normalized Gaussian taps
  double taps[kWin];
  double tap_sum = 0;
  for (int i = 0; i < kWin; ++i) {
    const double d = i - (kWin - 1) / 2.0;
    taps[i] = std::exp(-d * d / (2.0 * 1.5 * 1.5));
    tap_sum += taps[i];
  }
  for (double& t : taps) t /= tap_sum;

  auto filter = [&](const std::vector<double>& img) {
    // separable: horizontal then vertical, valid region only
    const int Wv = W - kWin + 1, Hv = H - kWin + 1;
    std::vector<double> tmp(static_cast<std::size_t>(H) * Wv);
    for (int y = 0; y < H; ++y)
      for (int x = 0; x < Wv; ++x) {
        double acc = 0;
        for (int k = 0; k < kWin; ++k) acc += taps[k] * img[static_cast<std::size_t>(y) * W + x + k];
        tmp[static_cast<std::size_t>(y) * Wv + x] = acc;
      }
    std::vector<double> out(static_cast<std::size_t>(Hv) * Wv);
    for (int y = 0; y < Hv; ++y)
      for (int x = 0; x < Wv; ++x) {
        double acc = 0;
        for (int k = 0; k < kWin; ++k) acc += taps[k] * tmp[static_cast<std::size_t>(y + k) * Wv + x];
        out[static_cast<std::size_t>(y) * Wv + x] = acc;
      }
    return out;
  };

  const std::size_t n = static_cast<std::size_t>(H) * W;
  std::vector<double> va(n), vb(n), vaa(n), vbb(n), vab(n);
  for (std::size_t i = 0; i < n; ++i) {
    va[i] = ga.data[i];
    vb[i] = gb.data[i];
    vaa[i] = va[i] * va[i];
    vbb[i] = vb[i] * vb[i];
    vab[i] = va[i] * vb[i];
  }
  const auto mu1 = filter(va), mu2 = filter(vb);
  const auto s11 = filter(vaa), s22 = filter(vbb), s12 = filter(vab);

  constexpr double c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;
  double acc = 0;
  for (std::size_t i = 0; i < mu1.size(); ++i) {
    const double m1 = mu1[i], m2 = mu2[i];
    const double v1 = s11[i] - m1 * m1;
    const double v2 = s22[i] - m2 * m2;
    const double cov = s12[i] - m1 * m2;
    acc += ((2 * m1 * m2 + c1) * (2 * cov + c2)) / ((m1 * m1 + m2 * m2 + c1) * (v1 + v2 + c2));
  }
  return acc / static_cast<double>(mu1.size());
}

// Frechet distance between Gaussian fits of two feature sets, rows = samples.
// The symmetric matrix square root comes from an eigendecomposition with
// small negative eigenvalues (>= -1e-8, scaled) clamped to zero.
inline double fid(const Eigen::MatrixXd& features_real, const Eigen::MatrixXd& features_fake) {
  if (features_real.cols() != features_fake.cols())
    throw ShapeError("fid: feature dimension mismatch");
  if (features_real.rows() < 2 || features_fake.rows() < 2)
    throw ShapeError("fid: at least two samples per set required");

  auto moments = [](const Eigen::MatrixXd& x) {
    const Eigen::VectorXd mu = x.colwise().mean();
    Eigen::MatrixXd centered = x.rowwise() - mu.transpose();
    Eigen::MatrixXd cov =
        centered.transpose() * centered / static_cast<double>(x.rows() - 1);
    return std::make_pair(mu, cov);
  };
  auto [mu_r, cov_r] = moments(features_real);
  auto [mu_f, cov_f] = moments(features_fake);

  auto sqrtm = [](const Eigen::MatrixXd& m) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m);
    Eigen::VectorXd ev = es.eigenvalues();
    const double scale = std::max(1.0, ev.cwiseAbs().maxCoeff());
    for (int i = 0; i < ev.size(); ++i) {
      if (ev[i] < -1e-8 * scale)
        throw NumericError("fid: covariance product has a significantly negative eigenvalue");
      ev[i] = std::sqrt(std::max(ev[i], 0.0));
    }
    return Eigen::MatrixXd(es.eigenvectors() * ev.asDiagonal() *
                           es.eigenvectors().transpose());
  };
  // tr sqrtm(cov_r cov_f) via the symmetric similarity s cov_f s
  const Eigen::MatrixXd s = sqrtm(cov_r);
  const Eigen::MatrixXd inner = sqrtm(s * cov_f * s);
  const double mean_term = (mu_r - mu_f).squaredNorm();
  const double trace_term = cov_r.trace() + cov_f.trace() - 2.0 * inner.trace();
  return mean_term + trace_term;
}

// Landmark oracle: frame -> pixel-unit landmark list. Embedding oracle:
// frame -> fixed-dimension vector.
using LandmarkOracle = std::function<std::vector<Eigen::Vector2d>(const Frame&)>;
using EmbeddingOracle = std::function<Eigen::VectorXd(const Frame&)>;

// Average keypoint distance in pixels between oracle landmarks.
inline double akd(const LandmarkOracle& oracle, const FrameSequence& generated,
                  const FrameSequence& reference) {
  if (!oracle) throw ConfigError("akd: no landmark oracle configured");
  if (generated.frames.size() != reference.frames.size())
    throw ShapeError("akd: sequence length mismatch");
  double acc = 0;
  std::size_t count = 0;
  for (std::size_t t = 0; t < generated.frames.size(); ++t) {
    const auto lg = oracle(generated.frames[t]);
    const auto lr = oracle(reference.frames[t]);
    if (lg.size() != lr.size()) throw ShapeError("akd: landmark count mismatch");
    for (std::size_t k = 0; k < lg.size(); ++k) {
      acc += (lg[k] - lr[k]).norm();
      ++count;
    }
  }
  return count ? acc / static_cast<double>(count) : 0.0;
}

// Average Euclidean distance between identity embeddings.
inline double aed(const EmbeddingOracle& embed, const FrameSequence& generated,
                  const FrameSequence& reference) {
  if (!embed) throw ConfigError("aed: no embedding oracle configured");
  if (generated.frames.size() != reference.frames.size())
    throw ShapeError("aed: sequence length mismatch");
  double acc = 0;
  for (std::size_t t = 0; t < generated.frames.size(); ++t)
    acc += (embed(generated.frames[t]) - embed(reference.frames[t])).norm();
  return acc / static_cast<double>(generated.frames.size());
}

struct EvalReport {
  std::optional<double> akd;
  double psnr_db = 0;
  double ssim = 0;
  double fid = 0;
  std::optional<double> aed;
  int sample_count = 0;
  std::string notes;

  json to_json() const {
    json j{{"psnr_db", psnr_db}, {"ssim", ssim}, {"fid", fid}, {"sample_count", sample_count},
           {"notes", notes}};
    if (akd) j["akd"] = *akd;
    if (aed) j["aed"] = *aed;
    return j;
  }
};

// Default self-contained oracles: pooled perceptual-pyramid features for the
// identity embedding / FID features, and a frozen keypoint detector (when a
// model is supplied) for landmarks.
inline EmbeddingOracle pyramid_embedding_oracle() {
  return [](const Frame& f) {
    NoGradGuard ng;
    auto e = PerceptualPyramid<float>::fixed().embed(frame_to_var(f));
    Eigen::VectorXd v(e.value().numel());
    for (std::size_t i = 0; i < e.value().numel(); ++i) v[static_cast<Eigen::Index>(i)] = e.value().data[i];
    return v;
  };
}

template <typename S>
LandmarkOracle model_landmark_oracle(std::shared_ptr<const AdaSRModel<S>> model) {
  return [model](const Frame& f) {
    KeypointSetT<S> set = detect_keypoints(*model, f.cast<S>());
    std::vector<Eigen::Vector2d> out;
    out.reserve(static_cast<std::size_t>(set.size()));
    const double W = f.width(), H = f.height();
    for (const auto& p : set.points)
      out.emplace_back((static_cast<double>(p.position.x()) + 1.0) * W / 2.0 - 0.5,
                       (static_cast<double>(p.position.y()) + 1.0) * H / 2.0 - 0.5);
    return out;
  };
}

struct EvalOracles {
  LandmarkOracle landmarks;   // absent -> akd reported absent
  EmbeddingOracle embedding;  // absent -> aed reported absent
  EmbeddingOracle fid_features;  // required (defaults to the pyramid)
};

// Self-reenactment evaluation over a dataset of clips: the first frame of
// each clip is the source, the clip itself both drives and serves as the
// reference. `generate` maps (source, driving) to an output frame.
inline EvalReport evaluate(
    const std::function<Frame(const Frame&, const Frame&)>& generate, const DatasetIndex& dataset,
    int resolution, const EvalOracles& oracles) {
  if (!oracles.fid_features) throw ConfigError("evaluate: fid feature extractor required");
  EvalReport report;
  double psnr_acc = 0, ssim_acc = 0, akd_acc = 0, aed_acc = 0;
  int akd_clips = 0;
  std::vector<Eigen::VectorXd> feats_gen, feats_ref;

  for (std::size_t ci = 0; ci < dataset.clips.size(); ++ci) {
    const int n = dataset.clips[ci].frame_count;
    std::vector<int> all(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) all[static_cast<std::size_t>(i)] = i;
    FrameSequence reference = load_video_clip(dataset.clip_path(static_cast<int>(ci)), all, resolution);
    const Frame& source = reference.frames[0];

    FrameSequence generated;
    generated.fps = reference.fps;
    for (const Frame& driving : reference.frames) {
      Frame out = generate(source, driving);
      psnr_acc += psnr(out, driving);
      ssim_acc += ssim(out, driving);
      feats_gen.push_back(oracles.fid_features(out));
      feats_ref.push_back(oracles.fid_features(driving));
      generated.frames.push_back(std::move(out));
      ++report.sample_count;
    }
    if (oracles.landmarks) {
      akd_acc += akd(oracles.landmarks, generated, reference);
      ++akd_clips;
    }
    if (oracles.embedding) aed_acc += aed(oracles.embedding, generated, reference) *
                                      static_cast<double>(generated.frames.size());
  }
  if (report.sample_count < 1) throw ConfigError("evaluate: empty dataset");

  report.psnr_db = psnr_acc / report.sample_count;
  report.ssim = ssim_acc / report.sample_count;
  const auto d = static_cast<Eigen::Index>(feats_gen[0].size());
  Eigen::MatrixXd fg(static_cast<Eigen::Index>(feats_gen.size()), d);
  Eigen::MatrixXd fr(static_cast<Eigen::Index>(feats_ref.size()), d);
  for (std::size_t i = 0; i < feats_gen.size(); ++i) {
    fg.row(static_cast<Eigen::Index>(i)) = feats_gen[i];
    fr.row(static_cast<Eigen::Index>(i)) = feats_ref[i];
  }
  report.fid = fid(fr, fg);
  if (oracles.landmarks && akd_clips > 0) report.akd = akd_acc / akd_clips;
  if (oracles.embedding) report.aed = aed_acc / report.sample_count;
  report.notes =
      "psnr in dB, fid in raw Frechet units on the configured feature extractor "
      "(some published tables scale psnr and fid by 1e-2); akd in pixels";
  return report;
}

}  // namespace adasr
