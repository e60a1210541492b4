#pragma once

#include <Eigen/Dense>
#include <optional>
#include <vector>

#include "adasr/tensor.hpp"

namespace adasr {

// A spatial keypoint: 2D position in normalized [-1,1] coordinates plus a
// depth coordinate (the spatial dimension used by the keypoint losses).
template <typename S>
struct KeypointT {
  Eigen::Matrix<S, 2, 1> position = Eigen::Matrix<S, 2, 1>::Zero();
  S depth = S(0);

  Eigen::Matrix<S, 3, 1> xyz() const { return {position.x(), position.y(), depth}; }
};

template <typename S>
struct KeypointSetT {
  std::vector<KeypointT<S>> points;
  std::optional<std::vector<Eigen::Matrix<S, 2, 2>>> jacobians;

  int size() const { return static_cast<int>(points.size()); }

  void validate() const {
    for (const auto& p : points) {
      if (!std::isfinite(static_cast<double>(p.position.x())) ||
          !std::isfinite(static_cast<double>(p.position.y())) ||
          !std::isfinite(static_cast<double>(p.depth)))
        throw NumericError("keypoint set: non-finite keypoint");
      if (std::abs(p.position.x()) > S(1.2) || std::abs(p.position.y()) > S(1.2))
        throw NumericError("keypoint set: position outside [-1.2, 1.2]");
    }
    if (jacobians && jacobians->size() != points.size())
      throw ShapeError("keypoint set: jacobian count mismatch");
  }
};

// Rigid-plus-expression decomposition mapping canonical keypoints to camera
// space: x = R x_c + t + delta_k.
template <typename S>
struct MotionParamsT {
  Eigen::Matrix<S, 3, 3> rotation = Eigen::Matrix<S, 3, 3>::Identity();
  Eigen::Matrix<S, 3, 1> translation = Eigen::Matrix<S, 3, 1>::Zero();
  std::vector<Eigen::Matrix<S, 3, 1>> expression_deltas;

  void validate(double tol = 1e-5) const {
    const Eigen::Matrix<S, 3, 3> rtr = rotation.transpose() * rotation;
    if ((rtr - Eigen::Matrix<S, 3, 3>::Identity()).template lpNorm<Eigen::Infinity>() > S(tol))
      throw NumericError("motion params: rotation is not orthonormal");
    if (std::abs(static_cast<double>(rotation.determinant()) - 1.0) > tol)
      throw NumericError("motion params: rotation determinant must be +1");
    for (const auto& d : expression_deltas)
      if (!d.allFinite()) throw NumericError("motion params: non-finite expression delta");
  }
};

using Keypoint = KeypointT<float>;
using KeypointSet = KeypointSetT<float>;
using MotionParams = MotionParamsT<float>;

// angles = (about-depth-axis, about-y, about-x); the first angle spins in the
// image plane, so yaw = pi/2 rotates the x-axis onto the y-axis.
template <typename S>
Eigen::Matrix<S, 3, 3> euler_to_rotation(const Eigen::Matrix<S, 3, 1>& angles) {
  const S cz = std::cos(angles[0]), sz = std::sin(angles[0]);
  const S cy = std::cos(angles[1]), sy = std::sin(angles[1]);
  const S cx = std::cos(angles[2]), sx = std::sin(angles[2]);
  Eigen::Matrix<S, 3, 3> Rz, Ry, Rx;
  Rz << cz, -sz, 0, sz, cz, 0, 0, 0, 1;
  Ry << cy, 0, sy, 0, 1, 0, -sy, 0, cy;
  Rx << 1, 0, 0, 0, cx, -sx, 0, sx, cx;
  return Rz * Ry * Rx;
}

// Componentwise composition of the decomposition (rotations compose, the
// translation and expression parts add). Inverse is (R^T, -t, -delta).
template <typename S>
MotionParamsT<S> compose(const MotionParamsT<S>& a, const MotionParamsT<S>& b) {
  MotionParamsT<S> out;
  out.rotation = a.rotation * b.rotation;
  out.translation = a.translation + b.translation;
  const std::size_t K = std::max(a.expression_deltas.size(), b.expression_deltas.size());
  out.expression_deltas.resize(K, Eigen::Matrix<S, 3, 1>::Zero());
  for (std::size_t k = 0; k < K; ++k) {
    if (k < a.expression_deltas.size()) out.expression_deltas[k] += a.expression_deltas[k];
    if (k < b.expression_deltas.size()) out.expression_deltas[k] += b.expression_deltas[k];
  }
  return out;
}

template <typename S>
MotionParamsT<S> inverse(const MotionParamsT<S>& mp) {
  MotionParamsT<S> out;
  out.rotation = mp.rotation.transpose();
  out.translation = -mp.translation;
  out.expression_deltas.reserve(mp.expression_deltas.size());
  for (const auto& d : mp.expression_deltas) out.expression_deltas.push_back(-d);
  return out;
}

// Anchored motion transfer: source pose composed with the driving delta
// relative to the anchor frame.
template <typename S>
MotionParamsT<S> relative_params(const MotionParamsT<S>& mp_source,
                                 const MotionParamsT<S>& mp_anchor,
                                 const MotionParamsT<S>& mp_frame) {
  return compose(mp_source, compose(inverse(mp_anchor), mp_frame));
}

// x_k = R x_c,k + t + delta_k; jacobians map through the upper-left 2x2 block.
template <typename S>
KeypointSetT<S> canonical_to_posed(const KeypointSetT<S>& canonical,
                                   const MotionParamsT<S>& mp) {
  canonical.validate();
  mp.validate();
  if (!mp.expression_deltas.empty() &&
      mp.expression_deltas.size() != canonical.points.size())
    throw ShapeError("canonical_to_posed: expression delta count mismatch");
  KeypointSetT<S> out;
  out.points.resize(canonical.points.size());
  const Eigen::Matrix<S, 2, 2> r2 = mp.rotation.template topLeftCorner<2, 2>();
  for (std::size_t k = 0; k < canonical.points.size(); ++k) {
    Eigen::Matrix<S, 3, 1> x = mp.rotation * canonical.points[k].xyz() + mp.translation;
    if (!mp.expression_deltas.empty()) x += mp.expression_deltas[k];
    out.points[k].position = x.template head<2>();
    out.points[k].depth = x[2];
  }
  if (canonical.jacobians) {
    out.jacobians.emplace();
    out.jacobians->reserve(canonical.jacobians->size());
    for (const auto& j : *canonical.jacobians) out.jacobians->push_back(r2 * j);
  }
  return out;
}

namespace detail {

template <typename S>
Tensor<S> keypoints_to_tensor(const KeypointSetT<S>& set) {
  Tensor<S> t(Shape{1, set.size(), 3});
  for (int k = 0; k < set.size(); ++k) {
    t.at(0, k, 0) = set.points[static_cast<std::size_t>(k)].position.x();
    t.at(0, k, 1) = set.points[static_cast<std::size_t>(k)].position.y();
    t.at(0, k, 2) = set.points[static_cast<std::size_t>(k)].depth;
  }
  return t;
}

template <typename S>
Tensor<S> jacobians_to_tensor(const KeypointSetT<S>& set) {
  const int K = set.size();
  Tensor<S> t(Shape{1, K, 2, 2});
  for (int k = 0; k < K; ++k) {
    const auto& j = (*set.jacobians)[static_cast<std::size_t>(k)];
    t.at(0, k, 0, 0) = j(0, 0);
    t.at(0, k, 0, 1) = j(0, 1);
    t.at(0, k, 1, 0) = j(1, 0);
    t.at(0, k, 1, 1) = j(1, 1);
  }
  return t;
}

}  // namespace detail

}  // namespace adasr
