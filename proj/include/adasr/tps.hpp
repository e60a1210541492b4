#pragma once

#include <Eigen/Dense>

#include "adasr/motion.hpp"
#include "adasr/rng.hpp"

namespace adasr {

// Thin-plate-spline deformation fitted through a perturbed control grid.
// transform_points is differentiable w.r.t. the input points; warp_image uses
// the same map to resample a frame (no gradient through the image path is
// needed for the equivariance loss).
template <typename S>
class TpsTransform {
 public:
  // Identity transform.
  TpsTransform() : identity_(true) {}

  // Affine-only pure translation; handy as a closed-form oracle.
  static TpsTransform translation(double dx, double dy) {
    TpsTransform t;
    t.identity_ = false;
    t.control_ = Eigen::MatrixXd::Zero(0, 2);
    t.weights_ = Eigen::MatrixXd::Zero(0, 2);
    t.affine_ << dx, dy, 1, 0, 0, 1;
    return t;
  }

  // Control grid `grid x grid` over [-1,1]^2, targets perturbed by N(0, sigma).
  static TpsTransform random(Rng& rng, double sigma, int grid = 5) {
    TpsTransform t;
    if (sigma <= 0.0) return t;  // identity
    const int P = grid * grid;
    t.identity_ = false;
    t.control_.resize(P, 2);
    Eigen::MatrixXd target(P, 2);
    int idx = 0;
    for (int gy = 0; gy < grid; ++gy)
      for (int gx = 0; gx < grid; ++gx, ++idx) {
        t.control_(idx, 0) = grid > 1 ? -1.0 + 2.0 * gx / (grid - 1) : 0.0;
        t.control_(idx, 1) = grid > 1 ? -1.0 + 2.0 * gy / (grid - 1) : 0.0;
        target(idx, 0) = t.control_(idx, 0) + rng.normal(0.0, sigma);
        target(idx, 1) = t.control_(idx, 1) + rng.normal(0.0, sigma);
      }
    // Standard TPS system: [K P; P^T 0] [w; a] = [target; 0]
    Eigen::MatrixXd A = Eigen::MatrixXd::Zero(P + 3, P + 3);
    for (int i = 0; i < P; ++i) {
      for (int j = 0; j < P; ++j)
        A(i, j) = kernel(t.control_(i, 0) - t.control_(j, 0), t.control_(i, 1) - t.control_(j, 1));
      A(i, P) = 1.0;
      A(i, P + 1) = t.control_(i, 0);
      A(i, P + 2) = t.control_(i, 1);
      A(P, i) = 1.0;
      A(P + 1, i) = t.control_(i, 0);
      A(P + 2, i) = t.control_(i, 1);
    }
    Eigen::MatrixXd rhs = Eigen::MatrixXd::Zero(P + 3, 2);
    rhs.topRows(P) = target;
    const Eigen::MatrixXd sol = A.fullPivLu().solve(rhs);
    t.weights_ = sol.topRows(P);
    t.affine_ = sol.bottomRows(3);
    return t;
  }

  bool is_identity() const { return identity_; }

  // Maps one point through the spline.
  Eigen::Vector2d map_point(double x, double y) const {
    if (identity_) return {x, y};
    double ox = affine_(0, 0) + affine_(1, 0) * x + affine_(2, 0) * y;
    double oy = affine_(0, 1) + affine_(1, 1) * x + affine_(2, 1) * y;
    for (int i = 0; i < control_.rows(); ++i) {
      const double u = kernel(x - control_(i, 0), y - control_(i, 1));
      ox += weights_(i, 0) * u;
      oy += weights_(i, 1) * u;
    }
    return {ox, oy};
  }

  // points:(B,K,2) -> (B,K,2), differentiable w.r.t. the points.
  Var<S> transform_points(const Var<S>& points) const {
    if (identity_) return points;
    const Shape& ps = points.shape();
    check_shape(ps.rank() == 3 && ps[2] == 2, "tps.transform_points: (B,K,2) required");
    const std::size_t n = static_cast<std::size_t>(ps[0]) * ps[1];
    Tensor<S> out(ps);
    const auto& pv = points.value();
    for (std::size_t i = 0; i < n; ++i) {
      const Eigen::Vector2d m = map_point(pv.data[2 * i], pv.data[2 * i + 1]);
      out.data[2 * i] = static_cast<S>(m.x());
      out.data[2 * i + 1] = static_cast<S>(m.y());
    }
    const TpsTransform self = *this;
    return make_op<S>(std::move(out), {points}, [points, self, n](Node<S>& nd) {
      if (!points.requires_grad()) return;
      auto& pg = points.grad();
      const auto& pv = points.value();
      for (std::size_t i = 0; i < n; ++i) {
        const Eigen::Matrix2d J =
            self.point_jacobian(pv.data[2 * i], pv.data[2 * i + 1]);
        const double g0 = nd.grad.data[2 * i], g1 = nd.grad.data[2 * i + 1];
        // dL/dp = J^T g
        pg.data[2 * i] += static_cast<S>(J(0, 0) * g0 + J(1, 0) * g1);
        pg.data[2 * i + 1] += static_cast<S>(J(0, 1) * g0 + J(1, 1) * g1);
      }
    });
  }

  // Samples `frame` at the spline-mapped lattice: warped(z) = frame(T(z)).
  // The detected landmarks of the result then satisfy kp(frame) = T(kp(warped)).
  template <typename T>
  Tensor<T> warp_image(const Tensor<T>& frame) const {
    if (identity_) return frame;
    check_shape(frame.shape.rank() == 3, "tps.warp_image: (C,H,W) required");
    const int C = frame.shape[0], H = frame.shape[1], W = frame.shape[2];
    Tensor<T> flow(Shape{1, 2, H, W});
    const std::size_t plane = static_cast<std::size_t>(H) * W;
    const Tensor<T> grid = coord_grid<T>(H, W);
    for (std::size_t i = 0; i < plane; ++i) {
      const Eigen::Vector2d m = map_point(grid.data[i], grid.data[plane + i]);
      flow.data[i] = static_cast<T>(m.x());
      flow.data[plane + i] = static_cast<T>(m.y());
    }
    NoGradGuard ng;
    auto f = Var<T>::constant(frame.reshaped(Shape{1, C, H, W}));
    auto g = Var<T>::constant(std::move(flow));
    return grid_sample(f, g).value().reshaped(Shape{C, H, W});
  }

 private:
  // U(r) = r^2 log r^2, with a floor keeping the log finite near r = 0.
  static double kernel(double dx, double dy) {
    const double s = dx * dx + dy * dy;
    return s < 1e-12 ? 0.0 : s * std::log(s);
  }

  // dT/dp at a point (2x2, row i = output component, col j = input coord).
  Eigen::Matrix2d point_jacobian(double x, double y) const {
    Eigen::Matrix2d J;
    J << affine_(1, 0), affine_(2, 0), affine_(1, 1), affine_(2, 1);
    for (int i = 0; i < control_.rows(); ++i) {
      const double dx = x - control_(i, 0), dy = y - control_(i, 1);
      const double s = dx * dx + dy * dy;
      if (s < 1e-12) continue;
      const double du_ds = std::log(s) + 1.0;
      // dU/dp = (log s + 1) * 2 * (p - c)
      J(0, 0) += weights_(i, 0) * du_ds * 2.0 * dx;
      J(0, 1) += weights_(i, 0) * du_ds * 2.0 * dy;
      J(1, 0) += weights_(i, 1) * du_ds * 2.0 * dx;
      J(1, 1) += weights_(i, 1) * du_ds * 2.0 * dy;
    }
    return J;
  }

  bool identity_ = true;
  Eigen::MatrixXd control_;  // (P,2)
  Eigen::MatrixXd weights_;  // (P,2)
  Eigen::Matrix<double, 3, 2> affine_;  // rows: 1, x, y
};

}  // namespace adasr
