#pragma once

#include "adasr/conv.hpp"
#include "adasr/keypoints.hpp"
#include "adasr/ops.hpp"

namespace adasr {

// Normalized coordinate lattice, (2,H,W): channel 0 holds x (along width),
// channel 1 holds y. Half-pixel centers: cell j maps to (2j+1)/n - 1, which is
// exactly representable for power-of-two n, so identity warps are bit-exact.
template <typename S>
Tensor<S> coord_grid(int H, int W) {
  Tensor<S> g(Shape{2, H, W});
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x) {
      g.at(0, y, x) = S(2 * x + 1) / S(W) - S(1);
      g.at(1, y, x) = S(2 * y + 1) / S(H) - S(1);
    }
  return g;
}

// positions:(B,K,2) -> (B,K,H,W); channel k peaks at 1 where the lattice hits
// the keypoint exactly.
template <typename S>
Var<S> gaussian_heatmap_op(const Var<S>& positions, int H, int W, S sigma) {
  if (!(sigma > S(0))) throw ConfigError("gaussian_heatmap: sigma must be > 0");
  const Shape& ps = positions.shape();
  check_shape(ps.rank() == 3 && ps[2] >= 2, "gaussian_heatmap: (B,K,2) positions required");
  const int B = ps[0], K = ps[1], PD = ps[2];
  const Tensor<S> grid = coord_grid<S>(H, W);
  const std::size_t plane = static_cast<std::size_t>(H) * W;
  Tensor<S> out(Shape{B, K, H, W});
  const S inv2s2 = S(1) / (S(2) * sigma * sigma);
  const auto& pv = positions.value();
  for (int b = 0; b < B; ++b)
    for (int k = 0; k < K; ++k) {
      const S px = pv.data[(static_cast<std::size_t>(b) * K + k) * PD];
      const S py = pv.data[(static_cast<std::size_t>(b) * K + k) * PD + 1];
      S* o = out.data.data() + (static_cast<std::size_t>(b) * K + k) * plane;
      for (std::size_t i = 0; i < plane; ++i) {
        const S dx = grid.data[i] - px;
        const S dy = grid.data[plane + i] - py;
        o[i] = std::exp(-(dx * dx + dy * dy) * inv2s2);
      }
    }
  Tensor<S> saved = out;
  return make_op<S>(std::move(out), {positions},
                    [positions, saved, grid, B, K, PD, plane, sigma](Node<S>& nd) {
                      if (!positions.requires_grad()) return;
                      auto& pg = positions.grad();
                      const auto& pv = positions.value();
                      const S invs2 = S(1) / (sigma * sigma);
                      for (int b = 0; b < B; ++b)
                        for (int k = 0; k < K; ++k) {
                          const std::size_t pbase = (static_cast<std::size_t>(b) * K + k) * PD;
                          const S px = pv.data[pbase], py = pv.data[pbase + 1];
                          const S* o = saved.data.data() + (static_cast<std::size_t>(b) * K + k) * plane;
                          const S* g = nd.grad.data.data() + (static_cast<std::size_t>(b) * K + k) * plane;
                          S ax = S(0), ay = S(0);
                          for (std::size_t i = 0; i < plane; ++i) {
                            const S c = g[i] * o[i] * invs2;
                            ax += c * (grid.data[i] - px);
                            ay += c * (grid.data[plane + i] - py);
                          }
                          pg.data[pbase] += ax;
                          pg.data[pbase + 1] += ay;
                        }
                    });
}

// H_drv - H_src per keypoint, each channel in [-1,1].
template <typename S>
Var<S> difference_heatmaps_op(const Var<S>& pos_src, const Var<S>& pos_drv, int H, int W,
                              S sigma) {
  check_shape(pos_src.shape()[1] == pos_drv.shape()[1],
              "difference_heatmaps: keypoint count mismatch");
  return sub(gaussian_heatmap_op(pos_drv, H, W, sigma), gaussian_heatmap_op(pos_src, H, W, sigma));
}

// First-order sparse motion fields, (B,K+1,2,H,W). Field 0 is the identity
// lattice; field k sends lattice point z to
//   p_src_k + J_src_k J_drv_k^{-1} (z - p_drv_k),
// evaluated as z + (M - I) z + (p_src - M p_drv) so that coincident keypoints
// with identity jacobians give the identity field exactly.
template <typename S>
Var<S> sparse_motion_op(const Var<S>& p_src, const Var<S>& j_src, const Var<S>& p_drv,
                        const Var<S>& j_drv, int H, int W) {
  const Shape& ps = p_src.shape();
  check_shape(ps.rank() == 3 && ps[2] >= 2, "sparse_motion: (B,K,2+) positions required");
  check_shape(p_drv.shape() == ps, "sparse_motion: src/drv keypoint shape mismatch");
  const int B = ps[0], K = ps[1], PD = ps[2];
  const bool with_jac = j_src.defined();
  if (with_jac) {
    check_shape(j_src.shape() == Shape{B, K, 2, 2} && j_drv.shape() == Shape{B, K, 2, 2},
                "sparse_motion: jacobians must be (B,K,2,2)");
  }
  const Tensor<S> grid = coord_grid<S>(H, W);
  const std::size_t plane = static_cast<std::size_t>(H) * W;

  // Per (b,k): M, J_d^{-1}, offsets, cached for the backward pass.
  std::vector<std::array<S, 4>> M(static_cast<std::size_t>(B) * K), Jdinv(static_cast<std::size_t>(B) * K);
  Tensor<S> out(Shape{B, K + 1, 2, H, W});
  const auto& sp = p_src.value();
  const auto& dp = p_drv.value();
  for (int b = 0; b < B; ++b) {
    // field 0: identity
    S* f0 = out.data.data() + static_cast<std::size_t>(b) * (K + 1) * 2 * plane;
    std::copy_n(grid.data.data(), 2 * plane, f0);
    for (int k = 0; k < K; ++k) {
      const std::size_t bk = static_cast<std::size_t>(b) * K + k;
      std::array<S, 4> m{1, 0, 0, 1}, jdi{1, 0, 0, 1};
      if (with_jac) {
        const S* js = j_src.value().data.data() + bk * 4;
        const S* jd = j_drv.value().data.data() + bk * 4;
        const S det = jd[0] * jd[3] - jd[1] * jd[2];
        if (std::abs(static_cast<double>(det)) <= 1e-6)
          throw NumericError("sparse_motion: singular driving jacobian at keypoint " +
                             std::to_string(k));
        const S inv = S(1) / det;
        jdi = {jd[3] * inv, -jd[1] * inv, -jd[2] * inv, jd[0] * inv};
        m = {js[0] * jdi[0] + js[1] * jdi[2], js[0] * jdi[1] + js[1] * jdi[3],
             js[2] * jdi[0] + js[3] * jdi[2], js[2] * jdi[1] + js[3] * jdi[3]};
      }
      M[bk] = m;
      Jdinv[bk] = jdi;
      const S psx = sp.data[bk * static_cast<std::size_t>(PD)];
      const S psy = sp.data[bk * static_cast<std::size_t>(PD) + 1];
      const S pdx = dp.data[bk * static_cast<std::size_t>(PD)];
      const S pdy = dp.data[bk * static_cast<std::size_t>(PD) + 1];
      const S a00 = m[0] - S(1), a01 = m[1], a10 = m[2], a11 = m[3] - S(1);
      const S offx = psx - (m[0] * pdx + m[1] * pdy);
      const S offy = psy - (m[2] * pdx + m[3] * pdy);
      S* fx = out.data.data() +
              ((static_cast<std::size_t>(b) * (K + 1) + k + 1) * 2) * plane;
      S* fy = fx + plane;
      for (std::size_t i = 0; i < plane; ++i) {
        const S zx = grid.data[i], zy = grid.data[plane + i];
        fx[i] = zx + a00 * zx + a01 * zy + offx;
        fy[i] = zy + a10 * zx + a11 * zy + offy;
      }
    }
  }

  std::vector<Var<S>> parents =
      with_jac ? std::vector<Var<S>>{p_src, p_drv, j_src, j_drv} : std::vector<Var<S>>{p_src, p_drv};
  return make_op<S>(std::move(out), parents,
                    [p_src, p_drv, j_src, j_drv, grid, M, Jdinv, B, K, PD, plane,
                     with_jac](Node<S>& nd) {
    const auto& dp = p_drv.value();
    for (int b = 0; b < B; ++b)
      for (int k = 0; k < K; ++k) {
        const std::size_t bk = static_cast<std::size_t>(b) * K + k;
        const S* gx = nd.grad.data.data() +
                      ((static_cast<std::size_t>(b) * (K + 1) + k + 1) * 2) * plane;
        const S* gy = gx + plane;
        S sum_gx = S(0), sum_gy = S(0);
        S gzxx = S(0), gzxy = S(0), gzyx = S(0), gzyy = S(0);
        for (std::size_t i = 0; i < plane; ++i) {
          const S zx = grid.data[i], zy = grid.data[plane + i];
          sum_gx += gx[i];
          sum_gy += gy[i];
          gzxx += gx[i] * zx;
          gzxy += gx[i] * zy;
          gzyx += gy[i] * zx;
          gzyy += gy[i] * zy;
        }
        const auto& m = M[bk];
        const S pdx = dp.data[bk * static_cast<std::size_t>(PD)];
        const S pdy = dp.data[bk * static_cast<std::size_t>(PD) + 1];
        if (p_src.requires_grad()) {
          auto& g = p_src.grad();
          g.data[bk * static_cast<std::size_t>(PD)] += sum_gx;
          g.data[bk * static_cast<std::size_t>(PD) + 1] += sum_gy;
        }
        if (p_drv.requires_grad()) {
          auto& g = p_drv.grad();
          g.data[bk * static_cast<std::size_t>(PD)] -= m[0] * sum_gx + m[2] * sum_gy;
          g.data[bk * static_cast<std::size_t>(PD) + 1] -= m[1] * sum_gx + m[3] * sum_gy;
        }
        if (with_jac && (j_src.requires_grad() || j_drv.requires_grad())) {
          // dL/dM_ab = sum_z g_a (z_b - p_d,b)
          const S dm00 = gzxx - sum_gx * pdx, dm01 = gzxy - sum_gx * pdy;
          const S dm10 = gzyx - sum_gy * pdx, dm11 = gzyy - sum_gy * pdy;
          const auto& jdi = Jdinv[bk];
          // dL/dJs = dL/dM * Jdinv^T
          if (j_src.requires_grad()) {
            auto& g = j_src.grad();
            g.data[bk * 4 + 0] += dm00 * jdi[0] + dm01 * jdi[1];
            g.data[bk * 4 + 1] += dm00 * jdi[2] + dm01 * jdi[3];
            g.data[bk * 4 + 2] += dm10 * jdi[0] + dm11 * jdi[1];
            g.data[bk * 4 + 3] += dm10 * jdi[2] + dm11 * jdi[3];
          }
          if (j_drv.requires_grad()) {
            // dL/dJd = -Jdinv^T Js^T dL/dM Jdinv^T = -(M Jdinv)^T? use
            // Js^T dL/dM first, then sandwich with Jdinv^T.
            const S* js = j_src.value().data.data() + bk * 4;
            const S t00 = js[0] * dm00 + js[2] * dm10, t01 = js[0] * dm01 + js[2] * dm11;
            const S t10 = js[1] * dm00 + js[3] * dm10, t11 = js[1] * dm01 + js[3] * dm11;
            // u = Jdinv^T * t
            const S u00 = jdi[0] * t00 + jdi[2] * t10, u01 = jdi[0] * t01 + jdi[2] * t11;
            const S u10 = jdi[1] * t00 + jdi[3] * t10, u11 = jdi[1] * t01 + jdi[3] * t11;
            // v = u * Jdinv^T
            auto& g = j_drv.grad();
            g.data[bk * 4 + 0] -= u00 * jdi[0] + u01 * jdi[1];
            g.data[bk * 4 + 1] -= u00 * jdi[2] + u01 * jdi[3];
            g.data[bk * 4 + 2] -= u10 * jdi[0] + u11 * jdi[1];
            g.data[bk * 4 + 3] -= u10 * jdi[2] + u11 * jdi[3];
          }
        }
      }
  });
}

// Softmax over the K+1 candidate fields, then their convex combination.
// mask_logits:(B,K+1,H,W), sparse_flows:(B,K+1,2,H,W) -> (B,2,H,W).
template <typename S>
Var<S> combine_dense_motion_op(const Var<S>& mask_logits, const Var<S>& sparse_flows) {
  const Shape& ms = mask_logits.shape();
  const Shape& fs = sparse_flows.shape();
  check_shape(ms.rank() == 4 && fs.rank() == 5 && ms[0] == fs[0] && ms[1] == fs[1] &&
                  ms[2] == fs[3] && ms[3] == fs[4] && fs[2] == 2,
              "combine_dense_motion: shape mismatch " + ms.str() + " vs " + fs.str());
  if (!mask_logits.value().all_finite())
    throw NumericError("combine_dense_motion: non-finite mask logits");
  const int B = ms[0], K1 = ms[1], H = ms[2], W = ms[3];
  Var<S> w = softmax_channels(mask_logits);
  Var<S> w5 = reshape(w, Shape{B, K1, 1, H, W});
  Var<S> weighted = mul(w5, sparse_flows);
  return reshape(sum_axis(weighted, 1), Shape{B, 2, H, W});
}

// warp == backward bilinear sampling of feature maps by a flow field.
template <typename S>
Var<S> warp(const Var<S>& features, const Var<S>& flow) {
  return grid_sample(features, flow);
}

// occlusion:(B,1,H,W) in [0,1]; plain elementwise gating.
template <typename S>
Var<S> apply_occlusion(const Var<S>& features, const Var<S>& occlusion) {
  check_shape(features.shape().rank() == 4 && occlusion.shape().rank() == 4 &&
                  occlusion.shape()[1] == 1 && features.shape()[2] == occlusion.shape()[2] &&
                  features.shape()[3] == occlusion.shape()[3],
              "apply_occlusion: mask must be (B,1,H,W) matching the features");
  return mul(features, occlusion);
}

// points:(B,K,3), R:(B,3,3), t:(B,3), delta:(B,K,3) or undefined.
// out_bk = R_b p_bk + t_b + delta_bk.
template <typename S>
Var<S> pose_points(const Var<S>& points, const Var<S>& R, const Var<S>& t, const Var<S>& delta) {
  const Shape& ps = points.shape();
  check_shape(ps.rank() == 3 && ps[2] == 3, "pose_points: (B,K,3) required");
  const int B = ps[0], K = ps[1];
  check_shape(R.shape() == Shape{B, 3, 3} && t.shape() == Shape{B, 3}, "pose_points: bad R/t");
  const bool with_delta = delta.defined();
  if (with_delta) check_shape(delta.shape() == ps, "pose_points: delta shape mismatch");
  Tensor<S> out(ps);
  const auto& pv = points.value();
  for (int b = 0; b < B; ++b) {
    const S* rb = R.value().data.data() + static_cast<std::size_t>(b) * 9;
    const S* tb = t.value().data.data() + static_cast<std::size_t>(b) * 3;
    for (int k = 0; k < K; ++k) {
      const std::size_t o = (static_cast<std::size_t>(b) * K + k) * 3;
      for (int i = 0; i < 3; ++i) {
        S acc = tb[i];
        for (int j = 0; j < 3; ++j) acc += rb[i * 3 + j] * pv.data[o + j];
        if (with_delta) acc += delta.value().data[o + i];
        out.data[o + i] = acc;
      }
    }
  }
  std::vector<Var<S>> parents = with_delta ? std::vector<Var<S>>{points, R, t, delta}
                                           : std::vector<Var<S>>{points, R, t};
  return make_op<S>(std::move(out), parents, [points, R, t, delta, B, K, with_delta](Node<S>& nd) {
    for (int b = 0; b < B; ++b) {
      const S* rb = R.value().data.data() + static_cast<std::size_t>(b) * 9;
      for (int k = 0; k < K; ++k) {
        const std::size_t o = (static_cast<std::size_t>(b) * K + k) * 3;
        const S* g = nd.grad.data.data() + o;
        if (points.requires_grad()) {
          auto& pg = points.grad();
          for (int j = 0; j < 3; ++j)
            pg.data[o + j] += rb[j] * g[0] + rb[3 + j] * g[1] + rb[6 + j] * g[2];
        }
        if (R.requires_grad()) {
          auto& rg = R.grad();
          const S* p = points.value().data.data() + o;
          for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j)
              rg.data[static_cast<std::size_t>(b) * 9 + static_cast<std::size_t>(i * 3 + j)] +=
                  g[i] * p[j];
        }
        if (t.requires_grad()) {
          auto& tg = t.grad();
          for (int i = 0; i < 3; ++i) tg.data[static_cast<std::size_t>(b) * 3 + i] += g[i];
        }
        if (with_delta && delta.requires_grad()) {
          auto& dg = delta.grad();
          for (int i = 0; i < 3; ++i) dg.data[o + i] += g[i];
        }
      }
    }
  });
}

// Inverse of pose_points: out = R^T (p - t - delta).
template <typename S>
Var<S> unpose_points(const Var<S>& points, const Var<S>& R, const Var<S>& t,
                     const Var<S>& delta) {
  const Shape& ps = points.shape();
  check_shape(ps.rank() == 3 && ps[2] == 3, "unpose_points: (B,K,3) required");
  const int B = ps[0], K = ps[1];
  const bool with_delta = delta.defined();
  Tensor<S> out(ps);
  const auto& pv = points.value();
  for (int b = 0; b < B; ++b) {
    const S* rb = R.value().data.data() + static_cast<std::size_t>(b) * 9;
    const S* tb = t.value().data.data() + static_cast<std::size_t>(b) * 3;
    for (int k = 0; k < K; ++k) {
      const std::size_t o = (static_cast<std::size_t>(b) * K + k) * 3;
      S v[3];
      for (int i = 0; i < 3; ++i) {
        v[i] = pv.data[o + i] - tb[i];
        if (with_delta) v[i] -= delta.value().data[o + i];
      }
      for (int i = 0; i < 3; ++i)
        out.data[o + i] = rb[i] * v[0] + rb[3 + i] * v[1] + rb[6 + i] * v[2];
    }
  }
  std::vector<Var<S>> parents = with_delta ? std::vector<Var<S>>{points, R, t, delta}
                                           : std::vector<Var<S>>{points, R, t};
  return make_op<S>(std::move(out), parents, [points, R, t, delta, B, K, with_delta](Node<S>& nd) {
    const auto& pv = points.value();
    for (int b = 0; b < B; ++b) {
      const S* rb = R.value().data.data() + static_cast<std::size_t>(b) * 9;
      const S* tb = t.value().data.data() + static_cast<std::size_t>(b) * 3;
      for (int k = 0; k < K; ++k) {
        const std::size_t o = (static_cast<std::size_t>(b) * K + k) * 3;
        const S* g = nd.grad.data.data() + o;  // grad w.r.t. out = R^T v
        // dL/dv = R g
        S gv[3];
        for (int i = 0; i < 3; ++i)
          gv[i] = rb[i * 3] * g[0] + rb[i * 3 + 1] * g[1] + rb[i * 3 + 2] * g[2];
        if (points.requires_grad()) {
          auto& pg = points.grad();
          for (int i = 0; i < 3; ++i) pg.data[o + i] += gv[i];
        }
        if (t.requires_grad()) {
          auto& tg = t.grad();
          for (int i = 0; i < 3; ++i) tg.data[static_cast<std::size_t>(b) * 3 + i] -= gv[i];
        }
        if (with_delta && delta.requires_grad()) {
          auto& dg = delta.grad();
          for (int i = 0; i < 3; ++i) dg.data[o + i] -= gv[i];
        }
        if (R.requires_grad()) {
          // out_i = sum_a R_ai v_a -> dL/dR_ai = v_a g_i
          auto& rg = R.grad();
          S v[3];
          for (int i = 0; i < 3; ++i) {
            v[i] = pv.data[o + i] - tb[i];
            if (with_delta) v[i] -= delta.value().data[o + i];
          }
          for (int a = 0; a < 3; ++a)
            for (int i = 0; i < 3; ++i)
              rg.data[static_cast<std::size_t>(b) * 9 + static_cast<std::size_t>(a * 3 + i)] +=
                  v[a] * g[i];
        }
      }
    }
  });
}

// angles:(B,3) -> rotation matrices (B,3,3); see euler_to_rotation for the
// axis convention.
template <typename S>
Var<S> euler_rotation_op(const Var<S>& angles) {
  const Shape& as = angles.shape();
  check_shape(as.rank() == 2 && as[1] == 3, "euler_rotation: (B,3) required");
  const int B = as[0];
  Tensor<S> out(Shape{B, 3, 3});
  for (int b = 0; b < B; ++b) {
    Eigen::Matrix<S, 3, 1> a;
    for (int i = 0; i < 3; ++i) a[i] = angles.value().data[static_cast<std::size_t>(b) * 3 + i];
    const Eigen::Matrix<S, 3, 3> R = euler_to_rotation(a);
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j)
        out.data[static_cast<std::size_t>(b) * 9 + static_cast<std::size_t>(i * 3 + j)] = R(i, j);
  }
  return make_op<S>(std::move(out), {angles}, [angles, B](Node<S>& nd) {
    if (!angles.requires_grad()) return;
    auto& ag = angles.grad();
    for (int b = 0; b < B; ++b) {
      const S a0 = angles.value().data[static_cast<std::size_t>(b) * 3];
      const S a1 = angles.value().data[static_cast<std::size_t>(b) * 3 + 1];
      const S a2 = angles.value().data[static_cast<std::size_t>(b) * 3 + 2];
      const S cz = std::cos(a0), sz = std::sin(a0);
      const S cy = std::cos(a1), sy = std::sin(a1);
      const S cx = std::cos(a2), sx = std::sin(a2);
      Eigen::Matrix<S, 3, 3> Rz, Ry, Rx, dRz, dRy, dRx;
      Rz << cz, -sz, 0, sz, cz, 0, 0, 0, 1;
      Ry << cy, 0, sy, 0, 1, 0, -sy, 0, cy;
      Rx << 1, 0, 0, 0, cx, -sx, 0, sx, cx;
      dRz << -sz, -cz, 0, cz, -sz, 0, 0, 0, 0;
      dRy << -sy, 0, cy, 0, 0, 0, -cy, 0, -sy;
      dRx << 0, 0, 0, 0, -sx, -cx, 0, cx, -sx;
      const Eigen::Matrix<S, 3, 3> d0 = dRz * Ry * Rx;
      const Eigen::Matrix<S, 3, 3> d1 = Rz * dRy * Rx;
      const Eigen::Matrix<S, 3, 3> d2 = Rz * Ry * dRx;
      S acc0 = S(0), acc1 = S(0), acc2 = S(0);
      for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) {
          const S g = nd.grad.data[static_cast<std::size_t>(b) * 9 +
                                   static_cast<std::size_t>(i * 3 + j)];
          acc0 += g * d0(i, j);
          acc1 += g * d1(i, j);
          acc2 += g * d2(i, j);
        }
      ag.data[static_cast<std::size_t>(b) * 3] += acc0;
      ag.data[static_cast<std::size_t>(b) * 3 + 1] += acc1;
      ag.data[static_cast<std::size_t>(b) * 3 + 2] += acc2;
    }
  });
}

// J'_k = E J_k where E is the upper-left 2x2 rotation block (or its transpose
// when `transpose_r`, for mapping image jacobians back to canonical space).
// jac:(B,K,2,2), R:(B,3,3).
template <typename S>
Var<S> rotate_jacobians(const Var<S>& jac, const Var<S>& R, bool transpose_r = false) {
  const Shape& js = jac.shape();
  check_shape(js.rank() == 4 && js[2] == 2 && js[3] == 2, "rotate_jacobians: (B,K,2,2) required");
  const int B = js[0], K = js[1];
  Tensor<S> out(js);
  auto block = [transpose_r](const S* rb, S e[4]) {
    if (transpose_r) {
      e[0] = rb[0]; e[1] = rb[3]; e[2] = rb[1]; e[3] = rb[4];
    } else {
      e[0] = rb[0]; e[1] = rb[1]; e[2] = rb[3]; e[3] = rb[4];
    }
  };
  for (int b = 0; b < B; ++b) {
    S e[4];
    block(R.value().data.data() + static_cast<std::size_t>(b) * 9, e);
    for (int k = 0; k < K; ++k) {
      const std::size_t o = (static_cast<std::size_t>(b) * K + k) * 4;
      const S* j = jac.value().data.data() + o;
      out.data[o + 0] = e[0] * j[0] + e[1] * j[2];
      out.data[o + 1] = e[0] * j[1] + e[1] * j[3];
      out.data[o + 2] = e[2] * j[0] + e[3] * j[2];
      out.data[o + 3] = e[2] * j[1] + e[3] * j[3];
    }
  }
  return make_op<S>(std::move(out), {jac, R}, [jac, R, B, K, block, transpose_r](Node<S>& nd) {
    for (int b = 0; b < B; ++b) {
      S e[4];
      block(R.value().data.data() + static_cast<std::size_t>(b) * 9, e);
      S de[4] = {S(0), S(0), S(0), S(0)};
      for (int k = 0; k < K; ++k) {
        const std::size_t o = (static_cast<std::size_t>(b) * K + k) * 4;
        const S* g = nd.grad.data.data() + o;
        const S* j = jac.value().data.data() + o;
        if (jac.requires_grad()) {
          auto& jg = jac.grad();
          jg.data[o + 0] += e[0] * g[0] + e[2] * g[2];
          jg.data[o + 1] += e[0] * g[1] + e[2] * g[3];
          jg.data[o + 2] += e[1] * g[0] + e[3] * g[2];
          jg.data[o + 3] += e[1] * g[1] + e[3] * g[3];
        }
        if (R.requires_grad()) {
          de[0] += g[0] * j[0] + g[1] * j[1];
          de[1] += g[0] * j[2] + g[1] * j[3];
          de[2] += g[2] * j[0] + g[3] * j[1];
          de[3] += g[2] * j[2] + g[3] * j[3];
        }
      }
      if (R.requires_grad()) {
        auto& rg = R.grad();
        S* rgb = rg.data.data() + static_cast<std::size_t>(b) * 9;
        if (transpose_r) {
          rgb[0] += de[0]; rgb[3] += de[1]; rgb[1] += de[2]; rgb[4] += de[3];
        } else {
          rgb[0] += de[0]; rgb[1] += de[1]; rgb[3] += de[2]; rgb[4] += de[3];
        }
      }
    }
  });
}

// ---- struct-level wrappers over the Var ops (single sample, no gradients) ----

template <typename S>
struct DenseMotionT {
  Tensor<S> flow;       // (2,H,W) backward-warp coordinates
  Tensor<S> occlusion;  // (H,W) in [0,1]
};

using DenseMotion = DenseMotionT<float>;

template <typename S>
Tensor<S> gaussian_heatmap(const KeypointSetT<S>& kp, int H, int W, S sigma) {
  kp.validate();
  NoGradGuard ng;
  auto pos = Var<S>::constant(detail::keypoints_to_tensor(kp));
  Tensor<S> out = gaussian_heatmap_op(pos, H, W, sigma).value();
  return out.reshaped(Shape{kp.size(), H, W});
}

template <typename S>
Tensor<S> difference_heatmaps(const KeypointSetT<S>& kp_src, const KeypointSetT<S>& kp_drv, int H,
                              int W, S sigma) {
  if (kp_src.size() != kp_drv.size())
    throw ShapeError("difference_heatmaps: keypoint count mismatch");
  NoGradGuard ng;
  auto ps = Var<S>::constant(detail::keypoints_to_tensor(kp_src));
  auto pd = Var<S>::constant(detail::keypoints_to_tensor(kp_drv));
  Tensor<S> out = difference_heatmaps_op(ps, pd, H, W, sigma).value();
  return out.reshaped(Shape{kp_src.size(), H, W});
}

template <typename S>
Tensor<S> sparse_motion(const KeypointSetT<S>& kp_src, const KeypointSetT<S>& kp_drv, int H,
                        int W) {
  if (kp_src.size() != kp_drv.size()) throw ShapeError("sparse_motion: keypoint count mismatch");
  kp_src.validate();
  kp_drv.validate();
  NoGradGuard ng;
  auto ps = Var<S>::constant(detail::keypoints_to_tensor(kp_src));
  auto pd = Var<S>::constant(detail::keypoints_to_tensor(kp_drv));
  Var<S> js, jd;
  if (kp_src.jacobians && kp_drv.jacobians) {
    js = Var<S>::constant(detail::jacobians_to_tensor(kp_src));
    jd = Var<S>::constant(detail::jacobians_to_tensor(kp_drv));
  }
  Tensor<S> out = sparse_motion_op(ps, js, pd, jd, H, W).value();
  return out.reshaped(Shape{kp_src.size() + 1, 2, H, W});
}

template <typename S>
Tensor<S> combine_dense_motion(const Tensor<S>& mask_logits, const Tensor<S>& sparse_flows) {
  check_shape(mask_logits.shape.rank() == 3 && sparse_flows.shape.rank() == 4,
              "combine_dense_motion: (K+1,H,W) logits and (K+1,2,H,W) flows required");
  NoGradGuard ng;
  const int K1 = mask_logits.shape[0], H = mask_logits.shape[1], W = mask_logits.shape[2];
  auto ml = Var<S>::constant(mask_logits.reshaped(Shape{1, K1, H, W}));
  auto sf = Var<S>::constant(
      sparse_flows.reshaped(Shape{1, K1, 2, H, W}));
  Tensor<S> out = combine_dense_motion_op(ml, sf).value();
  return out.reshaped(Shape{2, H, W});
}

template <typename S>
Tensor<S> warp(const Tensor<S>& features, const Tensor<S>& flow) {
  check_shape(features.shape.rank() == 3 && flow.shape.rank() == 3 && flow.shape[0] == 2,
              "warp: (C,H,W) features and (2,H,W) flow required");
  NoGradGuard ng;
  const int C = features.shape[0];
  auto f = Var<S>::constant(features.reshaped(Shape{1, C, features.shape[1], features.shape[2]}));
  auto g = Var<S>::constant(flow.reshaped(Shape{1, 2, flow.shape[1], flow.shape[2]}));
  Tensor<S> out = grid_sample(f, g).value();
  return out.reshaped(Shape{C, flow.shape[1], flow.shape[2]});
}

template <typename S>
Tensor<S> apply_occlusion(const Tensor<S>& features, const Tensor<S>& mask) {
  check_shape(features.shape.rank() == 3, "apply_occlusion: (C,H,W) features required");
  check_shape((mask.shape.rank() == 2 && mask.shape[0] == features.shape[1] &&
               mask.shape[1] == features.shape[2]) ||
                  (mask.shape.rank() == 3 && mask.shape[0] == 1 &&
                   mask.shape[1] == features.shape[1] && mask.shape[2] == features.shape[2]),
              "apply_occlusion: mask must be (H,W) matching the features");
  Tensor<S> out = features;
  const std::size_t plane = static_cast<std::size_t>(features.shape[1]) * features.shape[2];
  for (int c = 0; c < features.shape[0]; ++c)
    for (std::size_t i = 0; i < plane; ++i)
      out.data[static_cast<std::size_t>(c) * plane + i] *= mask.data[i];
  return out;
}

}  // namespace adasr
