#pragma once

#include <cmath>

#include "adasr/ops.hpp"

namespace adasr {

namespace detail {

// col buffer layout: (Cin*kh*kw) x (Ho*Wo), row-major.
template <typename S>
void im2col(const S* x, int C, int H, int W, int kh, int kw, int stride, int pad, int Ho, int Wo,
            S* col) {
  for (int c = 0; c < C; ++c)
    for (int ky = 0; ky < kh; ++ky)
      for (int kx = 0; kx < kw; ++kx) {
        S* row = col + ((static_cast<std::size_t>(c) * kh + ky) * kw + kx) *
                           static_cast<std::size_t>(Ho) * Wo;
        for (int oy = 0; oy < Ho; ++oy) {
          const int iy = oy * stride + ky - pad;
          if (iy < 0 || iy >= H) {
            for (int ox = 0; ox < Wo; ++ox) row[oy * Wo + ox] = S(0);
            continue;
          }
          const S* xr = x + (static_cast<std::size_t>(c) * H + iy) * W;
          for (int ox = 0; ox < Wo; ++ox) {
            const int ix = ox * stride + kx - pad;
            row[oy * Wo + ox] = (ix < 0 || ix >= W) ? S(0) : xr[ix];
          }
        }
      }
}

template <typename S>
void col2im_add(const S* col, int C, int H, int W, int kh, int kw, int stride, int pad, int Ho,
                int Wo, S* x) {
  for (int c = 0; c < C; ++c)
    for (int ky = 0; ky < kh; ++ky)
      for (int kx = 0; kx < kw; ++kx) {
        const S* row = col + ((static_cast<std::size_t>(c) * kh + ky) * kw + kx) *
                                 static_cast<std::size_t>(Ho) * Wo;
        for (int oy = 0; oy < Ho; ++oy) {
          const int iy = oy * stride + ky - pad;
          if (iy < 0 || iy >= H) continue;
          S* xr = x + (static_cast<std::size_t>(c) * H + iy) * W;
          for (int ox = 0; ox < Wo; ++ox) {
            const int ix = ox * stride + kx - pad;
            if (ix >= 0 && ix < W) xr[ix] += row[oy * Wo + ox];
          }
        }
      }
}

}  // namespace detail

// x:(B,Cin,H,W) w:(Cout,Cin,kh,kw) b:(Cout). One GEMM per sample keeps results
// independent of batch composition.
template <typename S>
Var<S> conv2d(const Var<S>& x, const Var<S>& w, const Var<S>& b, int stride = 1, int pad = -1) {
  const Shape& xs = x.shape();
  const Shape& ws = w.shape();
  check_shape(xs.rank() == 4 && ws.rank() == 4, "conv2d: (B,C,H,W) and (O,C,kh,kw) required");
  const int B = xs[0], C = xs[1], H = xs[2], W = xs[3];
  const int O = ws[0], kh = ws[2], kw = ws[3];
  check_shape(ws[1] == C, "conv2d: channel mismatch " + xs.str() + " vs " + ws.str());
  if (pad < 0) pad = kh / 2;
  const int Ho = (H + 2 * pad - kh) / stride + 1;
  const int Wo = (W + 2 * pad - kw) / stride + 1;
  check_shape(Ho > 0 && Wo > 0, "conv2d: empty output");
  const int K = C * kh * kw;
  const std::size_t plane = static_cast<std::size_t>(Ho) * Wo;

  Tensor<S> out(Shape{B, O, Ho, Wo});
  {
    AlignedVec<S> col(static_cast<std::size_t>(K) * plane);
    CMatMap<S> wm(w.value().data.data(), O, K);
    for (int n = 0; n < B; ++n) {
      detail::im2col(x.value().data.data() + static_cast<std::size_t>(n) * C * H * W, C, H, W, kh,
                     kw, stride, pad, Ho, Wo, col.data());
      CMatMap<S> cm(col.data(), K, static_cast<int>(plane));
      MatMap<S> om(out.data.data() + static_cast<std::size_t>(n) * O * plane, O,
                   static_cast<int>(plane));
      om.noalias() = wm * cm;
    }
    if (b.defined()) {
      for (int n = 0; n < B; ++n)
        for (int o = 0; o < O; ++o) {
          S* p = out.data.data() + (static_cast<std::size_t>(n) * O + o) * plane;
          const S bv = b.value().data[static_cast<std::size_t>(o)];
          for (std::size_t i = 0; i < plane; ++i) p[i] += bv;
        }
    }
  }

  std::vector<Var<S>> parents = b.defined() ? std::vector<Var<S>>{x, w, b}
                                            : std::vector<Var<S>>{x, w};
  return make_op<S>(
      std::move(out), parents, [x, w, b, B, C, H, W, O, kh, kw, stride, pad, Ho, Wo, K,
                                plane](Node<S>& nd) {
        AlignedVec<S> col(static_cast<std::size_t>(K) * plane);
        AlignedVec<S> gcol(static_cast<std::size_t>(K) * plane);
        CMatMap<S> wm(w.value().data.data(), O, K);
        for (int n = 0; n < B; ++n) {
          CMatMap<S> g(nd.grad.data.data() + static_cast<std::size_t>(n) * O * plane, O,
                       static_cast<int>(plane));
          if (w.requires_grad()) {
            detail::im2col(x.value().data.data() + static_cast<std::size_t>(n) * C * H * W, C, H,
                           W, kh, kw, stride, pad, Ho, Wo, col.data());
            CMatMap<S> cm(col.data(), K, static_cast<int>(plane));
            MatMap<S> gw(w.grad().data.data(), O, K);
            gw.noalias() += g * cm.transpose();
          }
          if (x.requires_grad()) {
            MatMap<S> gc(gcol.data(), K, static_cast<int>(plane));
            gc.noalias() = wm.transpose() * g;
            detail::col2im_add(gcol.data(), C, H, W, kh, kw, stride, pad, Ho, Wo,
                               x.grad().data.data() + static_cast<std::size_t>(n) * C * H * W);
          }
        }
        if (b.defined() && b.requires_grad()) {
          auto& gb = b.grad();
          for (int n = 0; n < B; ++n)
            for (int o = 0; o < O; ++o) {
              const S* p = nd.grad.data.data() + (static_cast<std::size_t>(n) * O + o) * plane;
              S acc = S(0);
              for (std::size_t i = 0; i < plane; ++i) acc += p[i];
              gb.data[static_cast<std::size_t>(o)] += acc;
            }
        }
      });
}

template <typename S>
Var<S> avg_pool2(const Var<S>& x, int f = 2) {
  const Shape& s = x.shape();
  check_shape(s.rank() == 4 && s[2] % f == 0 && s[3] % f == 0, "avg_pool2: bad shape");
  const int B = s[0], C = s[1], H = s[2], W = s[3], Ho = H / f, Wo = W / f;
  Tensor<S> out(Shape{B, C, Ho, Wo});
  const S inv = S(1) / static_cast<S>(f * f);
  const auto& xv = x.value();
  for (int bc = 0; bc < B * C; ++bc) {
    const S* xp = xv.data.data() + static_cast<std::size_t>(bc) * H * W;
    S* op = out.data.data() + static_cast<std::size_t>(bc) * Ho * Wo;
    for (int oy = 0; oy < Ho; ++oy)
      for (int ox = 0; ox < Wo; ++ox) {
        S acc = S(0);
        for (int dy = 0; dy < f; ++dy)
          for (int dx = 0; dx < f; ++dx) acc += xp[(oy * f + dy) * W + ox * f + dx];
        op[oy * Wo + ox] = acc * inv;
      }
  }
  return make_op<S>(std::move(out), {x}, [x, B, C, H, W, Ho, Wo, f, inv](Node<S>& nd) {
    if (!x.requires_grad()) return;
    auto& g = x.grad();
    for (int bc = 0; bc < B * C; ++bc) {
      S* gp = g.data.data() + static_cast<std::size_t>(bc) * H * W;
      const S* ng = nd.grad.data.data() + static_cast<std::size_t>(bc) * Ho * Wo;
      for (int oy = 0; oy < Ho; ++oy)
        for (int ox = 0; ox < Wo; ++ox) {
          const S v = ng[oy * Wo + ox] * inv;
          for (int dy = 0; dy < f; ++dy)
            for (int dx = 0; dx < f; ++dx) gp[(oy * f + dy) * W + ox * f + dx] += v;
        }
    }
  });
}

template <typename S>
Var<S> upsample_nearest2(const Var<S>& x, int f = 2) {
  const Shape& s = x.shape();
  check_shape(s.rank() == 4, "upsample_nearest2: (B,C,H,W) required");
  const int B = s[0], C = s[1], H = s[2], W = s[3], Ho = H * f, Wo = W * f;
  Tensor<S> out(Shape{B, C, Ho, Wo});
  const auto& xv = x.value();
  for (int bc = 0; bc < B * C; ++bc) {
    const S* xp = xv.data.data() + static_cast<std::size_t>(bc) * H * W;
    S* op = out.data.data() + static_cast<std::size_t>(bc) * Ho * Wo;
    for (int oy = 0; oy < Ho; ++oy)
      for (int ox = 0; ox < Wo; ++ox) op[oy * Wo + ox] = xp[(oy / f) * W + ox / f];
  }
  return make_op<S>(std::move(out), {x}, [x, B, C, H, W, Ho, Wo, f](Node<S>& nd) {
    if (!x.requires_grad()) return;
    auto& g = x.grad();
    for (int bc = 0; bc < B * C; ++bc) {
      S* gp = g.data.data() + static_cast<std::size_t>(bc) * H * W;
      const S* ng = nd.grad.data.data() + static_cast<std::size_t>(bc) * Ho * Wo;
      for (int oy = 0; oy < Ho; ++oy)
        for (int ox = 0; ox < Wo; ++ox) gp[(oy / f) * W + ox / f] += ng[oy * Wo + ox];
    }
  });
}

// Bilinear resize to (Ho,Wo), align-corners convention (matches the warp grid).
template <typename S>
Var<S> upsample_bilinear(const Var<S>& x, int Ho, int Wo) {
  const Shape& s = x.shape();
  check_shape(s.rank() == 4, "upsample_bilinear: (B,C,H,W) required");
  const int B = s[0], C = s[1], H = s[2], W = s[3];
  Tensor<S> out(Shape{B, C, Ho, Wo});
  const double sy = Ho > 1 ? static_cast<double>(H - 1) / (Ho - 1) : 0.0;
  const double sx = Wo > 1 ? static_cast<double>(W - 1) / (Wo - 1) : 0.0;
  // Precompute interpolation taps once; reused by forward and backward.
  std::vector<int> y0(static_cast<std::size_t>(Ho)), x0(static_cast<std::size_t>(Wo));
  std::vector<S> wy(static_cast<std::size_t>(Ho)), wx(static_cast<std::size_t>(Wo));
  for (int i = 0; i < Ho; ++i) {
    const double p = i * sy;
    int p0 = static_cast<int>(std::floor(p));
    if (p0 > H - 2) p0 = H - 2;
    if (p0 < 0) p0 = 0;
    y0[static_cast<std::size_t>(i)] = p0;
    wy[static_cast<std::size_t>(i)] = static_cast<S>(p - p0);
  }
  for (int i = 0; i < Wo; ++i) {
    const double p = i * sx;
    int p0 = static_cast<int>(std::floor(p));
    if (p0 > W - 2) p0 = W - 2;
    if (p0 < 0) p0 = 0;
    x0[static_cast<std::size_t>(i)] = p0;
    wx[static_cast<std::size_t>(i)] = static_cast<S>(p - p0);
  }
  if (H == 1) std::fill(wy.begin(), wy.end(), S(0));
  if (W == 1) std::fill(wx.begin(), wx.end(), S(0));
  const auto& xv = x.value();
  for (int bc = 0; bc < B * C; ++bc) {
    const S* xp = xv.data.data() + static_cast<std::size_t>(bc) * H * W;
    S* op = out.data.data() + static_cast<std::size_t>(bc) * Ho * Wo;
    for (int oy = 0; oy < Ho; ++oy) {
      const int iy = y0[static_cast<std::size_t>(oy)];
      const S fy = wy[static_cast<std::size_t>(oy)];
      const int iy1 = H > 1 ? iy + 1 : iy;
      for (int ox = 0; ox < Wo; ++ox) {
        const int ix = x0[static_cast<std::size_t>(ox)];
        const S fx = wx[static_cast<std::size_t>(ox)];
        const int ix1 = W > 1 ? ix + 1 : ix;
        op[oy * Wo + ox] = (S(1) - fy) * ((S(1) - fx) * xp[iy * W + ix] + fx * xp[iy * W + ix1]) +
                           fy * ((S(1) - fx) * xp[iy1 * W + ix] + fx * xp[iy1 * W + ix1]);
      }
    }
  }
  return make_op<S>(std::move(out), {x}, [x, B, C, H, W, Ho, Wo, y0, x0, wy, wx](Node<S>& nd) {
    if (!x.requires_grad()) return;
    auto& g = x.grad();
    for (int bc = 0; bc < B * C; ++bc) {
      S* gp = g.data.data() + static_cast<std::size_t>(bc) * H * W;
      const S* ng = nd.grad.data.data() + static_cast<std::size_t>(bc) * Ho * Wo;
      for (int oy = 0; oy < Ho; ++oy) {
        const int iy = y0[static_cast<std::size_t>(oy)];
        const S fy = wy[static_cast<std::size_t>(oy)];
        const int iy1 = H > 1 ? iy + 1 : iy;
        for (int ox = 0; ox < Wo; ++ox) {
          const int ix = x0[static_cast<std::size_t>(ox)];
          const S fx = wx[static_cast<std::size_t>(ox)];
          const int ix1 = W > 1 ? ix + 1 : ix;
          const S gv = ng[oy * Wo + ox];
          gp[iy * W + ix] += gv * (S(1) - fy) * (S(1) - fx);
          gp[iy * W + ix1] += gv * (S(1) - fy) * fx;
          gp[iy1 * W + ix] += gv * fy * (S(1) - fx);
          gp[iy1 * W + ix1] += gv * fy * fx;
        }
      }
    }
  });
}

// Per-sample, per-channel normalization (no affine part; compose one with
// broadcast mul/add when a learnable scale/shift is wanted).
template <typename S>
Var<S> instance_norm(const Var<S>& x, S eps = S(1e-5)) {
  const Shape& s = x.shape();
  check_shape(s.rank() == 4, "instance_norm: (B,C,H,W) required");
  const std::size_t groups = static_cast<std::size_t>(s[0]) * static_cast<std::size_t>(s[1]);
  const std::size_t n = static_cast<std::size_t>(s[2]) * static_cast<std::size_t>(s[3]);
  Tensor<S> out(s);
  std::vector<S> inv_std(groups);
  const auto& xv = x.value();
  const S invn = S(1) / static_cast<S>(n);
  for (std::size_t gi = 0; gi < groups; ++gi) {
    const S* xp = xv.data.data() + gi * n;
    S* op = out.data.data() + gi * n;
    S mu = S(0);
    for (std::size_t i = 0; i < n; ++i) mu += xp[i];
    mu *= invn;
    S var = S(0);
    for (std::size_t i = 0; i < n; ++i) {
      const S d = xp[i] - mu;
      var += d * d;
    }
    var *= invn;
    const S is = S(1) / std::sqrt(var + eps);
    inv_std[gi] = is;
    for (std::size_t i = 0; i < n; ++i) op[i] = (xp[i] - mu) * is;
  }
  Tensor<S> y = out;
  return make_op<S>(std::move(out), {x}, [x, y, inv_std, groups, n, invn](Node<S>& nd) {
    if (!x.requires_grad()) return;
    auto& g = x.grad();
    for (std::size_t gi = 0; gi < groups; ++gi) {
      const S* yp = y.data.data() + gi * n;
      const S* gp = nd.grad.data.data() + gi * n;
      S* xg = g.data.data() + gi * n;
      S gmean = S(0), gymean = S(0);
      for (std::size_t i = 0; i < n; ++i) {
        gmean += gp[i];
        gymean += gp[i] * yp[i];
      }
      gmean *= invn;
      gymean *= invn;
      const S is = inv_std[gi];
      for (std::size_t i = 0; i < n; ++i) xg[i] += is * (gp[i] - gmean - yp[i] * gymean);
    }
  });
}

// Bilinear backward sampling. features:(B,C,Hf,Wf), flow:(B,2,H,W) holding
// normalized sample coordinates (x then y, half-pixel centers, [-1,1]);
// samples outside the image clamp to the border. The half-pixel mapping
// px = (v+1)*W/2 - 0.5 reproduces integer cell indices bit-exactly for
// power-of-two sizes.
template <typename S>
Var<S> grid_sample(const Var<S>& features, const Var<S>& flow) {
  const Shape& fs = features.shape();
  const Shape& gs = flow.shape();
  check_shape(fs.rank() == 4 && gs.rank() == 4 && gs[1] == 2, "grid_sample: bad shapes");
  check_shape(fs[0] == gs[0], "grid_sample: batch mismatch");
  const int B = fs[0], C = fs[1], Hf = fs[2], Wf = fs[3], H = gs[2], W = gs[3];
  const std::size_t plane = static_cast<std::size_t>(H) * W;
  const std::size_t fplane = static_cast<std::size_t>(Hf) * Wf;
  Tensor<S> out(Shape{B, C, H, W});
  const auto& fv = features.value();
  const auto& gv = flow.value();
  // Returns the clamped position; *unclamped reports whether the raw position
  // was inside [0, extent-1] (gradient w.r.t. the flow is zero once clamped).
  auto sample_pos = [](S v, int extent, bool* inside) {
    S p = (v + S(1)) * static_cast<S>(extent) * S(0.5) - S(0.5);
    const bool in = p >= S(0) && p <= static_cast<S>(extent - 1);
    if (inside) *inside = in;
    if (p < S(0)) p = S(0);
    if (p > static_cast<S>(extent - 1)) p = static_cast<S>(extent - 1);
    return p;
  };
  for (int n = 0; n < B; ++n) {
    const S* fx = gv.data.data() + static_cast<std::size_t>(n) * 2 * plane;
    const S* fy = fx + plane;
    for (std::size_t i = 0; i < plane; ++i) {
      const S px = sample_pos(fx[i], Wf, nullptr);
      const S py = sample_pos(fy[i], Hf, nullptr);
      int x0 = static_cast<int>(std::floor(px));
      int y0 = static_cast<int>(std::floor(py));
      if (x0 > Wf - 2) x0 = Wf - 2;
      if (y0 > Hf - 2) y0 = Hf - 2;
      if (x0 < 0) x0 = 0;
      if (y0 < 0) y0 = 0;
      const S ax = px - x0, ay = py - y0;
      const std::size_t base = static_cast<std::size_t>(y0) * Wf + x0;
      for (int c = 0; c < C; ++c) {
        const S* fp = fv.data.data() + (static_cast<std::size_t>(n) * C + c) * fplane;
        const S v00 = fp[base], v01 = fp[base + 1];
        const S v10 = fp[base + Wf], v11 = fp[base + Wf + 1];
        out.data[(static_cast<std::size_t>(n) * C + c) * plane + i] =
            (S(1) - ay) * ((S(1) - ax) * v00 + ax * v01) + ay * ((S(1) - ax) * v10 + ax * v11);
      }
    }
  }
  return make_op<S>(std::move(out), {features, flow}, [features, flow, B, C, Hf, Wf, H, W, plane,
                                                       fplane, sample_pos](Node<S>& nd) {
    const auto& fv = features.value();
    const auto& gv = flow.value();
    const bool need_f = features.requires_grad();
    const bool need_g = flow.requires_grad();
    for (int n = 0; n < B; ++n) {
      const S* fxp = gv.data.data() + static_cast<std::size_t>(n) * 2 * plane;
      const S* fyp = fxp + plane;
      for (std::size_t i = 0; i < plane; ++i) {
        bool inx = false, iny = false;
        const S px = sample_pos(fxp[i], Wf, &inx);
        const S py = sample_pos(fyp[i], Hf, &iny);
        int x0 = static_cast<int>(std::floor(px));
        int y0 = static_cast<int>(std::floor(py));
        if (x0 > Wf - 2) x0 = Wf - 2;
        if (y0 > Hf - 2) y0 = Hf - 2;
        if (x0 < 0) x0 = 0;
        if (y0 < 0) y0 = 0;
        const S ax = px - x0, ay = py - y0;
        const std::size_t base = static_cast<std::size_t>(y0) * Wf + x0;
        const S half_w = S(0.5) * static_cast<S>(Wf);
        const S half_h = S(0.5) * static_cast<S>(Hf);
        S gx = S(0), gy = S(0);
        for (int c = 0; c < C; ++c) {
          const std::size_t fbase = (static_cast<std::size_t>(n) * C + c) * fplane;
          const S* fp = fv.data.data() + fbase;
          const S g = nd.grad.data[(static_cast<std::size_t>(n) * C + c) * plane + i];
          const S v00 = fp[base], v01 = fp[base + 1];
          const S v10 = fp[base + Wf], v11 = fp[base + Wf + 1];
          if (need_f) {
            S* gf = features.grad().data.data() + fbase;
            gf[base] += g * (S(1) - ay) * (S(1) - ax);
            gf[base + 1] += g * (S(1) - ay) * ax;
            gf[base + Wf] += g * ay * (S(1) - ax);
            gf[base + Wf + 1] += g * ay * ax;
          }
          if (need_g) {
            gx += g * ((S(1) - ay) * (v01 - v00) + ay * (v11 - v10));
            gy += g * ((S(1) - ax) * (v10 - v00) + ax * (v11 - v01));
          }
        }
        if (need_g) {
          auto& gg = flow.grad();
          if (inx) gg.data[static_cast<std::size_t>(n) * 2 * plane + i] += gx * half_w;
          if (iny) gg.data[static_cast<std::size_t>(n) * 2 * plane + plane + i] += gy * half_h;
        }
      }
    }
  });
}

// (B,C,H,W) -> (B,C) spatial average.
template <typename S>
Var<S> spatial_mean(const Var<S>& x) {
  const Shape& s = x.shape();
  check_shape(s.rank() == 4, "spatial_mean: (B,C,H,W) required");
  const std::size_t groups = static_cast<std::size_t>(s[0]) * static_cast<std::size_t>(s[1]);
  const std::size_t n = static_cast<std::size_t>(s[2]) * static_cast<std::size_t>(s[3]);
  Tensor<S> out(Shape{s[0], s[1]});
  const S invn = S(1) / static_cast<S>(n);
  for (std::size_t gi = 0; gi < groups; ++gi) {
    const S* xp = x.value().data.data() + gi * n;
    S acc = S(0);
    for (std::size_t i = 0; i < n; ++i) acc += xp[i];
    out.data[gi] = acc * invn;
  }
  return make_op<S>(std::move(out), {x}, [x, groups, n, invn](Node<S>& nd) {
    if (!x.requires_grad()) return;
    auto& g = x.grad();
    for (std::size_t gi = 0; gi < groups; ++gi) {
      const S gv = nd.grad.data[gi] * invn;
      S* gp = g.data.data() + gi * n;
      for (std::size_t i = 0; i < n; ++i) gp[i] += gv;
    }
  });
}

}  // namespace adasr
