#pragma once

#include "ssmradnet/tensor.hpp"

namespace ssmr {

// ---------------------------------------------------------------------------
// Grouped causal 1-D convolution along the sequence axis.
//   x: T x G, w: G x K, b: G  ->  y[t,g] = b[g] + sum_k w[g,k] * x[t-k,g]
// Zero padding for t-k < 0. Group g convolves channel g only.
// ---------------------------------------------------------------------------
template <class S>
Tensor<S> grouped_causal_conv1d(const Tensor<S>& x, const Tensor<S>& w, const Tensor<S>& b) {
  if (x.rank() != 2 || w.rank() != 2) throw DimensionError("grouped_causal_conv1d expects rank-2");
  const int T = x.dim(0), G = x.dim(1), K = w.dim(1);
  if (w.dim(0) != G || b.numel() != G)
    throw DimensionError("grouped_causal_conv1d: weight shape " + shape_str(w.shape()) +
                         " does not match " + std::to_string(G) + " channels");
  Tensor<S> y({T, G});
  for (int t = 0; t < T; ++t) {
    for (int g = 0; g < G; ++g) {
      S acc = b.data()[g];
      for (int k = 0; k < K && k <= t; ++k)
        acc += w.data()[static_cast<std::size_t>(g) * K + k] *
               x.data()[static_cast<std::size_t>(t - k) * G + g];
      y.data()[static_cast<std::size_t>(t) * G + g] = acc;
    }
  }
  mac_add(static_cast<std::uint64_t>(T) * G * K);

  if (detail::grad_mode<S>({&x, &w, &b})) {
    y.set_requires_grad();
    auto xn = x.node();
    auto wn = w.node();
    auto bn = b.node();
    auto yn = y.node();
    active_tape<S>()->record(yn, [xn, wn, bn, yn, T, G, K] {
      for (int t = 0; t < T; ++t) {
        for (int g = 0; g < G; ++g) {
          S gy = yn->grad[static_cast<std::size_t>(t) * G + g];
          if (gy == S(0)) continue;
          if (bn->requires_grad) bn->grad[static_cast<std::size_t>(g)] += gy;
          for (int k = 0; k < K && k <= t; ++k) {
            if (wn->requires_grad)
              wn->grad[static_cast<std::size_t>(g) * K + k] +=
                  gy * xn->value[static_cast<std::size_t>(t - k) * G + g];
            if (xn->requires_grad)
              xn->grad[static_cast<std::size_t>(t - k) * G + g] +=
                  gy * wn->value[static_cast<std::size_t>(g) * K + k];
          }
        }
      }
    });
  }
  return y;
}

// ---------------------------------------------------------------------------
// Depthwise width-3 "same" convolution along the sequence axis (the conv1d
// chirp-aggregation mode). x: T x G, w: G x 3, b: G. Tap k applies to x[t+k-1].
// ---------------------------------------------------------------------------
template <class S>
Tensor<S> depthwise_conv1d_same3(const Tensor<S>& x, const Tensor<S>& w, const Tensor<S>& b) {
  const int T = x.dim(0), G = x.dim(1);
  if (w.dim(0) != G || w.dim(1) != 3 || b.numel() != G)
    throw DimensionError("depthwise_conv1d_same3: bad weight shape " + shape_str(w.shape()));
  Tensor<S> y({T, G});
  for (int t = 0; t < T; ++t) {
    for (int g = 0; g < G; ++g) {
      S acc = b.data()[g];
      for (int k = 0; k < 3; ++k) {
        int src = t + k - 1;
        if (src < 0 || src >= T) continue;
        acc += w.data()[static_cast<std::size_t>(g) * 3 + k] *
               x.data()[static_cast<std::size_t>(src) * G + g];
      }
      y.data()[static_cast<std::size_t>(t) * G + g] = acc;
    }
  }
  mac_add(static_cast<std::uint64_t>(T) * G * 3);

  if (detail::grad_mode<S>({&x, &w, &b})) {
    y.set_requires_grad();
    auto xn = x.node();
    auto wn = w.node();
    auto bn = b.node();
    auto yn = y.node();
    active_tape<S>()->record(yn, [xn, wn, bn, yn, T, G] {
      for (int t = 0; t < T; ++t) {
        for (int g = 0; g < G; ++g) {
          S gy = yn->grad[static_cast<std::size_t>(t) * G + g];
          if (gy == S(0)) continue;
          if (bn->requires_grad) bn->grad[static_cast<std::size_t>(g)] += gy;
          for (int k = 0; k < 3; ++k) {
            int src = t + k - 1;
            if (src < 0 || src >= T) continue;
            if (wn->requires_grad)
              wn->grad[static_cast<std::size_t>(g) * 3 + k] +=
                  gy * xn->value[static_cast<std::size_t>(src) * G + g];
            if (xn->requires_grad)
              xn->grad[static_cast<std::size_t>(src) * G + g] +=
                  gy * wn->value[static_cast<std::size_t>(g) * 3 + k];
          }
        }
      }
    });
  }
  return y;
}

// ---------------------------------------------------------------------------
// Width-3 "same" conv along the chirp axis with full channel mixing (the
// decoder's dimension-expansion conv). u: C x W, k: 3 x W x M, b: M -> C x M.
// ---------------------------------------------------------------------------
template <class S>
Tensor<S> chirp_conv1d(const Tensor<S>& u, const Tensor<S>& kern, const Tensor<S>& b) {
  const int C = u.dim(0), W = u.dim(1);
  if (kern.rank() != 3 || kern.dim(0) != 3 || kern.dim(1) != W)
    throw DimensionError("chirp_conv1d: kernel shape " + shape_str(kern.shape()) +
                         " does not match input " + shape_str(u.shape()));
  const int M = kern.dim(2);
  if (b.numel() != M) throw DimensionError("chirp_conv1d: bias length mismatch");
  Tensor<S> y({C, M});
  for (int c = 0; c < C; ++c) {
    S* yrow = y.data() + static_cast<std::size_t>(c) * M;
    for (int m = 0; m < M; ++m) yrow[m] = b.data()[m];
    for (int k = 0; k < 3; ++k) {
      int src = c + k - 1;
      if (src < 0 || src >= C) continue;
      const S* urow = u.data() + static_cast<std::size_t>(src) * W;
      const S* kmat = kern.data() + static_cast<std::size_t>(k) * W * M;
      for (int w = 0; w < W; ++w) {
        S uv = urow[w];
        const S* kr = kmat + static_cast<std::size_t>(w) * M;
        for (int m = 0; m < M; ++m) yrow[m] += uv * kr[m];
      }
    }
  }
  {
    std::uint64_t valid = 0;
    for (int c = 0; c < C; ++c)
      for (int k = 0; k < 3; ++k) {
        int src = c + k - 1;
        if (src >= 0 && src < C) ++valid;
      }
    mac_add(valid * static_cast<std::uint64_t>(W) * M);
  }

  if (detail::grad_mode<S>({&u, &kern, &b})) {
    y.set_requires_grad();
    auto un = u.node();
    auto kn = kern.node();
    auto bn = b.node();
    auto yn = y.node();
    active_tape<S>()->record(yn, [un, kn, bn, yn, C, W, M] {
      for (int c = 0; c < C; ++c) {
        const S* gy = yn->grad.data() + static_cast<std::size_t>(c) * M;
        if (bn->requires_grad)
          for (int m = 0; m < M; ++m) bn->grad[static_cast<std::size_t>(m)] += gy[m];
        for (int k = 0; k < 3; ++k) {
          int src = c + k - 1;
          if (src < 0 || src >= C) continue;
          for (int w = 0; w < W; ++w) {
            const S uv = un->value[static_cast<std::size_t>(src) * W + w];
            const S* kr = kn->value.data() + (static_cast<std::size_t>(k) * W + w) * M;
            S gacc = 0;
            for (int m = 0; m < M; ++m) {
              if (kn->requires_grad)
                kn->grad[(static_cast<std::size_t>(k) * W + w) * M + m] += gy[m] * uv;
              gacc += gy[m] * kr[m];
            }
            if (un->requires_grad) un->grad[static_cast<std::size_t>(src) * W + w] += gacc;
          }
        }
      }
    });
  }
  return y;
}

// ---------------------------------------------------------------------------
// 2-D convolution with odd square kernels and "same" zero padding, on
// channels-last maps. x: H x W x Ci, k: Kh x Kw x Ci x Co, b: Co.
// ---------------------------------------------------------------------------
template <class S>
Tensor<S> conv2d_same(const Tensor<S>& x, const Tensor<S>& kern, const Tensor<S>& b) {
  if (x.rank() != 3 || kern.rank() != 4) throw DimensionError("conv2d_same: bad ranks");
  const int H = x.dim(0), W = x.dim(1), Ci = x.dim(2);
  const int Kh = kern.dim(0), Kw = kern.dim(1);
  if (kern.dim(2) != Ci) throw DimensionError("conv2d_same: channel mismatch");
  const int Co = kern.dim(3);
  if (b.numel() != Co) throw DimensionError("conv2d_same: bias length mismatch");
  const int ph = Kh / 2, pw = Kw / 2;

  Tensor<S> y({H, W, Co});
  std::uint64_t macs = 0;
  for (int i = 0; i < H; ++i) {
    for (int j = 0; j < W; ++j) {
      S* yo = y.data() + (static_cast<std::size_t>(i) * W + j) * Co;
      for (int o = 0; o < Co; ++o) yo[o] = b.data()[o];
      for (int ki = 0; ki < Kh; ++ki) {
        int si = i + ki - ph;
        if (si < 0 || si >= H) continue;
        for (int kj = 0; kj < Kw; ++kj) {
          int sj = j + kj - pw;
          if (sj < 0 || sj >= W) continue;
          const S* xi = x.data() + (static_cast<std::size_t>(si) * W + sj) * Ci;
          const S* km = kern.data() + (static_cast<std::size_t>(ki) * Kw + kj) * Ci * Co;
          for (int c = 0; c < Ci; ++c) {
            S xv = xi[c];
            const S* kr = km + static_cast<std::size_t>(c) * Co;
            for (int o = 0; o < Co; ++o) yo[o] += xv * kr[o];
          }
          macs += static_cast<std::uint64_t>(Ci) * Co;
        }
      }
    }
  }
  mac_add(macs);

  if (detail::grad_mode<S>({&x, &kern, &b})) {
    y.set_requires_grad();
    auto xn = x.node();
    auto kn = kern.node();
    auto bn = b.node();
    auto yn = y.node();
    active_tape<S>()->record(yn, [xn, kn, bn, yn, H, W, Ci, Kh, Kw, Co, ph, pw] {
      for (int i = 0; i < H; ++i) {
        for (int j = 0; j < W; ++j) {
          const S* gy = yn->grad.data() + (static_cast<std::size_t>(i) * W + j) * Co;
          if (bn->requires_grad)
            for (int o = 0; o < Co; ++o) bn->grad[static_cast<std::size_t>(o)] += gy[o];
          for (int ki = 0; ki < Kh; ++ki) {
            int si = i + ki - ph;
            if (si < 0 || si >= H) continue;
            for (int kj = 0; kj < Kw; ++kj) {
              int sj = j + kj - pw;
              if (sj < 0 || sj >= W) continue;
              const std::size_t xoff = (static_cast<std::size_t>(si) * W + sj) * Ci;
              const std::size_t koff = (static_cast<std::size_t>(ki) * Kw + kj) * Ci * Co;
              for (int c = 0; c < Ci; ++c) {
                const S xv = xn->value[xoff + c];
                const S* kr = kn->value.data() + koff + static_cast<std::size_t>(c) * Co;
                S gacc = 0;
                for (int o = 0; o < Co; ++o) {
                  if (kn->requires_grad)
                    kn->grad[koff + static_cast<std::size_t>(c) * Co + o] += gy[o] * xv;
                  gacc += gy[o] * kr[o];
                }
                if (xn->requires_grad) xn->grad[xoff + c] += gacc;
              }
            }
          }
        }
      }
    });
  }
  return y;
}

// ---------------------------------------------------------------------------
// 2x spatial upsampling on channels-last maps, nearest or bilinear.
// ---------------------------------------------------------------------------

enum class UpsampleMode { Nearest, Bilinear };

template <class S>
Tensor<S> upsample2x(const Tensor<S>& x, UpsampleMode mode) {
  if (x.rank() != 3) throw DimensionError("upsample2x expects H x W x C");
  const int H = x.dim(0), W = x.dim(1), C = x.dim(2);
  const int H2 = 2 * H, W2 = 2 * W;
  Tensor<S> y({H2, W2, C});

  // Bilinear uses half-pixel centers: src = (dst + 0.5)/2 - 0.5, edge-clamped.
  std::vector<int> i0(static_cast<std::size_t>(H2)), i1(static_cast<std::size_t>(H2));
  std::vector<S> fi(static_cast<std::size_t>(H2));
  std::vector<int> j0(static_cast<std::size_t>(W2)), j1(static_cast<std::size_t>(W2));
  std::vector<S> fj(static_cast<std::size_t>(W2));
  auto fill = [](int n, int src_n, std::vector<int>& a0, std::vector<int>& a1, std::vector<S>& f) {
    for (int d = 0; d < n; ++d) {
      double s = (d + 0.5) / 2.0 - 0.5;
      if (s < 0) s = 0;
      if (s > src_n - 1) s = src_n - 1;
      int lo = static_cast<int>(s);
      a0[static_cast<std::size_t>(d)] = lo;
      a1[static_cast<std::size_t>(d)] = lo + 1 < src_n ? lo + 1 : lo;
      f[static_cast<std::size_t>(d)] = static_cast<S>(s - lo);
    }
  };
  if (mode == UpsampleMode::Bilinear) {
    fill(H2, H, i0, i1, fi);
    fill(W2, W, j0, j1, fj);
  }

  for (int i = 0; i < H2; ++i) {
    for (int j = 0; j < W2; ++j) {
      S* yo = y.data() + (static_cast<std::size_t>(i) * W2 + j) * C;
      if (mode == UpsampleMode::Nearest) {
        const S* xi = x.data() + (static_cast<std::size_t>(i / 2) * W + j / 2) * C;
        for (int c = 0; c < C; ++c) yo[c] = xi[c];
      } else {
        const S wi = fi[static_cast<std::size_t>(i)], wj = fj[static_cast<std::size_t>(j)];
        const S* x00 = x.data() + (static_cast<std::size_t>(i0[i]) * W + j0[j]) * C;
        const S* x01 = x.data() + (static_cast<std::size_t>(i0[i]) * W + j1[j]) * C;
        const S* x10 = x.data() + (static_cast<std::size_t>(i1[i]) * W + j0[j]) * C;
        const S* x11 = x.data() + (static_cast<std::size_t>(i1[i]) * W + j1[j]) * C;
        for (int c = 0; c < C; ++c)
          yo[c] = (S(1) - wi) * ((S(1) - wj) * x00[c] + wj * x01[c]) +
                  wi * ((S(1) - wj) * x10[c] + wj * x11[c]);
      }
    }
  }

  if (detail::grad_mode<S>({&x})) {
    y.set_requires_grad();
    auto xn = x.node();
    auto yn = y.node();
    active_tape<S>()->record(yn, [xn, yn, H, W, C, H2, W2, mode, i0, i1, fi, j0, j1, fj] {
      if (!xn->requires_grad) return;
      for (int i = 0; i < H2; ++i) {
        for (int j = 0; j < W2; ++j) {
          const S* gy = yn->grad.data() + (static_cast<std::size_t>(i) * W2 + j) * C;
          if (mode == UpsampleMode::Nearest) {
            S* gx = xn->grad.data() + (static_cast<std::size_t>(i / 2) * W + j / 2) * C;
            for (int c = 0; c < C; ++c) gx[c] += gy[c];
          } else {
            const S wi = fi[static_cast<std::size_t>(i)], wj = fj[static_cast<std::size_t>(j)];
            S* g00 = xn->grad.data() + (static_cast<std::size_t>(i0[i]) * W + j0[j]) * C;
            S* g01 = xn->grad.data() + (static_cast<std::size_t>(i0[i]) * W + j1[j]) * C;
            S* g10 = xn->grad.data() + (static_cast<std::size_t>(i1[i]) * W + j0[j]) * C;
            S* g11 = xn->grad.data() + (static_cast<std::size_t>(i1[i]) * W + j1[j]) * C;
            for (int c = 0; c < C; ++c) {
              g00[c] += gy[c] * (S(1) - wi) * (S(1) - wj);
              g01[c] += gy[c] * (S(1) - wi) * wj;
              g10[c] += gy[c] * wi * (S(1) - wj);
              g11[c] += gy[c] * wi * wj;
            }
          }
        }
      }
    });
  }
  return y;
}

// ---------------------------------------------------------------------------
// Selective-SSM scan over one sequence, state reset to zero at the start.
//
// Per step t (lanes j = 0..D-1, groups g = 0..G-1):
//   A_j        = -exp(a_log_j)
//   decay_tj   = exp(dt_tj * A_j)
//   h_{t,g,j}  = h_{t-1,g,j} * decay_tj + xc_{t,g} * dt_tj * b_tj
//   y_{t,g}    = sum_j h_{t,g,j} * c_tj + xc_{t,g} * sum_j dskip_{j,g}
//
// Inputs: xc T x G, dt/bmod/cmod T x D, a_log D, dskip D x G. Output T x G.
// The full state history is kept for the backward pass.
// ---------------------------------------------------------------------------
template <class S>
Tensor<S> selective_scan(const Tensor<S>& xc, const Tensor<S>& dt, const Tensor<S>& bmod,
                         const Tensor<S>& cmod, const Tensor<S>& a_log, const Tensor<S>& dskip) {
  const int T = xc.dim(0), G = xc.dim(1);
  const int D = dt.dim(1);
  if (dt.dim(0) != T || bmod.dim(0) != T || cmod.dim(0) != T || bmod.dim(1) != D ||
      cmod.dim(1) != D || a_log.numel() != D || dskip.dim(0) != D || dskip.dim(1) != G)
    throw DimensionError("selective_scan: inconsistent operand shapes");

  std::vector<S> a(static_cast<std::size_t>(D));
  for (int j = 0; j < D; ++j) a[static_cast<std::size_t>(j)] = -detail::exp_c(a_log.data()[j]);
  std::vector<S> dsum(static_cast<std::size_t>(G), S(0));
  for (int j = 0; j < D; ++j)
    for (int g = 0; g < G; ++g)
      dsum[static_cast<std::size_t>(g)] += dskip.data()[static_cast<std::size_t>(j) * G + g];

  Tensor<S> y({T, G});
  auto hist = std::make_shared<std::vector<S>>(static_cast<std::size_t>(T) * G * D, S(0));
  std::vector<S> decay(static_cast<std::size_t>(D)), dtb(static_cast<std::size_t>(D));

  for (int t = 0; t < T; ++t) {
    const S* dt_t = dt.data() + static_cast<std::size_t>(t) * D;
    const S* b_t = bmod.data() + static_cast<std::size_t>(t) * D;
    const S* c_t = cmod.data() + static_cast<std::size_t>(t) * D;
    for (int j = 0; j < D; ++j) {
      decay[static_cast<std::size_t>(j)] =
          detail::exp_c(dt_t[j] * a[static_cast<std::size_t>(j)]);
      dtb[static_cast<std::size_t>(j)] = dt_t[j] * b_t[j];
    }
    const S* hprev =
        t > 0 ? hist->data() + static_cast<std::size_t>(t - 1) * G * D : nullptr;
    S* hcur = hist->data() + static_cast<std::size_t>(t) * G * D;
    for (int g = 0; g < G; ++g) {
      const S xv = xc.data()[static_cast<std::size_t>(t) * G + g];
      const S* hp = hprev ? hprev + static_cast<std::size_t>(g) * D : nullptr;
      S* hc = hcur + static_cast<std::size_t>(g) * D;
      S acc = 0;
      for (int j = 0; j < D; ++j) {
        S h = (hp ? hp[j] * decay[static_cast<std::size_t>(j)] : S(0)) +
              xv * dtb[static_cast<std::size_t>(j)];
        hc[j] = h;
        acc += h * c_t[j];
      }
      y.data()[static_cast<std::size_t>(t) * G + g] = acc + xv * dsum[static_cast<std::size_t>(g)];
    }
  }
  // Per step: decay args (D) + dt*b (D), then per group decay mul (D),
  // input mul (D), output dot (D) and one skip multiply.
  mac_add(static_cast<std::uint64_t>(T) *
          (2ull * D + static_cast<std::uint64_t>(G) * (3ull * D + 1)));

  if (detail::grad_mode<S>({&xc, &dt, &bmod, &cmod, &a_log, &dskip})) {
    y.set_requires_grad();
    auto xcn = xc.node();
    auto dtn = dt.node();
    auto bn = bmod.node();
    auto cn = cmod.node();
    auto an = a_log.node();
    auto dn = dskip.node();
    auto yn = y.node();
    active_tape<S>()->record(yn, [xcn, dtn, bn, cn, an, dn, yn, hist, a, dsum, T, G, D] {
      std::vector<S> gh(static_cast<std::size_t>(G) * D, S(0));
      std::vector<S> ga(static_cast<std::size_t>(D), S(0));
      std::vector<S> decay(static_cast<std::size_t>(D));
      for (int t = T - 1; t >= 0; --t) {
        const S* dt_t = dtn->value.data() + static_cast<std::size_t>(t) * D;
        const S* b_t = bn->value.data() + static_cast<std::size_t>(t) * D;
        const S* c_t = cn->value.data() + static_cast<std::size_t>(t) * D;
        const S* gy = yn->grad.data() + static_cast<std::size_t>(t) * G;
        const S* hcur = hist->data() + static_cast<std::size_t>(t) * G * D;
        const S* hprev =
            t > 0 ? hist->data() + static_cast<std::size_t>(t - 1) * G * D : nullptr;
        for (int j = 0; j < D; ++j)
          decay[static_cast<std::size_t>(j)] = detail::exp_c(dt_t[j] * a[static_cast<std::size_t>(j)]);
        for (int g = 0; g < G; ++g) {
          const S xv = xcn->value[static_cast<std::size_t>(t) * G + g];
          const S gyv = gy[g];
          S* ghg = gh.data() + static_cast<std::size_t>(g) * D;
          const S* hc = hcur + static_cast<std::size_t>(g) * D;
          const S* hp = hprev ? hprev + static_cast<std::size_t>(g) * D : nullptr;
          S gx = gyv * dsum[static_cast<std::size_t>(g)];
          for (int j = 0; j < D; ++j) {
            // y contributions
            if (cn->requires_grad)
              cn->grad[static_cast<std::size_t>(t) * D + j] += gyv * hc[j];
            S ghj = ghg[j] + gyv * c_t[j];
            // h_t = h_{t-1} * decay + xv * dt * b
            const S dec = decay[static_cast<std::size_t>(j)];
            const S hprev_j = hp ? hp[j] : S(0);
            const S arg = dt_t[j] * a[static_cast<std::size_t>(j)];
            const bool in_range = std::abs(arg) <= S(detail::kExpClamp);
            if (dtn->requires_grad) {
              S gdt = ghj * xv * b_t[j];
              if (in_range) gdt += ghj * hprev_j * dec * a[static_cast<std::size_t>(j)];
              dtn->grad[static_cast<std::size_t>(t) * D + j] += gdt;
            }
            if (in_range)
              ga[static_cast<std::size_t>(j)] += ghj * hprev_j * dec * dt_t[j];
            if (bn->requires_grad)
              bn->grad[static_cast<std::size_t>(t) * D + j] += ghj * xv * dt_t[j];
            gx += ghj * dt_t[j] * b_t[j];
            ghg[j] = ghj * dec;  // flows to h_{t-1}
            if (dn->requires_grad)
              dn->grad[static_cast<std::size_t>(j) * G + g] += gyv * xv;
          }
          if (xcn->requires_grad) xcn->grad[static_cast<std::size_t>(t) * G + g] += gx;
        }
      }
      if (an->requires_grad) {
        // A = -exp(a_log) => dA/da_log = A
        for (int j = 0; j < D; ++j) {
          S al = an->value[static_cast<std::size_t>(j)];
          if (std::abs(al) <= S(detail::kExpClamp))
            an->grad[static_cast<std::size_t>(j)] += ga[static_cast<std::size_t>(j)] * a[static_cast<std::size_t>(j)];
        }
      }
    });
  }
  return y;
}

}  // namespace ssmr
