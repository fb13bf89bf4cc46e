#pragma once

// Structured autodiff ops: 2-d convolution and its exact adjoint, per-frame
// layer normalization, causal softmax, and the two signal-domain nodes that
// let gradients flow through cepstrum synthesis (per-frame DFT) and
// waveform reconstruction (WOLA ISTFT).
//
// Convolutions pad the time axis only. The encoder uses pad (k-1, 0), which
// is causal; a transposed convolution paired with pad (0, k-1) is the
// causal direction for decoders, since the adjoint flips the pad sides.

#include <algorithm>
#include <cmath>
#include <complex>
#include <vector>

#include "homosynth/fft.hpp"
#include "homosynth/stft.hpp"
#include "homosynth/tensor.hpp"

namespace homosynth::nn {

struct ConvGeometry {
  int stride_t = 1;
  int stride_f = 1;
  int pad_t_begin = 0;
  int pad_t_end = 0;
};

inline int conv_out_dim(int in, int kernel, int stride, int pad_total) {
  return (in + pad_total - kernel) / stride + 1;
}

// x [Cin,T,F], w [Cout,Cin,kT,kF], b [Cout] -> [Cout,T',F'].
// Frequency axis is never padded; time is zero-padded per geometry.
template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b,
                 const ConvGeometry& geo) {
  require(x.shape().size() == 3 && w.shape().size() == 4, "conv2d: bad ranks");
  const int cin = x.shape()[0], tin = x.shape()[1], fin = x.shape()[2];
  const int cout = w.shape()[0], kt = w.shape()[2], kf = w.shape()[3];
  require(w.shape()[1] == cin, "conv2d: channel mismatch");
  require(b.shape() == std::vector<int>{cout}, "conv2d: bias shape mismatch");
  require(kf <= fin, "conv2d: kernel wider than the frequency axis");
  require(kt <= tin + geo.pad_t_begin + geo.pad_t_end, "conv2d: kernel longer than padded time axis");
  const int tout = conv_out_dim(tin, kt, geo.stride_t, geo.pad_t_begin + geo.pad_t_end);
  const int fout = conv_out_dim(fin, kf, geo.stride_f, 0);
  require(tout > 0 && fout > 0, "conv2d: empty output");

  std::vector<T> v(static_cast<std::size_t>(cout) * tout * fout, T(0));
  const auto& xv = x.value();
  const auto& wv = w.value();
  const auto& bv = b.value();
  for (int co = 0; co < cout; ++co) {
    T* oplane = &v[static_cast<std::size_t>(co) * tout * fout];
    for (std::int64_t i = 0; i < static_cast<std::int64_t>(tout) * fout; ++i) oplane[i] = bv[co];
    for (int ci = 0; ci < cin; ++ci)
      for (int at = 0; at < kt; ++at)
        for (int af = 0; af < kf; ++af) {
          const T wk = wv[((static_cast<std::size_t>(co) * cin + ci) * kt + at) * kf + af];
          if (wk == T(0)) continue;
          for (int to = 0; to < tout; ++to) {
            const int ti = to * geo.stride_t + at - geo.pad_t_begin;
            if (ti < 0 || ti >= tin) continue;
            const T* xrow = &xv[(static_cast<std::size_t>(ci) * tin + ti) * fin];
            T* orow = &oplane[static_cast<std::size_t>(to) * fout];
            for (int fo = 0; fo < fout; ++fo) orow[fo] += wk * xrow[fo * geo.stride_f + af];
          }
        }
  }

  auto xn = x.node(), wn = w.node(), bn = b.node();
  return detail::make_op<T>(
      {cout, tout, fout}, std::move(v), {xn, wn, bn},
      [xn, wn, bn, cin, tin, fin, cout, kt, kf, tout, fout, geo](Node<T>& out) {
        const auto& g = out.grad;
        if (bn->requires_grad) {
          bn->ensure_grad();
          for (int co = 0; co < cout; ++co) {
            T acc(0);
            const T* gplane = &g[static_cast<std::size_t>(co) * tout * fout];
            for (std::int64_t i = 0; i < static_cast<std::int64_t>(tout) * fout; ++i) acc += gplane[i];
            bn->grad[co] += acc;
          }
        }
        if (xn->requires_grad) xn->ensure_grad();
        if (wn->requires_grad) wn->ensure_grad();
        for (int co = 0; co < cout; ++co)
          for (int ci = 0; ci < cin; ++ci)
            for (int at = 0; at < kt; ++at)
              for (int af = 0; af < kf; ++af) {
                const std::size_t widx =
                    ((static_cast<std::size_t>(co) * cin + ci) * kt + at) * kf + af;
                const T wk = wn->value[widx];
                T wacc(0);
                for (int to = 0; to < tout; ++to) {
                  const int ti = to * geo.stride_t + at - geo.pad_t_begin;
                  if (ti < 0 || ti >= tin) continue;
                  const T* grow = &g[(static_cast<std::size_t>(co) * tout + to) * fout];
                  const T* xrow = &xn->value[(static_cast<std::size_t>(ci) * tin + ti) * fin];
                  T* gxrow =
                      xn->requires_grad ? &xn->grad[(static_cast<std::size_t>(ci) * tin + ti) * fin] : nullptr;
                  for (int fo = 0; fo < fout; ++fo) {
                    const int fi = fo * geo.stride_f + af;
                    wacc += grow[fo] * xrow[fi];
                    if (gxrow) gxrow[fi] += wk * grow[fo];
                  }
                }
                if (wn->requires_grad) wn->grad[widx] += wacc;
              }
      });
}

// Exact adjoint of conv2d with the same geometry: maps [Cin,Ti,Fi] back to
// [Cout,out_t,out_f], where conv2d(w,geo) applied to [Cout,out_t,out_f]
// would produce [Cin,Ti,Fi]. Weight layout is [Cin,Cout,kT,kF].
template <typename T>
Tensor<T> conv_transpose2d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b,
                           const ConvGeometry& geo, int out_t, int out_f) {
  require(x.shape().size() == 3 && w.shape().size() == 4, "conv_transpose2d: bad ranks");
  const int cin = x.shape()[0], tin = x.shape()[1], fin = x.shape()[2];
  const int cout = w.shape()[1], kt = w.shape()[2], kf = w.shape()[3];
  require(w.shape()[0] == cin, "conv_transpose2d: channel mismatch");
  require(b.shape() == std::vector<int>{cout}, "conv_transpose2d: bias shape mismatch");
  require(conv_out_dim(out_t, kt, geo.stride_t, geo.pad_t_begin + geo.pad_t_end) == tin &&
              conv_out_dim(out_f, kf, geo.stride_f, 0) == fin,
          "conv_transpose2d: geometry does not invert to the requested output shape");

  std::vector<T> v(static_cast<std::size_t>(cout) * out_t * out_f, T(0));
  const auto& xv = x.value();
  const auto& wv = w.value();
  const auto& bv = b.value();
  for (int co = 0; co < cout; ++co) {
    T* oplane = &v[static_cast<std::size_t>(co) * out_t * out_f];
    for (std::int64_t i = 0; i < static_cast<std::int64_t>(out_t) * out_f; ++i) oplane[i] = bv[co];
  }
  for (int ci = 0; ci < cin; ++ci)
    for (int co = 0; co < cout; ++co)
      for (int at = 0; at < kt; ++at)
        for (int af = 0; af < kf; ++af) {
          const T wk = wv[((static_cast<std::size_t>(ci) * cout + co) * kt + at) * kf + af];
          if (wk == T(0)) continue;
          for (int ti = 0; ti < tin; ++ti) {
            const int to = ti * geo.stride_t + at - geo.pad_t_begin;
            if (to < 0 || to >= out_t) continue;
            const T* xrow = &xv[(static_cast<std::size_t>(ci) * tin + ti) * fin];
            T* orow = &v[(static_cast<std::size_t>(co) * out_t + to) * out_f];
            for (int fi = 0; fi < fin; ++fi) orow[fi * geo.stride_f + af] += wk * xrow[fi];
          }
        }

  auto xn = x.node(), wn = w.node(), bn = b.node();
  return detail::make_op<T>(
      {cout, out_t, out_f}, std::move(v), {xn, wn, bn},
      [xn, wn, bn, cin, tin, fin, cout, kt, kf, out_t, out_f, geo](Node<T>& out) {
        const auto& g = out.grad;
        if (bn->requires_grad) {
          bn->ensure_grad();
          for (int co = 0; co < cout; ++co) {
            T acc(0);
            const T* gplane = &g[static_cast<std::size_t>(co) * out_t * out_f];
            for (std::int64_t i = 0; i < static_cast<std::int64_t>(out_t) * out_f; ++i)
              acc += gplane[i];
            bn->grad[co] += acc;
          }
        }
        if (xn->requires_grad) xn->ensure_grad();
        if (wn->requires_grad) wn->ensure_grad();
        for (int ci = 0; ci < cin; ++ci)
          for (int co = 0; co < cout; ++co)
            for (int at = 0; at < kt; ++at)
              for (int af = 0; af < kf; ++af) {
                const std::size_t widx =
                    ((static_cast<std::size_t>(ci) * cout + co) * kt + at) * kf + af;
                const T wk = wn->value[widx];
                T wacc(0);
                for (int ti = 0; ti < tin; ++ti) {
                  const int to = ti * geo.stride_t + at - geo.pad_t_begin;
                  if (to < 0 || to >= out_t) continue;
                  const T* grow = &g[(static_cast<std::size_t>(co) * out_t + to) * out_f];
                  const T* xrow = &xn->value[(static_cast<std::size_t>(ci) * tin + ti) * fin];
                  T* gxrow =
                      xn->requires_grad ? &xn->grad[(static_cast<std::size_t>(ci) * tin + ti) * fin] : nullptr;
                  for (int fi = 0; fi < fin; ++fi) {
                    const int fo = fi * geo.stride_f + af;
                    wacc += grow[fo] * xrow[fi];
                    if (gxrow) gxrow[fi] += wk * grow[fo];
                  }
                }
                if (wn->requires_grad) wn->grad[widx] += wacc;
              }
      });
}

// Layer normalization over (channel, frequency) per frame, with a learned
// per-channel affine. Statistics accumulate in double so that very large
// exp-domain activations cannot overflow the variance.
template <typename T>
Tensor<T> layer_norm_frame(const Tensor<T>& x, const Tensor<T>& gain, const Tensor<T>& bias,
                           double eps = 1e-5) {
  require(x.shape().size() == 3, "layer_norm_frame: rank-3 input required");
  const int C = x.shape()[0], tdim = x.shape()[1], F = x.shape()[2];
  require(gain.shape() == std::vector<int>{C} && bias.shape() == std::vector<int>{C},
          "layer_norm_frame: affine shape mismatch");
  const double group = static_cast<double>(C) * F;

  std::vector<double> mu(tdim), sigma(tdim);
  const auto& xv = x.value();
  for (int t = 0; t < tdim; ++t) {
    double sum = 0.0, sumsq = 0.0;
    for (int c = 0; c < C; ++c) {
      const T* row = &xv[(static_cast<std::size_t>(c) * tdim + t) * F];
      for (int f = 0; f < F; ++f) {
        const double val = static_cast<double>(row[f]);
        sum += val;
        sumsq += val * val;
      }
    }
    mu[t] = sum / group;
    const double var = std::max(sumsq / group - mu[t] * mu[t], 0.0);
    sigma[t] = std::sqrt(var + eps);
  }

  std::vector<T> v(xv.size());
  const auto& gv = gain.value();
  const auto& bv = bias.value();
  for (int c = 0; c < C; ++c)
    for (int t = 0; t < tdim; ++t) {
      const T* row = &xv[(static_cast<std::size_t>(c) * tdim + t) * F];
      T* orow = &v[(static_cast<std::size_t>(c) * tdim + t) * F];
      for (int f = 0; f < F; ++f) {
        const double xhat = (static_cast<double>(row[f]) - mu[t]) / sigma[t];
        orow[f] = static_cast<T>(static_cast<double>(gv[c]) * xhat + static_cast<double>(bv[c]));
      }
    }

  auto xn = x.node(), gn = gain.node(), bn = bias.node();
  return detail::make_op<T>(
      x.shape(), std::move(v), {xn, gn, bn},
      [xn, gn, bn, C, tdim, F, mu, sigma, group](Node<T>& out) {
        if (xn->requires_grad) xn->ensure_grad();
        if (gn->requires_grad) gn->ensure_grad();
        if (bn->requires_grad) bn->ensure_grad();
        std::vector<double> xhat(static_cast<std::size_t>(C) * F), dxhat(xhat.size());
        for (int t = 0; t < tdim; ++t) {
          double mean_dx = 0.0, mean_dx_xhat = 0.0;
          for (int c = 0; c < C; ++c)
            for (int f = 0; f < F; ++f) {
              const std::size_t idx = (static_cast<std::size_t>(c) * tdim + t) * F + f;
              const double xh = (static_cast<double>(xn->value[idx]) - mu[t]) / sigma[t];
              const double g = static_cast<double>(out.grad[idx]);
              xhat[c * F + f] = xh;
              dxhat[c * F + f] = g * static_cast<double>(gn->value[c]);
              if (gn->requires_grad) gn->grad[c] += static_cast<T>(g * xh);
              if (bn->requires_grad) bn->grad[c] += static_cast<T>(g);
              mean_dx += dxhat[c * F + f];
              mean_dx_xhat += dxhat[c * F + f] * xh;
            }
          mean_dx /= group;
          mean_dx_xhat /= group;
          if (xn->requires_grad)
            for (int c = 0; c < C; ++c)
              for (int f = 0; f < F; ++f) {
                const std::size_t idx = (static_cast<std::size_t>(c) * tdim + t) * F + f;
                xn->grad[idx] += static_cast<T>(
                    (dxhat[c * F + f] - mean_dx - xhat[c * F + f] * mean_dx_xhat) / sigma[t]);
              }
        }
      });
}

// Row-wise softmax over the causal prefix: row i attends to columns 0..i.
template <typename T>
Tensor<T> causal_softmax_rows(const Tensor<T>& s) {
  require(s.shape().size() == 2 && s.shape()[0] == s.shape()[1],
          "causal_softmax_rows: square matrix required");
  const int n = s.shape()[0];
  std::vector<T> v(static_cast<std::size_t>(n) * n, T(0));
  const auto& sv = s.value();
  for (int i = 0; i < n; ++i) {
    T mx = sv[i * n];
    for (int j = 1; j <= i; ++j) mx = std::max(mx, sv[i * n + j]);
    T denom(0);
    for (int j = 0; j <= i; ++j) {
      const T e = std::exp(sv[i * n + j] - mx);
      v[i * n + j] = e;
      denom += e;
    }
    for (int j = 0; j <= i; ++j) v[i * n + j] /= denom;
  }
  auto sn = s.node();
  return detail::make_op<T>({n, n}, std::move(v), {sn}, [sn, n](Node<T>& out) {
    sn->ensure_grad();
    for (int i = 0; i < n; ++i) {
      T gy(0);
      for (int j = 0; j <= i; ++j) gy += out.grad[i * n + j] * out.value[i * n + j];
      for (int j = 0; j <= i; ++j)
        sn->grad[i * n + j] += out.value[i * n + j] * (out.grad[i * n + j] - gy);
    }
  });
}

// [C,T,F] -> [T, C*F]: rows become time steps for the recurrent bottleneck.
template <typename T>
Tensor<T> fold_time_major(const Tensor<T>& x) {
  require(x.shape().size() == 3, "fold_time_major: rank-3 input required");
  const int C = x.shape()[0], tdim = x.shape()[1], F = x.shape()[2];
  std::vector<T> v(static_cast<std::size_t>(C) * tdim * F);
  const auto& xv = x.value();
  for (int c = 0; c < C; ++c)
    for (int t = 0; t < tdim; ++t)
      for (int f = 0; f < F; ++f)
        v[static_cast<std::size_t>(t) * C * F + c * F + f] =
            xv[(static_cast<std::size_t>(c) * tdim + t) * F + f];
  auto xn = x.node();
  return detail::make_op<T>({tdim, C * F}, std::move(v), {xn}, [xn, C, tdim, F](Node<T>& out) {
    xn->ensure_grad();
    for (int c = 0; c < C; ++c)
      for (int t = 0; t < tdim; ++t)
        for (int f = 0; f < F; ++f)
          xn->grad[(static_cast<std::size_t>(c) * tdim + t) * F + f] +=
              out.grad[static_cast<std::size_t>(t) * C * F + c * F + f];
  });
}

// Inverse of fold_time_major.
template <typename T>
Tensor<T> unfold_time_major(const Tensor<T>& x, int C, int F) {
  require(x.shape().size() == 2 && x.shape()[1] == C * F, "unfold_time_major: width mismatch");
  const int tdim = x.shape()[0];
  std::vector<T> v(static_cast<std::size_t>(C) * tdim * F);
  const auto& xv = x.value();
  for (int c = 0; c < C; ++c)
    for (int t = 0; t < tdim; ++t)
      for (int f = 0; f < F; ++f)
        v[(static_cast<std::size_t>(c) * tdim + t) * F + f] =
            xv[static_cast<std::size_t>(t) * C * F + c * F + f];
  auto xn = x.node();
  return detail::make_op<T>({C, tdim, F}, std::move(v), {xn}, [xn, C, tdim, F](Node<T>& out) {
    xn->ensure_grad();
    for (int c = 0; c < C; ++c)
      for (int t = 0; t < tdim; ++t)
        for (int f = 0; f < F; ++f)
          xn->grad[static_cast<std::size_t>(t) * C * F + c * F + f] +=
              out.grad[(static_cast<std::size_t>(c) * tdim + t) * F + f];
  });
}

// ---- complex pairs packed as [2,T,F] (real plane, imaginary plane) ----

template <typename T>
Tensor<T> creal(const Tensor<T>& x) {
  return slice(x, 0, 0, 1);
}
template <typename T>
Tensor<T> cimag(const Tensor<T>& x) {
  return slice(x, 0, 1, 1);
}
template <typename T>
Tensor<T> cpack(const Tensor<T>& re, const Tensor<T>& im) {
  return concat(0, std::vector<Tensor<T>>{re, im});
}

template <typename T>
Tensor<T> cmul(const Tensor<T>& a, const Tensor<T>& b) {
  auto ar = creal(a), ai = cimag(a), br = creal(b), bi = cimag(b);
  return cpack(sub(mul(ar, br), mul(ai, bi)), add(mul(ar, bi), mul(ai, br)));
}

template <typename T>
Tensor<T> cexp(const Tensor<T>& a) {
  auto mag = exp(creal(a));
  auto ang = cimag(a);
  return cpack(mul(mag, cos(ang)), mul(mag, sin(ang)));
}

// ---- signal-domain nodes ----

// Per-row DFT of a real matrix [T,L] -> packed complex [2,T,L].
// Backward: g_row = Re(L * idft(G)) for the packed gradient G.
template <typename T>
Tensor<T> dft_frames(const Tensor<T>& x) {
  require(x.shape().size() == 2, "dft_frames: rank-2 input required");
  const int tdim = x.shape()[0], L = x.shape()[1];
  std::vector<T> v(static_cast<std::size_t>(2) * tdim * L);
  const auto& xv = x.value();
  std::vector<signal::cplx> buf(L);
  for (int t = 0; t < tdim; ++t) {
    for (int m = 0; m < L; ++m) buf[m] = signal::cplx(static_cast<double>(xv[t * L + m]), 0.0);
    auto X = signal::dft(buf);
    for (int k = 0; k < L; ++k) {
      v[static_cast<std::size_t>(t) * L + k] = static_cast<T>(X[k].real());
      v[static_cast<std::size_t>(tdim) * L + t * L + k] = static_cast<T>(X[k].imag());
    }
  }
  auto xn = x.node();
  return detail::make_op<T>({2, tdim, L}, std::move(v), {xn}, [xn, tdim, L](Node<T>& out) {
    xn->ensure_grad();
    std::vector<signal::cplx> g(L);
    for (int t = 0; t < tdim; ++t) {
      for (int k = 0; k < L; ++k)
        g[k] = signal::cplx(static_cast<double>(out.grad[static_cast<std::size_t>(t) * L + k]),
                            static_cast<double>(
                                out.grad[static_cast<std::size_t>(tdim) * L + t * L + k]));
      auto gi = signal::idft(g);
      for (int m = 0; m < L; ++m)
        xn->grad[t * L + m] += static_cast<T>(gi[m].real() * static_cast<double>(L));
    }
  });
}

// WOLA ISTFT of a packed half spectrum [2,T,F] -> waveform [out_len].
// Forward matches signal::istft exactly; backward is its adjoint, one FFT
// per frame.
template <typename T>
Tensor<T> istft_wola(const Tensor<T>& x, int win_len, int hop, long out_len) {
  require(x.shape().size() == 3 && x.shape()[0] == 2, "istft_wola: packed [2,T,F] required");
  const int tdim = x.shape()[1], F = x.shape()[2];
  require(F == signal::half_bins(win_len), "istft_wola: bin count does not match window");
  const long span = win_len + static_cast<long>(tdim - 1) * hop;
  require(hop > 0 && out_len <= span, "istft_wola: out_len exceeds the reconstructable span");

  const auto window = signal::hann_window(win_len);
  const auto& xv = x.value();
  std::vector<std::vector<double>> frames(tdim);
  std::vector<signal::cplx> half(F);
  for (int t = 0; t < tdim; ++t) {
    for (int k = 0; k < F; ++k)
      half[k] = signal::cplx(
          static_cast<double>(xv[static_cast<std::size_t>(t) * F + k]),
          static_cast<double>(xv[static_cast<std::size_t>(tdim) * F + t * F + k]));
    frames[t] = signal::stft_detail::synthesis_frame(half, win_len);
  }
  auto wave = signal::stft_detail::overlap_add(frames, window, hop, out_len);

  // per-sample normalizer, needed again in backward
  std::vector<double> den(out_len, 0.0);
  for (int t = 0; t < tdim; ++t) {
    const long start = static_cast<long>(t) * hop;
    for (int m = 0; m < win_len; ++m) {
      const long idx = start + m;
      if (idx >= out_len) break;
      den[idx] += window[m] * window[m];
    }
  }
  for (auto& d : den) d = std::max(d, 1e-12);

  std::vector<T> v(out_len);
  for (long i = 0; i < out_len; ++i) v[i] = static_cast<T>(wave[i]);

  auto xn = x.node();
  return detail::make_op<T>(
      {static_cast<int>(out_len)}, std::move(v), {xn},
      [xn, tdim, F, win_len, hop, out_len, window, den](Node<T>& out) {
        xn->ensure_grad();
        const int L = win_len;
        const bool even = (L % 2 == 0);
        const int top = even ? L / 2 - 1 : (L - 1) / 2;
        std::vector<signal::cplx> u(L);
        for (int t = 0; t < tdim; ++t) {
          const long start = static_cast<long>(t) * hop;
          for (int m = 0; m < L; ++m) {
            const long idx = start + m;
            const double g =
                idx < out_len ? static_cast<double>(out.grad[idx]) * window[m] / den[idx] : 0.0;
            u[m] = signal::cplx(g, 0.0);
          }
          auto G = signal::dft(u);
          const double inv_l = 1.0 / static_cast<double>(L);
          for (int k = 0; k < F; ++k) {
            double gre = G[k].real();
            double gim = 0.0;
            if (k >= 1 && k <= top) {
              gre += G[L - k].real();
              gim = G[k].imag() - G[L - k].imag();
            }
            xn->grad[static_cast<std::size_t>(t) * F + k] += static_cast<T>(gre * inv_l);
            xn->grad[static_cast<std::size_t>(tdim) * F + t * F + k] +=
                static_cast<T>(gim * inv_l);
          }
        }
      });
}

}  // namespace homosynth::nn
