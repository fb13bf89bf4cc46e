#pragma once

// Forward/inverse DFT of arbitrary length. Powers of two run through an
// iterative radix-2 Cooley-Tukey; everything else goes through Bluestein's
// chirp-z construction, whose internal convolution is again a power of two.
// Both paths keep double precision so that idft(dft(x)) stays well below
// 1e-12 relative error for the frame lengths used here (160/320/512).

#include <complex>
#include <cmath>
#include <cstddef>
#include <memory>
#include <numbers>
#include <unordered_map>
#include <vector>

#include "homosynth/errors.hpp"

namespace homosynth::signal {

using cplx = std::complex<double>;

namespace fft_detail {

inline bool is_pow2(std::size_t n) { return n != 0 && (n & (n - 1)) == 0; }

inline std::size_t next_pow2(std::size_t n) {
  std::size_t m = 1;
  while (m < n) m <<= 1;
  return m;
}

// Twiddles for one power-of-two size, shared by forward and inverse.
struct Pow2Plan {
  std::size_t n = 0;
  std::vector<std::size_t> bitrev;
  std::vector<cplx> twiddle;  // exp(-2*pi*i*j/n), j < n/2

  explicit Pow2Plan(std::size_t size) : n(size), bitrev(size) {
    std::size_t log2n = 0;
    while ((std::size_t{1} << log2n) < n) ++log2n;
    for (std::size_t i = 0; i < n; ++i) {
      std::size_t r = 0;
      for (std::size_t b = 0; b < log2n; ++b)
        if (i & (std::size_t{1} << b)) r |= std::size_t{1} << (log2n - 1 - b);
      bitrev[i] = r;
    }
    twiddle.resize(n / 2);
    for (std::size_t j = 0; j < n / 2; ++j) {
      double ang = -2.0 * std::numbers::pi * static_cast<double>(j) / static_cast<double>(n);
      twiddle[j] = cplx(std::cos(ang), std::sin(ang));
    }
  }
};

inline const Pow2Plan& pow2_plan(std::size_t n) {
  thread_local std::unordered_map<std::size_t, std::unique_ptr<Pow2Plan>> cache;
  auto it = cache.find(n);
  if (it == cache.end()) it = cache.emplace(n, std::make_unique<Pow2Plan>(n)).first;
  return *it->second;
}

// In-place radix-2, data.size() must be a power of two.
inline void fft_pow2(std::vector<cplx>& data, bool inverse) {
  const std::size_t n = data.size();
  if (n == 1) return;
  const Pow2Plan& plan = pow2_plan(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t j = plan.bitrev[i];
    if (i < j) std::swap(data[i], data[j]);
  }
  for (std::size_t len = 2; len <= n; len <<= 1) {
    const std::size_t half = len >> 1;
    const std::size_t step = n / len;
    for (std::size_t start = 0; start < n; start += len) {
      for (std::size_t k = 0; k < half; ++k) {
        cplx w = plan.twiddle[k * step];
        if (inverse) w = std::conj(w);
        cplx u = data[start + k];
        cplx v = data[start + k + half] * w;
        data[start + k] = u + v;
        data[start + k + half] = u - v;
      }
    }
  }
  if (inverse) {
    const double scale = 1.0 / static_cast<double>(n);
    for (auto& v : data) v *= scale;
  }
}

// Chirp tables for one arbitrary size. B is the forward transform of the
// zero-padded, mirrored conjugate chirp and can be reused across calls.
struct BluesteinPlan {
  std::size_t n = 0;
  std::size_t m = 0;  // power-of-two convolution length >= 2n-1
  std::vector<cplx> chirp;    // exp(-i*pi*k^2/n)
  std::vector<cplx> b_fft;

  explicit BluesteinPlan(std::size_t size) : n(size), m(next_pow2(2 * size - 1)), chirp(size) {
    for (std::size_t k = 0; k < n; ++k) {
      // k^2 mod 2n keeps the angle argument small for large sizes
      unsigned long long ksq = (static_cast<unsigned long long>(k) * k) % (2ull * n);
      double ang = -std::numbers::pi * static_cast<double>(ksq) / static_cast<double>(n);
      chirp[k] = cplx(std::cos(ang), std::sin(ang));
    }
    std::vector<cplx> b(m, cplx(0.0, 0.0));
    for (std::size_t k = 0; k < n; ++k) {
      b[k] = std::conj(chirp[k]);
      if (k != 0) b[m - k] = std::conj(chirp[k]);
    }
    fft_pow2(b, false);
    b_fft = std::move(b);
  }
};

inline const BluesteinPlan& bluestein_plan(std::size_t n) {
  thread_local std::unordered_map<std::size_t, std::unique_ptr<BluesteinPlan>> cache;
  auto it = cache.find(n);
  if (it == cache.end()) it = cache.emplace(n, std::make_unique<BluesteinPlan>(n)).first;
  return *it->second;
}

inline void fft_bluestein(std::vector<cplx>& data) {
  const std::size_t n = data.size();
  const BluesteinPlan& plan = bluestein_plan(n);
  std::vector<cplx> a(plan.m, cplx(0.0, 0.0));
  for (std::size_t k = 0; k < n; ++k) a[k] = data[k] * plan.chirp[k];
  fft_pow2(a, false);
  for (std::size_t k = 0; k < plan.m; ++k) a[k] *= plan.b_fft[k];
  fft_pow2(a, true);
  for (std::size_t k = 0; k < n; ++k) data[k] = a[k] * plan.chirp[k];
}

// Dispatch: forward transform in place, any length >= 1.
inline void fft_any(std::vector<cplx>& data, bool inverse) {
  const std::size_t n = data.size();
  if (n == 1) return;
  if (is_pow2(n)) {
    fft_pow2(data, inverse);
    return;
  }
  if (!inverse) {
    fft_bluestein(data);
  } else {
    // idft(x) = conj(dft(conj(x))) / n
    for (auto& v : data) v = std::conj(v);
    fft_bluestein(data);
    const double scale = 1.0 / static_cast<double>(n);
    for (auto& v : data) v = std::conj(v) * scale;
  }
}

}  // namespace fft_detail

// X[z] = sum_n x[n] * exp(-i*2*pi*z*n/L), unnormalized.
inline std::vector<cplx> dft(std::vector<cplx> x) {
  require(!x.empty(), "dft: empty input");
  fft_detail::fft_any(x, false);
  return x;
}

// Inverse of dft, carries the 1/L normalization.
inline std::vector<cplx> idft(std::vector<cplx> x) {
  require(!x.empty(), "idft: empty input");
  fft_detail::fft_any(x, true);
  return x;
}

inline std::vector<cplx> dft_real(const std::vector<double>& x) {
  require(!x.empty(), "dft: empty input");
  std::vector<cplx> buf(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) buf[i] = cplx(x[i], 0.0);
  fft_detail::fft_any(buf, false);
  return buf;
}

}  // namespace homosynth::signal
