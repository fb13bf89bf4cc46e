#pragma once

// Complex-cepstrum analysis and synthesis of framed speech, plus the two
// liftering variants (binary cut and ratio mask) and spectral recomposition.
//
// Analysis factors each frame's spectrum as
//   X[k] = sign * exp(Y[k]) * exp(i*2*pi*r*k/L)
// where sign is the DC polarity, r an integer delay in samples, and Y the
// conjugate-symmetric log spectrum. Y is built from the half spectrum and
// mirrored explicitly, so its IDFT is real up to rounding and the exp/log
// chain inverts exactly: any 2*pi branch ambiguity in the unwrapped phase
// cancels inside the complex exponential. The sign factor is carried
// per frame because a frame with negative DC gain has no real complex
// cepstrum at all; without it the round trip breaks at bin zero.

#include <algorithm>
#include <cmath>
#include <complex>
#include <vector>

#include "homosynth/errors.hpp"
#include "homosynth/stft.hpp"

namespace homosynth::homomorphic {

using signal::ComplexSpectrum;
using signal::cplx;

constexpr double kMagnitudeFloor = 1e-10;

struct Cepstrum {
  std::vector<std::vector<double>> frames;  // T x L, quefrency domain
  std::vector<int> linear_phase;            // removed delay per frame, samples
  std::vector<int> frame_sign;              // DC polarity per frame, +1 or -1
  int dft_size = 0;
  int hop = 0;
  long floored_bins = 0;        // magnitude-floor activations during analysis
  double max_imag_residue = 0;  // largest |imag| discarded by the analysis IDFT

  int num_frames() const { return static_cast<int>(frames.size()); }
};

struct LifterMask {
  std::vector<std::vector<double>> values;  // T x L, entries in [0,1]

  int num_frames() const { return static_cast<int>(values.size()); }
};

struct LifterSplit {
  Cepstrum excitation;
  Cepstrum vocal;
};

namespace detail {

inline double wrap_to_pi(double d) {
  return d - 2.0 * std::numbers::pi * std::round(d / (2.0 * std::numbers::pi));
}

}  // namespace detail

inline Cepstrum cepstrum_analyze(const ComplexSpectrum& spec) {
  const int L = spec.dft_size;
  const int F = signal::half_bins(L);
  const int T = spec.num_frames();
  require(L >= 2 && T > 0, "cepstrum_analyze: empty spectrum");
  require(spec.num_bins() == F, "cepstrum_analyze: bin count does not match dft size");

  Cepstrum cep;
  cep.dft_size = L;
  cep.hop = spec.hop;
  cep.frames.resize(T);
  cep.linear_phase.resize(T);
  cep.frame_sign.resize(T);

  const bool even = (L % 2 == 0);
  std::vector<double> mag(F), phase(F);
  std::vector<cplx> log_spec(L);

  for (int t = 0; t < T; ++t) {
    const auto& half = spec.frames[t];
    for (const auto& v : half)
      require(std::isfinite(v.real()) && std::isfinite(v.imag()),
              "cepstrum_analyze: non-finite spectrum entry");

    const int sign = half[0].real() < 0.0 ? -1 : 1;
    for (int k = 0; k < F; ++k) {
      double m = std::abs(half[k]);
      if (m < kMagnitudeFloor) {
        m = kMagnitudeFloor;
        ++cep.floored_bins;
      }
      mag[k] = m;
    }

    // Raw phase of sign*X over the half spectrum. DC is 0 by the sign
    // factoring; the Nyquist bin of a real frame is real, so its phase is
    // pinned to {0, pi} instead of trusting atan2 on roundoff noise.
    phase[0] = 0.0;
    for (int k = 1; k < F; ++k) {
      const cplx v = static_cast<double>(sign) * half[k];
      if (even && k == L / 2)
        phase[k] = v.real() >= 0.0 ? 0.0 : std::numbers::pi;
      else
        phase[k] = std::atan2(v.imag(), v.real());
    }
    // Unwrap along frequency.
    for (int k = 1; k < F; ++k) phase[k] = phase[k - 1] + detail::wrap_to_pi(phase[k] - phase[k - 1]);
    // Integer linear-phase slope (delay in samples), estimated at the top bin.
    const int k_last = F - 1;
    long r = 0;
    if (k_last > 0)
      r = std::lround(phase[k_last] * L / (2.0 * std::numbers::pi * k_last));
    for (int k = 0; k < F; ++k)
      phase[k] -= 2.0 * std::numbers::pi * static_cast<double>(r) * k / L;

    // Conjugate-symmetric log spectrum, mirrored explicitly.
    for (int k = 0; k < F; ++k) log_spec[k] = cplx(std::log(mag[k]), phase[k]);
    const int top = even ? L / 2 - 1 : (L - 1) / 2;
    for (int k = 1; k <= top; ++k) log_spec[L - k] = std::conj(log_spec[k]);

    auto c = signal::idft(log_spec);
    auto& row = cep.frames[t];
    row.resize(L);
    for (int q = 0; q < L; ++q) {
      row[q] = c[q].real();
      cep.max_imag_residue = std::max(cep.max_imag_residue, std::abs(c[q].imag()));
    }
    cep.linear_phase[t] = static_cast<int>(r);
    cep.frame_sign[t] = sign;
  }
  require(cep.max_imag_residue < 1e-8,
          "cepstrum_analyze: analysis IDFT imaginary residue exceeds 1e-8");
  return cep;
}

inline ComplexSpectrum cepstrum_synthesize(const Cepstrum& cep) {
  const int L = cep.dft_size;
  const int F = signal::half_bins(L);
  const int T = cep.num_frames();
  require(L >= 2 && T > 0, "cepstrum_synthesize: empty cepstrum");
  require(static_cast<int>(cep.linear_phase.size()) == T &&
              static_cast<int>(cep.frame_sign.size()) == T,
          "cepstrum_synthesize: per-frame bookkeeping missing");

  ComplexSpectrum spec;
  spec.dft_size = L;
  spec.hop = cep.hop;
  spec.frames.resize(T);
  for (int t = 0; t < T; ++t) {
    const auto& row = cep.frames[t];
    require(static_cast<int>(row.size()) == L, "cepstrum_synthesize: frame length mismatch");
    for (double v : row) require(std::isfinite(v), "cepstrum_synthesize: non-finite cepstrum");
    auto C = signal::dft_real(row);
    auto& out = spec.frames[t];
    out.resize(F);
    const double sign = static_cast<double>(cep.frame_sign[t]);
    const double slope = 2.0 * std::numbers::pi * cep.linear_phase[t] / L;
    for (int k = 0; k < F; ++k) {
      const cplx rot(std::cos(slope * k), std::sin(slope * k));
      out[k] = sign * std::exp(C[k]) * rot;
    }
  }
  return spec;
}

// Binary 0/1 mask selecting the vocal-tract quefrency region. The region is
// symmetric ({q < N} plus {q > L-N}) unless one_sided is set, which keeps
// the literal one-sided cut for comparison.
inline LifterMask traditional_vocal_mask(int T, int L, int N, bool one_sided = false) {
  require(N >= 1 && N <= L / 2, "lifter_traditional: N out of range [1, L/2]");
  LifterMask mask;
  mask.values.assign(T, std::vector<double>(L, 0.0));
  for (auto& row : mask.values)
    for (int q = 0; q < L; ++q) {
      const bool low = q < N;
      const bool high = !one_sided && q > L - N;
      row[q] = (low || high) ? 1.0 : 0.0;
    }
  return mask;
}

namespace detail {

// Shared elementwise split. Excitation takes mask*c, vocal (1-mask)*c; the
// vocal branch inherits the stored delay and sign so recomposition applies
// them exactly once.
inline LifterSplit split_by_mask(const Cepstrum& cep, const LifterMask& mask) {
  const int T = cep.num_frames();
  const int L = cep.dft_size;
  LifterSplit out;
  out.excitation = cep;
  out.vocal = cep;
  std::fill(out.excitation.linear_phase.begin(), out.excitation.linear_phase.end(), 0);
  std::fill(out.excitation.frame_sign.begin(), out.excitation.frame_sign.end(), 1);
  for (int t = 0; t < T; ++t) {
    const auto& c = cep.frames[t];
    const auto& m = mask.values[t];
    auto& e = out.excitation.frames[t];
    auto& v = out.vocal.frames[t];
    for (int q = 0; q < L; ++q) {
      e[q] = m[q] * c[q];
      v[q] = (1.0 - m[q]) * c[q];
    }
  }
  return out;
}

}  // namespace detail

inline LifterSplit apply_mask_lifter(const Cepstrum& cep, const LifterMask& mask) {
  require(mask.num_frames() == cep.num_frames(), "apply_mask_lifter: frame count mismatch");
  for (int t = 0; t < cep.num_frames(); ++t) {
    require(mask.values[t].size() == cep.frames[t].size(),
            "apply_mask_lifter: frame length mismatch");
    for (double m : mask.values[t])
      require(m >= 0.0 && m <= 1.0, "apply_mask_lifter: mask entry outside [0,1]");
  }
  return detail::split_by_mask(cep, mask);
}

// Binary liftering at quefrency N. Kept as its own code path (the mask is
// built locally) but arithmetically identical to apply_mask_lifter with the
// corresponding 0/1 mask; note the mask semantics here give the vocal branch
// the low-quefrency region, so excitation = (1 - vocal_mask) * c.
inline LifterSplit lifter_traditional(const Cepstrum& cep, int N, bool one_sided = false) {
  const int T = cep.num_frames();
  const int L = cep.dft_size;
  require(N >= 1 && N <= L / 2, "lifter_traditional: N out of range [1, L/2]");
  LifterSplit out;
  out.excitation = cep;
  out.vocal = cep;
  std::fill(out.excitation.linear_phase.begin(), out.excitation.linear_phase.end(), 0);
  std::fill(out.excitation.frame_sign.begin(), out.excitation.frame_sign.end(), 1);
  for (int t = 0; t < T; ++t) {
    const auto& c = cep.frames[t];
    auto& e = out.excitation.frames[t];
    auto& v = out.vocal.frames[t];
    for (int q = 0; q < L; ++q) {
      const bool vocal_region = q < N || (!one_sided && q > L - N);
      const double lv = vocal_region ? 1.0 : 0.0;
      v[q] = lv * c[q];
      e[q] = (1.0 - lv) * c[q];
    }
  }
  return out;
}

// Elementwise complex product of the component spectra.
inline ComplexSpectrum recompose(const ComplexSpectrum& excitation, const ComplexSpectrum& vocal) {
  require(excitation.dft_size == vocal.dft_size && excitation.hop == vocal.hop &&
              excitation.num_frames() == vocal.num_frames() &&
              excitation.num_bins() == vocal.num_bins(),
          "recompose: dimension mismatch");
  ComplexSpectrum out = excitation;
  for (int t = 0; t < out.num_frames(); ++t)
    for (int k = 0; k < out.num_bins(); ++k) out.frames[t][k] *= vocal.frames[t][k];
  return out;
}

}  // namespace homosynth::homomorphic
