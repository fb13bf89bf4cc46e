#pragma once

// Framing, periodic Hann window, STFT and weighted-overlap-add ISTFT.
// DFT size always equals the window length (512 -> 257 bins, 320 -> 161).
// Reconstruction divides by the accumulated squared synthesis window per
// sample, so it is exact in the interior regardless of COLA constants.

#include <algorithm>
#include <cmath>
#include <complex>
#include <vector>

#include "homosynth/audio.hpp"
#include "homosynth/errors.hpp"
#include "homosynth/fft.hpp"

namespace homosynth::signal {

struct ComplexSpectrum {
  std::vector<std::vector<cplx>> frames;  // T x F, F = half-spectrum bins
  int dft_size = 0;
  int hop = 0;

  int num_frames() const { return static_cast<int>(frames.size()); }
  int num_bins() const { return frames.empty() ? 0 : static_cast<int>(frames[0].size()); }
};

// Half-spectrum bin count for a DFT of length L.
inline int half_bins(int dft_size) {
  return dft_size % 2 == 0 ? dft_size / 2 + 1 : (dft_size + 1) / 2;
}

// Periodic (DFT-even) Hann: w[k] = 0.5 - 0.5*cos(2*pi*k/length).
inline std::vector<double> hann_window(int length) {
  require(length >= 2, "hann_window: length must be >= 2");
  std::vector<double> w(length);
  for (int k = 0; k < length; ++k)
    w[k] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * k / static_cast<double>(length));
  return w;
}

// Mirror a half spectrum back to the full conjugate-symmetric spectrum.
inline std::vector<cplx> mirror_half_spectrum(const std::vector<cplx>& half, int dft_size) {
  require(static_cast<int>(half.size()) == half_bins(dft_size),
          "mirror_half_spectrum: bin count does not match dft size");
  std::vector<cplx> full(dft_size);
  std::copy(half.begin(), half.end(), full.begin());
  const int top = dft_size % 2 == 0 ? dft_size / 2 - 1 : (dft_size - 1) / 2;
  for (int k = 1; k <= top; ++k) full[dft_size - k] = std::conj(half[k]);
  return full;
}

inline ComplexSpectrum stft(const AudioClip& clip, int win_len, int hop) {
  require(hop > 0, "stft: hop must be positive");
  require(hop <= win_len, "stft: hop must not exceed the window length");
  require(win_len >= 2, "stft: window length must be >= 2");
  for (double s : clip.samples)
    require(std::isfinite(s), "stft: non-finite sample");

  const auto n = static_cast<long>(clip.samples.size());
  long frames = 1;
  if (n > win_len) frames = 1 + (n - win_len + hop - 1) / hop;  // pad tail to a full frame

  const auto w = hann_window(win_len);
  const int bins = half_bins(win_len);

  ComplexSpectrum spec;
  spec.dft_size = win_len;
  spec.hop = hop;
  spec.frames.resize(frames);
  std::vector<cplx> buf(win_len);
  for (long t = 0; t < frames; ++t) {
    const long start = t * hop;
    for (int m = 0; m < win_len; ++m) {
      const long idx = start + m;
      const double x = idx < n ? clip.samples[idx] : 0.0;
      buf[m] = cplx(x * w[m], 0.0);
    }
    auto X = dft(buf);
    spec.frames[t].assign(X.begin(), X.begin() + bins);
  }
  return spec;
}

namespace stft_detail {

// Shared WOLA core, reused by the autodiff istft node. Frames are the
// full-length real synthesis frames (already inverse transformed).
inline std::vector<double> overlap_add(const std::vector<std::vector<double>>& frames,
                                       const std::vector<double>& window, int hop, long out_len) {
  const int win_len = static_cast<int>(window.size());
  std::vector<double> num(out_len, 0.0), den(out_len, 0.0);
  for (std::size_t t = 0; t < frames.size(); ++t) {
    const long start = static_cast<long>(t) * hop;
    for (int m = 0; m < win_len; ++m) {
      const long idx = start + m;
      if (idx >= out_len) break;
      num[idx] += window[m] * frames[t][m];
      den[idx] += window[m] * window[m];
    }
  }
  std::vector<double> y(out_len);
  for (long i = 0; i < out_len; ++i) y[i] = num[i] / std::max(den[i], 1e-12);
  return y;
}

inline std::vector<double> synthesis_frame(const std::vector<cplx>& half, int dft_size) {
  auto full = mirror_half_spectrum(half, dft_size);
  auto x = idft(std::move(full));
  std::vector<double> frame(dft_size);
  for (int m = 0; m < dft_size; ++m) frame[m] = x[m].real();
  return frame;
}

}  // namespace stft_detail

inline AudioClip istft(const ComplexSpectrum& spec, int win_len, int hop, long out_len) {
  require(hop > 0, "istft: hop must be positive");
  require(spec.dft_size == win_len, "istft: spectrum dft size does not match window length");
  require(spec.num_frames() > 0, "istft: empty spectrum");
  require(spec.num_bins() == half_bins(win_len), "istft: bin count does not match window length");
  const long span = win_len + static_cast<long>(spec.num_frames() - 1) * hop;
  require(out_len <= span, "istft: out_len exceeds the reconstructable span");

  const auto w = hann_window(win_len);
  std::vector<std::vector<double>> frames(spec.num_frames());
  for (int t = 0; t < spec.num_frames(); ++t)
    frames[t] = stft_detail::synthesis_frame(spec.frames[t], win_len);

  AudioClip clip;
  clip.sample_rate = 16000;
  clip.samples = stft_detail::overlap_add(frames, w, hop, out_len);
  return clip;
}

}  // namespace homosynth::signal
