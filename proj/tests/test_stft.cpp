#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>
#include <vector>

#include "homosynth/stft.hpp"

using homosynth::signal::AudioClip;
using homosynth::signal::hann_window;
using homosynth::signal::istft;
using homosynth::signal::stft;

namespace {

AudioClip white_noise(std::size_t n, unsigned seed) {
  std::mt19937 gen(seed);
  std::uniform_real_distribution<double> dist(-0.5, 0.5);
  AudioClip clip;
  clip.samples.resize(n);
  for (auto& s : clip.samples) s = dist(gen);
  return clip;
}

// Relative L2 error over the interior, skipping win/2 samples at each end.
double interior_rel_err(const std::vector<double>& a, const std::vector<double>& b, int win) {
  double num = 0.0, den = 0.0;
  for (std::size_t i = win / 2; i + win / 2 < a.size(); ++i) {
    num += (a[i] - b[i]) * (a[i] - b[i]);
    den += b[i] * b[i];
  }
  return std::sqrt(num / den);
}

}  // namespace

TEST_CASE("hann window closed form", "[stft]") {
  auto w = hann_window(4);
  REQUIRE(w[0] == Catch::Approx(0.0).margin(1e-15));
  REQUIRE(w[1] == Catch::Approx(0.5).margin(1e-15));
  REQUIRE(w[2] == Catch::Approx(1.0).margin(1e-15));
  REQUIRE(w[3] == Catch::Approx(0.5).margin(1e-15));
  for (int len : {2, 5, 320, 512}) REQUIRE(hann_window(len)[0] == 0.0);
  REQUIRE_THROWS_AS(hann_window(1), homosynth::Error);
}

TEST_CASE("periodic hann at 50% overlap: window copies sum to 1, squared sum is hop-periodic",
          "[stft]") {
  // Direct summation for length 512, hop 256. The amplitude COLA constant is
  // exactly 1; the squared-window normalizer is not constant but is periodic
  // with the hop and strictly positive, which is what per-sample WOLA
  // normalization relies on.
  const int len = 512, hop = 256;
  auto w = hann_window(len);
  std::vector<double> cola(len * 4, 0.0), cola_sq(len * 4, 0.0);
  for (int shift = 0; shift * hop + len <= static_cast<int>(cola.size()); ++shift)
    for (int k = 0; k < len; ++k) {
      cola[shift * hop + k] += w[k];
      cola_sq[shift * hop + k] += w[k] * w[k];
    }
  for (int i = len; i < 3 * len; ++i) {
    REQUIRE(cola[i] == Catch::Approx(1.0).margin(1e-12));
    REQUIRE(cola_sq[i] > 0.0);
    REQUIRE(cola_sq[i] == Catch::Approx(cola_sq[i + hop]).margin(1e-12));
  }
}

TEST_CASE("stft bin counts match the framings", "[stft]") {
  auto clip = white_noise(16000, 3);
  REQUIRE(stft(clip, 512, 256).num_bins() == 257);
  REQUIRE(stft(clip, 320, 160).num_bins() == 161);
}

TEST_CASE("stft of silence is all zeros", "[stft]") {
  AudioClip clip;
  clip.samples.assign(4096, 0.0);
  auto spec = stft(clip, 512, 256);
  for (const auto& frame : spec.frames)
    for (const auto& v : frame) REQUIRE(std::abs(v) == 0.0);
}

TEST_CASE("clips shorter than one window are padded to a single frame", "[stft]") {
  AudioClip clip;
  clip.samples.assign(100, 0.25);
  auto spec = stft(clip, 512, 256);
  REQUIRE(spec.num_frames() == 1);
}

TEST_CASE("istft(stft(x)) is the identity on the interior", "[stft]") {
  for (auto [win, hop] : {std::pair{512, 256}, std::pair{320, 160}}) {
    auto clip = white_noise(16000, 17);
    auto spec = stft(clip, win, hop);
    auto back = istft(spec, win, hop, static_cast<long>(clip.samples.size()));
    INFO("framing (" << win << "," << hop << ")");
    REQUIRE(interior_rel_err(back.samples, clip.samples, win) < 1e-6);
  }
}

TEST_CASE("all-zero spectrum reconstructs silence", "[stft]") {
  AudioClip clip;
  clip.samples.assign(2048, 0.0);
  auto spec = stft(clip, 320, 160);
  auto back = istft(spec, 320, 160, 2048);
  for (double s : back.samples) REQUIRE(s == 0.0);
}

TEST_CASE("stft/istft argument validation", "[stft]") {
  auto clip = white_noise(1000, 5);
  REQUIRE_THROWS_AS(stft(clip, 512, 0), homosynth::Error);
  REQUIRE_THROWS_AS(stft(clip, 256, 512), homosynth::Error);
  auto spec = stft(clip, 320, 160);
  REQUIRE_THROWS_AS(istft(spec, 512, 256, 1000), homosynth::Error);
  long span = 320 + (spec.num_frames() - 1) * 160L;
  REQUIRE_THROWS_AS(istft(spec, 320, 160, span + 1), homosynth::Error);
}

TEST_CASE("real input spectra are consistent with conjugate symmetry", "[stft]") {
  // Reconstructing from the half spectrum must be lossless: compare a full
  // DFT of one windowed frame against the mirrored half spectrum.
  auto clip = white_noise(512, 23);
  auto spec = stft(clip, 512, 256);
  auto w = hann_window(512);
  std::vector<homosynth::signal::cplx> buf(512);
  for (int m = 0; m < 512; ++m) buf[m] = {clip.samples[m] * w[m], 0.0};
  auto full = homosynth::signal::dft(buf);
  auto mirrored = homosynth::signal::mirror_half_spectrum(spec.frames[0], 512);
  for (int k = 0; k < 512; ++k) REQUIRE(std::abs(full[k] - mirrored[k]) < 1e-9);
}
