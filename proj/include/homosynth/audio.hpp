#pragma once

// 16 kHz / 16-bit / mono PCM WAV reader and writer. Anything else is
// rejected with an error that names the expected and the found format;
// there is deliberately no resampling or channel mixing.

#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "homosynth/errors.hpp"

namespace homosynth::signal {

struct AudioClip {
  std::vector<double> samples;  // nominal range [-1, 1)
  int sample_rate = 16000;

  double duration_seconds() const {
    return sample_rate > 0 ? static_cast<double>(samples.size()) / sample_rate : 0.0;
  }
};

namespace wav_detail {

constexpr int kRequiredRate = 16000;
constexpr int kRequiredBits = 16;
constexpr int kRequiredChannels = 1;
constexpr double kScale = 32768.0;

inline std::uint16_t read_u16(const unsigned char* p) {
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}
inline std::uint32_t read_u32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}
inline void put_u16(std::ostream& os, std::uint16_t v) {
  char b[2] = {static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff)};
  os.write(b, 2);
}
inline void put_u32(std::ostream& os, std::uint32_t v) {
  char b[4] = {static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff),
               static_cast<char>((v >> 16) & 0xff), static_cast<char>((v >> 24) & 0xff)};
  os.write(b, 4);
}

}  // namespace wav_detail

inline AudioClip read_wav(const std::string& path) {
  using namespace wav_detail;
  std::ifstream in(path, std::ios::binary);
  require(in.good(), "read_wav: cannot open file: " + path);
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());
  require(bytes.size() >= 12, "read_wav: file too short to be a WAV container: " + path);
  require(std::memcmp(bytes.data(), "RIFF", 4) == 0 && std::memcmp(bytes.data() + 8, "WAVE", 4) == 0,
          "read_wav: not a RIFF/WAVE file: " + path);

  bool have_fmt = false;
  std::uint16_t format_tag = 0, channels = 0, bits = 0;
  std::uint32_t rate = 0;
  const unsigned char* data_ptr = nullptr;
  std::size_t data_len = 0;

  std::size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const unsigned char* hdr = bytes.data() + pos;
    std::uint32_t chunk_len = read_u32(hdr + 4);
    std::size_t body = pos + 8;
    if (body + chunk_len > bytes.size()) chunk_len = static_cast<std::uint32_t>(bytes.size() - body);
    if (std::memcmp(hdr, "fmt ", 4) == 0) {
      require(chunk_len >= 16, "read_wav: malformed fmt chunk: " + path);
      const unsigned char* f = bytes.data() + body;
      format_tag = read_u16(f);
      channels = read_u16(f + 2);
      rate = read_u32(f + 4);
      bits = read_u16(f + 14);
      have_fmt = true;
    } else if (std::memcmp(hdr, "data", 4) == 0) {
      data_ptr = bytes.data() + body;
      data_len = chunk_len;
    }
    pos = body + chunk_len + (chunk_len & 1);  // chunks are word-aligned
  }

  require(have_fmt && data_ptr != nullptr, "read_wav: missing fmt or data chunk: " + path);
  if (format_tag != 1 || channels != kRequiredChannels || rate != kRequiredRate ||
      bits != kRequiredBits) {
    fail("read_wav: unsupported format in " + path + ": expected PCM(1)/" +
         std::to_string(kRequiredChannels) + "ch/" + std::to_string(kRequiredRate) + "Hz/" +
         std::to_string(kRequiredBits) + "bit, found tag " + std::to_string(format_tag) + "/" +
         std::to_string(channels) + "ch/" + std::to_string(rate) + "Hz/" + std::to_string(bits) +
         "bit");
  }

  AudioClip clip;
  clip.sample_rate = kRequiredRate;
  const std::size_t n = data_len / 2;
  clip.samples.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    auto raw = static_cast<std::int16_t>(read_u16(data_ptr + 2 * i));
    clip.samples[i] = static_cast<double>(raw) / kScale;
  }
  return clip;
}

// Returns the number of samples that fell outside [-1, 1] and were clipped.
inline int write_wav(const std::string& path, const AudioClip& clip) {
  using namespace wav_detail;
  for (double s : clip.samples)
    require(std::isfinite(s), "write_wav: non-finite sample");

  std::ofstream out(path, std::ios::binary);
  require(out.good(), "write_wav: cannot open file for writing: " + path);

  const std::uint32_t n = static_cast<std::uint32_t>(clip.samples.size());
  const std::uint32_t data_bytes = n * 2;
  const std::uint32_t rate = static_cast<std::uint32_t>(clip.sample_rate);

  out.write("RIFF", 4);
  put_u32(out, 36 + data_bytes);
  out.write("WAVE", 4);
  out.write("fmt ", 4);
  put_u32(out, 16);
  put_u16(out, 1);  // PCM
  put_u16(out, kRequiredChannels);
  put_u32(out, rate);
  put_u32(out, rate * 2);
  put_u16(out, 2);
  put_u16(out, kRequiredBits);
  out.write("data", 4);
  put_u32(out, data_bytes);

  int clipped = 0;
  for (double s : clip.samples) {
    if (s < -1.0 || s > 1.0) ++clipped;
    long q = std::lround(s * kScale);
    if (q > 32767) q = 32767;
    if (q < -32768) q = -32768;
    put_u16(out, static_cast<std::uint16_t>(static_cast<std::int16_t>(q)));
  }
  out.flush();
  require(out.good(), "write_wav: write failed: " + path);
  return clipped;
}

}  // namespace homosynth::signal
