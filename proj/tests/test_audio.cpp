#include <catch2/catch_amalgamated.hpp>

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <random>
#include <vector>

#include "homosynth/audio.hpp"

using homosynth::signal::AudioClip;
using homosynth::signal::read_wav;
using homosynth::signal::write_wav;

namespace {

std::filesystem::path tmp_path(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / "homosynth_tests";
  std::filesystem::create_directories(dir);
  return dir / name;
}

void put_u16(std::ofstream& os, std::uint16_t v) {
  char b[2] = {static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff)};
  os.write(b, 2);
}
void put_u32(std::ofstream& os, std::uint32_t v) {
  char b[4] = {static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff),
               static_cast<char>((v >> 16) & 0xff), static_cast<char>((v >> 24) & 0xff)};
  os.write(b, 4);
}

// Hand-rolled writer so the reader is tested against independent bytes.
void write_raw_wav(const std::string& path, const std::vector<std::int16_t>& pcm,
                   std::uint16_t format_tag, std::uint16_t channels, std::uint32_t rate,
                   std::uint16_t bits) {
  std::ofstream os(path, std::ios::binary);
  std::uint32_t data_bytes = static_cast<std::uint32_t>(pcm.size() * 2);
  os.write("RIFF", 4);
  put_u32(os, 36 + data_bytes);
  os.write("WAVE", 4);
  os.write("fmt ", 4);
  put_u32(os, 16);
  put_u16(os, format_tag);
  put_u16(os, channels);
  put_u32(os, rate);
  put_u32(os, rate * channels * bits / 8);
  put_u16(os, static_cast<std::uint16_t>(channels * bits / 8));
  put_u16(os, bits);
  os.write("data", 4);
  put_u32(os, data_bytes);
  for (auto v : pcm) put_u16(os, static_cast<std::uint16_t>(v));
}

std::vector<std::int16_t> read_pcm_payload(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(is)),
                                   std::istreambuf_iterator<char>());
  // data chunk starts at byte 44 for the canonical header written here
  std::vector<std::int16_t> pcm;
  for (std::size_t i = 44; i + 1 < bytes.size(); i += 2)
    pcm.push_back(static_cast<std::int16_t>(bytes[i] | (bytes[i + 1] << 8)));
  return pcm;
}

}  // namespace

TEST_CASE("fixed-point scaling maps PCM to [-1,1)", "[audio]") {
  auto path = tmp_path("scaling.wav").string();
  write_raw_wav(path, {0, 16384, -32768}, 1, 1, 16000, 16);
  auto clip = read_wav(path);
  REQUIRE(clip.samples.size() == 3);
  REQUIRE(clip.samples[0] == 0.0);
  REQUIRE(clip.samples[1] == 0.5);
  REQUIRE(clip.samples[2] == -1.0);
  REQUIRE(clip.sample_rate == 16000);
}

TEST_CASE("one second of 16 kHz audio is 16000 samples", "[audio]") {
  auto path = tmp_path("one_second.wav").string();
  write_raw_wav(path, std::vector<std::int16_t>(16000, 123), 1, 1, 16000, 16);
  REQUIRE(read_wav(path).samples.size() == 16000);
}

TEST_CASE("unsupported formats are rejected by name", "[audio]") {
  auto stereo = tmp_path("stereo_44k.wav").string();
  write_raw_wav(stereo, {0, 0, 0, 0}, 1, 2, 44100, 16);
  REQUIRE_THROWS_WITH(read_wav(stereo),
                      Catch::Matchers::ContainsSubstring("unsupported format") &&
                          Catch::Matchers::ContainsSubstring("44100") &&
                          Catch::Matchers::ContainsSubstring("16000"));

  auto float_fmt = tmp_path("float_fmt.wav").string();
  write_raw_wav(float_fmt, {0, 0}, 3, 1, 16000, 16);
  REQUIRE_THROWS_WITH(read_wav(float_fmt), Catch::Matchers::ContainsSubstring("unsupported format"));
}

TEST_CASE("missing file raises an error naming the path", "[audio]") {
  REQUIRE_THROWS_WITH(read_wav("/nonexistent/nope.wav"),
                      Catch::Matchers::ContainsSubstring("/nonexistent/nope.wav"));
}

TEST_CASE("write then read reproduces zeros exactly and 0.5 as PCM 16384", "[audio]") {
  auto path = tmp_path("zeros.wav").string();
  AudioClip clip;
  clip.samples.assign(64, 0.0);
  REQUIRE(write_wav(path, clip) == 0);
  auto back = read_wav(path);
  REQUIRE(back.samples == clip.samples);

  auto path2 = tmp_path("half.wav").string();
  clip.samples = {0.5};
  write_wav(path2, clip);
  auto pcm = read_pcm_payload(path2);
  REQUIRE(pcm.size() == 1);
  REQUIRE(pcm[0] == 16384);
}

TEST_CASE("out-of-range samples saturate and are counted", "[audio]") {
  auto path = tmp_path("clip.wav").string();
  AudioClip clip;
  clip.samples = {1.5, 0.0, -2.0};
  REQUIRE(write_wav(path, clip) == 2);
  auto pcm = read_pcm_payload(path);
  REQUIRE(pcm[0] == 32767);
  REQUIRE(pcm[2] == -32768);
}

TEST_CASE("round trip stays within one quantization step", "[audio]") {
  auto path = tmp_path("roundtrip.wav").string();
  std::mt19937 gen(11);
  std::uniform_real_distribution<double> dist(-0.999, 0.999);
  AudioClip clip;
  clip.samples.resize(2048);
  for (auto& s : clip.samples) s = dist(gen);
  REQUIRE(write_wav(path, clip) == 0);
  auto back = read_wav(path);
  REQUIRE(back.samples.size() == clip.samples.size());
  for (std::size_t i = 0; i < clip.samples.size(); ++i)
    REQUIRE(std::abs(back.samples[i] - clip.samples[i]) <= 1.0 / 32768.0);
}

TEST_CASE("unwritable path is an error", "[audio]") {
  AudioClip clip;
  clip.samples = {0.0};
  REQUIRE_THROWS_AS(write_wav("/nonexistent_dir/out.wav", clip), homosynth::Error);
}
