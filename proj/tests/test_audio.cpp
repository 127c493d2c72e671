#include <doctest.h>

#include <cmath>
#include <fstream>
#include <random>

#include "lpwn/audio.hpp"
#include "lpwn/error.hpp"
#include "support.hpp"

using namespace lpwn;

namespace {

// Minimal RIFF writer used to craft inputs that write_wav never produces.
void write_raw_wav(const std::filesystem::path& p, std::uint16_t channels,
                   std::uint16_t bits, const std::vector<std::int16_t>& pcm) {
  auto u32 = [](std::ofstream& f, std::uint32_t v) { f.write(reinterpret_cast<char*>(&v), 4); };
  auto u16 = [](std::ofstream& f, std::uint16_t v) { f.write(reinterpret_cast<char*>(&v), 2); };
  std::ofstream f(p, std::ios::binary);
  const std::uint32_t data = std::uint32_t(pcm.size() * 2);
  f.write("RIFF", 4);
  u32(f, 36 + data);
  f.write("WAVEfmt ", 8);
  u32(f, 16);
  u16(f, 1);
  u16(f, channels);
  u32(f, 16000);
  u32(f, 16000 * channels * bits / 8);
  u16(f, std::uint16_t(channels * bits / 8));
  u16(f, bits);
  f.write("data", 4);
  u32(f, data);
  f.write(reinterpret_cast<const char*>(pcm.data()), std::streamsize(data));
}

}  // namespace

TEST_SUITE("audio") {

TEST_CASE("read_wav scales PCM by 1/32768") {
  const auto dir = test::tmp_dir("audio_read");
  write_raw_wav(dir / "a.wav", 1, 16, {0, -32768, 16384});
  const AudioBuffer b = read_wav(dir / "a.wav");
  REQUIRE(b.size() == 3);
  CHECK(b.samples[0] == 0.0);
  CHECK(b.samples[1] == -1.0);
  CHECK(b.samples[2] == 0.5);
  CHECK(b.sample_rate == 16000);
}

TEST_CASE("read_wav rejects stereo, malformed and missing files") {
  const auto dir = test::tmp_dir("audio_bad");
  write_raw_wav(dir / "stereo.wav", 2, 16, {0, 0, 0, 0});
  try {
    read_wav(dir / "stereo.wav");
    FAIL("stereo accepted");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kUnsupportedFormat);
  }
  {
    std::ofstream f(dir / "junk.wav", std::ios::binary);
    f << "not a wav file at all";
  }
  try {
    read_wav(dir / "junk.wav");
    FAIL("junk accepted");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kFormat);
  }
  CHECK_THROWS_AS(read_wav(dir / "missing.wav"), Error);
}

TEST_CASE("write_wav examples") {
  const auto dir = test::tmp_dir("audio_write");
  CHECK(to_pcm16(0.0) == 0);
  CHECK(to_pcm16(1.0) == 32767);
  CHECK(to_pcm16(-1.0) == -32768);
  AudioBuffer b;
  b.samples = {0.0, 1.0, 1.5, -2.0};
  const WavWriteSummary s = write_wav(b, dir / "w.wav");
  CHECK(s.samples_written == 4);
  CHECK(s.clamped == 2);
  const AudioBuffer r = read_wav(dir / "w.wav");
  CHECK(r.samples[0] == 0.0);
  CHECK(r.samples[1] == 32767.0 / 32768.0);
  CHECK(r.samples[3] == -1.0);
}

TEST_CASE("WAV round trip over every PCM code stays within 1/32768") {
  const auto dir = test::tmp_dir("audio_roundtrip");
  AudioBuffer b;
  for (int k = -32768; k <= 32767; ++k) b.samples.push_back(k / 32768.0);
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int i = 0; i < 20000; ++i) b.samples.push_back(u(rng));
  write_wav(b, dir / "rt.wav");
  const AudioBuffer r = read_wav(dir / "rt.wav");
  REQUIRE(r.size() == b.size());
  double worst = 0.0;
  for (std::size_t i = 0; i < b.size(); ++i) {
    worst = std::max(worst, std::abs(r.samples[i] - b.samples[i]));
  }
  CHECK(worst <= 1.0 / 32768.0);
  for (std::size_t i = 0; i < 65536; ++i) CHECK_EQ(r.samples[i], b.samples[i]);
}

TEST_CASE("mu-law encode examples") {
  CHECK(mulaw_encode(0.0).class_index == 128);
  CHECK(mulaw_encode(1.0).class_index == 255);
  CHECK(mulaw_encode(-1.0).class_index == 0);
  try {
    mulaw_encode(1.0001);
    FAIL("out of range accepted");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kDomain);
  }
  CHECK_THROWS_AS(mulaw_encode(std::nan("")), Error);
}

TEST_CASE("mu-law decode examples") {
  CHECK(std::abs(mulaw_decode(mulaw_encode(0.0))) < 1.0 / 256.0);
  const double top = mulaw_decode(MuLawCode{255});
  CHECK(top > 0.96);
  CHECK(top <= 1.0);
  // Expansion formula at the top bin centre, evaluated independently.
  CHECK(top == doctest::Approx(0.9784880309586322).epsilon(1e-14));
}

TEST_CASE("mu-law round trip bound over all 16-bit inputs") {
  // Exhaustive scan by an independent numpy implementation of the same
  // companding and binning rules; the worst case is x = -1.
  constexpr double kOracleBound = 0.021511969041367762;
  double worst = 0.0;
  int prev = -1;
  for (int k = -32768; k <= 32767; ++k) {
    const double x = k / 32768.0;
    const MuLawCode c = mulaw_encode(x);
    CHECK_GE(int(c.class_index), prev);  // monotone
    prev = c.class_index;
    worst = std::max(worst, std::abs(mulaw_decode(c) - x));
  }
  CHECK(worst == doctest::Approx(kOracleBound).epsilon(1e-12));
  CHECK(worst <= kOracleBound + 1e-15);
}

TEST_CASE("frame_signal count, padding and partition") {
  std::vector<double> x(100);
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = double(i + 1);
  const auto frames = frame_signal(x, 40, 20, Window::kRect);
  CHECK(frames.size() == 5);
  CHECK(frames[4][19] == 100.0);
  CHECK(frames[4][20] == 0.0);  // zero padded tail

  for (std::size_t n : {1u, 79u, 80u, 81u, 1000u}) {
    std::vector<double> y(n, 1.0);
    CHECK(frame_signal(y, 200, 80, Window::kRect).size() == (n + 79) / 80);
  }

  const auto parts = frame_signal(x, 20, 20, Window::kRect);
  std::vector<double> joined;
  for (const auto& f : parts) joined.insert(joined.end(), f.begin(), f.end());
  joined.resize(x.size());
  CHECK(joined == x);

  const auto hann = frame_signal(x, 40, 20, Window::kHann);
  for (const auto& f : hann) {
    CHECK(std::abs(f.front()) < 1e-12);
    CHECK(std::abs(f.back()) < 1e-12);
  }
  CHECK(frame_signal(std::vector<double>{}, 40, 20, Window::kRect).empty());
  CHECK_THROWS_AS(frame_signal(x, 10, 20, Window::kRect), Error);
}

TEST_CASE("frame_signal from milliseconds") {
  AudioBuffer b = test::sine(200.0, 0.1);
  const auto frames = frame_signal(b, 25.0, 5.0, Window::kHann);
  CHECK(frames.size() == 20);
  CHECK(frames[0].size() == 400);
}

}  // TEST_SUITE
