#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>
#include <random>

#include "lpwn/error.hpp"
#include "lpwn/features.hpp"
#include "support.hpp"

using namespace lpwn;

namespace {

// Line spectral frequencies by bracketing sign changes of the real and
// imaginary parts of A(e^jw) e^{j(p+1)w/2} on a dense grid.
std::vector<double> lsf_oracle(const std::vector<double>& alpha) {
  const std::size_t p = alpha.size();
  auto b = [&](double w) {
    std::complex<double> a = 1.0;
    for (std::size_t i = 0; i < p; ++i) a -= alpha[i] * std::polar(1.0, -double(i + 1) * w);
    return a * std::polar(1.0, 0.5 * double(p + 1) * w);
  };
  std::vector<double> roots;
  for (int part = 0; part < 2; ++part) {
    auto f = [&](double w) { return part == 0 ? b(w).real() : b(w).imag(); };
    const int grid = 200000;
    const double eps = 1e-9;
    double prev_w = eps, prev_v = f(eps);
    for (int k = 1; k <= grid; ++k) {
      const double w = std::numbers::pi * k / grid - (k == grid ? eps : 0.0);
      const double v = f(w);
      if ((prev_v < 0) != (v < 0)) {
        double lo = prev_w, hi = w, flo = prev_v;
        for (int it = 0; it < 60; ++it) {
          const double mid = 0.5 * (lo + hi);
          const double fm = f(mid);
          if ((fm < 0) == (flo < 0)) {
            lo = mid;
            flo = fm;
          } else {
            hi = mid;
          }
        }
        roots.push_back(0.5 * (lo + hi));
      }
      prev_w = w;
      prev_v = v;
    }
  }
  std::sort(roots.begin(), roots.end());
  return roots;
}

AudioBuffer ar2_noise(double a1, double a2, double seconds, std::uint64_t seed) {
  AudioBuffer b;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, 0.01);
  b.samples.resize(std::size_t(seconds * 16000));
  double x1 = 0, x2 = 0;
  for (auto& v : b.samples) {
    v = a1 * x1 + a2 * x2 + n(rng);
    x2 = x1;
    x1 = v;
  }
  return b;
}

}  // namespace

TEST_SUITE("features") {

TEST_CASE("F0 of a 200 Hz sine") {
  const auto f0 = extract_f0(test::sine(200.0, 1.0), F0Config{});
  REQUIRE(f0.size() == 200);
  std::size_t voiced = 0;
  for (std::size_t t = 10; t + 10 < f0.size(); ++t) {
    CHECK(f0[t].voiced);
    if (f0[t].voiced) {
      ++voiced;
      CHECK(std::abs(f0[t].f0_hz - 200.0) <= 2.0);
    }
  }
  CHECK(voiced == 180);
}

TEST_CASE("F0 tracks a few pitches") {
  for (double hz : {80.0, 123.0, 310.0}) {
    const auto f0 = extract_f0(test::sine(hz, 0.5), F0Config{});
    for (std::size_t t = 10; t + 10 < f0.size(); ++t) {
      REQUIRE(f0[t].voiced);
      CHECK(std::abs(f0[t].f0_hz - hz) <= 0.02 * hz);
    }
  }
}

TEST_CASE("white noise is mostly unvoiced and silence is unvoiced") {
  const auto f0 = extract_f0(test::white_noise(2.0, 3), F0Config{});
  const auto unvoiced = std::count_if(f0.begin(), f0.end(), [](auto f) { return !f.voiced; });
  CHECK(double(unvoiced) >= 0.9 * double(f0.size()));

  AudioBuffer silent;
  silent.samples.assign(8000, 0.0);
  for (auto f : extract_f0(silent, F0Config{})) {
    CHECK_FALSE(f.voiced);
    CHECK(f.f0_hz == 0.0);
  }
}

TEST_CASE("resonant filtered noise is mostly unvoiced") {
  std::mt19937_64 rng(17);
  for (int trial = 0; trial < 3; ++trial) {
    const LpcCoeffs a = test::random_stable_lpc(16, rng);
    const AudioBuffer w = test::white_noise(1.0, 20 + trial);
    LpcSchedule sched;
    sched.hop_samples = 80;
    sched.frames.assign(200, a);
    AudioBuffer x = w;
    x.samples = synthesis_filter(w.samples, sched);
    const auto f0 = extract_f0(x, F0Config{});
    const auto unvoiced = std::count_if(f0.begin(), f0.end(), [](auto f) { return !f.voiced; });
    CHECK(double(unvoiced) >= 0.8 * double(f0.size()));
  }
}

TEST_CASE("F0 follows a gliding pulse train through a moving envelope") {
  for (std::uint64_t seed : {3u, 61u, 82u}) {
    // voiced for 0.6 s, 100 -> 250 Hz
    const auto f0 = extract_f0(test::synthetic_speech(1.0, seed), F0Config{});
    int good = 0, total = 0;
    for (std::size_t t = 4; t < 116; ++t, ++total) {
      const double truth = 100.0 + 150.0 * double(t * 80) / 9600.0;
      good += f0[t].voiced && std::abs(f0[t].f0_hz - truth) <= 0.05 * truth;
    }
    CHECK(good >= 0.9 * total);
  }
}

TEST_CASE("F0 config validation") {
  F0Config bad;
  bad.fmin_hz = 500.0;
  CHECK_THROWS_AS(extract_f0(test::sine(200, 0.1), bad), Error);
  F0Config short_win;
  short_win.win_ms = 10.0;
  try {
    extract_f0(test::sine(200, 0.1), short_win);
    FAIL("short window accepted");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kConfig);
  }
}

TEST_CASE("features of silence") {
  AudioBuffer silent;
  silent.samples.assign(1600, 0.0);
  FeatureConfig cfg;
  const auto tr = extract_features(silent, cfg);
  REQUIRE(tr.num_frames == 20);
  REQUIRE(tr.dims() == 19);
  const Lsf flat = flat_lsf(16);
  for (std::size_t t = 0; t < tr.num_frames; ++t) {
    const auto f = tr.frame(t);
    for (std::size_t i = 0; i < 16; ++i) {
      CHECK(f[i] == double(float(flat.omega[i])));
    }
    CHECK(f[tr.log_energy_index()] == double(float(std::log(1e-10))));
    CHECK(f[tr.vuv_index()] == 0.0);
    CHECK(f[tr.log_f0_index()] == double(float(std::log(cfg.f0.fmin_hz))));
  }
}

TEST_CASE("frame count follows the hop") {
  FeatureConfig cfg;
  for (std::size_t n : {1u, 79u, 80u, 81u, 16000u, 16001u}) {
    AudioBuffer b = test::white_noise(1.0, 9);
    b.samples.resize(n);
    const auto tr = extract_features(b, cfg);
    CHECK(tr.num_frames == (n + 79) / 80);
    CHECK(tr.data.size() == tr.num_frames * tr.dims());
  }
  CHECK(extract_features(AudioBuffer{}, cfg).num_frames == 0);

  FeatureConfig bad;
  bad.order = 0;
  CHECK_THROWS_AS(extract_features(test::sine(100, 0.1), bad), Error);
}

TEST_CASE("LSFs of AR(2) noise match the true filter") {
  const double a1 = 2.0 * 0.9 * std::cos(0.6), a2 = -0.81;
  const auto truth = lsf_oracle({a1, a2});
  REQUIRE(truth.size() == 2);

  FeatureConfig cfg;
  cfg.order = 2;
  const auto tr = extract_features(ar2_noise(a1, a2, 6.0, 17), cfg);
  std::vector<double> mean(2, 0.0);
  std::size_t used = 0;
  for (std::size_t t = 5; t + 5 < tr.num_frames; ++t) {
    for (std::size_t i = 0; i < 2; ++i) mean[i] += tr.frame(t)[i];
    ++used;
  }
  for (std::size_t i = 0; i < 2; ++i) {
    mean[i] /= double(used);
    CHECK(std::abs(mean[i] - truth[i]) < 1e-2);
  }
}

TEST_CASE("frame LSFs match an independent analysis of the same frames") {
  const double a1 = 2.0 * 0.9 * std::cos(0.6), a2 = -0.81;
  FeatureConfig cfg;
  cfg.order = 2;
  const AudioBuffer audio = ar2_noise(a1, a2, 1.0, 23);
  const auto tr = extract_features(audio, cfg);
  const auto frames = frame_signal_centered(audio.samples, 400, 80, Window::kHann);
  REQUIRE(frames.size() == tr.num_frames);
  for (std::size_t t = 0; t < tr.num_frames; ++t) {
    const auto r = autocorrelate(frames[t], 2);
    const auto o = lsf_oracle(levinson_durbin(r, 2).alpha);
    REQUIRE(o.size() == 2);
    for (std::size_t i = 0; i < 2; ++i) CHECK(std::abs(tr.frame(t)[i] - o[i]) < 1e-2);
  }
}

TEST_CASE("lpc_to_lsf agrees with the grid oracle") {
  std::mt19937_64 rng(99);
  for (std::size_t p : {2u, 6u, 16u}) {
    const auto a = test::random_stable_lpc(p, rng);
    const auto w = lpc_to_lsf(a);
    const auto o = lsf_oracle(a.alpha);
    REQUIRE(o.size() == p);
    for (std::size_t i = 0; i < p; ++i) CHECK(std::abs(w.omega[i] - o[i]) < 1e-8);
  }
}

TEST_CASE("normalization examples") {
  FeatureTrack a;
  a.order = 1;
  a.num_frames = 2;
  a.data = {1.0, 2.0, 5.0, 1.0,
            3.0, 2.0, 7.0, 0.0};
  const std::vector<FeatureTrack> tracks{a};
  const NormStats s = compute_norm_stats(tracks);
  CHECK(s.mean == std::vector<double>{2.0, 2.0, 6.0, 0.0});
  CHECK(s.std[0] == 1.0);
  CHECK(s.std[1] == kNormStdFloor);
  CHECK(s.std[2] == 1.0);
  CHECK(s.std[3] == 1.0);

  const auto n = normalize(a, s);
  CHECK(n.normalized);
  CHECK(n.data == std::vector<double>{-1.0, 0.0, -1.0, 1.0, 1.0, 0.0, 1.0, 0.0});
  const auto back = denormalize(n, s);
  for (std::size_t i = 0; i < a.data.size(); ++i) CHECK(back.data[i] == doctest::Approx(a.data[i]));
  CHECK_FALSE(back.normalized);

  NormStats wrong{{0.0}, {1.0}};
  CHECK_THROWS_AS(normalize(a, wrong), Error);
}

TEST_CASE("feature file round trip is bit exact") {
  const auto dir = test::tmp_dir("features_roundtrip");
  const auto tr = extract_features(test::synthetic_speech(0.5, 4), FeatureConfig{});
  const std::vector<FeatureTrack> tracks{tr};
  const NormStats s = compute_norm_stats(tracks);
  write_feature_file(tr, &s, dir / "utt.json");
  CHECK(std::filesystem::exists(dir / "utt.f32"));
  NormStats s2;
  const auto back = read_feature_file(dir / "utt.json", &s2);
  CHECK(back.num_frames == tr.num_frames);
  CHECK(back.order == tr.order);
  CHECK(back.hop_ms == tr.hop_ms);
  CHECK(back.data == tr.data);
  CHECK(s2.mean == s.mean);
  CHECK(s2.std == s.std);

  try {
    read_feature_file(dir / "missing.json");
    FAIL("missing file accepted");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kIo);
  }
}

TEST_CASE("schedule from features reproduces the signal through the filters") {
  const auto audio = test::synthetic_speech(0.5, 6);
  const auto tr = extract_features(audio, FeatureConfig{});
  const auto sched = lpc_schedule(tr);
  CHECK(sched.hop_samples == 80);
  CHECK(sched.covered_samples() >= audio.size());
  for (const auto& a : sched.frames) CHECK(is_stable(a));
  const auto e = inverse_filter(audio.samples, sched);
  const auto x = synthesis_filter(e, sched);
  for (std::size_t i = 0; i < x.size(); i += 97) CHECK(x[i] == doctest::Approx(audio.samples[i]).epsilon(1e-9));

  FeatureTrack n = tr;
  n.normalized = true;
  CHECK_THROWS_AS(lpc_schedule(n), Error);
}

}  // TEST_SUITE
