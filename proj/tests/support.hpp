#pragma once

// Shared fixtures for the unit tests and the acceptance run.

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "lpwn/audio.hpp"
#include "lpwn/lpc.hpp"

namespace lpwn::test {

inline std::filesystem::path tmp_dir(const std::string& name) {
  const auto p = std::filesystem::path(LPWN_TEST_TMP) / name;
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

// Stable random predictor from reflection coefficients in (-kmax, kmax).
inline LpcCoeffs random_stable_lpc(std::size_t order, std::mt19937_64& rng,
                                   double kmax = 0.9) {
  std::uniform_real_distribution<double> u(-kmax, kmax);
  std::vector<double> a;
  for (std::size_t m = 0; m < order; ++m) {
    const double k = u(rng);
    std::vector<double> next(m + 1);
    for (std::size_t i = 0; i < m; ++i) next[i] = a[i] - k * a[m - 1 - i];
    next[m] = k;
    a = next;
  }
  return LpcCoeffs{a};
}

inline AudioBuffer sine(double hz, double seconds, int sr = 16000, double amp = 0.5) {
  AudioBuffer b;
  b.sample_rate = sr;
  const auto n = static_cast<std::size_t>(seconds * sr);
  b.samples.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    b.samples[i] = amp * std::sin(2.0 * std::numbers::pi * hz * double(i) / sr);
  }
  return b;
}

inline AudioBuffer white_noise(double seconds, std::uint64_t seed, int sr = 16000,
                               double sigma = 0.1) {
  AudioBuffer b;
  b.sample_rate = sr;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, sigma);
  b.samples.resize(static_cast<std::size_t>(seconds * sr));
  for (auto& v : b.samples) v = std::clamp(n(rng), -1.0, 1.0);
  return b;
}

// Speech-like test signal: a glottal pulse train whose pitch glides from f_lo
// to f_hi, filtered by an all-pole envelope that moves between two stable
// LSF sets, plus noise 30 dB below the signal. The last `unvoiced_tail`
// seconds carry filtered noise only.
inline AudioBuffer synthetic_speech(double seconds, std::uint64_t seed,
                                    std::size_t order = 16, int sr = 16000,
                                    double f_lo = 100.0, double f_hi = 250.0,
                                    double unvoiced_tail = 0.4) {
  std::mt19937_64 rng(seed);
  const LpcCoeffs a0 = random_stable_lpc(order, rng);
  const LpcCoeffs a1 = random_stable_lpc(order, rng);
  const Lsf l0 = lpc_to_lsf(a0), l1 = lpc_to_lsf(a1);
  const std::size_t n = static_cast<std::size_t>(seconds * sr);
  const std::size_t voiced_end =
      static_cast<std::size_t>((seconds - unvoiced_tail) * sr);
  const std::size_t hop = 80;

  std::vector<double> e(n, 0.0);
  double phase = 0.0;
  for (std::size_t i = 0; i < voiced_end; ++i) {
    const double f = f_lo + (f_hi - f_lo) * double(i) / double(voiced_end);
    phase += f / sr;
    if (phase >= 1.0) {
      phase -= 1.0;
      e[i] = 1.0;
    }
  }
  std::normal_distribution<double> noise(0.0, 1.0);
  std::vector<double> w(n);
  for (auto& v : w) v = noise(rng);

  LpcSchedule sched;
  sched.hop_samples = hop;
  const std::size_t frames = (n + hop - 1) / hop;
  for (std::size_t t = 0; t < frames; ++t) {
    const double mix = 0.5 - 0.5 * std::cos(std::numbers::pi * double(t) / double(frames));
    Lsf l;
    for (std::size_t k = 0; k < order; ++k) {
      l.omega.push_back((1.0 - mix) * l0.omega[k] + mix * l1.omega[k]);
    }
    sched.frames.push_back(lsf_to_lpc(l));
  }
  std::vector<double> voiced = synthesis_filter(e, sched);
  std::vector<double> unvoiced_exc(n, 0.0);
  for (std::size_t i = voiced_end; i < n; ++i) unvoiced_exc[i] = 0.05 * w[i];
  std::vector<double> unvoiced = synthesis_filter(unvoiced_exc, sched);

  double peak = 1e-12, power = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    peak = std::max(peak, std::abs(voiced[i] + unvoiced[i]));
    power += (voiced[i] + unvoiced[i]) * (voiced[i] + unvoiced[i]);
  }
  const double gain = 0.5 / peak;
  const double rms = std::sqrt(power / double(n)) * gain;
  const double noise_sigma = rms * std::pow(10.0, -30.0 / 20.0);
  AudioBuffer b;
  b.sample_rate = sr;
  b.samples.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    b.samples[i] = std::clamp(gain * (voiced[i] + unvoiced[i]) + noise_sigma * noise(rng),
                              -1.0, 1.0);
  }
  return b;
}

}  // namespace lpwn::test
