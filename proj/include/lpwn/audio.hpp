#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace lpwn {

// Mono waveform. Samples loaded from PCM lie in [-1, 1].
struct AudioBuffer {
  std::vector<double> samples;
  int sample_rate = 16000;

  std::size_t size() const { return samples.size(); }
  bool empty() const { return samples.empty(); }
};

// One of the 256 mu-law classes.
struct MuLawCode {
  std::uint8_t class_index = 128;

  friend bool operator==(MuLawCode, MuLawCode) = default;
};

inline constexpr int kMuLawClasses = 256;

struct WavWriteSummary {
  std::size_t samples_written = 0;
  std::size_t clamped = 0;  // samples outside [-1, 1]
};

AudioBuffer read_wav(const std::filesystem::path& path);
WavWriteSummary write_wav(const AudioBuffer& buf,
                          const std::filesystem::path& path);

// PCM16 quantization used by write_wav: round(x * 32768) saturated to int16.
std::int16_t to_pcm16(double x);

MuLawCode mulaw_encode(double x);
double mulaw_decode(MuLawCode code);

enum class Window { kRect, kHann };

// Symmetric Hann window, w[0] = w[n-1] = 0.
std::vector<double> hann_window(std::size_t n);

std::size_t ms_to_samples(double ms, int sample_rate);

// Frame t covers samples [t*hop, t*hop + win); the tail is zero padded, so
// there are ceil(N / hop) frames for N >= 1.
std::vector<std::vector<double>> frame_signal(std::span<const double> x,
                                              std::size_t win_samples,
                                              std::size_t hop_samples,
                                              Window window);
std::vector<std::vector<double>> frame_signal(const AudioBuffer& buf,
                                              double win_ms, double hop_ms,
                                              Window window);

// Frames whose centre sits in the middle of hop interval t: the signal is
// left padded by (win - hop) / 2 zeros before frame_signal. Analysis front
// ends use this so frame t describes samples [t*hop, (t+1)*hop).
std::vector<std::vector<double>> frame_signal_centered(
    std::span<const double> x, std::size_t win_samples,
    std::size_t hop_samples, Window window);

}  // namespace lpwn
