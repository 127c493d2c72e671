#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "lpwn/audio.hpp"
#include "lpwn/lpc.hpp"

namespace lpwn {

struct F0Config {
  double fmin_hz = 60.0;
  double fmax_hz = 400.0;
  double voicing_threshold = 0.45;
  double win_ms = 35.0;
  double hop_ms = 5.0;
  // Frames whose mean square falls below this are silent (about -80 dBFS).
  double silence_floor = 1e-8;
};

struct F0Frame {
  double f0_hz = 0.0;  // 0 when unvoiced
  bool voiced = false;
};

struct FeatureConfig {
  std::size_t order = 16;
  double win_ms = 25.0;  // LP analysis window
  double hop_ms = 5.0;
  F0Config f0;
};

// Per-frame conditioning features, layout [lsf(order), log_f0, log_energy, vuv].
// Raw tracks hold values that are exactly representable as float32 so the
// feature file round trip is bit exact.
struct FeatureTrack {
  std::size_t order = 0;
  double hop_ms = 5.0;
  int sample_rate = 16000;
  std::size_t num_frames = 0;
  bool normalized = false;
  std::vector<double> data;  // row-major [num_frames x dims()]

  std::size_t dims() const { return order + 3; }
  std::size_t lsf_index() const { return 0; }
  std::size_t log_f0_index() const { return order; }
  std::size_t log_energy_index() const { return order + 1; }
  std::size_t vuv_index() const { return order + 2; }

  std::size_t hop_samples() const { return ms_to_samples(hop_ms, sample_rate); }
  std::span<const double> frame(std::size_t t) const {
    return {data.data() + t * dims(), dims()};
  }
  std::span<double> frame(std::size_t t) {
    return {data.data() + t * dims(), dims()};
  }
  double vuv(std::size_t t) const { return frame(t)[vuv_index()]; }
  Lsf lsf(std::size_t t) const;
};

struct NormStats {
  std::vector<double> mean;
  std::vector<double> std;
};

inline constexpr double kNormStdFloor = 1e-6;
inline constexpr double kLogEnergyFloor = 1e-10;

// Normalized autocorrelation pitch tracker on centred frames.
std::vector<F0Frame> extract_f0(const AudioBuffer& buf, const F0Config& cfg);

FeatureTrack extract_features(const AudioBuffer& buf, const FeatureConfig& cfg);

// Schedule of LP coefficients from the raw LSF view of a track.
LpcSchedule lpc_schedule(const FeatureTrack& raw);

NormStats compute_norm_stats(std::span<const FeatureTrack> tracks);
FeatureTrack normalize(const FeatureTrack& track, const NormStats& stats);
FeatureTrack denormalize(const FeatureTrack& track, const NormStats& stats);

// <stem>.json manifest plus <stem>.f32 payload (little-endian float32,
// row-major frames x dims).
void write_feature_file(const FeatureTrack& raw, const NormStats* stats,
                        const std::filesystem::path& manifest_path);
FeatureTrack read_feature_file(const std::filesystem::path& manifest_path,
                               NormStats* stats = nullptr);

}  // namespace lpwn
