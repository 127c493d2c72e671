#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "lpwn/audio.hpp"
#include "lpwn/features.hpp"
#include "lpwn/lpc.hpp"

namespace lpwn {

inline constexpr std::size_t kEnvelopeGrid = 512;
inline constexpr double kSpectralFloor = 1e-8;

// Percentage of frames whose voicing flags differ.
double vuv_error(std::span<const std::uint8_t> ref,
                 std::span<const std::uint8_t> test);

// RMSE over frames voiced in both tracks; nullopt when there are none.
std::optional<double> f0_rmse(std::span<const double> ref_f0,
                              std::span<const double> test_f0,
                              std::span<const std::uint8_t> ref_vuv,
                              std::span<const std::uint8_t> test_vuv);

// RMS over a midpoint grid in [0, pi) of 20 log10 of the ratio between the
// envelopes 1/|A_ref| and test_gain/|A_test|.
double envelope_lsd(const LpcCoeffs& ref, const LpcCoeffs& test,
                    double test_gain = 1.0, std::size_t grid = kEnvelopeGrid);

struct LsdResult {
  std::optional<double> db;  // mean over usable frames
  std::size_t frames = 0;
  std::size_t skipped = 0;   // unordered or unstable frames
};

LsdResult lsd_envelope(std::span<const Lsf> ref, std::span<const Lsf> test,
                       std::size_t grid = kEnvelopeGrid);

struct FlsdConfig {
  double win_ms = 35.0;
  double hop_ms = 5.0;
  double max_shift_ms = 5.0;
};

struct FlsdResult {
  std::optional<double> db;
  std::size_t voiced_frames = 0;
};

// Log-spectral distance of Hann-windowed frames, averaged over frames voiced
// in the reference. Each test frame is taken at the integer lag (within
// +-max_shift) that maximizes normalized cross-correlation with the
// reference frame.
FlsdResult f_lsd(const AudioBuffer& ref, const AudioBuffer& test,
                 std::span<const std::uint8_t> ref_vuv,
                 const FlsdConfig& cfg = {});

struct MetricReport {
  double vuv_pct = 0.0;
  std::optional<double> f0_rmse_hz;
  std::optional<double> lsd_db;
  std::optional<double> flsd_db;
  std::size_t voiced_frames = 0;
  std::size_t skipped_frames = 0;
};

// Scores test against ref. The test signal is zero padded or truncated to the
// reference length; both go through the same feature front end.
MetricReport evaluate(const AudioBuffer& ref, const AudioBuffer& test,
                      const FeatureConfig& cfg);

nlohmann::json to_json(const MetricReport& r);
std::string report_csv_header();
// Undefined metrics are written as empty fields.
std::string report_csv_row(const MetricReport& r);

}  // namespace lpwn
