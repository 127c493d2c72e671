#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "lpwn/audio.hpp"
#include "lpwn/features.hpp"
#include "lpwn/heads.hpp"
#include "lpwn/metrics.hpp"
#include "lpwn/model.hpp"

namespace lpwn {

struct GenerateOptions {
  SamplingOptions sampling;
  std::uint64_t seed = 0;
  // WN_LP only: sample the excitation from the unshifted mixture and add the
  // LP prediction afterwards, as an explicit synthesis filter step would.
  bool excitation_route = false;
  // Recompute every sample from scratch over its receptive field instead of
  // using the cached per-block queues.
  bool reference_path = false;
};

// Per-sample record of what the sampler did.
struct GenerationTrace {
  std::vector<double> effective_log_scale;  // MoG heads only
  std::vector<double> scale_factor;         // sharpening applied
  std::vector<std::uint8_t> vuv;
  std::vector<double> x_hat;
  std::vector<double> excitation;           // sampled excitation (WN_E, or
                                            // WN_LP via excitation_route)
  std::size_t clamped = 0;
};

// Generates frames * hop samples from raw features. The model normalizes
// them for conditioning; the raw LSFs drive the LP prediction. History starts
// at zero.
AudioBuffer generate(const Model& model, const FeatureTrack& raw,
                     const GenerateOptions& opt, GenerationTrace* trace = nullptr);

struct CopySynthesis {
  AudioBuffer audio;
  MetricReport report;
};

// Analysis then synthesis from the reference's own features, scored against it.
CopySynthesis copy_synthesis(const Model& model, const AudioBuffer& reference,
                             const GenerateOptions& opt);

// White noise pushed through the reference's own LP envelopes, with the
// residual energy of each frame matched. A periodicity-free baseline.
AudioBuffer shaped_noise(const AudioBuffer& reference, const FeatureConfig& cfg,
                         std::uint64_t seed);

}  // namespace lpwn
