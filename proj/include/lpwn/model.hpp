#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "lpwn/features.hpp"
#include "lpwn/nn/wavenet.hpp"

namespace lpwn {

// WN_S: categorical over mu-law classes of speech.
// WN_E: mixture of Gaussians over the LP excitation.
// WN_LP: mixture of Gaussians over speech, means shifted by the LP prediction.
enum class HeadKind { kWnS, kWnE, kWnLp };

std::string_view head_name(HeadKind head);
HeadKind parse_head(std::string_view name);

inline bool is_mog(HeadKind head) { return head != HeadKind::kWnS; }

struct ModelConfig {
  HeadKind head = HeadKind::kWnLp;
  int sample_rate = 16000;
  FeatureConfig features;
  nn::NetConfig net;
};

// Desk scale: 16 kHz, order 16, 32 channels, dilations 1..64 twice.
ModelConfig desk_preset(HeadKind head);
// Paper scale: 24 kHz, order 40, 128 channels, dilations 1..512 three times.
ModelConfig paper_preset(HeadKind head);

// Fills the head-dependent network fields (input/output channels, mixture
// count, conditioning width, hop) from the rest of the config.
void finalize(ModelConfig& cfg);

nlohmann::json to_json(const ModelConfig& cfg);
ModelConfig model_config_from_json(const nlohmann::json& j);

// FNV-1a over the canonical JSON dump of the config.
std::uint64_t config_hash(const ModelConfig& cfg);

// Normalized features as a float matrix, dims x frames.
nn::Mat<float> conditioning_matrix(const FeatureTrack& normalized);

struct Model {
  ModelConfig config;
  NormStats stats;
  nn::WaveNet<float> net;
  std::vector<float> params;

  explicit Model(ModelConfig cfg);
};

}  // namespace lpwn
