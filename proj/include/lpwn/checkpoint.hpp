#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

#include <json.hpp>

#include "lpwn/model.hpp"
#include "lpwn/nn/adam.hpp"

namespace lpwn {

inline constexpr std::uint32_t kCheckpointVersion = 1;

// File layout: "LPWNCKPT", u32 version, u64 header length, JSON header, then
// little-endian float32 params, Adam first moments, Adam second moments. The
// header carries the config, its hash, normalization stats, step count and
// the tensor directory.
struct Checkpoint {
  ModelConfig config;
  NormStats stats;
  std::vector<float> params;
  nn::AdamState<float> adam;
  std::optional<double> final_loss;  // corpus loss at these params
  nlohmann::json train_config;       // echoed for provenance
};

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);

// Throws kConfigMismatch when the stored hash does not match the stored config,
// or when `expected` is given and differs from it.
Checkpoint load_checkpoint(const std::filesystem::path& path,
                           const ModelConfig* expected = nullptr);

Model model_from_checkpoint(const Checkpoint& ckpt);

}  // namespace lpwn
