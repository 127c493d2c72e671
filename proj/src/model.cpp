#include "lpwn/model.hpp"

#include "lpwn/error.hpp"

namespace lpwn {

std::string_view head_name(HeadKind head) {
  switch (head) {
    case HeadKind::kWnS: return "WN_S";
    case HeadKind::kWnE: return "WN_E";
    case HeadKind::kWnLp: return "WN_LP";
  }
  return "?";
}

HeadKind parse_head(std::string_view name) {
  if (name == "WN_S") return HeadKind::kWnS;
  if (name == "WN_E") return HeadKind::kWnE;
  if (name == "WN_LP") return HeadKind::kWnLp;
  throw Error(ErrorCode::kConfig, "unknown head kind '" + std::string(name) + "'");
}

void finalize(ModelConfig& cfg) {
  nn::NetConfig& n = cfg.net;
  const std::size_t hop = ms_to_samples(cfg.features.hop_ms, cfg.sample_rate);
  if (hop == 0) throw Error(ErrorCode::kConfig, "hop must be at least one sample");
  n.hop_samples = hop;
  n.cond_channels = cfg.features.order + 3;
  if (cfg.head == HeadKind::kWnS) {
    n.input_channels = kMuLawClasses;
    n.out_channels = kMuLawClasses;
    n.mixture_count = 0;
  } else {
    if (n.mixture_count == 0) n.mixture_count = cfg.head == HeadKind::kWnLp ? 1 : 10;
    n.input_channels = 1;
    n.out_channels = 3 * n.mixture_count;
  }
}

ModelConfig desk_preset(HeadKind head) {
  ModelConfig cfg;
  cfg.head = head;
  cfg.net.weight_norm = head != HeadKind::kWnS;
  cfg.net.mixture_count = 0;
  finalize(cfg);
  return cfg;
}

ModelConfig paper_preset(HeadKind head) {
  ModelConfig cfg;
  cfg.head = head;
  cfg.sample_rate = 24000;
  cfg.features.order = 40;
  cfg.net.residual_channels = 128;
  cfg.net.skip_channels = 128;
  cfg.net.post_channels = 128;
  cfg.net.dilation_cycle = {1, 2, 4, 8, 16, 32, 64, 128, 256, 512};
  cfg.net.repeats = 3;
  cfg.net.weight_norm = head != HeadKind::kWnS;
  cfg.net.mixture_count = 0;
  finalize(cfg);
  return cfg;
}

nlohmann::json to_json(const ModelConfig& cfg) {
  const nn::NetConfig& n = cfg.net;
  const F0Config& f0 = cfg.features.f0;
  return {
      {"head", head_name(cfg.head)},
      {"sample_rate", cfg.sample_rate},
      {"features",
       {{"order", cfg.features.order},
        {"win_ms", cfg.features.win_ms},
        {"hop_ms", cfg.features.hop_ms},
        {"f0",
         {{"fmin_hz", f0.fmin_hz},
          {"fmax_hz", f0.fmax_hz},
          {"voicing_threshold", f0.voicing_threshold},
          {"win_ms", f0.win_ms},
          {"hop_ms", f0.hop_ms},
          {"silence_floor", f0.silence_floor}}}}},
      {"net",
       {{"input_channels", n.input_channels},
        {"residual_channels", n.residual_channels},
        {"skip_channels", n.skip_channels},
        {"post_channels", n.post_channels},
        {"out_channels", n.out_channels},
        {"mixture_count", n.mixture_count},
        {"dilation_cycle", n.dilation_cycle},
        {"repeats", n.repeats},
        {"cond_channels", n.cond_channels},
        {"hop_samples", n.hop_samples},
        {"weight_norm", n.weight_norm}}},
  };
}

ModelConfig model_config_from_json(const nlohmann::json& j) {
  try {
    ModelConfig cfg = desk_preset(parse_head(j.at("head").get<std::string>()));
    if (j.contains("preset") && j["preset"] == "paper") {
      cfg = paper_preset(cfg.head);
    }
    cfg.sample_rate = j.value("sample_rate", cfg.sample_rate);
    if (j.contains("features")) {
      const auto& f = j["features"];
      cfg.features.order = f.value("order", cfg.features.order);
      cfg.features.win_ms = f.value("win_ms", cfg.features.win_ms);
      cfg.features.hop_ms = f.value("hop_ms", cfg.features.hop_ms);
      if (f.contains("f0")) {
        const auto& g = f["f0"];
        F0Config& f0 = cfg.features.f0;
        f0.fmin_hz = g.value("fmin_hz", f0.fmin_hz);
        f0.fmax_hz = g.value("fmax_hz", f0.fmax_hz);
        f0.voicing_threshold = g.value("voicing_threshold", f0.voicing_threshold);
        f0.win_ms = g.value("win_ms", f0.win_ms);
        f0.hop_ms = g.value("hop_ms", f0.hop_ms);
        f0.silence_floor = g.value("silence_floor", f0.silence_floor);
      }
    }
    if (j.contains("net")) {
      const auto& n = j["net"];
      nn::NetConfig& c = cfg.net;
      c.residual_channels = n.value("residual_channels", c.residual_channels);
      c.skip_channels = n.value("skip_channels", c.skip_channels);
      c.post_channels = n.value("post_channels", c.post_channels);
      c.mixture_count = n.value("mixture_count", c.mixture_count);
      c.dilation_cycle = n.value("dilation_cycle", c.dilation_cycle);
      c.repeats = n.value("repeats", c.repeats);
      c.weight_norm = n.value("weight_norm", c.weight_norm);
    }
    finalize(cfg);
    return cfg;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kConfig, std::string("bad model config: ") + e.what());
  }
}

std::uint64_t config_hash(const ModelConfig& cfg) {
  const std::string s = to_json(cfg).dump();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

nn::Mat<float> conditioning_matrix(const FeatureTrack& normalized) {
  nn::Mat<float> m(Eigen::Index(normalized.dims()),
                   Eigen::Index(normalized.num_frames));
  for (std::size_t t = 0; t < normalized.num_frames; ++t) {
    const auto f = normalized.frame(t);
    for (std::size_t d = 0; d < f.size(); ++d) {
      m(Eigen::Index(d), Eigen::Index(t)) = float(f[d]);
    }
  }
  return m;
}

Model::Model(ModelConfig cfg) : config(std::move(cfg)), net(config.net) {}

}  // namespace lpwn
