#include "lpwn/features.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <iterator>
#include <limits>

#include <json.hpp>

#include "lpwn/error.hpp"

namespace lpwn {
namespace {

using json = nlohmann::json;

double to_f32(double v) { return static_cast<double>(static_cast<float>(v)); }

struct PitchCandidate {
  double lag = 0.0;
  double score = 0.0;
};

PitchCandidate best_lag(std::span<const double> frame, std::size_t lag_min,
                        std::size_t lag_max) {
  const std::size_t n = frame.size();
  std::vector<double> r(lag_max + 2, 0.0);
  for (std::size_t lag = lag_min > 0 ? lag_min - 1 : 0; lag <= lag_max + 1;
       ++lag) {
    if (lag >= n) break;
    double xy = 0.0, xx = 0.0, yy = 0.0;
    for (std::size_t i = 0; i + lag < n; ++i) {
      xy += frame[i] * frame[i + lag];
      xx += frame[i] * frame[i];
      yy += frame[i + lag] * frame[i + lag];
    }
    const double den = std::sqrt(xx * yy);
    r[lag] = den > 0.0 ? xy / den : 0.0;
  }

  double global = -1.0;
  for (std::size_t lag = lag_min; lag <= lag_max; ++lag) {
    global = std::max(global, r[lag]);
  }
  // Shortest lag that is a local peak close to the global peak; avoids
  // picking sub-harmonics of strongly periodic frames.
  std::size_t pick = lag_min;
  double pick_score = -1.0;
  for (std::size_t lag = lag_min; lag <= lag_max; ++lag) {
    const bool peak = r[lag] >= r[lag - (lag > 0 ? 1 : 0)] && r[lag] >= r[lag + 1];
    if (peak && r[lag] >= 0.85 * global) {
      pick = lag;
      pick_score = r[lag];
      break;
    }
  }
  if (pick_score < 0.0) {
    for (std::size_t lag = lag_min; lag <= lag_max; ++lag) {
      if (r[lag] == global) {
        pick = lag;
        pick_score = global;
        break;
      }
    }
  }

  double lag = double(pick);
  if (pick > 0 && pick + 1 < r.size()) {
    const double a = r[pick - 1], b = r[pick], c = r[pick + 1];
    const double den = a - 2.0 * b + c;
    if (den < 0.0) {
      lag += std::clamp(0.5 * (a - c) / den, -0.5, 0.5);
    }
  }
  return {lag, pick_score};
}

// Inverse filter with the frame's own low-order LP fit, then smooth the
// residual slightly. Sharp resonances in filtered noise correlate strongly
// at pitch-range lags and the raw residual of a pulse train loses its
// correlation to one-sample jitter.
std::vector<double> whiten(std::span<const double> frame) {
  constexpr std::size_t kOrder = 16;
  if (frame.size() <= 2 * kOrder) return {frame.begin(), frame.end()};
  const std::vector<double> w = hann_window(frame.size());
  std::vector<double> tapered(frame.size());
  for (std::size_t i = 0; i < frame.size(); ++i) tapered[i] = frame[i] * w[i];
  const auto r = autocorrelate(tapered, kOrder);
  if (!(r[0] > 0.0)) return {frame.begin(), frame.end()};
  const LpcCoeffs a = levinson_durbin(r, kOrder);
  std::vector<double> e(frame.size() - kOrder);
  for (std::size_t n = kOrder; n < frame.size(); ++n) {
    double pred = 0.0;
    for (std::size_t i = 1; i <= kOrder; ++i) pred += a.alpha[i - 1] * frame[n - i];
    e[n - kOrder] = frame[n] - pred;
  }
  constexpr std::size_t kTaps = 5;
  const std::vector<double> h = hann_window(kTaps + 2);
  std::vector<double> out(e.size() - kTaps + 1, 0.0);
  for (std::size_t n = 0; n < out.size(); ++n) {
    for (std::size_t k = 0; k < kTaps; ++k) out[n] += h[k + 1] * e[n + k];
  }
  return out;
}

void check_f0_config(const F0Config& cfg, int sample_rate) {
  if (!(cfg.fmin_hz > 0.0 && cfg.fmin_hz < cfg.fmax_hz &&
        cfg.fmax_hz < 0.5 * sample_rate)) {
    throw Error(ErrorCode::kConfig, "need 0 < fmin < fmax < sample_rate / 2");
  }
  const double min_win = 2.0 * sample_rate / cfg.fmin_hz;
  if (double(ms_to_samples(cfg.win_ms, sample_rate)) < min_win) {
    throw Error(ErrorCode::kConfig,
                "F0 window shorter than two periods of fmin");
  }
}

void put_f32_le(std::vector<char>& out, float v) {
  const auto bits = std::bit_cast<std::uint32_t>(v);
  for (int i = 0; i < 4; ++i) out.push_back(char((bits >> (8 * i)) & 0xff));
}

float get_f32_le(const unsigned char* p) {
  const std::uint32_t bits = std::uint32_t(p[0]) | (std::uint32_t(p[1]) << 8) |
                             (std::uint32_t(p[2]) << 16) |
                             (std::uint32_t(p[3]) << 24);
  return std::bit_cast<float>(bits);
}

std::filesystem::path payload_path(const std::filesystem::path& manifest) {
  std::filesystem::path p = manifest;
  p.replace_extension(".f32");
  return p;
}

}  // namespace

Lsf FeatureTrack::lsf(std::size_t t) const {
  auto f = frame(t);
  return Lsf{std::vector<double>(f.begin(), f.begin() + order)};
}

std::vector<F0Frame> extract_f0(const AudioBuffer& buf, const F0Config& cfg) {
  check_f0_config(cfg, buf.sample_rate);
  const std::size_t win = ms_to_samples(cfg.win_ms, buf.sample_rate);
  const std::size_t hop = ms_to_samples(cfg.hop_ms, buf.sample_rate);
  const auto lag_min = static_cast<std::size_t>(
      std::floor(buf.sample_rate / cfg.fmax_hz));
  const auto lag_max = static_cast<std::size_t>(
      std::ceil(buf.sample_rate / cfg.fmin_hz));

  const auto frames = frame_signal_centered(buf.samples, win, hop, Window::kRect);
  std::vector<F0Frame> out(frames.size());
  for (std::size_t t = 0; t < frames.size(); ++t) {
    const auto& f = frames[t];
    double energy = 0.0;
    for (double v : f) energy += v * v;
    energy /= double(f.size());
    if (!(energy > cfg.silence_floor)) continue;
    const PitchCandidate c = best_lag(whiten(f), lag_min, lag_max);
    if (c.score >= cfg.voicing_threshold) {
      out[t].voiced = true;
      out[t].f0_hz = buf.sample_rate / c.lag;
    }
  }
  return out;
}

FeatureTrack extract_features(const AudioBuffer& buf, const FeatureConfig& cfg) {
  if (cfg.order == 0) throw Error(ErrorCode::kConfig, "LP order must be positive");
  F0Config f0cfg = cfg.f0;
  f0cfg.hop_ms = cfg.hop_ms;
  const std::size_t hop = ms_to_samples(cfg.hop_ms, buf.sample_rate);
  const std::size_t win = ms_to_samples(cfg.win_ms, buf.sample_rate);
  if (win <= cfg.order) {
    throw Error(ErrorCode::kConfig, "LP window must exceed the LP order");
  }
  if (double(hop) != cfg.hop_ms * buf.sample_rate / 1000.0) {
    throw Error(ErrorCode::kConfig, "hop must be a whole number of samples");
  }

  FeatureTrack track;
  track.order = cfg.order;
  track.hop_ms = cfg.hop_ms;
  track.sample_rate = buf.sample_rate;
  if (buf.empty()) return track;

  const auto lp_frames =
      frame_signal_centered(buf.samples, win, hop, Window::kHann);
  const auto f0 = extract_f0(buf, f0cfg);
  track.num_frames = lp_frames.size();
  track.data.assign(track.num_frames * track.dims(), 0.0);
  const Lsf flat = flat_lsf(cfg.order);

  for (std::size_t t = 0; t < track.num_frames; ++t) {
    auto row = track.frame(t);
    const auto r = autocorrelate(lp_frames[t], cfg.order);
    Lsf lsf = r[0] > 0.0 ? lpc_to_lsf(levinson_durbin(r, cfg.order)) : flat;
    float prev = 0.0f;
    for (std::size_t i = 0; i < cfg.order; ++i) {
      float v = static_cast<float>(lsf.omega[i]);
      if (i > 0 && !(v > prev)) {
        v = std::nextafter(prev, std::numeric_limits<float>::infinity());
      }
      row[i] = v;
      prev = v;
    }
    const bool voiced = f0[t].voiced;
    row[track.log_f0_index()] =
        to_f32(std::log(voiced ? f0[t].f0_hz : cfg.f0.fmin_hz));
    row[track.log_energy_index()] = to_f32(std::log(r[0] + kLogEnergyFloor));
    row[track.vuv_index()] = voiced ? 1.0 : 0.0;
  }
  return track;
}

LpcSchedule lpc_schedule(const FeatureTrack& raw) {
  if (raw.normalized) {
    throw Error(ErrorCode::kDomain, "LPC schedule needs the raw LSF view");
  }
  LpcSchedule sched;
  sched.hop_samples = raw.hop_samples();
  sched.frames.reserve(raw.num_frames);
  for (std::size_t t = 0; t < raw.num_frames; ++t) {
    sched.frames.push_back(lsf_to_lpc(raw.lsf(t)));
  }
  return sched;
}

NormStats compute_norm_stats(std::span<const FeatureTrack> tracks) {
  if (tracks.empty()) throw Error(ErrorCode::kDomain, "no tracks for statistics");
  const std::size_t dims = tracks.front().dims();
  std::vector<double> sum(dims, 0.0), lo(dims, std::numeric_limits<double>::infinity()),
      hi(dims, -std::numeric_limits<double>::infinity());
  std::size_t count = 0;
  for (const auto& tr : tracks) {
    if (tr.dims() != dims) throw Error(ErrorCode::kDomain, "dimension mismatch");
    for (std::size_t t = 0; t < tr.num_frames; ++t) {
      auto f = tr.frame(t);
      for (std::size_t d = 0; d < dims; ++d) {
        sum[d] += f[d];
        lo[d] = std::min(lo[d], f[d]);
        hi[d] = std::max(hi[d], f[d]);
      }
      ++count;
    }
  }
  NormStats stats;
  stats.mean.assign(dims, 0.0);
  stats.std.assign(dims, 1.0);
  if (count == 0) return stats;
  for (std::size_t d = 0; d < dims; ++d) {
    stats.mean[d] = lo[d] == hi[d] ? lo[d] : sum[d] / double(count);
  }
  std::vector<double> var(dims, 0.0);
  for (const auto& tr : tracks) {
    for (std::size_t t = 0; t < tr.num_frames; ++t) {
      auto f = tr.frame(t);
      for (std::size_t d = 0; d < dims; ++d) {
        const double dv = f[d] - stats.mean[d];
        var[d] += dv * dv;
      }
    }
  }
  for (std::size_t d = 0; d < dims; ++d) {
    stats.std[d] = std::max(std::sqrt(var[d] / double(count)), kNormStdFloor);
  }
  const std::size_t vuv = tracks.front().vuv_index();
  stats.mean[vuv] = 0.0;
  stats.std[vuv] = 1.0;
  return stats;
}

namespace {

FeatureTrack apply_stats(const FeatureTrack& track, const NormStats& stats,
                         bool forward) {
  if (stats.mean.size() != track.dims() || stats.std.size() != track.dims()) {
    throw Error(ErrorCode::kDomain, "normalization stats dimension mismatch");
  }
  FeatureTrack out = track;
  out.normalized = forward;
  const std::size_t vuv = track.vuv_index();
  for (std::size_t t = 0; t < track.num_frames; ++t) {
    auto f = out.frame(t);
    for (std::size_t d = 0; d < track.dims(); ++d) {
      if (d == vuv) continue;
      const double s = std::max(stats.std[d], kNormStdFloor);
      f[d] = forward ? (f[d] - stats.mean[d]) / s : f[d] * s + stats.mean[d];
    }
  }
  return out;
}

}  // namespace

FeatureTrack normalize(const FeatureTrack& track, const NormStats& stats) {
  return apply_stats(track, stats, true);
}

FeatureTrack denormalize(const FeatureTrack& track, const NormStats& stats) {
  return apply_stats(track, stats, false);
}

void write_feature_file(const FeatureTrack& raw, const NormStats* stats,
                        const std::filesystem::path& manifest_path) {
  json layout = json::array();
  for (std::size_t i = 0; i < raw.order; ++i) {
    layout.push_back("lsf_" + std::to_string(i + 1));
  }
  layout.push_back("log_f0");
  layout.push_back("log_energy");
  layout.push_back("vuv");

  const auto payload = payload_path(manifest_path);
  json m = {
      {"format", "lpwn-features"},
      {"version", 1},
      {"dims", raw.dims()},
      {"order", raw.order},
      {"hop_ms", raw.hop_ms},
      {"sample_rate", raw.sample_rate},
      {"num_frames", raw.num_frames},
      {"normalized", raw.normalized},
      {"layout", layout},
      {"dtype", "float32-le"},
      {"payload", payload.filename().string()},
  };
  m["stats"] = stats ? json{{"mean", stats->mean}, {"std", stats->std}}
                     : json(nullptr);

  std::vector<char> bytes;
  bytes.reserve(raw.data.size() * 4);
  for (double v : raw.data) put_f32_le(bytes, static_cast<float>(v));
  std::ofstream pf(payload, std::ios::binary);
  if (!pf) throw Error(ErrorCode::kIo, "cannot write " + payload.string());
  pf.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));

  std::ofstream mf(manifest_path);
  if (!mf) throw Error(ErrorCode::kIo, "cannot write " + manifest_path.string());
  mf << m.dump(2) << "\n";
}

FeatureTrack read_feature_file(const std::filesystem::path& manifest_path,
                               NormStats* stats) {
  std::ifstream mf(manifest_path);
  if (!mf) throw Error(ErrorCode::kIo, "cannot open " + manifest_path.string());
  json m;
  try {
    m = json::parse(mf);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kFormat, manifest_path.string() + ": " + e.what());
  }
  FeatureTrack tr;
  try {
    if (m.at("format") != "lpwn-features") {
      throw Error(ErrorCode::kFormat, "not a feature manifest");
    }
    tr.order = m.at("order").get<std::size_t>();
    tr.hop_ms = m.at("hop_ms").get<double>();
    tr.sample_rate = m.at("sample_rate").get<int>();
    tr.num_frames = m.at("num_frames").get<std::size_t>();
    tr.normalized = m.value("normalized", false);
    if (m.at("dims").get<std::size_t>() != tr.dims()) {
      throw Error(ErrorCode::kFormat, "dims inconsistent with order");
    }
    if (stats && !m.at("stats").is_null()) {
      stats->mean = m["stats"].at("mean").get<std::vector<double>>();
      stats->std = m["stats"].at("std").get<std::vector<double>>();
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kFormat, manifest_path.string() + ": " + e.what());
  }
  const auto payload =
      manifest_path.parent_path() / m["payload"].get<std::string>();
  std::ifstream pf(payload, std::ios::binary);
  if (!pf) throw Error(ErrorCode::kIo, "cannot open " + payload.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(pf)),
                                   std::istreambuf_iterator<char>());
  const std::size_t count = tr.num_frames * tr.dims();
  if (bytes.size() != count * 4) {
    throw Error(ErrorCode::kFormat, payload.string() + ": payload size mismatch");
  }
  tr.data.resize(count);
  for (std::size_t i = 0; i < count; ++i) tr.data[i] = get_f32_le(&bytes[4 * i]);
  return tr;
}

}  // namespace lpwn
