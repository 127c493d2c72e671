#include "lpwn/synth.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <string>

#include "lpwn/error.hpp"
#include "lpwn/lpc.hpp"
#include "lpwn/nn/wavenet.hpp"

namespace lpwn {

AudioBuffer generate(const Model& model, const FeatureTrack& raw,
                     const GenerateOptions& opt, GenerationTrace* trace) {
  const ModelConfig& cfg = model.config;
  const nn::NetConfig& nc = cfg.net;
  if (raw.normalized) {
    throw Error(ErrorCode::kDomain, "generation needs the raw feature view");
  }
  if (raw.dims() != nc.cond_channels || raw.hop_samples() != nc.hop_samples) {
    throw Error(ErrorCode::kShape, "features do not match the model config");
  }
  if (model.params.size() != model.net.layout().total()) {
    throw Error(ErrorCode::kShape, "model has no parameters");
  }
  AudioBuffer out;
  out.sample_rate = raw.sample_rate;
  const std::size_t total = raw.num_frames * nc.hop_samples;
  if (trace) *trace = GenerationTrace{};
  if (total == 0) return out;

  const std::span<const float> params(model.params);
  const nn::Mat<float> cond =
      model.net.encode(params, conditioning_matrix(normalize(raw, model.stats)));
  const LpcSchedule sched = lpc_schedule(raw);
  const std::size_t rf = nn::receptive_field(nc);
  const HeadKind head = cfg.head;
  const int silence_class = mulaw_encode(0.0).class_index;

  nn::Stepper<float> stepper(model.net, params);
  nn::Mat<float> inputs;  // reference path keeps the whole input history
  if (opt.reference_path) inputs.setZero(Eigen::Index(nc.input_channels), Eigen::Index(total));
  nn::Vec<float> in(Eigen::Index(nc.input_channels));
  std::vector<double> z(nc.out_channels);
  Sampler rng(opt.seed);
  std::vector<double>& x = out.samples;
  x.assign(total, 0.0);
  double prev_e = 0.0;
  if (trace) {
    trace->vuv.resize(total);
    trace->x_hat.resize(total);
    trace->scale_factor.assign(total, 1.0);
    if (is_mog(head)) trace->effective_log_scale.resize(total);
    if (head == HeadKind::kWnE || opt.excitation_route) trace->excitation.resize(total);
  }

  for (std::size_t n = 0; n < total; ++n) {
    in.setZero();
    switch (head) {
      case HeadKind::kWnLp: in[0] = n > 0 ? float(x[n - 1]) : 0.0f; break;
      case HeadKind::kWnE: in[0] = float(prev_e); break;
      case HeadKind::kWnS:
        in[n > 0 ? mulaw_encode(x[n - 1]).class_index : silence_class] = 1.0f;
        break;
    }
    if (opt.reference_path) {
      inputs.col(Eigen::Index(n)) = in;
      const std::size_t lo = n + 1 >= rf ? n + 1 - rf : 0;
      const auto w = Eigen::Index(n + 1 - lo);
      const nn::Mat<float> logits = nn::columnwise_logits(
          model.net, params, nn::Mat<float>(inputs.middleCols(Eigen::Index(lo), w)),
          nn::Mat<float>(cond.middleCols(Eigen::Index(lo), w)));
      for (std::size_t i = 0; i < z.size(); ++i) z[i] = logits(Eigen::Index(i), w - 1);
    } else {
      const nn::Vec<float>& logits = stepper.step(
          in, std::span<const float>(cond.col(Eigen::Index(n)).data(),
                                     nc.cond_channels));
      for (std::size_t i = 0; i < z.size(); ++i) z[i] = logits[Eigen::Index(i)];
    }

    const bool voiced = raw.vuv(n / nc.hop_samples) > 0.5;
    const double xh = lp_predict(x, n, sched.at(n));
    double value = 0.0;
    double log_scale = 0.0;
    bool clamped = false;
    if (head == HeadKind::kWnS) {
      value = mulaw_decode(sample_categorical(z, rng));
    } else {
      const bool shift = head == HeadKind::kWnLp && !opt.excitation_route;
      const MogParams p = mog_from_logits(z, nc.mixture_count, xh, shift);
      const MogDraw d = sample_mog(p, voiced, opt.sampling, rng);
      log_scale = d.effective_log_scale;
      if (head == HeadKind::kWnLp && !opt.excitation_route) {
        value = d.value;
        clamped = d.clamped;
      } else {
        // Excitation draw followed by one synthesis filter step. WN_E keeps
        // the clamped excitation as its own history.
        const double e = head == HeadKind::kWnE ? d.value : d.unclamped;
        const double s = e + xh;
        value = std::clamp(s, -1.0, 1.0);
        clamped = d.clamped || value != s;
        prev_e = e;
        if (trace) trace->excitation[n] = e;
      }
      if (trace) {
        trace->effective_log_scale[n] = d.effective_log_scale;
        trace->scale_factor[n] = d.scale_factor;
      }
    }
    if (!std::isfinite(value)) {
      throw Error(ErrorCode::kDivergence,
                  "non-finite sample at index " + std::to_string(n) +
                      " (log scale " + std::to_string(log_scale) + ")");
    }
    x[n] = value;
    if (trace) {
      trace->vuv[n] = voiced;
      trace->x_hat[n] = xh;
      trace->clamped += clamped;
    }
  }
  return out;
}

CopySynthesis copy_synthesis(const Model& model, const AudioBuffer& reference,
                             const GenerateOptions& opt) {
  if (reference.sample_rate != model.config.sample_rate) {
    throw Error(ErrorCode::kConfig, "reference sample rate differs from the model's");
  }
  const FeatureTrack raw = extract_features(reference, model.config.features);
  CopySynthesis cs;
  cs.audio = generate(model, raw, opt);
  cs.report = evaluate(reference, cs.audio, model.config.features);
  return cs;
}

AudioBuffer shaped_noise(const AudioBuffer& reference, const FeatureConfig& cfg,
                         std::uint64_t seed) {
  const FeatureTrack raw = extract_features(reference, cfg);
  const LpcSchedule sched = lpc_schedule(raw);
  const std::size_t hop = sched.hop_samples;
  const std::vector<double> e = inverse_filter(reference.samples, sched);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  std::vector<double> noise(e.size());
  for (std::size_t t = 0; t * hop < e.size(); ++t) {
    const std::size_t lo = t * hop, hi = std::min(e.size(), lo + hop);
    double energy = 0.0;
    for (std::size_t n = lo; n < hi; ++n) energy += e[n] * e[n];
    const double rms = std::sqrt(energy / double(hi - lo));
    for (std::size_t n = lo; n < hi; ++n) noise[n] = rms * normal(rng);
  }
  AudioBuffer out;
  out.sample_rate = reference.sample_rate;
  out.samples = synthesis_filter(noise, sched);
  for (double& v : out.samples) v = std::clamp(v, -1.0, 1.0);
  return out;
}

}  // namespace lpwn
