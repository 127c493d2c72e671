#include "lpwn/trainer.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <random>

#include "lpwn/error.hpp"
#include "lpwn/heads.hpp"
#include "lpwn/lpc.hpp"

namespace lpwn {

nlohmann::json to_json(const TrainConfig& cfg) {
  return {{"window_samples", cfg.window_samples},
          {"batch_windows", cfg.batch_windows},
          {"steps", cfg.steps},
          {"learning_rate", cfg.learning_rate},
          {"clip_norm", cfg.clip_norm},
          {"seed", cfg.seed},
          {"log_interval", cfg.log_interval},
          {"checkpoint_interval", cfg.checkpoint_interval}};
}

TrainConfig train_config_from_json(const nlohmann::json& j) {
  TrainConfig c;
  try {
    c.window_samples = j.value("window_samples", c.window_samples);
    c.batch_windows = j.value("batch_windows", c.batch_windows);
    c.steps = j.value("steps", c.steps);
    c.learning_rate = j.value("learning_rate", c.learning_rate);
    c.clip_norm = j.value("clip_norm", c.clip_norm);
    c.seed = j.value("seed", c.seed);
    c.log_interval = j.value("log_interval", c.log_interval);
    c.checkpoint_interval = j.value("checkpoint_interval", c.checkpoint_interval);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kConfig, std::string("bad train config: ") + e.what());
  }
  if (c.window_samples == 0 || c.batch_windows == 0 || c.log_interval == 0) {
    throw Error(ErrorCode::kConfig, "window, batch and log interval must be positive");
  }
  return c;
}

Utterance prepare_utterance(std::string name, AudioBuffer audio,
                            FeatureTrack raw, const NormStats& stats) {
  const std::size_t hop = raw.hop_samples();
  const std::size_t covered = raw.num_frames * hop;
  const std::size_t n = audio.size();
  if (raw.sample_rate != audio.sample_rate || covered + hop < n ||
      n + hop < covered) {
    throw Error(ErrorCode::kAlignment,
                name + ": " + std::to_string(raw.num_frames) +
                    " feature frames do not cover " + std::to_string(n) +
                    " samples");
  }
  if (covered < n) audio.samples.resize(covered);

  Utterance u;
  u.name = std::move(name);
  const LpcSchedule sched = lpc_schedule(raw);
  u.x_hat = lp_approximation_track(audio.samples, sched);
  u.excitation.resize(audio.size());
  u.classes.resize(audio.size());
  u.vuv.resize(audio.size());
  for (std::size_t i = 0; i < audio.size(); ++i) {
    u.excitation[i] = audio.samples[i] - u.x_hat[i];
    u.classes[i] = mulaw_encode(audio.samples[i]).class_index;
    u.vuv[i] = raw.vuv(i / hop) > 0.5;
  }
  u.cond = conditioning_matrix(normalize(raw, stats));
  u.audio = std::move(audio);
  u.raw = std::move(raw);
  return u;
}

std::vector<Utterance> prepare_corpus(
    Model& model, std::vector<std::pair<std::string, AudioBuffer>> audio) {
  std::vector<FeatureTrack> tracks;
  for (const auto& [name, buf] : audio) {
    if (buf.sample_rate != model.config.sample_rate) {
      throw Error(ErrorCode::kConfig,
                  name + ": sample rate " + std::to_string(buf.sample_rate) +
                      " differs from the model's " +
                      std::to_string(model.config.sample_rate));
    }
    tracks.push_back(extract_features(buf, model.config.features));
  }
  model.stats = compute_norm_stats(tracks);
  std::vector<Utterance> out;
  for (std::size_t i = 0; i < audio.size(); ++i) {
    out.push_back(prepare_utterance(std::move(audio[i].first),
                                    std::move(audio[i].second),
                                    std::move(tracks[i]), model.stats));
  }
  return out;
}

BatchStream::BatchStream(const std::vector<Utterance>& corpus,
                         std::size_t window_samples, std::size_t batch_windows,
                         std::uint64_t seed)
    : corpus_(corpus), window_(window_samples), batch_(batch_windows), seed_(seed) {
  if (window_ == 0 || batch_ == 0) {
    throw Error(ErrorCode::kConfig, "window and batch sizes must be positive");
  }
  for (std::size_t u = 0; u < corpus.size(); ++u) {
    const std::size_t n = corpus[u].audio.size() / window_;
    for (std::size_t k = 0; k < n; ++k) windows_.emplace_back(u, k * window_);
  }
  if (windows_.empty()) {
    throw Error(ErrorCode::kConfig, "corpus is shorter than one training window");
  }
}

const std::vector<std::size_t>& BatchStream::permutation(std::uint64_t epoch) const {
  if (epoch != cached_epoch_) {
    cached_perm_.resize(windows_.size());
    for (std::size_t i = 0; i < cached_perm_.size(); ++i) cached_perm_[i] = i;
    std::mt19937_64 rng(nn::splitmix64(seed_ ^ nn::splitmix64(epoch)));
    for (std::size_t i = cached_perm_.size(); i-- > 1;) {
      std::swap(cached_perm_[i], cached_perm_[rng() % (i + 1)]);
    }
    cached_epoch_ = epoch;
  }
  return cached_perm_;
}

TrainWindow BatchStream::make(std::size_t index) const {
  const auto [u, begin] = windows_[index];
  const Utterance& utt = corpus_[u];
  TrainWindow w;
  w.utterance = u;
  w.begin = begin;
  w.length = window_;
  w.x_hat.assign(utt.x_hat.begin() + long(begin),
                 utt.x_hat.begin() + long(begin + window_));
  w.vuv.assign(utt.vuv.begin() + long(begin), utt.vuv.begin() + long(begin + window_));
  return w;
}

std::vector<TrainWindow> BatchStream::batch(std::uint64_t step) const {
  std::vector<TrainWindow> out;
  const std::size_t n = windows_.size();
  for (std::size_t i = 0; i < batch_; ++i) {
    const std::uint64_t g = step * batch_ + i;
    out.push_back(make(permutation(g / n)[g % n]));
  }
  return out;
}

std::vector<TrainWindow> BatchStream::all() const {
  std::vector<TrainWindow> out;
  for (std::size_t i = 0; i < windows_.size(); ++i) out.push_back(make(i));
  return out;
}

BatchStream make_batches(const std::vector<Utterance>& corpus,
                         const TrainConfig& cfg) {
  return BatchStream(corpus, cfg.window_samples, cfg.batch_windows, cfg.seed);
}

Trainer::Trainer(Model& model, const std::vector<Utterance>& corpus,
                 TrainConfig cfg)
    : model_(model),
      corpus_(corpus),
      cfg_(cfg),
      stream_(make_batches(corpus, cfg_)) {
  if (model_.params.size() != model_.net.layout().total()) {
    model_.params = model_.net.init_params(cfg_.seed);
  }
  adam_.reset(model_.params.size());
  for (const auto& u : corpus_) {
    if (std::size_t(u.cond.rows()) != model_.config.net.cond_channels) {
      throw Error(ErrorCode::kShape, u.name + ": feature dims do not match model");
    }
  }
}

double Trainer::window_loss(const TrainWindow& w, std::vector<float>* grads,
                            double scale) {
  const Utterance& u = corpus_[w.utterance];
  const nn::NetConfig& nc = model_.config.net;
  const HeadKind head = model_.config.head;
  const std::size_t rf = nn::receptive_field(nc);
  // Trunk positions start at most rf - 1 before the targets, clipped to the
  // utterance start so the zero history matches generation.
  const std::size_t t0 = w.begin >= rf - 1 ? w.begin - (rf - 1) : 0;
  const std::size_t len = w.begin + w.length - t0;

  nn::Mat<float> inputs = nn::Mat<float>::Zero(Eigen::Index(nc.input_channels),
                                               Eigen::Index(len));
  for (std::size_t j = 0; j < len; ++j) {
    const std::size_t pos = t0 + j;
    const auto c = Eigen::Index(j);
    switch (head) {
      case HeadKind::kWnLp:
        inputs(0, c) = pos > 0 ? float(u.audio.samples[pos - 1]) : 0.0f;
        break;
      case HeadKind::kWnE:
        inputs(0, c) = pos > 0 ? float(u.excitation[pos - 1]) : 0.0f;
        break;
      case HeadKind::kWnS:
        inputs(pos > 0 ? u.classes[pos - 1] : mulaw_encode(0.0).class_index, c) = 1.0f;
        break;
    }
  }

  const std::span<const float> params(model_.params);
  model_.net.forward(params, u.cond, inputs, t0, ws_);
  const nn::Mat<float>& logits = ws_.logits;
  const std::size_t out = nc.out_channels;
  nn::Mat<float> dlogits;
  if (grads) dlogits = nn::Mat<float>::Zero(Eigen::Index(out), Eigen::Index(len));

  std::vector<double> z(out), dz(out);
  double total = 0.0;
  for (std::size_t k = 0; k < w.length; ++k) {
    const std::size_t pos = w.begin + k;
    const auto c = Eigen::Index(pos - t0);
    for (std::size_t i = 0; i < out; ++i) z[i] = logits(Eigen::Index(i), c);
    double l = 0.0;
    switch (head) {
      case HeadKind::kWnLp: {
        const MogParams p = mog_from_logits(z, nc.mixture_count, w.x_hat[k], true);
        l = grads ? mog_nll_grad(p, u.audio.samples[pos], true, dz)
                  : mog_nll(p, u.audio.samples[pos], true);
        break;
      }
      case HeadKind::kWnE: {
        const MogParams p = mog_from_logits(z, nc.mixture_count, 0.0, false);
        l = grads ? mog_nll_grad(p, u.excitation[pos], true, dz)
                  : mog_nll(p, u.excitation[pos], true);
        break;
      }
      case HeadKind::kWnS:
        l = grads ? categorical_loss_grad(z, u.classes[pos], dz)
                  : categorical_loss(z, u.classes[pos]);
        break;
    }
    if (!std::isfinite(l)) {
      throw Error(ErrorCode::kNumeric,
                  "non-finite loss in window " + u.name + "@" +
                      std::to_string(w.begin) + " at sample " + std::to_string(pos));
    }
    total += l;
    if (grads) {
      for (std::size_t i = 0; i < out; ++i) {
        dlogits(Eigen::Index(i), c) = float(dz[i] * scale);
      }
    }
  }
  if (grads) {
    model_.net.backward(params, u.cond, inputs, t0, ws_, dlogits, *grads);
  }
  return total;
}

double Trainer::loss(const std::vector<TrainWindow>& windows) {
  double total = 0.0;
  std::size_t count = 0;
  for (const auto& w : windows) {
    total += window_loss(w, nullptr, 0.0);
    count += w.length;
  }
  return count ? total / double(count) : 0.0;
}

StepResult Trainer::step() {
  const auto batch = stream_.batch(adam_.step);
  std::size_t count = 0;
  for (const auto& w : batch) count += w.length;
  grads_.assign(model_.params.size(), 0.0f);
  double total = 0.0;
  for (const auto& w : batch) total += window_loss(w, &grads_, 1.0 / double(count));
  StepResult r;
  r.loss = total / double(count);
  r.grad_norm = nn::clip_global_norm(std::span<float>(grads_), cfg_.clip_norm);
  nn::AdamConfig ac;
  ac.learning_rate = cfg_.learning_rate;
  nn::adam_step(model_.net.layout(), std::span<float>(model_.params),
                std::span<const float>(grads_), adam_, ac);
  return r;
}

namespace {

Checkpoint snapshot(const Model& model, const nn::AdamState<float>& adam,
                    const TrainConfig& cfg) {
  Checkpoint ck;
  ck.config = model.config;
  ck.stats = model.stats;
  ck.params = model.params;
  ck.adam = adam;
  ck.train_config = to_json(cfg);
  return ck;
}

}  // namespace

TrainSummary train_loop(Model& model, const std::vector<Utterance>& corpus,
                        const TrainConfig& cfg,
                        const std::filesystem::path& out_dir,
                        const Checkpoint* resume) {
  std::filesystem::create_directories(out_dir);
  if (resume) {
    if (config_hash(resume->config) != config_hash(model.config)) {
      throw Error(ErrorCode::kConfigMismatch,
                  "resume checkpoint was trained with a different model config");
    }
    model.params = resume->params;
    model.stats = resume->stats;
  }
  Trainer trainer(model, corpus, cfg);
  if (resume) trainer.adam() = resume->adam;

  TrainSummary sum;
  sum.initial_loss = trainer.corpus_loss();
  const auto log_path = out_dir / "loss.csv";
  std::ofstream log(log_path, resume ? std::ios::app : std::ios::trunc);
  if (!log) throw Error(ErrorCode::kIo, "cannot write " + log_path.string());
  if (!resume) log << "step,loss,grad_norm,wall_ms\n";
  log.precision(17);

  const auto t_start = std::chrono::steady_clock::now();
  while (trainer.adam().step < cfg.steps) {
    const StepResult r = trainer.step();
    const std::uint64_t done = trainer.adam().step;
    if (done % cfg.log_interval == 0) {
      const auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                          std::chrono::steady_clock::now() - t_start)
                          .count();
      log << done << "," << r.loss << "," << r.grad_norm << "," << ms << "\n";
      log.flush();
    }
    if (cfg.checkpoint_interval && done % cfg.checkpoint_interval == 0 &&
        done < cfg.steps) {
      save_checkpoint(snapshot(model, trainer.adam(), cfg),
                      out_dir / ("step_" + std::to_string(done) + ".ckpt"));
    }
  }
  Checkpoint final = snapshot(model, trainer.adam(), cfg);
  sum.final_loss = trainer.corpus_loss();
  final.final_loss = sum.final_loss;
  sum.steps = trainer.adam().step;
  sum.final_checkpoint = out_dir / "final.ckpt";
  save_checkpoint(final, sum.final_checkpoint);
  return sum;
}

}  // namespace lpwn
