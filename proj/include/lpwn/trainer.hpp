#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "lpwn/audio.hpp"
#include "lpwn/checkpoint.hpp"
#include "lpwn/features.hpp"
#include "lpwn/model.hpp"
#include "lpwn/nn/adam.hpp"

namespace lpwn {

struct TrainConfig {
  std::size_t window_samples = 2000;
  std::size_t batch_windows = 4;
  std::size_t steps = 2000;
  double learning_rate = 1e-4;
  double clip_norm = 10.0;
  std::uint64_t seed = 1;           // initialization and shuffling
  std::size_t log_interval = 1;
  std::size_t checkpoint_interval = 0;  // 0: final checkpoint only
};

nlohmann::json to_json(const TrainConfig& cfg);
TrainConfig train_config_from_json(const nlohmann::json& j);

// One utterance with every per-sample view the heads need, derived from the
// audio and its raw features.
struct Utterance {
  std::string name;
  AudioBuffer audio;
  FeatureTrack raw;
  nn::Mat<float> cond;                 // normalized features, dims x frames
  std::vector<double> x_hat;           // LP prediction from true history
  std::vector<double> excitation;      // x - x_hat
  std::vector<std::uint8_t> classes;   // mu-law class of each sample
  std::vector<std::uint8_t> vuv;       // voicing of the enclosing frame
};

// Throws kAlignment when the features and audio disagree by more than a frame.
Utterance prepare_utterance(std::string name, AudioBuffer audio,
                            FeatureTrack raw, const NormStats& stats);

// Extracts features with the model's config, fits model.stats to them and
// prepares every utterance.
std::vector<Utterance> prepare_corpus(
    Model& model, std::vector<std::pair<std::string, AudioBuffer>> audio);

struct TrainWindow {
  std::size_t utterance = 0;
  std::size_t begin = 0;
  std::size_t length = 0;
  std::vector<double> x_hat;
  std::vector<std::uint8_t> vuv;
};

// Non-overlapping windows of every utterance, visited in a fresh seeded
// permutation each epoch. Step k takes entries [kB, kB + B) of the
// concatenated epochs, so any step can be produced without replaying the
// earlier ones.
class BatchStream {
 public:
  BatchStream(const std::vector<Utterance>& corpus, std::size_t window_samples,
              std::size_t batch_windows, std::uint64_t seed);

  std::size_t num_windows() const { return windows_.size(); }
  std::vector<TrainWindow> batch(std::uint64_t step) const;
  // Every window once, in corpus order.
  std::vector<TrainWindow> all() const;

 private:
  TrainWindow make(std::size_t index) const;
  const std::vector<std::size_t>& permutation(std::uint64_t epoch) const;

  const std::vector<Utterance>& corpus_;
  std::size_t window_;
  std::size_t batch_;
  std::uint64_t seed_;
  std::vector<std::pair<std::size_t, std::size_t>> windows_;
  mutable std::uint64_t cached_epoch_ = ~std::uint64_t{0};
  mutable std::vector<std::size_t> cached_perm_;
};

BatchStream make_batches(const std::vector<Utterance>& corpus,
                         const TrainConfig& cfg);

struct StepResult {
  double loss = 0.0;       // nats per target sample
  double grad_norm = 0.0;  // before clipping
};

class Trainer {
 public:
  Trainer(Model& model, const std::vector<Utterance>& corpus, TrainConfig cfg);

  // Loss and gradient of the batch for the current step, then one Adam update.
  StepResult step();
  // Teacher-forced loss without an update.
  double loss(const std::vector<TrainWindow>& windows);
  double corpus_loss() { return loss(stream_.all()); }

  nn::AdamState<float>& adam() { return adam_; }
  const BatchStream& stream() const { return stream_; }
  const TrainConfig& config() const { return cfg_; }

 private:
  double window_loss(const TrainWindow& w, std::vector<float>* grads,
                     double scale);

  Model& model_;
  const std::vector<Utterance>& corpus_;
  TrainConfig cfg_;
  BatchStream stream_;
  nn::AdamState<float> adam_;
  nn::Workspace<float> ws_;
  std::vector<float> grads_;
};

struct TrainSummary {
  std::size_t steps = 0;
  double initial_loss = 0.0;  // corpus loss before training
  double final_loss = 0.0;    // corpus loss of the final checkpoint
  std::filesystem::path final_checkpoint;
};

// Trains to cfg.steps, logging step,loss,grad_norm,wall_ms to loss.csv and
// writing checkpoints into out_dir. With `resume` the run continues from the
// checkpoint (which must carry the same model config) and appends to the log.
TrainSummary train_loop(Model& model, const std::vector<Utterance>& corpus,
                        const TrainConfig& cfg,
                        const std::filesystem::path& out_dir,
                        const Checkpoint* resume = nullptr);

}  // namespace lpwn
