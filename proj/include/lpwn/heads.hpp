#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "lpwn/audio.hpp"

namespace lpwn {

inline constexpr double kTrainLogScaleFloor = -10.0;
inline constexpr double kSampleLogScaleCap = -4.0;
inline constexpr double kVoicedSharpen = 0.85;

// Mixture of Gaussians over one sample. Means are kept as the network output
// plus a separate shift (the LP prediction, or 0) so that evaluating at x is
// arithmetically the same as evaluating the unshifted mixture at x - shift.
struct MogParams {
  std::vector<double> weights;
  std::vector<double> base_means;
  std::vector<double> log_scales;
  double shift = 0.0;

  std::size_t count() const { return weights.size(); }
  double mean(std::size_t i) const { return base_means[i] + shift; }
};

// z = [weight logits | means | log scales], each of length n.
MogParams mog_from_logits(std::span<const double> z, std::size_t n,
                          double x_hat, bool shift);

// Negative log likelihood. With train_clip the log scales are floored at -10.
double mog_nll(const MogParams& p, double x, bool train_clip);

// Loss plus dL/dz in the layout of mog_from_logits. Clipped log scales get a
// zero gradient.
double mog_nll_grad(const MogParams& p, double x, bool train_clip,
                    std::span<double> dz);

double categorical_loss(std::span<const double> logits, int target);
double categorical_loss_grad(std::span<const double> logits, int target,
                             std::span<double> dz);

struct SamplingOptions {
  double sharpen = kVoicedSharpen;
  double log_scale_cap = kSampleLogScaleCap;
};

// Seeded source of the uniform and normal draws used by generation.
class Sampler {
 public:
  explicit Sampler(std::uint64_t seed) : rng_(seed) {}

  double uniform() { return uniform_(rng_); }
  double normal() { return normal_(rng_); }

 private:
  std::mt19937_64 rng_;
  std::uniform_real_distribution<double> uniform_{0.0, 1.0};
  std::normal_distribution<double> normal_{0.0, 1.0};
};

struct MogDraw {
  double value = 0.0;            // after clamping to [-1, 1]
  double unclamped = 0.0;
  double effective_log_scale = 0.0;
  double scale_factor = 1.0;     // sharpening applied to this draw
  std::size_t component = 0;
  bool clamped = false;
};

// log s <- min(log s, cap); s <- sharpen * s when voiced; pick a component by
// weight, then x = (mu_base + s * xi) + shift.
MogDraw sample_mog(const MogParams& p, bool voiced, const SamplingOptions& opt,
                   Sampler& rng);

MuLawCode sample_categorical(std::span<const double> logits, Sampler& rng);

}  // namespace lpwn
