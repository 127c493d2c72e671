#include "lpwn/heads.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "lpwn/error.hpp"

namespace lpwn {
namespace {

constexpr double kHalfLog2Pi = 0.91893853320467274178;

double log_sum_exp(std::span<const double> v) {
  const double m = *std::max_element(v.begin(), v.end());
  if (!std::isfinite(m)) return m;
  double s = 0.0;
  for (double x : v) s += std::exp(x - m);
  return m + std::log(s);
}

void check_finite(const MogParams& p, double x) {
  bool ok = std::isfinite(x) && std::isfinite(p.shift);
  for (std::size_t i = 0; i < p.count(); ++i) {
    ok = ok && std::isfinite(p.weights[i]) && std::isfinite(p.base_means[i]) &&
         std::isfinite(p.log_scales[i]);
  }
  if (!ok) throw Error(ErrorCode::kNumeric, "non-finite mixture input");
}

// Per-component log(w_i N(x; mu_i, s_i)) and the clipped log scales.
void component_terms(const MogParams& p, double x, bool train_clip,
                     std::vector<double>& terms, std::vector<double>& ls,
                     std::vector<double>& r) {
  const std::size_t n = p.count();
  terms.resize(n);
  ls.resize(n);
  r.resize(n);
  const double centred = x - p.shift;
  for (std::size_t i = 0; i < n; ++i) {
    ls[i] = train_clip ? std::max(p.log_scales[i], kTrainLogScaleFloor)
                       : p.log_scales[i];
    r[i] = centred - p.base_means[i];
    const double u = r[i] * std::exp(-ls[i]);
    terms[i] = std::log(p.weights[i]) - 0.5 * u * u - ls[i] - kHalfLog2Pi;
  }
}

}  // namespace

MogParams mog_from_logits(std::span<const double> z, std::size_t n,
                          double x_hat, bool shift) {
  if (n == 0 || z.size() != 3 * n) {
    throw Error(ErrorCode::kShape, "mixture logits must have 3N entries");
  }
  MogParams p;
  const auto zw = z.subspan(0, n);
  const double lse = log_sum_exp(zw);
  p.weights.resize(n);
  for (std::size_t i = 0; i < n; ++i) p.weights[i] = std::exp(zw[i] - lse);
  p.base_means.assign(z.begin() + long(n), z.begin() + long(2 * n));
  p.log_scales.assign(z.begin() + long(2 * n), z.end());
  p.shift = shift ? x_hat : 0.0;
  return p;
}

double mog_nll(const MogParams& p, double x, bool train_clip) {
  check_finite(p, x);
  std::vector<double> terms, ls, r;
  component_terms(p, x, train_clip, terms, ls, r);
  return -log_sum_exp(terms);
}

double mog_nll_grad(const MogParams& p, double x, bool train_clip,
                    std::span<double> dz) {
  check_finite(p, x);
  const std::size_t n = p.count();
  if (dz.size() != 3 * n) throw Error(ErrorCode::kShape, "gradient size mismatch");
  std::vector<double> terms, ls, r;
  component_terms(p, x, train_clip, terms, ls, r);
  const double lse = log_sum_exp(terms);
  for (std::size_t i = 0; i < n; ++i) {
    const double post = std::exp(terms[i] - lse);
    const double inv_var = std::exp(-2.0 * ls[i]);
    dz[i] = p.weights[i] - post;
    dz[n + i] = -post * r[i] * inv_var;
    const bool clipped = train_clip && p.log_scales[i] < kTrainLogScaleFloor;
    dz[2 * n + i] = clipped ? 0.0 : post * (1.0 - r[i] * r[i] * inv_var);
  }
  return -lse;
}

namespace {

void check_categorical(std::span<const double> logits, int target) {
  if (logits.size() != std::size_t(kMuLawClasses)) {
    throw Error(ErrorCode::kShape, "categorical head expects 256 logits");
  }
  if (target < 0 || target >= kMuLawClasses) {
    throw Error(ErrorCode::kDomain, "target class out of range");
  }
}

}  // namespace

double categorical_loss(std::span<const double> logits, int target) {
  check_categorical(logits, target);
  return log_sum_exp(logits) - logits[std::size_t(target)];
}

double categorical_loss_grad(std::span<const double> logits, int target,
                             std::span<double> dz) {
  check_categorical(logits, target);
  if (dz.size() != logits.size()) throw Error(ErrorCode::kShape, "gradient size mismatch");
  const double lse = log_sum_exp(logits);
  for (std::size_t i = 0; i < logits.size(); ++i) dz[i] = std::exp(logits[i] - lse);
  dz[std::size_t(target)] -= 1.0;
  return lse - logits[std::size_t(target)];
}

MogDraw sample_mog(const MogParams& p, bool voiced, const SamplingOptions& opt,
                   Sampler& rng) {
  MogDraw d;
  const double u = rng.uniform();
  double acc = 0.0;
  d.component = p.count() - 1;
  for (std::size_t i = 0; i < p.count(); ++i) {
    acc += p.weights[i];
    if (u < acc) {
      d.component = i;
      break;
    }
  }
  const double xi = rng.normal();
  const double ls = std::min(p.log_scales[d.component], opt.log_scale_cap);
  d.scale_factor = voiced ? opt.sharpen : 1.0;
  const double s = d.scale_factor * std::exp(ls);
  d.effective_log_scale = std::log(s);
  d.unclamped = (p.base_means[d.component] + s * xi) + p.shift;
  d.value = std::clamp(d.unclamped, -1.0, 1.0);
  d.clamped = d.value != d.unclamped;
  return d;
}

MuLawCode sample_categorical(std::span<const double> logits, Sampler& rng) {
  const double lse = log_sum_exp(logits);
  const double u = rng.uniform();
  double acc = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    acc += std::exp(logits[i] - lse);
    if (u < acc) return MuLawCode{std::uint8_t(i)};
  }
  return MuLawCode{std::uint8_t(logits.size() - 1)};
}

}  // namespace lpwn
