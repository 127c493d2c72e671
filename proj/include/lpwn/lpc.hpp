#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace lpwn {

// Predictor coefficients in the convention x_hat[n] = sum_i alpha[i-1] * x[n-i],
// i.e. A(z) = 1 - sum_i alpha_i z^-i.
struct LpcCoeffs {
  std::vector<double> alpha;

  std::size_t order() const { return alpha.size(); }
};

// Line spectral frequencies, strictly increasing in (0, pi).
struct Lsf {
  std::vector<double> omega;

  std::size_t order() const { return omega.size(); }
};

// Sample n uses frames[n / hop_samples]. Coefficients switch at frame
// boundaries without interpolation.
struct LpcSchedule {
  std::vector<LpcCoeffs> frames;
  std::size_t hop_samples = 0;

  const LpcCoeffs& at(std::size_t n) const { return frames[n / hop_samples]; }
  std::size_t covered_samples() const { return frames.size() * hop_samples; }
};

struct LevinsonResult {
  LpcCoeffs lpc;
  std::vector<double> reflection;
  double prediction_error = 0.0;
};

inline constexpr double kLevinsonRegularization = 1e-6;

std::vector<double> autocorrelate(std::span<const double> frame,
                                  std::size_t max_lag);

// Autocorrelation-method LP. r[0] is inflated by (1 + 1e-6) first.
LevinsonResult levinson_durbin_detailed(std::span<const double> r,
                                        std::size_t order);
LpcCoeffs levinson_durbin(std::span<const double> r, std::size_t order);

// Step-down recursion; true iff every reflection coefficient is in (-1, 1).
bool is_stable(const LpcCoeffs& a);

Lsf lpc_to_lsf(const LpcCoeffs& a);
LpcCoeffs lsf_to_lpc(const Lsf& w);

// Flat spectrum LSFs k*pi/(p+1), the image of alpha = 0.
Lsf flat_lsf(std::size_t order);

// past[i-1] holds x[n-i].
double lp_approximation(std::span<const double> past, const LpcCoeffs& a);

// Prediction for sample n from x[0..n), treating x[<0] as zero. Every filter
// and model path computes x_hat through this one routine.
double lp_predict(std::span<const double> x, std::size_t n,
                  const LpcCoeffs& a);

std::vector<double> inverse_filter(std::span<const double> x,
                                   const LpcSchedule& sched);
std::vector<double> synthesis_filter(std::span<const double> e,
                                     const LpcSchedule& sched);

// x_hat[n] computed from the ground-truth history of x.
std::vector<double> lp_approximation_track(std::span<const double> x,
                                           const LpcSchedule& sched);

}  // namespace lpwn
