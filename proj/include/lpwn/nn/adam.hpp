#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "lpwn/nn/tensor.hpp"

namespace lpwn::nn {

struct AdamConfig {
  double learning_rate = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

template <typename T>
struct AdamState {
  std::vector<T> m;
  std::vector<T> v;
  std::uint64_t step = 0;

  void reset(std::size_t n) {
    m.assign(n, T(0));
    v.assign(n, T(0));
    step = 0;
  }
};

// Bias-corrected Adam. A non-finite gradient rejects the whole step (nothing
// is modified) and the error names the owning tensor.
template <typename T>
void adam_step(const ParamLayout& layout, std::span<T> params,
               std::span<const T> grads, AdamState<T>& state,
               const AdamConfig& cfg);

template <typename T>
double global_norm(std::span<const T> grads);

// Rescales grads to max_norm when their norm exceeds it. Returns the norm
// before clipping.
template <typename T>
double clip_global_norm(std::span<T> grads, double max_norm);

}  // namespace lpwn::nn
