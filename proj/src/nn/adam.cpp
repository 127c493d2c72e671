#include "lpwn/nn/adam.hpp"

#include <cmath>
#include <string>

#include "lpwn/error.hpp"

namespace lpwn::nn {

template <typename T>
void adam_step(const ParamLayout& layout, std::span<T> params,
               std::span<const T> grads, AdamState<T>& state,
               const AdamConfig& cfg) {
  const std::size_t n = params.size();
  if (grads.size() != n || layout.total() != n) {
    throw Error(ErrorCode::kShape, "optimizer parameter count mismatch");
  }
  if (state.m.size() != n || state.v.size() != n) state.reset(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (!std::isfinite(double(grads[i]))) {
      const TensorInfo& t = layout.owner(i);
      throw Error(ErrorCode::kNumeric,
                  "non-finite gradient in " + t.name + " at element " +
                      std::to_string(i - t.offset));
    }
  }
  const std::uint64_t t = state.step + 1;
  const double c1 = 1.0 - std::pow(cfg.beta1, double(t));
  const double c2 = 1.0 - std::pow(cfg.beta2, double(t));
  for (std::size_t i = 0; i < n; ++i) {
    const double g = grads[i];
    const double m = cfg.beta1 * state.m[i] + (1.0 - cfg.beta1) * g;
    const double v = cfg.beta2 * state.v[i] + (1.0 - cfg.beta2) * g * g;
    state.m[i] = T(m);
    state.v[i] = T(v);
    const double mhat = m / c1;
    const double vhat = v / c2;
    params[i] = T(params[i] - cfg.learning_rate * mhat / (std::sqrt(vhat) + cfg.epsilon));
  }
  state.step = t;
}

template <typename T>
double global_norm(std::span<const T> grads) {
  double s = 0.0;
  for (T g : grads) s += double(g) * double(g);
  return std::sqrt(s);
}

template <typename T>
double clip_global_norm(std::span<T> grads, double max_norm) {
  const double norm = global_norm(std::span<const T>(grads));
  if (norm > max_norm && std::isfinite(norm)) {
    const double scale = max_norm / norm;
    for (T& g : grads) g = T(g * scale);
  }
  return norm;
}

template void adam_step(const ParamLayout&, std::span<float>,
                        std::span<const float>, AdamState<float>&,
                        const AdamConfig&);
template void adam_step(const ParamLayout&, std::span<double>,
                        std::span<const double>, AdamState<double>&,
                        const AdamConfig&);
template double global_norm(std::span<const float>);
template double global_norm(std::span<const double>);
template double clip_global_norm(std::span<float>, double);
template double clip_global_norm(std::span<double>, double);

}  // namespace lpwn::nn
