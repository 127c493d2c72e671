#pragma once

// Dense building blocks of the trunk. Every op has a forward and a matching
// reverse-mode backward; the network composes these and nothing else.

#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <vector>

#if defined(__AVX__)
#include <immintrin.h>
#endif

#include "lpwn/error.hpp"
#include "lpwn/nn/tensor.hpp"

namespace lpwn::nn {

// A 1-d convolution with arbitrary tap offsets: y[:, t] = b + sum_k W_k x[:, t + offset_k],
// reading zero outside [0, T). Causal kernel-2 dilated convolutions use
// offsets {-d, 0}; kernel-3 "same" convolutions use {-1, 0, 1}.
struct ConvShape {
  std::size_t in = 0;
  std::size_t out = 0;
  std::vector<int> offsets{0};
  bool bias = true;

  std::size_t taps() const { return offsets.size(); }
};

template <typename T>
struct ConvWeights {
  RowMat<T> w;  // (taps * out) x in; rows k*out .. k*out+out-1 hold tap k
  Vec<T> b;     // empty when the layer has no bias

  void zero(const ConvShape& s) {
    w.setZero(Eigen::Index(s.taps() * s.out), Eigen::Index(s.in));
    if (s.bias) b.setZero(Eigen::Index(s.out)); else b.resize(0);
  }
  auto tap(std::size_t k, std::size_t out) const {
    return w.middleRows(Eigen::Index(k * out), Eigen::Index(out));
  }
  auto tap(std::size_t k, std::size_t out) {
    return w.middleRows(Eigen::Index(k * out), Eigen::Index(out));
  }
};

template <typename T>
void conv_forward(const ConvShape& s, const ConvWeights<T>& cw, const Mat<T>& x,
                  Mat<T>& y) {
  if (std::size_t(x.rows()) != s.in) {
    throw Error(ErrorCode::kShape, "convolution input channel mismatch");
  }
  const Eigen::Index n = x.cols();
  y.resize(Eigen::Index(s.out), n);
  if (s.bias) {
    y.colwise() = cw.b;
  } else {
    y.setZero();
  }
  for (std::size_t k = 0; k < s.taps(); ++k) {
    const Eigen::Index o = s.offsets[k];
    const auto wk = cw.tap(k, s.out);
    if (o <= 0) {
      const Eigen::Index len = n + o;
      if (len > 0) y.rightCols(len).noalias() += wk * x.leftCols(len);
    } else {
      const Eigen::Index len = n - o;
      if (len > 0) y.leftCols(len).noalias() += wk * x.rightCols(len);
    }
  }
}

// Accumulates into dw/db; adds the input gradient into *dx when given.
template <typename T>
void conv_backward(const ConvShape& s, const ConvWeights<T>& cw,
                   const Mat<T>& x, const Mat<T>& dy, ConvWeights<T>& grad,
                   Mat<T>* dx) {
  const Eigen::Index n = x.cols();
  if (s.bias) grad.b.noalias() += dy.rowwise().sum();
  for (std::size_t k = 0; k < s.taps(); ++k) {
    const Eigen::Index o = s.offsets[k];
    const auto wk = cw.tap(k, s.out);
    auto gk = grad.tap(k, s.out);
    if (o <= 0) {
      const Eigen::Index len = n + o;
      if (len <= 0) continue;
      gk.noalias() += dy.rightCols(len) * x.leftCols(len).transpose();
      if (dx) dx->leftCols(len).noalias() += wk.transpose() * dy.rightCols(len);
    } else {
      const Eigen::Index len = n - o;
      if (len <= 0) continue;
      gk.noalias() += dy.leftCols(len) * x.rightCols(len).transpose();
      if (dx) dx->rightCols(len).noalias() += wk.transpose() * dy.leftCols(len);
    }
  }
}

// Weight normalization over a [taps, out, in] tensor, one gain per output
// channel: w[k,o,:] = g[o] * v[k,o,:] / ||v[:,o,:]||.
template <typename T>
void weight_norm_forward(std::span<const T> v, std::span<const T> g,
                         std::size_t taps, std::size_t out, std::size_t in,
                         std::span<T> w, std::vector<double>& norms) {
  norms.assign(out, 0.0);
  for (std::size_t k = 0; k < taps; ++k) {
    for (std::size_t o = 0; o < out; ++o) {
      const T* row = v.data() + (k * out + o) * in;
      for (std::size_t i = 0; i < in; ++i) norms[o] += double(row[i]) * row[i];
    }
  }
  for (auto& nrm : norms) {
    nrm = std::sqrt(nrm);
    if (!(nrm > 0.0)) {
      throw Error(ErrorCode::kNumeric, "weight norm of a zero direction vector");
    }
  }
  for (std::size_t k = 0; k < taps; ++k) {
    for (std::size_t o = 0; o < out; ++o) {
      const T scale = T(double(g[o]) / norms[o]);
      const std::size_t base = (k * out + o) * in;
      for (std::size_t i = 0; i < in; ++i) w[base + i] = scale * v[base + i];
    }
  }
}

// Accumulates dv, dg given dL/dw.
template <typename T>
void weight_norm_backward(std::span<const T> v, std::span<const T> g,
                          std::size_t taps, std::size_t out, std::size_t in,
                          const std::vector<double>& norms,
                          std::span<const T> dw, std::span<T> dv,
                          std::span<T> dg) {
  std::vector<double> dot(out, 0.0);
  for (std::size_t k = 0; k < taps; ++k) {
    for (std::size_t o = 0; o < out; ++o) {
      const std::size_t base = (k * out + o) * in;
      for (std::size_t i = 0; i < in; ++i) {
        dot[o] += double(dw[base + i]) * v[base + i];
      }
    }
  }
  std::vector<double> gain_grad(out);
  for (std::size_t o = 0; o < out; ++o) {
    gain_grad[o] = dot[o] / norms[o];
    dg[o] += T(gain_grad[o]);
  }
  for (std::size_t k = 0; k < taps; ++k) {
    for (std::size_t o = 0; o < out; ++o) {
      const double a = double(g[o]) / norms[o];
      const double c = double(g[o]) * gain_grad[o] / (norms[o] * norms[o]);
      const std::size_t base = (k * out + o) * in;
      for (std::size_t i = 0; i < in; ++i) {
        dv[base + i] += T(a * dw[base + i] - c * v[base + i]);
      }
    }
  }
}

// Wide Eigen kernels can leave the upper vector lanes dirty, after which every
// scalar libm call pays a state transition. Called at the end of each pass.
inline void clear_upper_state() {
#if defined(__AVX__)
  _mm256_zeroupper();
#endif
}

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Glorot uniform. Shapes are [out, in] or [taps, out, in]; the receptive
// field size multiplies both fans.
template <typename T>
Tensor<T> xavier_init(const std::vector<std::size_t>& shape,
                      std::uint64_t seed) {
  Tensor<T> t(shape);
  std::size_t fan_in = 1, fan_out = 1;
  if (shape.size() == 1) {
    fan_in = fan_out = shape[0];
  } else {
    std::size_t field = 1;
    for (std::size_t i = 0; i + 2 < shape.size(); ++i) field *= shape[i];
    fan_out = shape[shape.size() - 2] * field;
    fan_in = shape[shape.size() - 1] * field;
  }
  const double bound = std::sqrt(6.0 / double(fan_in + fan_out));
  std::mt19937_64 rng(splitmix64(seed));
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (auto& v : t.data) v = T(dist(rng));
  return t;
}

// Gated residual unit with local conditioning:
//   a = dilated(x) + cond_proj(c);  z = tanh(a_f) * sigmoid(a_g)
//   residual_out = x + res(z);  skip_out = skip(z)
template <typename T>
struct GatedBlockCache {
  Mat<T> tf, sg, z;
};

struct GatedBlockShape {
  ConvShape dilated;    // R -> 2R, offsets {-d, 0}
  ConvShape cond;       // C -> 2R, no bias
  ConvShape residual;   // R -> R
  ConvShape skip;       // R -> S

  static GatedBlockShape make(std::size_t residual_channels,
                              std::size_t skip_channels,
                              std::size_t cond_channels, int dilation) {
    GatedBlockShape s;
    s.dilated = {residual_channels, 2 * residual_channels, {-dilation, 0}, true};
    s.cond = {cond_channels, 2 * residual_channels, {0}, false};
    s.residual = {residual_channels, residual_channels, {0}, true};
    s.skip = {residual_channels, skip_channels, {0}, true};
    return s;
  }
};

template <typename T>
struct GatedBlockWeights {
  ConvWeights<T> dilated, cond, residual, skip;

  void zero(const GatedBlockShape& s) {
    dilated.zero(s.dilated);
    cond.zero(s.cond);
    residual.zero(s.residual);
    skip.zero(s.skip);
  }
};

template <typename T>
void gated_block_forward(const GatedBlockShape& s, const GatedBlockWeights<T>& w,
                         const Mat<T>& x, const Mat<T>& cond,
                         GatedBlockCache<T>& cache, Mat<T>& residual_out,
                         Mat<T>& skip_out) {
  if (cond.cols() != x.cols()) {
    throw Error(ErrorCode::kShape, "conditioning not aligned with block input");
  }
  const Eigen::Index r = Eigen::Index(s.residual.out);
  Mat<T> a;
  conv_forward(s.dilated, w.dilated, x, a);
  if (cond.rows() > 0) a.noalias() += w.cond.w * cond;
  cache.tf = a.topRows(r).array().tanh().matrix();
  cache.sg = a.bottomRows(r).array().logistic().matrix();
  cache.z = cache.tf.cwiseProduct(cache.sg);
  conv_forward(s.residual, w.residual, cache.z, residual_out);
  residual_out += x;
  conv_forward(s.skip, w.skip, cache.z, skip_out);
}

// d_residual and d_skip are gradients w.r.t. the two outputs. Adds the input
// gradient into dx and the conditioning gradient into dcond.
template <typename T>
void gated_block_backward(const GatedBlockShape& s,
                          const GatedBlockWeights<T>& w, const Mat<T>& x,
                          const Mat<T>& cond, const GatedBlockCache<T>& cache,
                          const Mat<T>& d_residual, const Mat<T>& d_skip,
                          GatedBlockWeights<T>& grad, Mat<T>& dx,
                          Mat<T>* dcond) {
  const Eigen::Index r = Eigen::Index(s.residual.out);
  const Eigen::Index n = x.cols();
  Mat<T> dz = Mat<T>::Zero(r, n);
  conv_backward(s.skip, w.skip, cache.z, d_skip, grad.skip, &dz);
  conv_backward(s.residual, w.residual, cache.z, d_residual, grad.residual, &dz);
  Mat<T> da(2 * r, n);
  da.topRows(r) = (dz.array() * cache.sg.array() *
                   (T(1) - cache.tf.array().square()))
                      .matrix();
  da.bottomRows(r) = (dz.array() * cache.tf.array() * cache.sg.array() *
                      (T(1) - cache.sg.array()))
                         .matrix();
  if (cond.rows() > 0) {
    grad.cond.w.noalias() += da * cond.transpose();
    if (dcond) dcond->noalias() += w.cond.w.transpose() * da;
  }
  dx += d_residual;
  conv_backward(s.dilated, w.dilated, x, da, grad.dilated, &dx);
}

}  // namespace lpwn::nn
