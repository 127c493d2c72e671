#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "lpwn/nn/ops.hpp"
#include "lpwn/nn/tensor.hpp"

namespace lpwn::nn {

struct NetConfig {
  std::size_t input_channels = 1;     // 1 for real-valued input, 256 for one-hot
  std::size_t residual_channels = 32;
  std::size_t skip_channels = 32;
  std::size_t post_channels = 64;
  std::size_t out_channels = 3;
  std::size_t mixture_count = 1;
  std::vector<int> dilation_cycle{1, 2, 4, 8, 16, 32, 64};
  std::size_t repeats = 2;
  std::size_t cond_channels = 19;
  std::size_t hop_samples = 80;
  bool weight_norm = true;

  static constexpr int kTrunkKernel = 2;
  static constexpr int kEncoderKernel = 3;

  std::vector<int> dilations() const;
};

// Number of past samples that can influence one prediction: the kernel-2
// input convolution spans two positions and every block adds its dilation.
std::size_t receptive_field(const NetConfig& cfg);

template <typename T>
struct NetWeights {
  ConvWeights<T> enc1, enc2, upsample, input, post1, post2;
  std::vector<GatedBlockWeights<T>> blocks;

  ConvWeights<T>& conv(std::size_t i);
  const ConvWeights<T>& conv(std::size_t i) const;
};

template <typename T>
struct Workspace {
  NetWeights<T> w;
  NetWeights<T> grad;
  std::vector<std::vector<double>> norms;

  Mat<T> enc_hidden, enc_out;  // cond_channels x frames
  Mat<T> upsample_mix;
  std::size_t frame_lo = 0, frame_hi = 0;
  Mat<T> cond;                 // cond_channels x time
  std::vector<Mat<T>> h;       // block inputs, h[blocks] is the final residual
  std::vector<GatedBlockCache<T>> caches;
  Mat<T> skip_sum, skip_tmp, r1, p1, r2, logits;
};

// Causal dilated WaveNet trunk with a feature encoder:
//   features -> conv3 -> conv3 -> (+features) -> transposed conv (stride hop)
//   prev samples -> causal conv2 -> gated blocks (skip sum) -> relu -> 1x1
//   -> relu -> 1x1 -> logits
// Parameters live in one flat vector described by layout().
template <typename T>
class WaveNet {
 public:
  explicit WaveNet(NetConfig cfg);

  const NetConfig& config() const { return cfg_; }
  const ParamLayout& layout() const { return layout_; }
  std::size_t num_blocks() const { return block_shapes_.size(); }
  std::size_t num_convs() const { return 6 + 4 * num_blocks(); }
  const ConvShape& conv_shape(std::size_t i) const;

  std::vector<T> init_params(std::uint64_t seed) const;

  void materialize(std::span<const T> params, NetWeights<T>& w,
                   std::vector<std::vector<double>>& norms) const;

  // Teacher-forced pass over trunk positions [begin, begin + inputs.cols()).
  // `features` is the whole utterance (cond_channels x frames); `inputs`
  // holds the previous-sample representation at each position.
  void forward(std::span<const T> params, const Mat<T>& features,
               const Mat<T>& inputs, std::size_t begin, Workspace<T>& ws) const;

  // Accumulates dL/dparams into grads, given dL/dlogits.
  void backward(std::span<const T> params, const Mat<T>& features,
                const Mat<T>& inputs, std::size_t begin, Workspace<T>& ws,
                const Mat<T>& dlogits, std::span<T> grads) const;

  // Conditioning for samples [0, frames * hop).
  Mat<T> encode(std::span<const T> params, const Mat<T>& features) const;

  const GatedBlockShape& block_shape(std::size_t b) const {
    return block_shapes_[b];
  }

 private:
  struct ConvParams {
    std::size_t weight = ParamLayout::npos;
    std::size_t gain = ParamLayout::npos;
    std::size_t bias = ParamLayout::npos;
  };

  void add_conv(const std::string& name, const ConvShape& shape);
  void upsample_forward(const NetWeights<T>& w, const Mat<T>& enc,
                        std::size_t begin, std::size_t len,
                        Workspace<T>& ws) const;
  void zero_grads(NetWeights<T>& g) const;

  NetConfig cfg_;
  ParamLayout layout_;
  ConvShape enc_shape_, upsample_shape_, input_shape_, post1_shape_, post2_shape_;
  std::vector<GatedBlockShape> block_shapes_;
  std::vector<ConvParams> conv_params_;
};

// Single-sample generation with per-block queues of past activations.
template <typename T>
class Stepper {
 public:
  Stepper(const WaveNet<T>& net, std::span<const T> params);

  void reset();
  // Logits for the next position given its input column and conditioning.
  const Vec<T>& step(const Vec<T>& input, std::span<const T> cond);

 private:
  const WaveNet<T>& net_;
  NetWeights<T> w_;
  Vec<T> prev_input_;
  std::vector<Mat<T>> queues_;
  std::vector<std::size_t> heads_;
  Vec<T> h_, a_, tf_, sg_, z_, skip_, tmp_, p1_, logits_;
};

// Logits of every position computed one column at a time from zeroed queues,
// i.e. the same arithmetic as Stepper applied to a fresh sequence.
template <typename T>
Mat<T> columnwise_logits(const WaveNet<T>& net, std::span<const T> params,
                         const Mat<T>& inputs, const Mat<T>& cond);

extern template class WaveNet<float>;
extern template class WaveNet<double>;
extern template class Stepper<float>;
extern template class Stepper<double>;

}  // namespace lpwn::nn
