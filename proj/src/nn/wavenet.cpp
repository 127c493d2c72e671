#include "lpwn/nn/wavenet.hpp"

#include <algorithm>
#include <string>

namespace lpwn::nn {

std::vector<int> NetConfig::dilations() const {
  std::vector<int> out;
  for (std::size_t r = 0; r < repeats; ++r) {
    out.insert(out.end(), dilation_cycle.begin(), dilation_cycle.end());
  }
  return out;
}

std::size_t receptive_field(const NetConfig& cfg) {
  std::size_t rf = 2;
  for (int d : cfg.dilations()) rf += static_cast<std::size_t>(d);
  return rf;
}

template <typename T>
ConvWeights<T>& NetWeights<T>::conv(std::size_t i) {
  switch (i) {
    case 0: return enc1;
    case 1: return enc2;
    case 2: return upsample;
    case 3: return input;
    case 4: return post1;
    case 5: return post2;
    default: break;
  }
  auto& b = blocks[(i - 6) / 4];
  switch ((i - 6) % 4) {
    case 0: return b.dilated;
    case 1: return b.cond;
    case 2: return b.residual;
    default: return b.skip;
  }
}

template <typename T>
const ConvWeights<T>& NetWeights<T>::conv(std::size_t i) const {
  return const_cast<NetWeights<T>*>(this)->conv(i);
}

template <typename T>
WaveNet<T>::WaveNet(NetConfig cfg) : cfg_(std::move(cfg)) {
  if (cfg_.residual_channels == 0 || cfg_.skip_channels == 0 ||
      cfg_.post_channels == 0 || cfg_.out_channels == 0 ||
      cfg_.input_channels == 0 || cfg_.hop_samples == 0) {
    throw Error(ErrorCode::kConfig, "network dimensions must be positive");
  }
  for (int d : cfg_.dilations()) {
    if (d <= 0) throw Error(ErrorCode::kConfig, "dilations must be positive");
  }
  const std::size_t c = cfg_.cond_channels;
  enc_shape_ = {c, c, {-1, 0, 1}, true};
  // Taps only; the upsampler is applied by upsample_forward.
  upsample_shape_ = {c, c, std::vector<int>(2 * cfg_.hop_samples, 0), true};
  input_shape_ = {cfg_.input_channels, cfg_.residual_channels, {-1, 0}, true};
  post1_shape_ = {cfg_.skip_channels, cfg_.post_channels, {0}, true};
  post2_shape_ = {cfg_.post_channels, cfg_.out_channels, {0}, true};
  for (int d : cfg_.dilations()) {
    block_shapes_.push_back(GatedBlockShape::make(
        cfg_.residual_channels, cfg_.skip_channels, c, d));
  }

  add_conv("encoder.conv1", enc_shape_);
  add_conv("encoder.conv2", enc_shape_);
  add_conv("encoder.upsample", upsample_shape_);
  add_conv("input", input_shape_);
  add_conv("post.conv1", post1_shape_);
  add_conv("post.conv2", post2_shape_);
  for (std::size_t b = 0; b < block_shapes_.size(); ++b) {
    const std::string p = "block" + std::to_string(b) + ".";
    add_conv(p + "dilated", block_shapes_[b].dilated);
    add_conv(p + "cond", block_shapes_[b].cond);
    add_conv(p + "residual", block_shapes_[b].residual);
    add_conv(p + "skip", block_shapes_[b].skip);
  }
}

template <typename T>
const ConvShape& WaveNet<T>::conv_shape(std::size_t i) const {
  switch (i) {
    case 0:
    case 1: return enc_shape_;
    case 2: return upsample_shape_;
    case 3: return input_shape_;
    case 4: return post1_shape_;
    case 5: return post2_shape_;
    default: break;
  }
  const auto& b = block_shapes_[(i - 6) / 4];
  switch ((i - 6) % 4) {
    case 0: return b.dilated;
    case 1: return b.cond;
    case 2: return b.residual;
    default: return b.skip;
  }
}

template <typename T>
void WaveNet<T>::add_conv(const std::string& name, const ConvShape& shape) {
  ConvParams p;
  const std::vector<std::size_t> wshape{shape.taps(), shape.out, shape.in};
  if (cfg_.weight_norm) {
    p.weight = layout_.add(name + ".weight_v", wshape);
    p.gain = layout_.add(name + ".weight_g", {shape.out});
  } else {
    p.weight = layout_.add(name + ".weight", wshape);
  }
  if (shape.bias) p.bias = layout_.add(name + ".bias", {shape.out});
  conv_params_.push_back(p);
}

template <typename T>
std::vector<T> WaveNet<T>::init_params(std::uint64_t seed) const {
  std::vector<T> params(layout_.total(), T(0));
  for (std::size_t i = 0; i < conv_params_.size(); ++i) {
    const ConvParams& cp = conv_params_[i];
    const TensorInfo& wi = layout_[cp.weight];
    if (wi.size == 0) continue;
    Tensor<T> v = xavier_init<T>(wi.shape, seed ^ splitmix64(cp.weight + 1));
    std::copy(v.data.begin(), v.data.end(), params.begin() + wi.offset);
    if (cp.gain != ParamLayout::npos) {
      const ConvShape& s = conv_shape(i);
      std::vector<double> norms(s.out, 0.0);
      for (std::size_t k = 0; k < s.taps(); ++k) {
        for (std::size_t o = 0; o < s.out; ++o) {
          for (std::size_t j = 0; j < s.in; ++j) {
            const double x = v.data[(k * s.out + o) * s.in + j];
            norms[o] += x * x;
          }
        }
      }
      const TensorInfo& gi = layout_[cp.gain];
      for (std::size_t o = 0; o < s.out; ++o) {
        params[gi.offset + o] = T(std::sqrt(norms[o]));
      }
    }
  }
  return params;
}

template <typename T>
void WaveNet<T>::materialize(std::span<const T> params, NetWeights<T>& w,
                             std::vector<std::vector<double>>& norms) const {
  if (params.size() != layout_.total()) {
    throw Error(ErrorCode::kShape, "parameter vector size mismatch");
  }
  w.blocks.resize(num_blocks());
  norms.resize(num_convs());
  for (std::size_t i = 0; i < num_convs(); ++i) {
    const ConvShape& s = conv_shape(i);
    const ConvParams& cp = conv_params_[i];
    ConvWeights<T>& cw = w.conv(i);
    cw.w.resize(Eigen::Index(s.taps() * s.out), Eigen::Index(s.in));
    const TensorInfo& wi = layout_[cp.weight];
    std::span<const T> v = params.subspan(wi.offset, wi.size);
    std::span<T> dst(cw.w.data(), wi.size);
    if (cp.gain != ParamLayout::npos) {
      const TensorInfo& gi = layout_[cp.gain];
      weight_norm_forward(v, params.subspan(gi.offset, gi.size), s.taps(),
                          s.out, s.in, dst, norms[i]);
    } else {
      std::copy(v.begin(), v.end(), dst.begin());
    }
    if (cp.bias != ParamLayout::npos) {
      const TensorInfo& bi = layout_[cp.bias];
      cw.b = Eigen::Map<const Vec<T>>(params.data() + bi.offset,
                                      Eigen::Index(bi.size));
    } else {
      cw.b.resize(0);
    }
  }
}

template <typename T>
void WaveNet<T>::zero_grads(NetWeights<T>& g) const {
  g.blocks.resize(num_blocks());
  for (std::size_t i = 0; i < num_convs(); ++i) g.conv(i).zero(conv_shape(i));
}

template <typename T>
void WaveNet<T>::upsample_forward(const NetWeights<T>& w, const Mat<T>& enc,
                                  std::size_t begin, std::size_t len,
                                  Workspace<T>& ws) const {
  const Eigen::Index c = enc.rows();
  const std::size_t hop = cfg_.hop_samples;
  const std::size_t taps = 2 * hop;
  const std::size_t frames = std::size_t(enc.cols());
  ws.cond.setZero(c, Eigen::Index(len));
  ws.frame_lo = ws.frame_hi = 0;
  if (len == 0 || frames == 0) return;
  const std::size_t first = begin / hop;
  ws.frame_lo = first > 0 ? first - 1 : 0;
  ws.frame_hi = std::min(frames, (begin + len - 1) / hop + 1);
  if (ws.frame_hi <= ws.frame_lo) return;
  const Eigen::Index nf = Eigen::Index(ws.frame_hi - ws.frame_lo);
  ws.upsample_mix.noalias() =
      w.upsample.w * enc.middleCols(Eigen::Index(ws.frame_lo), nf);
  for (std::size_t f = ws.frame_lo; f < ws.frame_hi; ++f) {
    for (std::size_t k = 0; k < taps; ++k) {
      const std::size_t n = f * hop + k;
      if (n < begin || n >= begin + len) continue;
      ws.cond.col(Eigen::Index(n - begin)) += ws.upsample_mix.block(
          Eigen::Index(k) * c, Eigen::Index(f - ws.frame_lo), c, 1);
    }
  }
  ws.cond.colwise() += w.upsample.b;
}

template <typename T>
void WaveNet<T>::forward(std::span<const T> params, const Mat<T>& features,
                         const Mat<T>& inputs, std::size_t begin,
                         Workspace<T>& ws) const {
  if (std::size_t(features.rows()) != cfg_.cond_channels) {
    throw Error(ErrorCode::kShape, "feature dimension does not match network");
  }
  if (std::size_t(inputs.rows()) != cfg_.input_channels) {
    throw Error(ErrorCode::kShape, "input channels do not match network");
  }
  materialize(params, ws.w, ws.norms);
  const std::size_t len = std::size_t(inputs.cols());

  conv_forward(enc_shape_, ws.w.enc1, features, ws.enc_hidden);
  conv_forward(enc_shape_, ws.w.enc2, ws.enc_hidden, ws.enc_out);
  ws.enc_out += features;
  upsample_forward(ws.w, ws.enc_out, begin, len, ws);

  const std::size_t nb = num_blocks();
  ws.h.resize(nb + 1);
  ws.caches.resize(nb);
  conv_forward(input_shape_, ws.w.input, inputs, ws.h[0]);
  ws.skip_sum.setZero(Eigen::Index(cfg_.skip_channels), Eigen::Index(len));
  for (std::size_t b = 0; b < nb; ++b) {
    gated_block_forward(block_shapes_[b], ws.w.blocks[b], ws.h[b], ws.cond,
                        ws.caches[b], ws.h[b + 1], ws.skip_tmp);
    ws.skip_sum += ws.skip_tmp;
  }
  ws.r1 = ws.skip_sum.cwiseMax(T(0));
  conv_forward(post1_shape_, ws.w.post1, ws.r1, ws.p1);
  ws.r2 = ws.p1.cwiseMax(T(0));
  conv_forward(post2_shape_, ws.w.post2, ws.r2, ws.logits);
  clear_upper_state();
}

template <typename T>
void WaveNet<T>::backward(std::span<const T> params, const Mat<T>& features,
                          const Mat<T>& inputs, std::size_t begin,
                          Workspace<T>& ws, const Mat<T>& dlogits,
                          std::span<T> grads) const {
  if (grads.size() != layout_.total()) {
    throw Error(ErrorCode::kShape, "gradient vector size mismatch");
  }
  const Eigen::Index len = inputs.cols();
  if (dlogits.cols() != len || std::size_t(dlogits.rows()) != cfg_.out_channels) {
    throw Error(ErrorCode::kShape, "logit gradient shape mismatch");
  }
  NetWeights<T>& g = ws.grad;
  zero_grads(g);

  Mat<T> dr2 = Mat<T>::Zero(Eigen::Index(cfg_.post_channels), len);
  conv_backward(post2_shape_, ws.w.post2, ws.r2, dlogits, g.post2, &dr2);
  Mat<T> dp1 = (ws.p1.array() > T(0)).select(dr2, T(0));
  Mat<T> dr1 = Mat<T>::Zero(Eigen::Index(cfg_.skip_channels), len);
  conv_backward(post1_shape_, ws.w.post1, ws.r1, dp1, g.post1, &dr1);
  Mat<T> dskip = (ws.skip_sum.array() > T(0)).select(dr1, T(0));

  const Eigen::Index r = Eigen::Index(cfg_.residual_channels);
  Mat<T> dh = Mat<T>::Zero(r, len);
  Mat<T> dcond = Mat<T>::Zero(Eigen::Index(cfg_.cond_channels), len);
  Mat<T> dx(r, len);
  for (std::size_t b = num_blocks(); b-- > 0;) {
    dx.setZero();
    gated_block_backward(block_shapes_[b], ws.w.blocks[b], ws.h[b], ws.cond,
                         ws.caches[b], dh, dskip, g.blocks[b], dx, &dcond);
    dh.swap(dx);
  }
  conv_backward(input_shape_, ws.w.input, inputs, dh, g.input,
                static_cast<Mat<T>*>(nullptr));

  // Upsampler, then the encoder stack.
  const Eigen::Index c = Eigen::Index(cfg_.cond_channels);
  Mat<T> denc = Mat<T>::Zero(c, ws.enc_out.cols());
  if (g.upsample.b.size() > 0) g.upsample.b.noalias() += dcond.rowwise().sum();
  if (ws.frame_hi > ws.frame_lo) {
    const std::size_t hop = cfg_.hop_samples;
    const Eigen::Index nf = Eigen::Index(ws.frame_hi - ws.frame_lo);
    Mat<T> dmix = Mat<T>::Zero(ws.upsample_mix.rows(), nf);
    for (std::size_t f = ws.frame_lo; f < ws.frame_hi; ++f) {
      for (std::size_t k = 0; k < 2 * hop; ++k) {
        const std::size_t n = f * hop + k;
        if (n < begin || n >= begin + std::size_t(len)) continue;
        dmix.block(Eigen::Index(k) * c, Eigen::Index(f - ws.frame_lo), c, 1) =
            dcond.col(Eigen::Index(n - begin));
      }
    }
    const auto slice = ws.enc_out.middleCols(Eigen::Index(ws.frame_lo), nf);
    g.upsample.w.noalias() += dmix * slice.transpose();
    denc.middleCols(Eigen::Index(ws.frame_lo), nf).noalias() +=
        ws.w.upsample.w.transpose() * dmix;
  }
  Mat<T> dhidden = Mat<T>::Zero(c, ws.enc_out.cols());
  conv_backward(enc_shape_, ws.w.enc2, ws.enc_hidden, denc, g.enc2, &dhidden);
  conv_backward(enc_shape_, ws.w.enc1, features, dhidden, g.enc1,
                static_cast<Mat<T>*>(nullptr));

  // Chain through weight normalization into the flat gradient.
  for (std::size_t i = 0; i < num_convs(); ++i) {
    const ConvShape& s = conv_shape(i);
    const ConvParams& cp = conv_params_[i];
    const ConvWeights<T>& gw = g.conv(i);
    const TensorInfo& wi = layout_[cp.weight];
    std::span<const T> dw(gw.w.data(), wi.size);
    if (cp.gain != ParamLayout::npos) {
      const TensorInfo& gi = layout_[cp.gain];
      weight_norm_backward(params.subspan(wi.offset, wi.size),
                           params.subspan(gi.offset, gi.size), s.taps(), s.out,
                           s.in, ws.norms[i], dw,
                           grads.subspan(wi.offset, wi.size),
                           grads.subspan(gi.offset, gi.size));
    } else {
      for (std::size_t j = 0; j < wi.size; ++j) grads[wi.offset + j] += dw[j];
    }
    if (cp.bias != ParamLayout::npos) {
      const TensorInfo& bi = layout_[cp.bias];
      for (std::size_t j = 0; j < bi.size; ++j) grads[bi.offset + j] += gw.b[Eigen::Index(j)];
    }
  }
  clear_upper_state();
}

template <typename T>
Mat<T> WaveNet<T>::encode(std::span<const T> params,
                          const Mat<T>& features) const {
  Workspace<T> ws;
  materialize(params, ws.w, ws.norms);
  conv_forward(enc_shape_, ws.w.enc1, features, ws.enc_hidden);
  conv_forward(enc_shape_, ws.w.enc2, ws.enc_hidden, ws.enc_out);
  ws.enc_out += features;
  upsample_forward(ws.w, ws.enc_out, 0,
                   std::size_t(features.cols()) * cfg_.hop_samples, ws);
  clear_upper_state();
  return std::move(ws.cond);
}

namespace {

template <typename T, typename X>
void add_tap(const ConvWeights<T>& w, std::size_t k, std::size_t out,
             const X& x, Vec<T>& y) {
  y.noalias() += w.tap(k, out) * x;
}

}  // namespace

template <typename T>
Stepper<T>::Stepper(const WaveNet<T>& net, std::span<const T> params)
    : net_(net) {
  std::vector<std::vector<double>> norms;
  net_.materialize(params, w_, norms);
  reset();
}

template <typename T>
void Stepper<T>::reset() {
  const NetConfig& cfg = net_.config();
  prev_input_.setZero(Eigen::Index(cfg.input_channels));
  const auto dil = cfg.dilations();
  queues_.resize(dil.size());
  heads_.assign(dil.size(), 0);
  for (std::size_t b = 0; b < dil.size(); ++b) {
    queues_[b].setZero(Eigen::Index(cfg.residual_channels), dil[b]);
  }
}

template <typename T>
const Vec<T>& Stepper<T>::step(const Vec<T>& input, std::span<const T> cond) {
  const NetConfig& cfg = net_.config();
  const std::size_t r = cfg.residual_channels;
  if (std::size_t(input.size()) != cfg.input_channels ||
      cond.size() != cfg.cond_channels) {
    throw Error(ErrorCode::kShape, "stepper input size mismatch");
  }
  const Eigen::Map<const Vec<T>> c(cond.data(), Eigen::Index(cond.size()));

  h_ = w_.input.b;
  add_tap(w_.input, 0, r, prev_input_, h_);
  add_tap(w_.input, 1, r, input, h_);
  prev_input_ = input;

  skip_.setZero(Eigen::Index(cfg.skip_channels));
  for (std::size_t b = 0; b < queues_.size(); ++b) {
    const GatedBlockWeights<T>& bw = w_.blocks[b];
    auto past = queues_[b].col(Eigen::Index(heads_[b]));
    a_ = bw.dilated.b;
    add_tap(bw.dilated, 0, 2 * r, past, a_);
    add_tap(bw.dilated, 1, 2 * r, h_, a_);
    if (cfg.cond_channels > 0) a_.noalias() += bw.cond.w * c;
    past = h_;
    heads_[b] = (heads_[b] + 1) % std::size_t(queues_[b].cols());

    tf_ = a_.head(Eigen::Index(r)).array().tanh().matrix();
    sg_ = a_.tail(Eigen::Index(r)).array().logistic().matrix();
    z_ = tf_.cwiseProduct(sg_);
    tmp_ = bw.skip.b;
    add_tap(bw.skip, 0, cfg.skip_channels, z_, tmp_);
    skip_ += tmp_;
    tmp_ = bw.residual.b;
    add_tap(bw.residual, 0, r, z_, tmp_);
    h_ += tmp_;
  }
  tmp_ = skip_.cwiseMax(T(0));
  p1_ = w_.post1.b;
  add_tap(w_.post1, 0, cfg.post_channels, tmp_, p1_);
  tmp_ = p1_.cwiseMax(T(0));
  logits_ = w_.post2.b;
  add_tap(w_.post2, 0, cfg.out_channels, tmp_, logits_);
  clear_upper_state();
  return logits_;
}

template <typename T>
Mat<T> columnwise_logits(const WaveNet<T>& net, std::span<const T> params,
                         const Mat<T>& inputs, const Mat<T>& cond) {
  if (inputs.cols() != cond.cols()) {
    throw Error(ErrorCode::kShape, "inputs and conditioning differ in length");
  }
  Stepper<T> stepper(net, params);
  Mat<T> out(Eigen::Index(net.config().out_channels), inputs.cols());
  for (Eigen::Index t = 0; t < inputs.cols(); ++t) {
    const Vec<T> col = inputs.col(t);
    out.col(t) = stepper.step(
        col, std::span<const T>(cond.col(t).data(), std::size_t(cond.rows())));
  }
  return out;
}

template struct NetWeights<float>;
template struct NetWeights<double>;
template class WaveNet<float>;
template class WaveNet<double>;
template class Stepper<float>;
template class Stepper<double>;
template Mat<float> columnwise_logits(const WaveNet<float>&, std::span<const float>,
                                      const Mat<float>&, const Mat<float>&);
template Mat<double> columnwise_logits(const WaveNet<double>&,
                                       std::span<const double>,
                                       const Mat<double>&, const Mat<double>&);

}  // namespace lpwn::nn
