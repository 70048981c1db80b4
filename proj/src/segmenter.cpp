// SPDX-License-Identifier: Apache-2.0
#include "shadowkit/segmenter.hpp"

#include <algorithm>
#include <cmath>

#include "shadowkit/convert.hpp"
#include "shadowkit/error.hpp"
#include "shadowkit/wavelet.hpp"

namespace shadowkit {

using nn::Tensor;
using nn::Var;

void SegmenterConfig::validate() const {
  if (depth < 2) throw ConfigError("segmenter depth must be >= 2");
  if (base_channels < 1 || adapter_channels < 1) throw ConfigError("segmenter channel counts must be positive");
}

template <typename T>
UNetBackbone<T>::UNetBackbone(nn::ParamStore<T>& ps, const std::string& name, int base_channels, int depth,
                              nn::Rng& rng)
    : base_(base_channels), depth_(depth) {
  stem1_ = nn::Conv2d<T>::create(ps, name + ".stem1", 3, base_, 3, 1, 1, rng);
  stem2_ = nn::Conv2d<T>::create(ps, name + ".stem2", base_, base_, 3, 1, 1, rng);
  for (int s = 1; s <= depth; ++s) {
    const int cin = base_ << (s - 1), c = base_ << s;
    const std::string p = name + ".down" + std::to_string(s);
    down_.push_back({nn::Conv2d<T>::create(ps, p + ".down", cin, c, 3, 2, 1, rng),
                     nn::Conv2d<T>::create(ps, p + ".pre", c, c, 3, 1, 1, rng),
                     nn::Conv2d<T>::create(ps, p + ".post", c, c, 3, 1, 1, rng)});
  }
  for (int s = depth; s >= 1; --s) {
    const int cin = base_ << s, c = base_ << (s - 1);
    const std::string p = name + ".up" + std::to_string(s);
    up_.push_back({nn::ConvTranspose2x2<T>::create(ps, p + ".up", cin, c, rng),
                   nn::Conv2d<T>::create(ps, p + ".fuse", 2 * c, c, 3, 1, 1, rng),
                   nn::Conv2d<T>::create(ps, p + ".refine", c, c, 3, 1, 1, rng)});
  }
  head_ = nn::Conv2d<T>::create(ps, name + ".head", base_, 1, 1, 1, 0, rng);
}

template <typename T>
Var<T> UNetBackbone<T>::forward(const Var<T>& images, const typename Backbone<T>::StageHook& hook) const {
  auto x = nn::add_scalar(images, T(-0.5));
  x = nn::relu(stem2_(nn::relu(stem1_(x))));
  std::vector<Var<T>> skips{x};
  for (int s = 1; s <= depth_; ++s) {
    const auto& st = down_[s - 1];
    x = nn::relu(st.pre(nn::relu(st.down(x))));
    if (hook) x = hook(s, x);
    x = nn::relu(st.post(x));
    skips.push_back(x);
  }
  for (int i = 0; i < depth_; ++i) {
    const auto& st = up_[i];
    const auto& skip = skips[depth_ - 1 - i];
    x = nn::concat<T>({st.up(x), skip}, 3);
    x = nn::relu(st.refine(nn::relu(st.fuse(x))));
  }
  return head_(x);
}

template <typename T>
WaveletAdapter<T> WaveletAdapter<T>::create(nn::ParamStore<T>& ps, const std::string& name,
                                            const Backbone<T>& backbone, int wavelet_channels, int adapter_channels,
                                            nn::Rng& rng) {
  WaveletAdapter a;
  for (int s = 1; s <= backbone.depth(); ++s) {
    const std::string p = name + ".stage" + std::to_string(s);
    a.down.push_back(nn::Conv2d<T>::create(ps, p + ".down", wavelet_channels, adapter_channels, 1, 1, 0, rng, false));
    auto up = nn::Conv2d<T>::create(ps, p + ".up", adapter_channels, backbone.stage_channels(s), 1, 1, 0, rng, false);
    up.w.mutable_value().fill(T(0));
    a.up.push_back(up);
  }
  return a;
}

template <typename T>
Var<T> WaveletAdapter<T>::inject(int stage, const Var<T>& feats, const Var<T>& wave) const {
  if (stage < 1 || stage > static_cast<int>(down.size())) throw ShapeError("adapter stage out of range");
  if (feats.shape().size() != 4 || wave.shape().size() != 4 || feats.dim(0) != wave.dim(0) ||
      feats.dim(1) != wave.dim(1) || feats.dim(2) != wave.dim(2)) {
    throw ShapeError("adapter spatial mismatch: feats " + nn::shape_str(feats.shape()) + " vs wavelet " +
                     nn::shape_str(wave.shape()));
  }
  return nn::add(feats, up[stage - 1](nn::gelu(down[stage - 1](wave))));
}

template <typename T>
Segmenter<T>::Segmenter(const SegmenterConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
  cfg_.validate();
  nn::Rng rng(seed);
  backbone_ = std::make_unique<UNetBackbone<T>>(params_, "backbone", cfg_.base_channels, cfg_.depth, rng);
  adapter_ = WaveletAdapter<T>::create(params_, "adapter", *backbone_, 9, cfg_.adapter_channels, rng);
}

template <typename T>
Var<T> Segmenter<T>::forward(const Var<T>& images, const std::vector<Var<T>>& wave) const {
  if (static_cast<int>(wave.size()) != cfg_.depth) throw ShapeError("segmenter needs one wavelet stack per stage");
  const int step = 1 << cfg_.depth;
  if (images.dim(1) % step || images.dim(2) % step) {
    throw ShapeError("segmenter input " + nn::shape_str(images.shape()) + " not divisible by " +
                     std::to_string(step));
  }
  auto hook = [&](int stage, const Var<T>& feats) {
    if (!cfg_.use_wavelet) {
      return adapter_.inject(stage, feats, Var<T>::constant(Tensor<T>(wave[stage - 1].shape())));
    }
    return adapter_.inject(stage, feats, wave[stage - 1]);
  };
  return nn::sigmoid(backbone_->forward(images, hook));
}

template <typename T>
ShadowMask Segmenter<T>::predict_mask(const ImageTensor& img) const {
  if (img.channels() != 3) throw ShapeError("segmenter expects a 3-channel image");
  const int step = 1 << cfg_.depth;
  if (img.height() % step || img.width() % step) {
    throw ShapeError("image " + std::to_string(img.height()) + "x" + std::to_string(img.width()) +
                     " not divisible by " + std::to_string(step) + "; pad it first");
  }
  nn::NoGradGuard guard;
  std::vector<Var<T>> wave;
  for (auto& t : wavelet_batch<T>({&img}, cfg_.depth)) wave.push_back(Var<T>::constant(std::move(t)));
  const auto probs = forward(Var<T>::constant(image_to_tensor<T>(img)), wave);
  ShadowMask m = tensor_to_mask(probs.value());
  for (double& v : m.data()) v = std::clamp(v, 1e-6, 1.0 - 1e-6);
  return m;
}

template <typename T>
std::vector<Tensor<T>> wavelet_batch(const std::vector<const ImageTensor*>& imgs, int levels) {
  std::vector<std::vector<Tensor<double>>> per_image;
  per_image.reserve(imgs.size());
  for (const auto* img : imgs) per_image.push_back(wavelet_feature_stack(*img, levels));
  std::vector<Tensor<T>> out;
  for (int l = 0; l < levels; ++l) {
    std::vector<const Tensor<double>*> xs;
    for (const auto& f : per_image) xs.push_back(&f[l]);
    out.push_back(stack_samples<T>(xs));
  }
  return out;
}

template <typename T>
Var<T> segmentation_loss(const Var<T>& probs, const Tensor<T>& gt) {
  if (probs.shape() != gt.shape()) {
    throw ShapeError("segmentation loss shape mismatch: " + nn::shape_str(probs.shape()) + " vs " +
                     nn::shape_str(gt.shape()));
  }
  const int n = gt.dim(0);
  const std::size_t per = gt.size() / n;
  Tensor<T> wpos(gt.shape()), wneg(gt.shape()), gsum({n});
  for (int i = 0; i < n; ++i) {
    std::size_t pos = 0;
    for (std::size_t k = 0; k < per; ++k) pos += gt[i * per + k] >= T(0.5);
    const std::size_t neg = per - pos;
    const double wp = pos == 0 ? 0.0 : (neg == 0 ? 1.0 : 0.5) / pos;
    const double wn = neg == 0 ? 0.0 : (pos == 0 ? 1.0 : 0.5) / neg;
    for (std::size_t k = 0; k < per; ++k) {
      const bool g = gt[i * per + k] >= T(0.5);
      wpos[i * per + k] = static_cast<T>(g ? wp : 0.0);
      wneg[i * per + k] = static_cast<T>(g ? 0.0 : wn);
    }
    gsum[i] = static_cast<T>(pos);
  }
  const T eps = static_cast<T>(1e-6);
  const auto p = nn::clamp(probs, eps, T(1) - eps);
  const auto log_p = nn::log(p);
  const auto log_q = nn::log(nn::add_scalar(nn::scale(p, T(-1)), T(1)));
  const auto ce = nn::add(nn::mul(Var<T>::constant(wpos), log_p), nn::mul(Var<T>::constant(wneg), log_q));
  const auto bce = nn::scale(nn::sum(ce), static_cast<T>(-1.0 / n));

  Tensor<T> gbin(gt.shape());
  for (std::size_t k = 0; k < gt.size(); ++k) gbin[k] = gt[k] >= T(0.5) ? T(1) : T(0);
  const auto inter = nn::sum_per_sample(nn::mul(p, Var<T>::constant(gbin)));
  const auto uni = nn::sub(nn::add(nn::sum_per_sample(p), Var<T>::constant(gsum)), inter);
  const auto iou = nn::div(nn::add_scalar(inter, eps), nn::add_scalar(uni, eps));
  const auto iou_term = nn::add_scalar(nn::scale(nn::mean(iou), T(-1)), T(1));
  return nn::add(bce, iou_term);
}

double segmentation_loss(const ShadowMask& pred, const ShadowMask& gt) {
  if (pred.height() != gt.height() || pred.width() != gt.width()) throw ShapeError("mask dimension mismatch");
  nn::NoGradGuard guard;
  return segmentation_loss(Var<double>::constant(mask_to_tensor<double>(pred)), mask_to_tensor<double>(gt))
      .value()[0];
}

double mask_iou(const ShadowMask& pred, const ShadowMask& gt) {
  if (pred.height() != gt.height() || pred.width() != gt.width()) throw ShapeError("mask dimension mismatch");
  std::size_t inter = 0, uni = 0;
  for (std::size_t i = 0; i < pred.pixel_count(); ++i) {
    const bool a = pred.is_shadow(i), b = gt.is_shadow(i);
    inter += a && b;
    uni += a || b;
  }
  return uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

template class UNetBackbone<float>;
template class UNetBackbone<double>;
template struct WaveletAdapter<float>;
template struct WaveletAdapter<double>;
template class Segmenter<float>;
template class Segmenter<double>;
template std::vector<Tensor<float>> wavelet_batch<float>(const std::vector<const ImageTensor*>&, int);
template std::vector<Tensor<double>> wavelet_batch<double>(const std::vector<const ImageTensor*>&, int);
template Var<float> segmentation_loss<float>(const Var<float>&, const Tensor<float>&);
template Var<double> segmentation_loss<double>(const Var<double>&, const Tensor<double>&);

}  // namespace shadowkit
