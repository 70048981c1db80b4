// SPDX-License-Identifier: Apache-2.0
//
// Shadow mask prediction: an encoder-decoder backbone whose encoder stages
// expose a hook, and an adapter that adds projected Haar detail bands into
// the hooked features.
#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "shadowkit/image.hpp"
#include "shadowkit/layers.hpp"

namespace shadowkit {

struct SegmenterConfig {
  int base_channels = 16;
  int depth = 3;
  int adapter_channels = 8;
  /// When false the adapter receives all-zero wavelet features.
  bool use_wavelet = true;

  int wavelet_levels() const { return depth; }
  void validate() const;
};

/// Anything that maps an NHWC image batch to per-pixel logits [N,H,W,1]
/// and calls the hook once per encoder stage (1-based) with that stage's
/// features, continuing with whatever the hook returns.
template <typename T>
class Backbone {
 public:
  using StageHook = std::function<nn::Var<T>(int stage, const nn::Var<T>& feats)>;
  virtual ~Backbone() = default;
  virtual nn::Var<T> forward(const nn::Var<T>& images, const StageHook& hook) const = 0;
  virtual int depth() const = 0;
  /// Channel count of the features passed to the hook at `stage`.
  virtual int stage_channels(int stage) const = 0;
};

template <typename T>
class UNetBackbone final : public Backbone<T> {
 public:
  UNetBackbone(nn::ParamStore<T>& ps, const std::string& name, int base_channels, int depth, nn::Rng& rng);
  nn::Var<T> forward(const nn::Var<T>& images, const typename Backbone<T>::StageHook& hook) const override;
  int depth() const override { return depth_; }
  int stage_channels(int stage) const override { return base_ << stage; }

 private:
  struct Stage {
    nn::Conv2d<T> down, pre, post;
  };
  struct UpStage {
    nn::ConvTranspose2x2<T> up;
    nn::Conv2d<T> fuse, refine;
  };
  int base_ = 16;
  int depth_ = 3;
  nn::Conv2d<T> stem1_, stem2_, head_;
  std::vector<Stage> down_;
  std::vector<UpStage> up_;
};

/// Per stage: bias-free 1x1 (3C -> adapter) -> GELU -> bias-free 1x1
/// (adapter -> stage channels). The second projection starts at zero.
template <typename T>
struct WaveletAdapter {
  std::vector<nn::Conv2d<T>> down, up;

  static WaveletAdapter create(nn::ParamStore<T>& ps, const std::string& name, const Backbone<T>& backbone,
                               int wavelet_channels, int adapter_channels, nn::Rng& rng);
  /// feats + project(wave); stage is 1-based.
  nn::Var<T> inject(int stage, const nn::Var<T>& feats, const nn::Var<T>& wave) const;
};

template <typename T>
class Segmenter {
 public:
  Segmenter(const SegmenterConfig& cfg, std::uint64_t seed);
  Segmenter(const Segmenter&) = delete;
  Segmenter& operator=(const Segmenter&) = delete;

  const SegmenterConfig& config() const { return cfg_; }
  nn::ParamStore<T>& params() { return params_; }
  const nn::ParamStore<T>& params() const { return params_; }
  const WaveletAdapter<T>& adapter() const { return adapter_; }

  /// Sigmoid probabilities [N,H,W,1]. wave holds one [N,H/2^s,W/2^s,9]
  /// tensor per stage, as produced by wavelet_batch.
  nn::Var<T> forward(const nn::Var<T>& images, const std::vector<nn::Var<T>>& wave) const;

  /// Soft mask strictly inside (0, 1); image dims must divide by 2^depth.
  ShadowMask predict_mask(const ImageTensor& img) const;

 private:
  SegmenterConfig cfg_;
  nn::ParamStore<T> params_;
  std::unique_ptr<Backbone<T>> backbone_;
  WaveletAdapter<T> adapter_;
};

/// Wavelet feature stacks of a batch, one [N, h_s, w_s, 3C] tensor per level.
template <typename T>
std::vector<nn::Tensor<T>> wavelet_batch(const std::vector<const ImageTensor*>& imgs, int levels);

/// Balanced binary cross-entropy plus (1 - soft IoU), averaged over the
/// batch. probs and gt are [N,H,W,1]; probs are clamped to [1e-6, 1-1e-6].
template <typename T>
nn::Var<T> segmentation_loss(const nn::Var<T>& probs, const nn::Tensor<T>& gt);

/// Same loss for a single prediction/ground-truth pair.
double segmentation_loss(const ShadowMask& pred, const ShadowMask& gt);

/// Intersection over union of the binarised masks; 1 when both are empty.
double mask_iou(const ShadowMask& pred, const ShadowMask& gt);

}  // namespace shadowkit
