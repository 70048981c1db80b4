// SPDX-License-Identifier: Apache-2.0
//
// Shadow removal network: a residual U-shaped encoder/decoder whose
// bottleneck is a mask-guided interaction block (attention with a learned
// shadow/non-shadow cross-region bias) followed by FFC blocks.
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "shadowkit/ffc.hpp"
#include "shadowkit/image.hpp"
#include "shadowkit/transformer.hpp"

namespace shadowkit {

enum class RemovalVariant { baseline, prior, prior_ffc };

std::string to_string(RemovalVariant v);
/// Parses "baseline", "prior" or "prior_ffc"; throws ConfigError otherwise.
RemovalVariant parse_variant(const std::string& s);

struct RemovalConfig {
  int base_channels = 32;
  int depth = 2;
  int sim_ffc_blocks = 2;
  int sim_heads = 4;
  double ffc_global_ratio = 0.5;
  bool use_prior = true;
  bool use_ffc = true;

  int input_channels() const { return use_prior ? 7 : 4; }
  int bottleneck_channels() const { return base_channels << depth; }
  void validate() const;
  /// Sets use_prior / use_ffc from a variant.
  void apply_variant(RemovalVariant v);
  RemovalVariant variant() const;
};

template <typename T>
struct ResidualBlock {
  nn::Conv2d<T> conv1, conv2;
  static ResidualBlock create(nn::ParamStore<T>& ps, const std::string& name, int channels, nn::Rng& rng);
  nn::Var<T> operator()(const nn::Var<T>& x) const;
};

/// Bottleneck interaction block. Tokens get a pre-norm plus a learned
/// mask embedding, then attention whose logits carry
/// beta * (m_i (1 - m_j) + (1 - m_i) m_j). The attention output projection
/// starts at zero, so a fresh block is the identity before the FFC stage.
template <typename T>
struct SimBlock {
  nn::LayerNorm<T> norm;
  nn::Var<T> mask_embed;  // [1, C]
  nn::Var<T> cross_bias;  // [1], beta
  nn::MultiHeadAttention<T> attn;
  std::vector<FfcBlock<T>> ffc;

  static SimBlock create(nn::ParamStore<T>& ps, const std::string& name, const RemovalConfig& cfg, nn::Rng& rng,
                         bool ffc_linear_mode = false);
  /// feats [N,h,w,C], mask_small [N,h,w,1].
  nn::Var<T> operator()(const nn::Var<T>& feats, const nn::Tensor<T>& mask_small) const;
};

template <typename T>
class RemovalNet {
 public:
  RemovalNet(const RemovalConfig& cfg, std::uint64_t seed);
  RemovalNet(const RemovalNet&) = delete;
  RemovalNet& operator=(const RemovalNet&) = delete;

  const RemovalConfig& config() const { return cfg_; }
  nn::ParamStore<T>& params() { return params_; }
  const nn::ParamStore<T>& params() const { return params_; }
  const SimBlock<T>& sim() const { return sim_; }

  /// Predicted correction [N,H,W,3]. priors must be non-null iff use_prior.
  nn::Var<T> residual(const nn::Tensor<T>& images, const nn::Tensor<T>& masks, const nn::Tensor<T>* priors) const;
  /// clamp(images + residual, 0, 1).
  nn::Var<T> forward(const nn::Tensor<T>& images, const nn::Tensor<T>& masks, const nn::Tensor<T>* priors) const;

  ImageTensor remove_shadow(const ImageTensor& img, const ShadowMask& mask, const ImageTensor* prior) const;

 private:
  struct Level {
    ResidualBlock<T> enc, dec;
    nn::Conv2d<T> down;
    nn::ConvTranspose2x2<T> up;
  };
  RemovalConfig cfg_;
  nn::ParamStore<T> params_;
  nn::Conv2d<T> stem_, head_;
  std::vector<Level> levels_;
  SimBlock<T> sim_;
};

/// Charbonnier: mean(sqrt(diff^2 + eps^2)) - eps with eps = 1e-3.
template <typename T>
nn::Var<T> removal_loss(const nn::Var<T>& pred, const nn::Tensor<T>& gt);
double removal_loss(const ImageTensor& pred, const ImageTensor& gt);

}  // namespace shadowkit
