// SPDX-License-Identifier: Apache-2.0
//
// Masked autoencoder over non-overlapping square patches. The encoder only
// ever sees visible patches; the decoder rebuilds every patch from the
// encoded visible tokens plus a shared learned mask token.
#pragma once

#include <cstdint>
#include <vector>

#include "shadowkit/image.hpp"
#include "shadowkit/transformer.hpp"

namespace shadowkit {

struct MaeConfig {
  int patch_size = 8;
  int encoder_dim = 64;
  int encoder_layers = 4;
  int encoder_heads = 4;
  int decoder_dim = 48;
  int decoder_layers = 2;
  int decoder_heads = 4;
  double train_mask_ratio = 0.75;

  void validate() const;
};

/// [num_patches, p*p*C]; patches in row-major grid order, each patch
/// flattened row-major with channels interleaved.
nn::Tensor<double> patchify(const ImageTensor& img, int p);
ImageTensor unpatchify(const nn::Tensor<double>& patches, int height, int width, int channels, int p);
/// Batched form: [N,H,W,C] -> [N, P, p*p*C].
template <typename T>
nn::Tensor<T> patchify_batch(const nn::Tensor<T>& images, int p);

/// Which patches a mask hides: every patch containing at least one pixel
/// at or above the mask threshold. Returned in ascending order.
std::vector<int> hidden_patches(const ShadowMask& mask, int p);

/// Visible/hidden split of one batch. Indices are per sample, flattened
/// as sample * count + i, ascending within each sample.
struct PatchSplit {
  int visible_count = 0;
  int hidden_count = 0;
  std::vector<int> visible;
  std::vector<int> hidden;
};

/// Random split that hides round(ratio * num_patches) patches per sample.
PatchSplit random_patch_split(int batch, int num_patches, double ratio, std::uint64_t seed);

template <typename T>
class MaskedAutoencoder {
 public:
  MaskedAutoencoder(const MaeConfig& cfg, int channels, std::uint64_t seed);
  MaskedAutoencoder(const MaskedAutoencoder&) = delete;
  MaskedAutoencoder& operator=(const MaskedAutoencoder&) = delete;

  const MaeConfig& config() const { return cfg_; }
  nn::ParamStore<T>& params() { return params_; }
  const nn::ParamStore<T>& params() const { return params_; }

  /// Reconstructs all patches [N, P, p*p*C] of a grid_h x grid_w layout.
  nn::Var<T> reconstruct(const nn::Tensor<T>& patches, const PatchSplit& split, int grid_h, int grid_w) const;

  /// Mean squared error over hidden patches only.
  nn::Var<T> loss(const nn::Tensor<T>& images, const PatchSplit& split) const;

  /// Prior image: patches touched by the mask are replaced by clamped
  /// reconstructions, all other pixels are copied from img unchanged.
  ImageTensor generate_prior(const ImageTensor& img, const ShadowMask& mask) const;

 private:
  MaeConfig cfg_;
  int channels_;
  nn::ParamStore<T> params_;
  nn::Linear<T> embed_, decoder_embed_, head_;
  std::vector<nn::TransformerBlock<T>> encoder_, decoder_;
  nn::LayerNorm<T> encoder_norm_, decoder_norm_;
  nn::Var<T> mask_token_;
};

}  // namespace shadowkit
