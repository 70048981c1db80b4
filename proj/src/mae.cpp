// SPDX-License-Identifier: Apache-2.0
#include "shadowkit/mae.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "shadowkit/convert.hpp"
#include "shadowkit/error.hpp"

namespace shadowkit {

using nn::Tensor;
using nn::Var;

void MaeConfig::validate() const {
  if (patch_size < 1) throw ConfigError("mae patch_size must be positive");
  if (!(train_mask_ratio > 0.0 && train_mask_ratio < 1.0)) throw ConfigError("mae train_mask_ratio must lie in (0,1)");
  if (encoder_layers < 0 || decoder_layers < 0) throw ConfigError("mae layer counts must be non-negative");
  if (encoder_dim % 4 || decoder_dim % 4) throw ConfigError("mae dims must be multiples of 4");
}

namespace {

void check_divisible(int h, int w, int p) {
  if (p < 1 || h % p || w % p) {
    throw ShapeError("image " + std::to_string(h) + "x" + std::to_string(w) + " not divisible by patch size " +
                     std::to_string(p));
  }
}

}  // namespace

Tensor<double> patchify(const ImageTensor& img, int p) {
  auto t = patchify_batch(image_to_tensor<double>(img), p);
  return t.reshaped({t.dim(1), t.dim(2)});
}

ImageTensor unpatchify(const Tensor<double>& patches, int height, int width, int channels, int p) {
  check_divisible(height, width, p);
  const int gw = width / p;
  if (patches.rank() != 2 || patches.dim(0) != (height / p) * gw || patches.dim(1) != p * p * channels) {
    throw ShapeError("patch tensor " + nn::shape_str(patches.shape()) + " does not fit the image shape");
  }
  std::vector<double> data(static_cast<std::size_t>(height) * width * channels);
  for (int k = 0; k < patches.dim(0); ++k) {
    const int py = k / gw, px = k % gw;
    for (int i = 0; i < p; ++i) {
      for (int j = 0; j < p; ++j) {
        for (int c = 0; c < channels; ++c) {
          data[((static_cast<std::size_t>(py * p + i) * width) + px * p + j) * channels + c] =
              patches[static_cast<std::size_t>(k) * p * p * channels + (i * p + j) * channels + c];
        }
      }
    }
  }
  return ImageTensor(height, width, channels, std::move(data));
}

template <typename T>
Tensor<T> patchify_batch(const Tensor<T>& images, int p) {
  const int n = images.dim(0), h = images.dim(1), w = images.dim(2), c = images.dim(3);
  check_divisible(h, w, p);
  const int gh = h / p, gw = w / p, d = p * p * c;
  Tensor<T> out({n, gh * gw, d});
  for (int b = 0; b < n; ++b) {
    for (int k = 0; k < gh * gw; ++k) {
      const int py = k / gw, px = k % gw;
      T* dst = out.ptr() + (static_cast<std::size_t>(b) * gh * gw + k) * d;
      for (int i = 0; i < p; ++i) {
        const T* src = images.ptr() + ((static_cast<std::size_t>(b) * h + py * p + i) * w + px * p) * c;
        std::copy(src, src + p * c, dst + i * p * c);
      }
    }
  }
  return out;
}

std::vector<int> hidden_patches(const ShadowMask& mask, int p) {
  check_divisible(mask.height(), mask.width(), p);
  const int gw = mask.width() / p;
  std::vector<int> out;
  for (int k = 0; k < (mask.height() / p) * gw; ++k) {
    const int py = k / gw, px = k % gw;
    bool hit = false;
    for (int i = 0; i < p && !hit; ++i) {
      for (int j = 0; j < p && !hit; ++j) hit = mask.is_shadow(py * p + i, px * p + j);
    }
    if (hit) out.push_back(k);
  }
  return out;
}

PatchSplit random_patch_split(int batch, int num_patches, double ratio, std::uint64_t seed) {
  PatchSplit s;
  s.hidden_count = static_cast<int>(std::lround(ratio * num_patches));
  s.visible_count = num_patches - s.hidden_count;
  std::mt19937_64 rng(seed);
  std::vector<int> perm(num_patches);
  for (int b = 0; b < batch; ++b) {
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    std::sort(perm.begin(), perm.begin() + s.visible_count);
    std::sort(perm.begin() + s.visible_count, perm.end());
    s.visible.insert(s.visible.end(), perm.begin(), perm.begin() + s.visible_count);
    s.hidden.insert(s.hidden.end(), perm.begin() + s.visible_count, perm.end());
  }
  return s;
}

template <typename T>
MaskedAutoencoder<T>::MaskedAutoencoder(const MaeConfig& cfg, int channels, std::uint64_t seed)
    : cfg_(cfg), channels_(channels) {
  cfg_.validate();
  nn::Rng rng(seed);
  const int d = cfg_.patch_size * cfg_.patch_size * channels;
  embed_ = nn::Linear<T>::create(params_, "encoder.embed", d, cfg_.encoder_dim, rng);
  for (int i = 0; i < cfg_.encoder_layers; ++i) {
    encoder_.push_back(nn::TransformerBlock<T>::create(params_, "encoder.block" + std::to_string(i), cfg_.encoder_dim,
                                                       cfg_.encoder_heads, 4, rng));
  }
  encoder_norm_ = nn::LayerNorm<T>::create(params_, "encoder.norm", cfg_.encoder_dim);
  decoder_embed_ = nn::Linear<T>::create(params_, "decoder.embed", cfg_.encoder_dim, cfg_.decoder_dim, rng);
  mask_token_ = params_.add("decoder.mask_token", nn::normal_init<T>({cfg_.decoder_dim}, 0.02, rng));
  for (int i = 0; i < cfg_.decoder_layers; ++i) {
    decoder_.push_back(nn::TransformerBlock<T>::create(params_, "decoder.block" + std::to_string(i), cfg_.decoder_dim,
                                                       cfg_.decoder_heads, 4, rng));
  }
  decoder_norm_ = nn::LayerNorm<T>::create(params_, "decoder.norm", cfg_.decoder_dim);
  head_ = nn::Linear<T>::create(params_, "decoder.head", cfg_.decoder_dim, d, rng);
}

template <typename T>
Var<T> MaskedAutoencoder<T>::reconstruct(const Tensor<T>& patches, const PatchSplit& split, int grid_h,
                                         int grid_w) const {
  const int n = patches.dim(0), p = patches.dim(1);
  if (p != grid_h * grid_w || split.visible_count + split.hidden_count != p ||
      split.visible.size() != static_cast<std::size_t>(n) * split.visible_count ||
      split.hidden.size() != static_cast<std::size_t>(n) * split.hidden_count) {
    throw ShapeError("patch split does not match the patch tensor");
  }
  const int v = split.visible_count, m = split.hidden_count;
  std::vector<Var<T>> parts;
  if (v > 0) {
    auto tokens = embed_(Var<T>::constant(patches));
    tokens = nn::add_trailing(tokens, Var<T>::constant(nn::sincos_position_table<T>(grid_h, grid_w, cfg_.encoder_dim)));
    auto x = nn::gather_rows(tokens, split.visible, v);
    for (const auto& blk : encoder_) x = blk(x);
    parts.push_back(decoder_embed_(encoder_norm_(x)));
  }
  if (m > 0) parts.push_back(nn::add_trailing(Var<T>::constant(Tensor<T>({n, m, cfg_.decoder_dim})), mask_token_));
  auto full = parts.size() == 1 ? parts[0] : nn::concat(parts, 1);

  // Put tokens back in grid order: concat order is visible then hidden.
  std::vector<int> restore(static_cast<std::size_t>(n) * p);
  for (int b = 0; b < n; ++b) {
    for (int i = 0; i < v; ++i) restore[b * p + split.visible[b * v + i]] = i;
    for (int i = 0; i < m; ++i) restore[b * p + split.hidden[b * m + i]] = v + i;
  }
  auto x = nn::gather_rows(full, restore, p);
  x = nn::add_trailing(x, Var<T>::constant(nn::sincos_position_table<T>(grid_h, grid_w, cfg_.decoder_dim)));
  for (const auto& blk : decoder_) x = blk(x);
  return head_(decoder_norm_(x));
}

template <typename T>
Var<T> MaskedAutoencoder<T>::loss(const Tensor<T>& images, const PatchSplit& split) const {
  if (images.rank() != 4 || images.dim(0) == 0) throw ShapeError("mae loss needs a non-empty NHWC batch");
  if (split.hidden_count == 0) throw ShapeError("mae loss needs at least one hidden patch");
  const int ps = cfg_.patch_size;
  const auto patches = patchify_batch(images, ps);
  const auto pred = reconstruct(patches, split, images.dim(1) / ps, images.dim(2) / ps);
  const auto target = nn::gather_rows(Var<T>::constant(patches), split.hidden, split.hidden_count);
  return nn::mean(nn::square(nn::sub(nn::gather_rows(pred, split.hidden, split.hidden_count), target)));
}

template <typename T>
ImageTensor MaskedAutoencoder<T>::generate_prior(const ImageTensor& img, const ShadowMask& mask) const {
  if (img.height() != mask.height() || img.width() != mask.width()) {
    throw ShapeError("prior image and mask dimensions differ");
  }
  if (img.channels() != channels_) throw ShapeError("prior channel count mismatch");
  const int ps = cfg_.patch_size;
  const auto hidden = hidden_patches(mask, ps);
  if (hidden.empty()) return img;

  const int gh = img.height() / ps, gw = img.width() / ps, np = gh * gw;
  PatchSplit split;
  split.hidden = hidden;
  split.hidden_count = static_cast<int>(hidden.size());
  for (int k = 0, j = 0; k < np; ++k) {
    if (j < split.hidden_count && hidden[j] == k) {
      ++j;
    } else {
      split.visible.push_back(k);
    }
  }
  split.visible_count = static_cast<int>(split.visible.size());

  nn::NoGradGuard guard;
  const auto patches = patchify_batch(image_to_tensor<T>(img), ps);
  const auto pred = reconstruct(patches, split, gh, gw).value();

  ImageTensor out = img;
  const int d = ps * ps * channels_;
  for (int k : hidden) {
    const int py = k / gw, px = k % gw;
    for (int i = 0; i < ps; ++i) {
      for (int j = 0; j < ps; ++j) {
        for (int c = 0; c < channels_; ++c) {
          const double v = pred[static_cast<std::size_t>(k) * d + (i * ps + j) * channels_ + c];
          out.at(py * ps + i, px * ps + j, c) = std::clamp(v, 0.0, 1.0);
        }
      }
    }
  }
  return out;
}

template Tensor<float> patchify_batch<float>(const Tensor<float>&, int);
template Tensor<double> patchify_batch<double>(const Tensor<double>&, int);
template class MaskedAutoencoder<float>;
template class MaskedAutoencoder<double>;

}  // namespace shadowkit
