// SPDX-License-Identifier: Apache-2.0
#include "shadowkit/removal.hpp"

#include <algorithm>

#include "shadowkit/convert.hpp"
#include "shadowkit/error.hpp"

namespace shadowkit {

using nn::Tensor;
using nn::Var;

std::string to_string(RemovalVariant v) {
  switch (v) {
    case RemovalVariant::baseline: return "baseline";
    case RemovalVariant::prior: return "prior";
    case RemovalVariant::prior_ffc: return "prior_ffc";
  }
  return "unknown";
}

RemovalVariant parse_variant(const std::string& s) {
  if (s == "baseline") return RemovalVariant::baseline;
  if (s == "prior") return RemovalVariant::prior;
  if (s == "prior_ffc") return RemovalVariant::prior_ffc;
  throw ConfigError("unknown removal variant: " + s);
}

void RemovalConfig::validate() const {
  if (base_channels < 1 || depth < 1) throw ConfigError("removal base_channels and depth must be positive");
  if (use_ffc && sim_ffc_blocks < 1) throw ConfigError("sim_ffc_blocks must be >= 1 when use_ffc is set");
  if (bottleneck_channels() % sim_heads) throw ConfigError("bottleneck channels must divide by sim_heads");
}

void RemovalConfig::apply_variant(RemovalVariant v) {
  use_prior = v != RemovalVariant::baseline;
  use_ffc = v == RemovalVariant::prior_ffc;
}

RemovalVariant RemovalConfig::variant() const {
  if (!use_prior) return RemovalVariant::baseline;
  return use_ffc ? RemovalVariant::prior_ffc : RemovalVariant::prior;
}

template <typename T>
ResidualBlock<T> ResidualBlock<T>::create(nn::ParamStore<T>& ps, const std::string& name, int channels,
                                          nn::Rng& rng) {
  return {nn::Conv2d<T>::create(ps, name + ".conv1", channels, channels, 3, 1, 1, rng),
          nn::Conv2d<T>::create(ps, name + ".conv2", channels, channels, 3, 1, 1, rng)};
}

template <typename T>
Var<T> ResidualBlock<T>::operator()(const Var<T>& x) const {
  return nn::add(x, conv2(nn::leaky_relu(conv1(x), T(0.2))));
}

template <typename T>
SimBlock<T> SimBlock<T>::create(nn::ParamStore<T>& ps, const std::string& name, const RemovalConfig& cfg,
                                nn::Rng& rng, bool ffc_linear_mode) {
  const int c = cfg.bottleneck_channels();
  SimBlock s;
  s.norm = nn::LayerNorm<T>::create(ps, name + ".norm", c);
  s.mask_embed = ps.add(name + ".mask_embed", nn::normal_init<T>({1, c}, 0.02, rng));
  s.cross_bias = ps.add(name + ".cross_bias", Tensor<T>({1}));
  s.attn = nn::MultiHeadAttention<T>::create(ps, name + ".attn", c, cfg.sim_heads, rng);
  s.attn.proj.w.mutable_value().fill(T(0));
  if (cfg.use_ffc) {
    FfcConfig fc{c, cfg.ffc_global_ratio, 3, ffc_linear_mode};
    for (int i = 0; i < cfg.sim_ffc_blocks; ++i) {
      s.ffc.push_back(FfcBlock<T>::create(ps, name + ".ffc" + std::to_string(i), fc, rng));
    }
  }
  return s;
}

template <typename T>
Var<T> SimBlock<T>::operator()(const Var<T>& feats, const Tensor<T>& mask_small) const {
  const int n = feats.dim(0), h = feats.dim(1), w = feats.dim(2), c = feats.dim(3), t = h * w;
  if (mask_small.rank() != 4 || mask_small.dim(0) != n || mask_small.dim(1) != h || mask_small.dim(2) != w ||
      mask_small.dim(3) != 1) {
    throw ShapeError("interaction mask " + nn::shape_str(mask_small.shape()) + " does not match features " +
                     nn::shape_str(feats.shape()));
  }
  const int heads = attn.heads;
  Tensor<T> cross({n * heads, t, t});
  for (int b = 0; b < n; ++b) {
    const T* m = mask_small.ptr() + static_cast<std::size_t>(b) * t;
    T* dst = cross.ptr() + static_cast<std::size_t>(b) * heads * t * t;
    for (int i = 0; i < t; ++i) {
      for (int j = 0; j < t; ++j) dst[i * t + j] = m[i] * (1 - m[j]) + (1 - m[i]) * m[j];
    }
    for (int hd = 1; hd < heads; ++hd) std::copy(dst, dst + t * t, dst + static_cast<std::size_t>(hd) * t * t);
  }
  const auto tokens = nn::reshape(feats, {n, t, c});
  const auto m_tokens = Var<T>::constant(mask_small.reshaped({n, t, 1}));
  const auto q = nn::add(norm(tokens), nn::linear(m_tokens, mask_embed, Var<T>()));
  const auto bias = nn::mul_trailing(Var<T>::constant(std::move(cross)), cross_bias);
  auto x = nn::reshape(nn::add(tokens, attn(q, bias)), {n, h, w, c});
  for (const auto& blk : ffc) x = blk(x);
  return x;
}

template <typename T>
RemovalNet<T>::RemovalNet(const RemovalConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
  cfg_.validate();
  nn::Rng rng(seed);
  const int c0 = cfg_.base_channels;
  stem_ = nn::Conv2d<T>::create(params_, "stem", cfg_.input_channels(), c0, 3, 1, 1, rng);
  for (int l = 0; l < cfg_.depth; ++l) {
    const int c = c0 << l;
    const std::string p = "level" + std::to_string(l);
    levels_.push_back({ResidualBlock<T>::create(params_, p + ".enc", c, rng),
                       ResidualBlock<T>::create(params_, p + ".dec", c, rng),
                       nn::Conv2d<T>::create(params_, p + ".down", c, 2 * c, 2, 2, 0, rng),
                       nn::ConvTranspose2x2<T>::create(params_, p + ".up", 2 * c, c, rng)});
  }
  sim_ = SimBlock<T>::create(params_, "sim", cfg_, rng);
  head_ = nn::Conv2d<T>::create(params_, "head", c0, 3, 3, 1, 1, rng);
  head_.w.mutable_value().fill(T(0));
}

template <typename T>
Var<T> RemovalNet<T>::residual(const Tensor<T>& images, const Tensor<T>& masks, const Tensor<T>* priors) const {
  const int step = 1 << cfg_.depth;
  if (images.rank() != 4 || images.dim(3) != 3) throw ShapeError("removal expects [N,H,W,3] images");
  if (masks.rank() != 4 || masks.dim(0) != images.dim(0) || masks.dim(1) != images.dim(1) ||
      masks.dim(2) != images.dim(2) || masks.dim(3) != 1) {
    throw ShapeError("removal mask " + nn::shape_str(masks.shape()) + " does not match image " +
                     nn::shape_str(images.shape()));
  }
  if (cfg_.use_prior != (priors != nullptr)) {
    throw ConfigError(cfg_.use_prior ? "removal network needs a prior image" : "removal network takes no prior");
  }
  if (priors && priors->shape() != images.shape()) throw ShapeError("prior shape does not match image");
  if (images.dim(1) % step || images.dim(2) % step) {
    throw ShapeError("removal input " + nn::shape_str(images.shape()) + " not divisible by " + std::to_string(step));
  }
  std::vector<Var<T>> inputs{Var<T>::constant(images), Var<T>::constant(masks)};
  if (priors) inputs.push_back(Var<T>::constant(*priors));
  auto x = nn::leaky_relu(stem_(nn::concat(inputs, 3)), T(0.2));
  std::vector<Var<T>> skips;
  for (const auto& lv : levels_) {
    x = lv.enc(x);
    skips.push_back(x);
    x = lv.down(x);
  }
  Var<T> mask_var = Var<T>::constant(masks);
  Tensor<T> mask_small;
  {
    nn::NoGradGuard guard;
    mask_small = nn::avg_pool(mask_var, step).value();
  }
  x = sim_(x, mask_small);
  for (int l = cfg_.depth - 1; l >= 0; --l) {
    const auto& lv = levels_[l];
    x = lv.dec(nn::add(lv.up(x), skips[l]));
  }
  return head_(x);
}

template <typename T>
Var<T> RemovalNet<T>::forward(const Tensor<T>& images, const Tensor<T>& masks, const Tensor<T>* priors) const {
  return nn::clamp(nn::add(Var<T>::constant(images), residual(images, masks, priors)), T(0), T(1));
}

template <typename T>
ImageTensor RemovalNet<T>::remove_shadow(const ImageTensor& img, const ShadowMask& mask,
                                         const ImageTensor* prior) const {
  if (img.height() != mask.height() || img.width() != mask.width()) throw ShapeError("image and mask dims differ");
  if (prior && (prior->height() != img.height() || prior->width() != img.width())) {
    throw ShapeError("image and prior dims differ");
  }
  nn::NoGradGuard guard;
  Tensor<T> prior_t;
  if (prior) prior_t = image_to_tensor<T>(*prior);
  const auto r = residual(image_to_tensor<T>(img), mask_to_tensor<T>(mask), prior ? &prior_t : nullptr).value();
  // Composed in double so that a zero residual returns img bit for bit.
  ImageTensor out = img;
  auto data = out.data();
  for (std::size_t i = 0; i < data.size(); ++i) data[i] = std::clamp(data[i] + static_cast<double>(r[i]), 0.0, 1.0);
  return out;
}

template <typename T>
Var<T> removal_loss(const Var<T>& pred, const Tensor<T>& gt) {
  if (pred.shape() != gt.shape()) {
    throw ShapeError("removal loss shape mismatch: " + nn::shape_str(pred.shape()) + " vs " +
                     nn::shape_str(gt.shape()));
  }
  const T eps = static_cast<T>(1e-3);
  const auto d = nn::sub(pred, Var<T>::constant(gt));
  // sqrt(d^2 + eps^2) - eps rewritten as d^2 / (sqrt(d^2 + eps^2) + eps): exact zero at d = 0
  // and no cancellation for small d.
  const auto sq = nn::square(d);
  return nn::mean(nn::div(sq, nn::add_scalar(nn::sqrt(nn::add_scalar(sq, eps * eps)), eps)));
}

double removal_loss(const ImageTensor& pred, const ImageTensor& gt) {
  if (pred.height() != gt.height() || pred.width() != gt.width() || pred.channels() != gt.channels()) {
    throw ShapeError("removal loss dimension mismatch");
  }
  nn::NoGradGuard guard;
  return removal_loss(Var<double>::constant(image_to_tensor<double>(pred)), image_to_tensor<double>(gt)).value()[0];
}

template struct ResidualBlock<float>;
template struct ResidualBlock<double>;
template struct SimBlock<float>;
template struct SimBlock<double>;
template class RemovalNet<float>;
template class RemovalNet<double>;
template Var<float> removal_loss<float>(const Var<float>&, const Tensor<float>&);
template Var<double> removal_loss<double>(const Var<double>&, const Tensor<double>&);

}  // namespace shadowkit
