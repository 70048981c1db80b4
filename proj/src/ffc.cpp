// SPDX-License-Identifier: Apache-2.0
#include "shadowkit/ffc.hpp"

#include <cmath>

#include "shadowkit/error.hpp"

namespace shadowkit {

using nn::Var;

int FfcConfig::global_channels() const { return static_cast<int>(std::lround(global_ratio * channels)); }

void FfcConfig::validate() const {
  if (channels < 2) throw ConfigError("ffc channels must be >= 2");
  if (!(global_ratio >= 0.0 && global_ratio <= 1.0)) throw ConfigError("ffc global_ratio must lie in [0,1]");
  if (global_ratio > 0.0 && global_channels() < 1) throw ConfigError("ffc global_ratio too small for channel count");
  if (spatial_kernel < 1 || spatial_kernel % 2 == 0) throw ConfigError("ffc spatial_kernel must be odd");
}

template <typename T>
SpectralTransform<T> SpectralTransform<T>::create(nn::ParamStore<T>& ps, const std::string& name, int global_channels,
                                                  nn::Rng& rng, bool linear_mode) {
  SpectralTransform s;
  const int c2 = 2 * global_channels;
  s.weight = ps.add(name + ".w", nn::he_init<T>({c2, c2}, c2, rng));
  s.norm = nn::InstanceNorm<T>::create(ps, name + ".norm", c2);
  s.linear_mode = linear_mode;
  return s;
}

template <typename T>
Var<T> SpectralTransform<T>::operator()(const Var<T>& x) const {
  if (x.shape().size() != 4) throw ShapeError("spectral transform expects NHWC input");
  if (x.dim(1) < 2 || x.dim(2) < 2) throw ShapeError("spectral transform needs H, W >= 2");
  if (2 * x.dim(3) != weight.dim(0)) throw ShapeError("spectral transform channel mismatch");
  auto spec = nn::linear(nn::rfft2(x), weight, Var<T>());
  if (!linear_mode) spec = nn::relu(norm(spec));
  return nn::irfft2(spec, x.dim(2));
}

template <typename T>
FfcBlock<T> FfcBlock<T>::create(nn::ParamStore<T>& ps, const std::string& name, const FfcConfig& cfg, nn::Rng& rng) {
  cfg.validate();
  FfcBlock b;
  b.cfg = cfg;
  const int cg = cfg.global_channels(), cl = cfg.local_channels(), k = cfg.spatial_kernel, pad = k / 2;
  if (cl > 0) b.local_to_local = nn::Conv2d<T>::create(ps, name + ".l2l", cl, cl, k, 1, pad, rng, false);
  if (cl > 0 && cg > 0) {
    b.global_to_local = nn::Conv2d<T>::create(ps, name + ".g2l", cg, cl, k, 1, pad, rng, false);
    b.local_to_global = nn::Conv2d<T>::create(ps, name + ".l2g", cl, cg, k, 1, pad, rng, false);
  }
  if (cg > 0) b.global_to_global = SpectralTransform<T>::create(ps, name + ".g2g", cg, rng, cfg.linear_mode);
  b.norm = nn::InstanceNorm<T>::create(ps, name + ".norm", cfg.channels);
  return b;
}

template <typename T>
Var<T> FfcBlock<T>::operator()(const Var<T>& x) const {
  if (x.shape().size() != 4 || x.dim(3) != cfg.channels) {
    throw ShapeError("ffc block expects " + std::to_string(cfg.channels) + " channels, got " +
                     nn::shape_str(x.shape()));
  }
  const int cl = cfg.local_channels(), c = cfg.channels;
  std::vector<Var<T>> parts;
  if (cl > 0) {
    const auto xl = nn::slice(x, 3, 0, cl);
    if (cl < c) {
      const auto xg = nn::slice(x, 3, cl, c);
      parts.push_back(nn::add(local_to_local(xl), global_to_local(xg)));
      parts.push_back(nn::add(local_to_global(xl), global_to_global(xg)));
    } else {
      parts.push_back(local_to_local(xl));
    }
  } else {
    parts.push_back(global_to_global(x));
  }
  auto f = parts.size() == 1 ? parts[0] : nn::concat(parts, 3);
  if (!cfg.linear_mode) f = nn::relu(norm(f));
  return nn::add(x, f);
}

template struct SpectralTransform<float>;
template struct SpectralTransform<double>;
template struct FfcBlock<float>;
template struct FfcBlock<double>;

}  // namespace shadowkit
