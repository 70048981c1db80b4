// SPDX-License-Identifier: Apache-2.0
//
// Fast Fourier convolution: a residual block whose channels are split into
// a local part (spatial convolutions) and a global part (a learned map
// applied per frequency bin of the real 2-D spectrum).
#pragma once

#include <string>

#include "shadowkit/layers.hpp"

namespace shadowkit {

struct FfcConfig {
  int channels = 32;
  double global_ratio = 0.5;
  int spatial_kernel = 3;
  /// Drops normalisation and ReLU everywhere in the block, which makes the
  /// block an affine map of its input. Used by property tests.
  bool linear_mode = false;

  int global_channels() const;
  int local_channels() const { return channels - global_channels(); }
  /// Throws ConfigError on an illegal combination.
  void validate() const;
};

/// rfft2 -> per-bin linear map over the 2*Cg stacked real/imag channels ->
/// normalisation + ReLU -> inverse transform (1/(H*W) normalisation).
template <typename T>
struct SpectralTransform {
  nn::Var<T> weight;  // [2Cg, 2Cg], no bias
  nn::InstanceNorm<T> norm;
  bool linear_mode = false;

  static SpectralTransform create(nn::ParamStore<T>& ps, const std::string& name, int global_channels, nn::Rng& rng,
                                  bool linear_mode = false);
  nn::Var<T> operator()(const nn::Var<T>& x) const;
};

template <typename T>
struct FfcBlock {
  FfcConfig cfg;
  nn::Conv2d<T> local_to_local, global_to_local, local_to_global;
  SpectralTransform<T> global_to_global;
  nn::InstanceNorm<T> norm;

  static FfcBlock create(nn::ParamStore<T>& ps, const std::string& name, const FfcConfig& cfg, nn::Rng& rng);
  /// x + F(x); x is [N, H, W, cfg.channels].
  nn::Var<T> operator()(const nn::Var<T>& x) const;
};

}  // namespace shadowkit
