// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>

#include "shadowkit/layers.hpp"

namespace shadowkit::nn {

template <typename T>
struct MultiHeadAttention {
  Linear<T> qkv, proj;
  int heads = 1;

  static MultiHeadAttention create(ParamStore<T>& ps, const std::string& name, int dim, int heads, Rng& rng);
  /// x is [N, T, D]; bias, when defined, is added to the [N*heads, T, T]
  /// attention logits before the softmax.
  Var<T> operator()(const Var<T>& x, const Var<T>& bias = {}) const;
};

/// Pre-norm transformer block with a GELU MLP of width ratio * D.
template <typename T>
struct TransformerBlock {
  LayerNorm<T> ln1, ln2;
  MultiHeadAttention<T> attn;
  Linear<T> fc1, fc2;

  static TransformerBlock create(ParamStore<T>& ps, const std::string& name, int dim, int heads, int mlp_ratio,
                                 Rng& rng);
  Var<T> operator()(const Var<T>& x) const;
};

/// Fixed 2-D sine-cosine position table [gh * gw, dim]; dim % 4 == 0.
template <typename T>
Tensor<T> sincos_position_table(int grid_h, int grid_w, int dim);

}  // namespace shadowkit::nn
