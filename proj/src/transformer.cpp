// SPDX-License-Identifier: Apache-2.0
#include "shadowkit/transformer.hpp"

#include <cmath>

#include "shadowkit/error.hpp"

namespace shadowkit::nn {

template <typename T>
MultiHeadAttention<T> MultiHeadAttention<T>::create(ParamStore<T>& ps, const std::string& name, int dim, int heads,
                                                    Rng& rng) {
  if (heads < 1 || dim % heads) throw ConfigError("attention dim must be divisible by heads");
  MultiHeadAttention a;
  a.qkv = Linear<T>::create(ps, name + ".qkv", dim, 3 * dim, rng);
  a.proj = Linear<T>::create(ps, name + ".proj", dim, dim, rng);
  a.heads = heads;
  return a;
}

template <typename T>
Var<T> MultiHeadAttention<T>::operator()(const Var<T>& x, const Var<T>& bias) const {
  const int d = x.dim(2);
  const auto qkv_out = qkv(x);
  const auto q = split_heads(slice(qkv_out, 2, 0, d), heads);
  const auto k = split_heads(slice(qkv_out, 2, d, 2 * d), heads);
  const auto v = split_heads(slice(qkv_out, 2, 2 * d, 3 * d), heads);
  auto logits = scale(bmm(q, k, true), static_cast<T>(1.0 / std::sqrt(static_cast<double>(d / heads))));
  if (bias.defined()) logits = add(logits, bias);
  return proj(merge_heads(bmm(softmax(logits), v, false), heads));
}

template <typename T>
TransformerBlock<T> TransformerBlock<T>::create(ParamStore<T>& ps, const std::string& name, int dim, int heads,
                                                int mlp_ratio, Rng& rng) {
  TransformerBlock b;
  b.ln1 = LayerNorm<T>::create(ps, name + ".ln1", dim);
  b.attn = MultiHeadAttention<T>::create(ps, name + ".attn", dim, heads, rng);
  b.ln2 = LayerNorm<T>::create(ps, name + ".ln2", dim);
  b.fc1 = Linear<T>::create(ps, name + ".fc1", dim, mlp_ratio * dim, rng);
  b.fc2 = Linear<T>::create(ps, name + ".fc2", mlp_ratio * dim, dim, rng);
  return b;
}

template <typename T>
Var<T> TransformerBlock<T>::operator()(const Var<T>& x) const {
  const auto h = add(x, attn(ln1(x)));
  return add(h, fc2(gelu(fc1(ln2(h)))));
}

template <typename T>
Tensor<T> sincos_position_table(int grid_h, int grid_w, int dim) {
  if (dim % 4) throw ConfigError("position table dim must be a multiple of 4");
  const int quarter = dim / 4;
  Tensor<T> t({grid_h * grid_w, dim});
  for (int i = 0; i < grid_h; ++i) {
    for (int j = 0; j < grid_w; ++j) {
      T* row = t.ptr() + static_cast<std::size_t>(i * grid_w + j) * dim;
      for (int k = 0; k < quarter; ++k) {
        const double omega = 1.0 / std::pow(10000.0, static_cast<double>(k) / quarter);
        // First half encodes the row, second half the column.
        row[k] = static_cast<T>(std::sin(i * omega));
        row[quarter + k] = static_cast<T>(std::cos(i * omega));
        row[2 * quarter + k] = static_cast<T>(std::sin(j * omega));
        row[3 * quarter + k] = static_cast<T>(std::cos(j * omega));
      }
    }
  }
  return t;
}

template struct MultiHeadAttention<float>;
template struct MultiHeadAttention<double>;
template struct TransformerBlock<float>;
template struct TransformerBlock<double>;
template Tensor<float> sincos_position_table<float>(int, int, int);
template Tensor<double> sincos_position_table<double>(int, int, int);

}  // namespace shadowkit::nn
