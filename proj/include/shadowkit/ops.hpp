// SPDX-License-Identifier: Apache-2.0
//
// Differentiable tensor ops. Image tensors are NHWC, token tensors are
// [N, T, D]. All ops are instantiated for float and double.
#pragma once

#include <vector>

#include "shadowkit/autograd.hpp"

namespace shadowkit::nn {

// Elementwise, identical shapes.
template <typename T> Var<T> add(const Var<T>& a, const Var<T>& b);
template <typename T> Var<T> sub(const Var<T>& a, const Var<T>& b);
template <typename T> Var<T> mul(const Var<T>& a, const Var<T>& b);
template <typename T> Var<T> div(const Var<T>& a, const Var<T>& b);

/// x + b where b spans x's trailing dims (or b holds a single scalar).
template <typename T> Var<T> add_trailing(const Var<T>& x, const Var<T>& b);
/// x * b with the same broadcasting rule as add_trailing.
template <typename T> Var<T> mul_trailing(const Var<T>& x, const Var<T>& b);
/// x viewed as [R, C] times m of R elements, i.e. a per-row scale
/// (an [N,H,W,1] mask applied across channels).
template <typename T> Var<T> mul_rows(const Var<T>& x, const Var<T>& m);

template <typename T> Var<T> scale(const Var<T>& x, T s);
template <typename T> Var<T> add_scalar(const Var<T>& x, T s);

template <typename T> Var<T> relu(const Var<T>& x);
template <typename T> Var<T> leaky_relu(const Var<T>& x, T slope);
template <typename T> Var<T> gelu(const Var<T>& x);
template <typename T> Var<T> sigmoid(const Var<T>& x);
template <typename T> Var<T> log(const Var<T>& x);
template <typename T> Var<T> sqrt(const Var<T>& x);
template <typename T> Var<T> square(const Var<T>& x);
/// Clamp; gradient passes only where lo < x < hi.
template <typename T> Var<T> clamp(const Var<T>& x, T lo, T hi);

template <typename T> Var<T> sum(const Var<T>& x);
template <typename T> Var<T> mean(const Var<T>& x);
/// Sum over every axis but the first: [N, ...] -> [N].
template <typename T> Var<T> sum_per_sample(const Var<T>& x);

/// x [..., K] * w [K, M] (+ b [M]); b may be undefined.
template <typename T> Var<T> linear(const Var<T>& x, const Var<T>& w, const Var<T>& b);
/// Batched a [B, M, K] * b [B, K, N]; with trans_b, b is [B, N, K].
template <typename T> Var<T> bmm(const Var<T>& a, const Var<T>& b, bool trans_b);

/// NHWC conv, weights [kh, kw, cin, cout], zero padding; b may be undefined.
template <typename T> Var<T> conv2d(const Var<T>& x, const Var<T>& w, const Var<T>& b, int stride, int pad);
/// 2x2 stride-2 transposed conv, weights [cin, 2, 2, cout].
template <typename T> Var<T> conv_transpose2x2(const Var<T>& x, const Var<T>& w, const Var<T>& b);

/// Per-sample, per-channel normalisation over H and W.
template <typename T> Var<T> instance_norm(const Var<T>& x, T eps);
/// Normalisation over the last axis.
template <typename T> Var<T> layer_norm(const Var<T>& x, T eps);
/// Softmax over the last axis.
template <typename T> Var<T> softmax(const Var<T>& x);

template <typename T> Var<T> concat(const std::vector<Var<T>>& xs, int axis);
template <typename T> Var<T> slice(const Var<T>& x, int axis, int begin, int end);
template <typename T> Var<T> reshape(const Var<T>& x, Shape shape);

/// Area-average downsampling of NHWC by an integer factor.
template <typename T> Var<T> avg_pool(const Var<T>& x, int factor);

/// [N,H,W,C] -> [N,H,W/2+1,2C] half spectrum (real channels then imaginary).
template <typename T> Var<T> rfft2(const Var<T>& x);
/// Inverse of rfft2 onto width w, normalised by 1/(H*W).
template <typename T> Var<T> irfft2(const Var<T>& spec, int w);

/// [N, T, H*d] -> [N*H, T, d]
template <typename T> Var<T> split_heads(const Var<T>& x, int heads);
/// [N*H, T, d] -> [N, T, H*d]
template <typename T> Var<T> merge_heads(const Var<T>& x, int heads);

/// Row gather on [N, T, D]: out[n, i] = x[n, index[n * count + i]].
template <typename T> Var<T> gather_rows(const Var<T>& x, const std::vector<int>& index, int count);

}  // namespace shadowkit::nn
