// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "shadowkit/ops.hpp"

namespace shadowkit::nn {

using Rng = std::mt19937_64;

/// Ordered, named collection of trainable leaves. Names are unique and the
/// order is the construction order, which checkpoints rely on.
template <typename T>
class ParamStore {
 public:
  Var<T> add(const std::string& name, Tensor<T> init) {
    for (const auto& [n, _] : entries_) {
      if (n == name) throw ConfigError("duplicate parameter name: " + name);
    }
    auto v = Var<T>::leaf(std::move(init));
    entries_.emplace_back(name, v);
    return v;
  }

  const std::vector<std::pair<std::string, Var<T>>>& entries() const { return entries_; }
  std::vector<std::pair<std::string, Var<T>>>& entries() { return entries_; }

  Var<T> find(const std::string& name) const {
    for (const auto& [n, v] : entries_) {
      if (n == name) return v;
    }
    return {};
  }

  void zero_grad() {
    for (auto& [_, v] : entries_) v.zero_grad();
  }

  std::size_t scalar_count() const {
    std::size_t n = 0;
    for (const auto& [_, v] : entries_) n += v.value().size();
    return n;
  }

  /// Sets every parameter whose name starts with prefix to zero.
  void zero_values(const std::string& prefix = "") {
    for (auto& [n, v] : entries_) {
      if (n.rfind(prefix, 0) == 0) v.mutable_value().fill(T(0));
    }
  }

 private:
  std::vector<std::pair<std::string, Var<T>>> entries_;
};

template <typename T>
Tensor<T> normal_init(Shape shape, double stddev, Rng& rng) {
  Tensor<T> t(std::move(shape));
  std::normal_distribution<double> dist(0.0, stddev);
  for (auto& v : t.data()) v = static_cast<T>(dist(rng));
  return t;
}

/// He-normal for fan_in inputs.
template <typename T>
Tensor<T> he_init(Shape shape, int fan_in, Rng& rng) {
  return normal_init<T>(std::move(shape), std::sqrt(2.0 / fan_in), rng);
}

template <typename T>
Tensor<T> xavier_init(Shape shape, int fan_in, int fan_out, Rng& rng) {
  return normal_init<T>(std::move(shape), std::sqrt(2.0 / (fan_in + fan_out)), rng);
}

template <typename T>
struct Conv2d {
  Var<T> w, b;
  int stride = 1;
  int pad = 0;

  static Conv2d create(ParamStore<T>& ps, const std::string& name, int cin, int cout, int k, int stride, int pad,
                       Rng& rng, bool bias = true) {
    Conv2d c;
    c.w = ps.add(name + ".w", he_init<T>({k, k, cin, cout}, k * k * cin, rng));
    if (bias) c.b = ps.add(name + ".b", Tensor<T>({cout}));
    c.stride = stride;
    c.pad = pad;
    return c;
  }
  Var<T> operator()(const Var<T>& x) const { return conv2d(x, w, b, stride, pad); }
};

template <typename T>
struct ConvTranspose2x2 {
  Var<T> w, b;

  static ConvTranspose2x2 create(ParamStore<T>& ps, const std::string& name, int cin, int cout, Rng& rng) {
    ConvTranspose2x2 c;
    c.w = ps.add(name + ".w", he_init<T>({cin, 2, 2, cout}, cin, rng));
    c.b = ps.add(name + ".b", Tensor<T>({cout}));
    return c;
  }
  Var<T> operator()(const Var<T>& x) const { return conv_transpose2x2(x, w, b); }
};

template <typename T>
struct Linear {
  Var<T> w, b;

  static Linear create(ParamStore<T>& ps, const std::string& name, int in, int out, Rng& rng, bool bias = true) {
    Linear l;
    l.w = ps.add(name + ".w", xavier_init<T>({in, out}, in, out, rng));
    if (bias) l.b = ps.add(name + ".b", Tensor<T>({out}));
    return l;
  }
  Var<T> operator()(const Var<T>& x) const { return linear(x, w, b); }
};

/// Normalisation over the last axis followed by a learned scale and shift.
template <typename T>
struct LayerNorm {
  Var<T> gamma, beta;

  static LayerNorm create(ParamStore<T>& ps, const std::string& name, int dim) {
    LayerNorm l;
    l.gamma = ps.add(name + ".gamma", Tensor<T>({dim}, T(1)));
    l.beta = ps.add(name + ".beta", Tensor<T>({dim}));
    return l;
  }
  Var<T> operator()(const Var<T>& x) const {
    return add_trailing(mul_trailing(layer_norm(x, T(1e-5)), gamma), beta);
  }
};

/// Per-sample, per-channel normalisation with a learned affine map.
template <typename T>
struct InstanceNorm {
  Var<T> gamma, beta;

  static InstanceNorm create(ParamStore<T>& ps, const std::string& name, int channels) {
    InstanceNorm l;
    l.gamma = ps.add(name + ".gamma", Tensor<T>({channels}, T(1)));
    l.beta = ps.add(name + ".beta", Tensor<T>({channels}));
    return l;
  }
  Var<T> operator()(const Var<T>& x) const {
    return add_trailing(mul_trailing(instance_norm(x, T(1e-5)), gamma), beta);
  }
};

}  // namespace shadowkit::nn
