// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <numbers>
#include <vector>

#include "shadowkit/layers.hpp"

namespace shadowkit::nn {

struct AdamOptions {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  /// Global gradient-norm clip; 0 disables.
  double max_grad_norm = 0.0;
};

/// Adaptive-moment optimiser over every entry of a ParamStore.
template <typename T>
class Adam {
 public:
  explicit Adam(ParamStore<T>& params, AdamOptions opt = {}) : params_(params), opt_(opt) {
    for (const auto& [_, v] : params_.entries()) {
      m_.emplace_back(v.shape());
      v_.emplace_back(v.shape());
    }
  }

  /// Applies one update with learning rate lr, then clears gradients.
  void step(double lr) {
    ++t_;
    double scale = 1.0;
    if (opt_.max_grad_norm > 0) {
      double sq = 0;
      for (auto& [_, p] : params_.entries()) {
        if (!p.has_grad()) continue;
        for (T g : p.grad().data()) sq += static_cast<double>(g) * g;
      }
      const double norm = std::sqrt(sq);
      if (norm > opt_.max_grad_norm) scale = opt_.max_grad_norm / norm;
    }
    const double bc1 = 1.0 - std::pow(opt_.beta1, t_);
    const double bc2 = 1.0 - std::pow(opt_.beta2, t_);
    auto& entries = params_.entries();
    for (std::size_t k = 0; k < entries.size(); ++k) {
      auto& p = entries[k].second;
      if (!p.has_grad()) continue;
      auto& val = p.mutable_value();
      const auto& g = p.grad();
      auto& m = m_[k];
      auto& v = v_[k];
      for (std::size_t i = 0; i < val.size(); ++i) {
        const double gi = static_cast<double>(g[i]) * scale;
        const double mi = opt_.beta1 * m[i] + (1.0 - opt_.beta1) * gi;
        const double vi = opt_.beta2 * v[i] + (1.0 - opt_.beta2) * gi * gi;
        m[i] = static_cast<T>(mi);
        v[i] = static_cast<T>(vi);
        val[i] = static_cast<T>(val[i] - lr * (mi / bc1) / (std::sqrt(vi / bc2) + opt_.eps));
      }
    }
    params_.zero_grad();
  }

  long steps() const { return t_; }

 private:
  ParamStore<T>& params_;
  AdamOptions opt_;
  std::vector<Tensor<T>> m_, v_;
  long t_ = 0;
};

/// Cosine decay from lr_max at step 0 to lr_min at total_steps.
inline double cosine_lr(double lr_max, double lr_min, long step, long total_steps) {
  if (total_steps <= 0) return lr_max;
  const double t = std::min(1.0, static_cast<double>(step) / static_cast<double>(total_steps));
  return lr_min + 0.5 * (lr_max - lr_min) * (1.0 + std::cos(std::numbers::pi * t));
}

}  // namespace shadowkit::nn
