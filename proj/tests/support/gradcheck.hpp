// SPDX-License-Identifier: Apache-2.0
//
// Central finite-difference gradient checker for double-precision graphs.
#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "shadowkit/autograd.hpp"

namespace gradcheck {

struct Result {
  std::string worst_name;
  double worst_rel = 0.0;
  int checked = 0;
};

/// loss() must rebuild the graph from the current values of `inputs` and
/// return a scalar. For every input, up to max_coords coordinates are
/// perturbed by +-step; the relative error per input is
/// ||analytic - numeric|| / max(||analytic||, ||numeric||, 1e-12).
inline Result check(const std::function<shadowkit::nn::Var<double>()>& loss,
                    std::vector<std::pair<std::string, shadowkit::nn::Var<double>>> inputs, int max_coords = 24,
                    double step = 1e-5, unsigned seed = 0) {
  for (auto& [_, v] : inputs) v.zero_grad();
  shadowkit::nn::backward(loss());
  Result r;
  std::mt19937 rng(seed);
  for (auto& [name, v] : inputs) {
    const auto analytic = v.grad();
    auto& val = v.mutable_value();
    std::vector<std::size_t> idx(val.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    std::shuffle(idx.begin(), idx.end(), rng);
    idx.resize(std::min<std::size_t>(idx.size(), max_coords));
    double diff = 0, na = 0, nn_ = 0;
    for (std::size_t i : idx) {
      const double orig = val[i];
      val[i] = orig + step;
      const double fp = loss().value()[0];
      val[i] = orig - step;
      const double fm = loss().value()[0];
      val[i] = orig;
      const double num = (fp - fm) / (2 * step);
      diff += (analytic[i] - num) * (analytic[i] - num);
      na += analytic[i] * analytic[i];
      nn_ += num * num;
      ++r.checked;
    }
    const double rel = std::sqrt(diff) / std::max({std::sqrt(na), std::sqrt(nn_), 1e-12});
    if (rel > r.worst_rel) {
      r.worst_rel = rel;
      r.worst_name = name;
    }
  }
  return r;
}

}  // namespace gradcheck
