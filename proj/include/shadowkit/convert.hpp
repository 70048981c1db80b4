// SPDX-License-Identifier: Apache-2.0
//
// Moves images and masks in and out of NHWC network tensors.
#pragma once

#include <algorithm>
#include <vector>

#include "shadowkit/error.hpp"
#include "shadowkit/image.hpp"
#include "shadowkit/tensor.hpp"

namespace shadowkit {

template <typename T>
nn::Tensor<T> images_to_tensor(const std::vector<const ImageTensor*>& imgs) {
  if (imgs.empty()) throw ShapeError("empty image batch");
  const int h = imgs[0]->height(), w = imgs[0]->width(), c = imgs[0]->channels();
  nn::Tensor<T> t({static_cast<int>(imgs.size()), h, w, c});
  std::size_t o = 0;
  for (const auto* img : imgs) {
    if (img->height() != h || img->width() != w || img->channels() != c) throw ShapeError("ragged image batch");
    for (double v : img->data()) t[o++] = static_cast<T>(v);
  }
  return t;
}

template <typename T>
nn::Tensor<T> image_to_tensor(const ImageTensor& img) {
  return images_to_tensor<T>({&img});
}

template <typename T>
nn::Tensor<T> masks_to_tensor(const std::vector<const ShadowMask*>& masks) {
  if (masks.empty()) throw ShapeError("empty mask batch");
  const int h = masks[0]->height(), w = masks[0]->width();
  nn::Tensor<T> t({static_cast<int>(masks.size()), h, w, 1});
  std::size_t o = 0;
  for (const auto* m : masks) {
    if (m->height() != h || m->width() != w) throw ShapeError("ragged mask batch");
    for (double v : m->data()) t[o++] = static_cast<T>(v);
  }
  return t;
}

template <typename T>
nn::Tensor<T> mask_to_tensor(const ShadowMask& m) {
  return masks_to_tensor<T>({&m});
}

/// Sample n of an NHWC tensor as an image, clamped into [0, 1].
template <typename T>
ImageTensor tensor_to_image(const nn::Tensor<T>& t, int n = 0) {
  const int h = t.dim(1), w = t.dim(2), c = t.dim(3);
  const std::size_t stride = static_cast<std::size_t>(h) * w * c;
  std::vector<double> data(stride);
  for (std::size_t i = 0; i < stride; ++i) data[i] = std::clamp(static_cast<double>(t[n * stride + i]), 0.0, 1.0);
  return ImageTensor(h, w, c, std::move(data));
}

template <typename T>
ShadowMask tensor_to_mask(const nn::Tensor<T>& t, int n = 0, double threshold = 0.5) {
  const int h = t.dim(1), w = t.dim(2);
  const std::size_t stride = static_cast<std::size_t>(h) * w;
  std::vector<double> data(stride);
  for (std::size_t i = 0; i < stride; ++i) data[i] = std::clamp(static_cast<double>(t[n * stride + i]), 0.0, 1.0);
  return ShadowMask(h, w, std::move(data), threshold);
}

/// Stacks per-sample [h, w, c] tensors into [N, h, w, c].
template <typename T, typename U>
nn::Tensor<T> stack_samples(const std::vector<const nn::Tensor<U>*>& xs) {
  if (xs.empty()) throw ShapeError("empty batch");
  nn::Shape s = xs[0]->shape();
  s.insert(s.begin(), static_cast<int>(xs.size()));
  nn::Tensor<T> t(s);
  std::size_t o = 0;
  for (const auto* x : xs) {
    if (x->shape() != xs[0]->shape()) throw ShapeError("ragged batch");
    for (U v : x->data()) t[o++] = static_cast<T>(v);
  }
  return t;
}

}  // namespace shadowkit
