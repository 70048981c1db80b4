// SPDX-License-Identifier: Apache-2.0
//
// Orthonormal 2-D Haar transform. For each 2x2 block
//   a b
//   c d
// LL=(a+b+c+d)/2, LH=(a-b+c-d)/2, HL=(a+b-c-d)/2, HH=(a-b-c+d)/2.
// LH is the horizontal difference (it fires on vertical edges).
#pragma once

#include <vector>

#include "shadowkit/image.hpp"
#include "shadowkit/tensor.hpp"

namespace shadowkit {

/// Row-major single-channel real array.
struct Plane {
  int height = 0;
  int width = 0;
  std::vector<double> data;

  Plane() = default;
  Plane(int h, int w, double fill = 0.0) : height(h), width(w), data(static_cast<std::size_t>(h) * w, fill) {}
  Plane(int h, int w, std::vector<double> values);

  double at(int y, int x) const { return data[static_cast<std::size_t>(y) * width + x]; }
  double& at(int y, int x) { return data[static_cast<std::size_t>(y) * width + x]; }
};

struct SubbandSet {
  Plane ll, lh, hl, hh;
};

struct WaveletPyramid {
  /// Shape of the original (unpadded) input.
  int base_height = 0;
  int base_width = 0;
  /// Shape after symmetric padding to a multiple of 2^levels.
  int padded_height = 0;
  int padded_width = 0;
  /// levels[0] is the finest. Only the deepest LL is used on inversion;
  /// intermediate LL bands are kept for inspection.
  std::vector<SubbandSet> levels;
};

WaveletPyramid haar_dwt2(const Plane& x, int levels);
Plane haar_idwt2(const WaveletPyramid& pyr);

/// Sum of squares of the deepest LL and every detail band.
double coefficient_energy(const WaveletPyramid& pyr);

/// Per level l (1-based), a [H/2^l, W/2^l, 3C] tensor holding the LH bands
/// of all channels, then all HL bands, then all HH bands. Inputs are padded
/// as in haar_dwt2 first, so H/2^l rounds up.
std::vector<nn::Tensor<double>> wavelet_feature_stack(const ImageTensor& img, int levels);

/// Extracts one channel of an image as a plane.
Plane channel_plane(const ImageTensor& img, int channel);

}  // namespace shadowkit
