// SPDX-License-Identifier: Apache-2.0
//
// Image and mask containers plus 8-bit PNG I/O. Pixel values are reals in
// [0, 1]; quantisation to bytes only happens at the file boundary.
#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <span>
#include <vector>

namespace shadowkit {

/// H x W x C raster (C = 1 or 3), interleaved, channel order R,G,B.
class ImageTensor {
 public:
  ImageTensor() = default;
  ImageTensor(int height, int width, int channels, double fill = 0.0);
  /// Takes ownership of data; throws unless every value is finite and in [0, 1].
  ImageTensor(int height, int width, int channels, std::vector<double> data);

  int height() const noexcept { return height_; }
  int width() const noexcept { return width_; }
  int channels() const noexcept { return channels_; }
  std::size_t pixel_count() const noexcept { return static_cast<std::size_t>(height_) * width_; }
  bool empty() const noexcept { return data_.empty(); }

  double at(int y, int x, int c) const { return data_[index(y, x, c)]; }
  double& at(int y, int x, int c) { return data_[index(y, x, c)]; }

  std::span<const double> data() const noexcept { return data_; }
  std::span<double> data() noexcept { return data_; }

  /// Throws ShapeError when a value escaped [0, 1] or is not finite.
  void validate() const;

  bool operator==(const ImageTensor&) const = default;

 private:
  std::size_t index(int y, int x, int c) const {
    return (static_cast<std::size_t>(y) * width_ + x) * channels_ + c;
  }

  int height_ = 0;
  int width_ = 0;
  int channels_ = 0;
  std::vector<double> data_;
};

/// H x W map in [0, 1]; a pixel is shadow when value >= threshold.
class ShadowMask {
 public:
  ShadowMask() = default;
  ShadowMask(int height, int width, double fill = 0.0, double threshold = 0.5);
  ShadowMask(int height, int width, std::vector<double> data, double threshold = 0.5);

  int height() const noexcept { return height_; }
  int width() const noexcept { return width_; }
  double threshold() const noexcept { return threshold_; }
  std::size_t pixel_count() const noexcept { return data_.size(); }

  double at(int y, int x) const { return data_[static_cast<std::size_t>(y) * width_ + x]; }
  double& at(int y, int x) { return data_[static_cast<std::size_t>(y) * width_ + x]; }
  bool is_shadow(int y, int x) const { return at(y, x) >= threshold_; }
  bool is_shadow(std::size_t i) const { return data_[i] >= threshold_; }

  std::span<const double> data() const noexcept { return data_; }
  std::span<double> data() noexcept { return data_; }

  /// Hard 0/1 copy at the threshold.
  ShadowMask binarized() const;
  /// 1 - value, binarised; the non-shadow region of a binary mask.
  ShadowMask complement() const;
  std::size_t shadow_pixel_count() const;

  bool operator==(const ShadowMask&) const = default;

 private:
  int height_ = 0;
  int width_ = 0;
  double threshold_ = 0.5;
  std::vector<double> data_;
};

/// Reads an 8-bit 1- or 3-channel PNG; values are byte/255.
ImageTensor load_image(const std::filesystem::path& path);
/// Writes round(value * 255) as PNG regardless of the file extension.
void save_image(const ImageTensor& img, const std::filesystem::path& path);

/// Reads a single-channel 8-bit PNG mask (3-channel masks are averaged).
ShadowMask load_mask(const std::filesystem::path& path, double threshold = 0.5);
void save_mask(const ShadowMask& mask, const std::filesystem::path& path);

/// CIE L*a*b* (D65) of an sRGB image, interleaved H x W x 3.
struct LabImage {
  int height = 0;
  int width = 0;
  std::vector<double> data;
};
LabImage rgb_to_lab(const ImageTensor& img);
/// Single-pixel conversion used by rgb_to_lab.
std::array<double, 3> srgb_pixel_to_lab(double r, double g, double b);

ImageTensor mask_to_image(const ShadowMask& mask, int channels = 3);
ImageTensor to_rgb(const ImageTensor& img);

/// Pads bottom/right with mirrored (edge-repeating) samples up to the next
/// multiple of `multiple` in each spatial dimension.
ImageTensor pad_symmetric(const ImageTensor& img, int multiple);
ShadowMask pad_symmetric(const ShadowMask& mask, int multiple);
ImageTensor crop(const ImageTensor& img, int height, int width);
ShadowMask crop(const ShadowMask& mask, int height, int width);

/// Horizontal concatenation of equally tall images (converted to RGB).
ImageTensor hstack(const std::vector<ImageTensor>& panels);

/// Mirror index for edge-repeating symmetric extension of [0, n).
int symmetric_index(int i, int n);

}  // namespace shadowkit
