// SPDX-License-Identifier: Apache-2.0
#include "shadowkit/image.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <iterator>
#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>
#include <string>

#include "shadowkit/error.hpp"

namespace shadowkit {

namespace {

void check_dims(int h, int w) {
  if (h < 2 || w < 2) {
    throw ShapeError("image dims must be at least 2x2, got " + std::to_string(h) + "x" + std::to_string(w));
  }
}

std::uint8_t quantize(double v) { return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0)); }

cv::Mat read_png(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open image file: " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  static constexpr std::array<std::uint8_t, 8> kSignature = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
  if (bytes.size() < kSignature.size() || !std::equal(kSignature.begin(), kSignature.end(), bytes.begin())) {
    throw DecodeError("not a PNG file: " + path.string());
  }
  cv::Mat m = cv::imdecode(bytes, cv::IMREAD_UNCHANGED);
  if (m.empty()) throw DecodeError("corrupt PNG: " + path.string());
  if (m.depth() != CV_8U) {
    throw DecodeError("unsupported bit depth (" + std::to_string(m.elemSize1() * 8) + "-bit) in " + path.string());
  }
  return m;
}

void write_png(const cv::Mat& m, const std::filesystem::path& path) {
  std::vector<std::uint8_t> buf;
  if (!cv::imencode(".png", m, buf)) throw IoError("PNG encoding failed for " + path.string());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write image file: " + path.string());
  out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
  if (!out) throw IoError("short write: " + path.string());
}

double srgb_to_linear(double c) { return c <= 0.04045 ? c / 12.92 : std::pow((c + 0.055) / 1.055, 2.4); }

double lab_f(double t) {
  constexpr double delta = 6.0 / 29.0;
  return t > delta * delta * delta ? std::cbrt(t) : t / (3.0 * delta * delta) + 4.0 / 29.0;
}

}  // namespace

int symmetric_index(int i, int n) {
  const int period = 2 * n;
  i %= period;
  if (i < 0) i += period;
  return i < n ? i : period - 1 - i;
}

// --------------------------------------------------------------------------
// ImageTensor

ImageTensor::ImageTensor(int height, int width, int channels, double fill)
    : height_(height), width_(width), channels_(channels) {
  check_dims(height, width);
  if (channels != 1 && channels != 3) throw ShapeError("channels must be 1 or 3, got " + std::to_string(channels));
  data_.assign(static_cast<std::size_t>(height) * width * channels, fill);
  validate();
}

ImageTensor::ImageTensor(int height, int width, int channels, std::vector<double> data)
    : height_(height), width_(width), channels_(channels), data_(std::move(data)) {
  check_dims(height, width);
  if (channels != 1 && channels != 3) throw ShapeError("channels must be 1 or 3, got " + std::to_string(channels));
  if (data_.size() != static_cast<std::size_t>(height) * width * channels) {
    throw ShapeError("image data size does not match " + std::to_string(height) + "x" + std::to_string(width) + "x" +
                     std::to_string(channels));
  }
  validate();
}

void ImageTensor::validate() const {
  for (double v : data_) {
    if (!std::isfinite(v) || v < 0.0 || v > 1.0) {
      throw ShapeError("image value outside [0,1]: " + std::to_string(v));
    }
  }
}

// --------------------------------------------------------------------------
// ShadowMask

ShadowMask::ShadowMask(int height, int width, double fill, double threshold)
    : ShadowMask(height, width, std::vector<double>(static_cast<std::size_t>(height) * width, fill), threshold) {}

ShadowMask::ShadowMask(int height, int width, std::vector<double> data, double threshold)
    : height_(height), width_(width), threshold_(threshold), data_(std::move(data)) {
  check_dims(height, width);
  if (!(threshold > 0.0 && threshold < 1.0)) throw ConfigError("mask threshold must lie in (0,1)");
  if (data_.size() != static_cast<std::size_t>(height) * width) throw ShapeError("mask data size mismatch");
  for (double v : data_) {
    if (!std::isfinite(v) || v < 0.0 || v > 1.0) throw ShapeError("mask value outside [0,1]: " + std::to_string(v));
  }
}

ShadowMask ShadowMask::binarized() const {
  ShadowMask out = *this;
  for (double& v : out.data_) v = v >= threshold_ ? 1.0 : 0.0;
  return out;
}

ShadowMask ShadowMask::complement() const {
  ShadowMask out = *this;
  for (double& v : out.data_) v = v >= threshold_ ? 0.0 : 1.0;
  return out;
}

std::size_t ShadowMask::shadow_pixel_count() const {
  return static_cast<std::size_t>(std::count_if(data_.begin(), data_.end(), [this](double v) { return v >= threshold_; }));
}

// --------------------------------------------------------------------------
// File I/O

ImageTensor load_image(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw IoError("image file not found: " + path.string());
  cv::Mat m = read_png(path);
  const int ch = m.channels();
  if (ch != 1 && ch != 3) {
    throw DecodeError("unsupported channel count (" + std::to_string(ch) + ") in " + path.string());
  }
  std::vector<double> data(static_cast<std::size_t>(m.rows) * m.cols * ch);
  for (int y = 0; y < m.rows; ++y) {
    const std::uint8_t* row = m.ptr<std::uint8_t>(y);
    for (int x = 0; x < m.cols; ++x) {
      for (int c = 0; c < ch; ++c) {
        // OpenCV stores BGR.
        const int src = ch == 3 ? 2 - c : c;
        data[(static_cast<std::size_t>(y) * m.cols + x) * ch + c] = row[x * ch + src] / 255.0;
      }
    }
  }
  return ImageTensor(m.rows, m.cols, ch, std::move(data));
}

void save_image(const ImageTensor& img, const std::filesystem::path& path) {
  const int ch = img.channels();
  cv::Mat m(img.height(), img.width(), ch == 3 ? CV_8UC3 : CV_8UC1);
  for (int y = 0; y < img.height(); ++y) {
    std::uint8_t* row = m.ptr<std::uint8_t>(y);
    for (int x = 0; x < img.width(); ++x) {
      for (int c = 0; c < ch; ++c) row[x * ch + (ch == 3 ? 2 - c : c)] = quantize(img.at(y, x, c));
    }
  }
  write_png(m, path);
}

ShadowMask load_mask(const std::filesystem::path& path, double threshold) {
  ImageTensor img = load_image(path);
  std::vector<double> data(img.pixel_count());
  for (int y = 0; y < img.height(); ++y) {
    for (int x = 0; x < img.width(); ++x) {
      double s = 0;
      for (int c = 0; c < img.channels(); ++c) s += img.at(y, x, c);
      data[static_cast<std::size_t>(y) * img.width() + x] = s / img.channels();
    }
  }
  return ShadowMask(img.height(), img.width(), std::move(data), threshold);
}

void save_mask(const ShadowMask& mask, const std::filesystem::path& path) {
  save_image(mask_to_image(mask, 1), path);
}

// --------------------------------------------------------------------------
// Colour

std::array<double, 3> srgb_pixel_to_lab(double r, double g, double b) {
  const double lr = srgb_to_linear(r), lg = srgb_to_linear(g), lb = srgb_to_linear(b);
  const double x = 0.4124564 * lr + 0.3575761 * lg + 0.1804375 * lb;
  const double y = 0.2126729 * lr + 0.7151522 * lg + 0.0721750 * lb;
  const double z = 0.0193339 * lr + 0.1191920 * lg + 0.9503041 * lb;
  const double fx = lab_f(x / 0.95047), fy = lab_f(y / 1.0), fz = lab_f(z / 1.08883);
  return {116.0 * fy - 16.0, 500.0 * (fx - fy), 200.0 * (fy - fz)};
}

LabImage rgb_to_lab(const ImageTensor& img) {
  if (img.channels() != 3) throw ShapeError("rgb_to_lab needs a 3-channel image");
  LabImage out{img.height(), img.width(), std::vector<double>(img.pixel_count() * 3)};
  for (std::size_t i = 0; i < img.pixel_count(); ++i) {
    const auto lab = srgb_pixel_to_lab(img.data()[3 * i], img.data()[3 * i + 1], img.data()[3 * i + 2]);
    std::copy(lab.begin(), lab.end(), out.data.begin() + 3 * i);
  }
  return out;
}

// --------------------------------------------------------------------------
// Geometry helpers

ImageTensor mask_to_image(const ShadowMask& mask, int channels) {
  ImageTensor out(mask.height(), mask.width(), channels);
  for (int y = 0; y < mask.height(); ++y) {
    for (int x = 0; x < mask.width(); ++x) {
      for (int c = 0; c < channels; ++c) out.at(y, x, c) = mask.at(y, x);
    }
  }
  return out;
}

ImageTensor to_rgb(const ImageTensor& img) {
  if (img.channels() == 3) return img;
  ImageTensor out(img.height(), img.width(), 3);
  for (int y = 0; y < img.height(); ++y) {
    for (int x = 0; x < img.width(); ++x) {
      for (int c = 0; c < 3; ++c) out.at(y, x, c) = img.at(y, x, 0);
    }
  }
  return out;
}

namespace {
int round_up(int v, int m) { return (v + m - 1) / m * m; }
}  // namespace

ImageTensor pad_symmetric(const ImageTensor& img, int multiple) {
  const int h = round_up(img.height(), multiple), w = round_up(img.width(), multiple);
  if (h == img.height() && w == img.width()) return img;
  ImageTensor out(h, w, img.channels());
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const int sy = symmetric_index(y, img.height()), sx = symmetric_index(x, img.width());
      for (int c = 0; c < img.channels(); ++c) out.at(y, x, c) = img.at(sy, sx, c);
    }
  }
  return out;
}

ShadowMask pad_symmetric(const ShadowMask& mask, int multiple) {
  const int h = round_up(mask.height(), multiple), w = round_up(mask.width(), multiple);
  if (h == mask.height() && w == mask.width()) return mask;
  ShadowMask out(h, w, 0.0, mask.threshold());
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) out.at(y, x) = mask.at(symmetric_index(y, mask.height()), symmetric_index(x, mask.width()));
  }
  return out;
}

ImageTensor crop(const ImageTensor& img, int height, int width) {
  if (height > img.height() || width > img.width()) throw ShapeError("crop larger than image");
  ImageTensor out(height, width, img.channels());
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      for (int c = 0; c < img.channels(); ++c) out.at(y, x, c) = img.at(y, x, c);
    }
  }
  return out;
}

ShadowMask crop(const ShadowMask& mask, int height, int width) {
  if (height > mask.height() || width > mask.width()) throw ShapeError("crop larger than mask");
  ShadowMask out(height, width, 0.0, mask.threshold());
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) out.at(y, x) = mask.at(y, x);
  }
  return out;
}

ImageTensor hstack(const std::vector<ImageTensor>& panels) {
  if (panels.empty()) throw ShapeError("hstack: no panels");
  const int h = panels[0].height();
  int w = 0;
  for (const auto& p : panels) {
    if (p.height() != h) throw ShapeError("hstack: panel heights differ");
    w += p.width();
  }
  ImageTensor out(h, w, 3);
  int x0 = 0;
  for (const auto& p : panels) {
    const ImageTensor rgb = to_rgb(p);
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < rgb.width(); ++x) {
        for (int c = 0; c < 3; ++c) out.at(y, x0 + x, c) = rgb.at(y, x, c);
      }
    }
    x0 += rgb.width();
  }
  return out;
}

}  // namespace shadowkit
