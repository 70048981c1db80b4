// SPDX-License-Identifier: Apache-2.0
//
// Region-wise PSNR / SSIM / RMSE. A region is the set of pixels at or above
// a mask's threshold; a null region means the whole image.
#pragma once

#include <cstddef>
#include <nlohmann/json.hpp>
#include <string>
#include <vector>

#include "shadowkit/image.hpp"

namespace shadowkit {

enum class RmseSpace { rgb, lab };
std::string to_string(RmseSpace s);
RmseSpace parse_rmse_space(const std::string& s);

inline constexpr double kPsnrCap = 100.0;

/// 10 log10(1 / MSE) over region pixels and all channels; 100 dB when
/// MSE < 1e-10.
double psnr(const ImageTensor& pred, const ImageTensor& gt, const ShadowMask* region = nullptr);
/// Mean of the per-channel-averaged SSIM map over region pixels.
double ssim(const ImageTensor& pred, const ImageTensor& gt, const ShadowMask* region = nullptr);
/// rgb: sqrt(mean (255 * diff)^2). lab: mean |L*a*b* difference|.
double rmse(const ImageTensor& pred, const ImageTensor& gt, const ShadowMask* region = nullptr,
            RmseSpace space = RmseSpace::rgb);

struct RegionMetrics {
  double psnr = 0.0;
  double ssim = 0.0;
  double rmse = 0.0;
};

struct RegionMetricsReport {
  RegionMetrics shadow, non_shadow, all;
  /// Images that contributed to each column.
  std::size_t shadow_images = 0;
  std::size_t non_shadow_images = 0;
  std::size_t all_images = 0;
  /// Pixel totals over the evaluated images.
  std::size_t shadow_pixels = 0;
  std::size_t non_shadow_pixels = 0;
  std::size_t total_pixels = 0;
  /// Images whose shadow region was empty and so skipped for that column.
  std::size_t skipped_shadow = 0;
  std::size_t skipped_non_shadow = 0;
  std::string dataset;
  std::string checkpoint;
  RmseSpace rmse_space = RmseSpace::rgb;

  nlohmann::json to_json() const;
};

struct EvalPair {
  const ImageTensor* pred;
  const ImageTensor* gt;
  const ShadowMask* mask;
};

RegionMetricsReport evaluate_pair(const ImageTensor& pred, const ImageTensor& gt, const ShadowMask& mask,
                                  RmseSpace space);
/// Per-image metrics averaged with equal weight per image. Images are
/// processed in parallel; the reduction runs in input order.
RegionMetricsReport evaluate_dataset(const std::vector<EvalPair>& pairs, RmseSpace space);

}  // namespace shadowkit
