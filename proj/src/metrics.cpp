// SPDX-License-Identifier: Apache-2.0
#include "shadowkit/metrics.hpp"

#include <cmath>
#include <limits>

#include "shadowkit/error.hpp"
#include "shadowkit/kernels.hpp"

namespace shadowkit {

std::string to_string(RmseSpace s) { return s == RmseSpace::rgb ? "rgb" : "lab"; }

RmseSpace parse_rmse_space(const std::string& s) {
  if (s == "rgb") return RmseSpace::rgb;
  if (s == "lab") return RmseSpace::lab;
  throw ConfigError("unknown rmse space: " + s);
}

namespace {

void check_pair(const ImageTensor& pred, const ImageTensor& gt, const ShadowMask* region) {
  if (pred.height() != gt.height() || pred.width() != gt.width() || pred.channels() != gt.channels()) {
    throw ShapeError("metric inputs differ in shape");
  }
  if (region && (region->height() != gt.height() || region->width() != gt.width())) {
    throw ShapeError("region mask does not match image");
  }
}

bool in_region(const ShadowMask* region, std::size_t i) { return !region || region->is_shadow(i); }

std::size_t region_size(const ImageTensor& img, const ShadowMask* region) {
  std::size_t n = 0;
  for (std::size_t i = 0; i < img.pixel_count(); ++i) n += in_region(region, i);
  if (n == 0) throw EmptyRegionError("metric region contains no pixels");
  return n;
}

}  // namespace

double psnr(const ImageTensor& pred, const ImageTensor& gt, const ShadowMask* region) {
  check_pair(pred, gt, region);
  const std::size_t n = region_size(gt, region);
  const int c = gt.channels();
  double se = 0;
  for (std::size_t i = 0; i < gt.pixel_count(); ++i) {
    if (!in_region(region, i)) continue;
    for (int k = 0; k < c; ++k) {
      const double d = pred.data()[i * c + k] - gt.data()[i * c + k];
      se += d * d;
    }
  }
  const double mse = se / static_cast<double>(n * c);
  return mse < 1e-10 ? kPsnrCap : 10.0 * std::log10(1.0 / mse);
}

double ssim(const ImageTensor& pred, const ImageTensor& gt, const ShadowMask* region) {
  check_pair(pred, gt, region);
  const int h = gt.height(), w = gt.width(), c = gt.channels();
  if (h < kernels::kSsimWindow || w < kernels::kSsimWindow) {
    throw ShapeError("ssim needs images of at least 11x11");
  }
  const std::size_t n = region_size(gt, region);
  const std::size_t np = gt.pixel_count();
  std::vector<double> x(np), y(np), map(np), avg(np, 0.0);
  for (int k = 0; k < c; ++k) {
    for (std::size_t i = 0; i < np; ++i) {
      x[i] = pred.data()[i * c + k];
      y[i] = gt.data()[i * c + k];
    }
    kernels::parallel::ssim_map(x.data(), y.data(), h, w, map.data());
    for (std::size_t i = 0; i < np; ++i) avg[i] += map[i] / c;
  }
  double s = 0;
  for (std::size_t i = 0; i < np; ++i) {
    if (in_region(region, i)) s += avg[i];
  }
  return s / static_cast<double>(n);
}

double rmse(const ImageTensor& pred, const ImageTensor& gt, const ShadowMask* region, RmseSpace space) {
  check_pair(pred, gt, region);
  const std::size_t n = region_size(gt, region);
  if (space == RmseSpace::rgb) {
    const int c = gt.channels();
    double se = 0;
    for (std::size_t i = 0; i < gt.pixel_count(); ++i) {
      if (!in_region(region, i)) continue;
      for (int k = 0; k < c; ++k) {
        const double d = 255.0 * (pred.data()[i * c + k] - gt.data()[i * c + k]);
        se += d * d;
      }
    }
    return std::sqrt(se / static_cast<double>(n * c));
  }
  const LabImage a = rgb_to_lab(pred), b = rgb_to_lab(gt);
  double s = 0;
  for (std::size_t i = 0; i < gt.pixel_count(); ++i) {
    if (!in_region(region, i)) continue;
    for (int k = 0; k < 3; ++k) s += std::abs(a.data[i * 3 + k] - b.data[i * 3 + k]);
  }
  return s / static_cast<double>(n * 3);
}

RegionMetricsReport evaluate_pair(const ImageTensor& pred, const ImageTensor& gt, const ShadowMask& mask,
                                  RmseSpace space) {
  check_pair(pred, gt, &mask);
  RegionMetricsReport r;
  r.rmse_space = space;
  const ShadowMask shadow = mask.binarized();
  const ShadowMask rest = mask.complement();
  r.shadow_pixels = shadow.shadow_pixel_count();
  r.non_shadow_pixels = rest.shadow_pixel_count();
  r.total_pixels = gt.pixel_count();
  auto fill = [&](const ShadowMask* region) {
    return RegionMetrics{psnr(pred, gt, region), ssim(pred, gt, region), rmse(pred, gt, region, space)};
  };
  r.all = fill(nullptr);
  r.all_images = 1;
  if (r.shadow_pixels > 0) {
    r.shadow = fill(&shadow);
    r.shadow_images = 1;
  } else {
    r.skipped_shadow = 1;
  }
  if (r.non_shadow_pixels > 0) {
    r.non_shadow = fill(&rest);
    r.non_shadow_images = 1;
  } else {
    r.skipped_non_shadow = 1;
  }
  return r;
}

RegionMetricsReport evaluate_dataset(const std::vector<EvalPair>& pairs, RmseSpace space) {
  if (pairs.empty()) throw ConfigError("evaluate_dataset needs at least one image");
  std::vector<RegionMetricsReport> per(pairs.size());
#pragma omp parallel for schedule(dynamic)
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    per[i] = evaluate_pair(*pairs[i].pred, *pairs[i].gt, *pairs[i].mask, space);
  }
  RegionMetricsReport out;
  out.rmse_space = space;
  auto acc = [](RegionMetrics& dst, const RegionMetrics& src) {
    dst.psnr += src.psnr;
    dst.ssim += src.ssim;
    dst.rmse += src.rmse;
  };
  for (const auto& r : per) {
    acc(out.all, r.all);
    out.all_images += r.all_images;
    if (r.shadow_images) acc(out.shadow, r.shadow);
    if (r.non_shadow_images) acc(out.non_shadow, r.non_shadow);
    out.shadow_images += r.shadow_images;
    out.non_shadow_images += r.non_shadow_images;
    out.skipped_shadow += r.skipped_shadow;
    out.skipped_non_shadow += r.skipped_non_shadow;
    out.shadow_pixels += r.shadow_pixels;
    out.non_shadow_pixels += r.non_shadow_pixels;
    out.total_pixels += r.total_pixels;
  }
  auto finish = [](RegionMetrics& m, std::size_t k) {
    if (k == 0) {
      const double nan = std::numeric_limits<double>::quiet_NaN();
      m = {nan, nan, nan};
      return;
    }
    m.psnr /= static_cast<double>(k);
    m.ssim /= static_cast<double>(k);
    m.rmse /= static_cast<double>(k);
  };
  finish(out.all, out.all_images);
  finish(out.shadow, out.shadow_images);
  finish(out.non_shadow, out.non_shadow_images);
  return out;
}

nlohmann::json RegionMetricsReport::to_json() const {
  auto region = [](const RegionMetrics& m, std::size_t images, std::size_t pixels) {
    nlohmann::json j;
    if (images == 0) {
      j = {{"psnr", nullptr}, {"ssim", nullptr}, {"rmse", nullptr}};
    } else {
      j = {{"psnr", m.psnr}, {"ssim", m.ssim}, {"rmse", m.rmse}};
    }
    j["images"] = images;
    j["pixels"] = pixels;
    return j;
  };
  nlohmann::json j;
  j["meta"] = {{"dataset", dataset},
               {"checkpoint", checkpoint},
               {"rmse_space", to_string(rmse_space)},
               {"averaging", "per_image"},
               {"images", all_images},
               {"skipped_shadow", skipped_shadow},
               {"skipped_non_shadow", skipped_non_shadow}};
  j["shadow"] = region(shadow, shadow_images, shadow_pixels);
  j["non_shadow"] = region(non_shadow, non_shadow_images, non_shadow_pixels);
  j["all"] = region(all, all_images, total_pixels);
  return j;
}

}  // namespace shadowkit
