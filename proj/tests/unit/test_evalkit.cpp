#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "oracles.hpp"
#include "shadowkit/error.hpp"
#include "shadowkit/metrics.hpp"

using namespace shadowkit;

namespace {

ImageTensor random_image(int h, int w, unsigned seed) {
  std::mt19937 rng(seed);
  std::uniform_real_distribution<double> d(0.0, 1.0);
  ImageTensor img(h, w, 3);
  for (auto& v : img.data()) v = d(rng);
  return img;
}

ShadowMask random_mask(int h, int w, unsigned seed) {
  std::mt19937 rng(seed);
  std::uniform_real_distribution<double> d(0.0, 1.0);
  ShadowMask m(h, w);
  for (auto& v : m.data()) v = d(rng) < 0.4 ? 1.0 : 0.0;
  return m;
}

ImageTensor add_noise(const ImageTensor& img, double amp, unsigned seed) {
  std::mt19937 rng(seed);
  std::uniform_real_distribution<double> d(-amp, amp);
  ImageTensor out = img;
  for (auto& v : out.data()) v = std::clamp(v + d(rng), 0.0, 1.0);
  return out;
}

ShadowMask quarter_mask() {
  ShadowMask m(16, 16, 0.0);
  for (int y = 0; y < 8; ++y)
    for (int x = 0; x < 8; ++x) m.at(y, x) = 1.0;
  return m;
}

}  // namespace

TEST(MetricOracle, RandomPairsAgree) {
  for (unsigned s = 0; s < 20; ++s) {
    const auto a = random_image(16, 16, 2 * s), b = random_image(16, 16, 2 * s + 1);
    const auto m = random_mask(16, 16, 100 + s);
    const auto rest = m.complement();
    for (const ShadowMask* r : {static_cast<const ShadowMask*>(nullptr), &m, &rest}) {
      EXPECT_NEAR(psnr(a, b, r), oracle::psnr(a, b, r), 1e-6);
      EXPECT_NEAR(ssim(a, b, r), oracle::ssim(a, b, r), 1e-6);
      EXPECT_NEAR(rmse(a, b, r, RmseSpace::rgb), oracle::rmse_rgb(a, b, r), 1e-6);
      EXPECT_NEAR(rmse(a, b, r, RmseSpace::lab), oracle::rmse_lab(a, b, r), 1e-6);
    }
  }
}

TEST(Psnr, ClosedForms) {
  const ImageTensor gt(16, 16, 3, 0.5), off(16, 16, 3, 0.6);
  EXPECT_EQ(psnr(gt, gt), kPsnrCap);
  EXPECT_NEAR(psnr(off, gt), 20.0, 1e-9);
  // Error only outside the region.
  ImageTensor pred = gt;
  for (int y = 8; y < 16; ++y)
    for (int x = 0; x < 16; ++x) pred.at(y, x, 1) = 0.9;
  ShadowMask top(16, 16, 0.0);
  for (int y = 0; y < 8; ++y)
    for (int x = 0; x < 16; ++x) top.at(y, x) = 1.0;
  EXPECT_EQ(psnr(pred, gt, &top), kPsnrCap);
  EXPECT_LT(psnr(pred, gt), kPsnrCap);
}

TEST(Psnr, DoublingTheErrorCostsSixDecibels) {
  const ImageTensor gt(16, 16, 3, 0.5);
  std::mt19937 rng(3);
  std::uniform_real_distribution<double> d(-0.1, 0.1);
  ImageTensor p1 = gt, p2 = gt;
  for (std::size_t i = 0; i < gt.data().size(); ++i) {
    const double e = d(rng);
    p1.data()[i] = 0.5 + e;
    p2.data()[i] = 0.5 + 2 * e;
  }
  EXPECT_NEAR(psnr(p1, gt) - psnr(p2, gt), 20.0 * std::log10(2.0), 1e-9);
  EXPECT_NEAR(20.0 * std::log10(2.0), 6.0206, 5e-5);
}

TEST(Ssim, ClosedFormsAndSymmetry) {
  const auto a = random_image(16, 16, 4), b = random_image(16, 16, 5);
  EXPECT_EQ(ssim(a, a), 1.0);
  const ImageTensor zeros(16, 16, 3, 0.0), ones(16, 16, 3, 1.0);
  const double want = 1e-4 / (1.0 + 1e-4);
  EXPECT_NEAR(ssim(zeros, ones), want, want * 1e-6);
  EXPECT_NEAR(want, 9.999e-5, 5e-9);
  EXPECT_NEAR(ssim(a, b), ssim(b, a), 1e-12);
  EXPECT_LE(ssim(a, b), 1.0);
  EXPECT_THROW(ssim(random_image(10, 16, 1), random_image(10, 16, 2)), ShapeError);
}

TEST(Rmse, RegionHandComputation) {
  const ImageTensor gt(16, 16, 3, 0.5);
  ImageTensor pred = gt;
  const auto m = quarter_mask();
  for (int y = 0; y < 8; ++y)
    for (int x = 0; x < 8; ++x)
      for (int c = 0; c < 3; ++c) pred.at(y, x, c) = 0.7;
  const auto rest = m.complement();
  EXPECT_NEAR(rmse(pred, gt, &m), 51.0, 51.0 * 1e-6);
  EXPECT_NEAR(rmse(pred, gt, &rest), 0.0, 1e-9);
  EXPECT_NEAR(rmse(pred, gt), 25.5, 25.5 * 1e-6);
}

TEST(Rmse, IdentityAndGrayPairs) {
  const auto a = random_image(12, 12, 6);
  EXPECT_EQ(rmse(a, a, nullptr, RmseSpace::rgb), 0.0);
  EXPECT_EQ(rmse(a, a, nullptr, RmseSpace::lab), 0.0);
  const ImageTensor gray(12, 12, 3, 0.5);
  EXPECT_NEAR(rmse(gray, gray, nullptr, RmseSpace::lab), 0.0, 1e-9);
  EXPECT_GE(rmse(a, random_image(12, 12, 7)), 0.0);
}

TEST(Metrics, EmptyRegionAndShapeErrors) {
  const auto a = random_image(16, 16, 8);
  const ShadowMask none(16, 16, 0.0);
  EXPECT_THROW(psnr(a, a, &none), EmptyRegionError);
  EXPECT_THROW(ssim(a, a, &none), EmptyRegionError);
  EXPECT_THROW(rmse(a, a, &none), EmptyRegionError);
  EXPECT_THROW(psnr(a, random_image(16, 12, 9)), ShapeError);
}

TEST(Metrics, DegradationIsMonotoneOnAverage) {
  const double amps[] = {0.01, 0.03, 0.06, 0.1, 0.2};
  double prev_psnr = 1e9, prev_ssim = 2.0;
  for (double amp : amps) {
    double mp = 0, ms = 0;
    for (unsigned s = 0; s < 10; ++s) {
      const auto gt = random_image(16, 16, 50 + s);
      const auto pred = add_noise(gt, amp, 70 + s);
      mp += psnr(pred, gt) / 10;
      ms += ssim(pred, gt) / 10;
    }
    EXPECT_LE(mp, prev_psnr) << amp;
    EXPECT_LE(ms, prev_ssim) << amp;
    prev_psnr = mp;
    prev_ssim = ms;
  }
}

TEST(Report, PartitionLaw) {
  for (unsigned s = 0; s < 10; ++s) {
    const auto a = random_image(16, 16, s), b = random_image(16, 16, s + 40);
    ShadowMask m = random_mask(16, 16, s + 80);
    for (auto& v : m.data()) v *= 0.9;  // soft values straddling the threshold
    const auto r = evaluate_pair(a, b, m, RmseSpace::rgb);
    EXPECT_EQ(r.shadow_pixels + r.non_shadow_pixels, r.total_pixels);
    EXPECT_EQ(r.total_pixels, 256u);
  }
}

TEST(Report, SinglePairEqualsPairMetrics) {
  const auto a = random_image(16, 16, 11), b = random_image(16, 16, 12);
  const auto m = quarter_mask();
  const auto one = evaluate_dataset({{&a, &b, &m}}, RmseSpace::lab);
  const auto rest = m.complement();
  EXPECT_DOUBLE_EQ(one.all.psnr, psnr(a, b));
  EXPECT_DOUBLE_EQ(one.shadow.ssim, ssim(a, b, &m));
  EXPECT_DOUBLE_EQ(one.non_shadow.rmse, rmse(a, b, &rest, RmseSpace::lab));
  const auto two = evaluate_dataset({{&a, &b, &m}, {&a, &b, &m}}, RmseSpace::lab);
  EXPECT_DOUBLE_EQ(two.all.psnr, one.all.psnr);
  EXPECT_DOUBLE_EQ(two.shadow.rmse, one.shadow.rmse);
  EXPECT_EQ(two.all_images, 2u);
}

TEST(Report, MeanOfCapAndTwentyIsSixty) {
  const ImageTensor gt(16, 16, 3, 0.5), off(16, 16, 3, 0.6);
  const auto m = quarter_mask();
  const auto r = evaluate_dataset({{&gt, &gt, &m}, {&off, &gt, &m}}, RmseSpace::rgb);
  EXPECT_NEAR(r.all.psnr, 60.0, 1e-9);
}

TEST(Report, EmptyShadowRegionIsSkippedAndCounted) {
  const auto a = random_image(16, 16, 13), b = random_image(16, 16, 14);
  const ShadowMask none(16, 16, 0.0);
  const auto m = quarter_mask();
  const auto r = evaluate_dataset({{&a, &b, &none}, {&a, &b, &m}}, RmseSpace::rgb);
  EXPECT_EQ(r.skipped_shadow, 1u);
  EXPECT_EQ(r.shadow_images, 1u);
  EXPECT_EQ(r.non_shadow_images, 2u);
  EXPECT_DOUBLE_EQ(r.shadow.psnr, psnr(a, b, &m));

  const auto j = r.to_json();
  for (const char* k : {"meta", "shadow", "non_shadow", "all"}) EXPECT_TRUE(j.contains(k)) << k;
  EXPECT_EQ(j["meta"]["skipped_shadow"].get<int>(), 1);
  EXPECT_EQ(j["meta"]["rmse_space"].get<std::string>(), "rgb");
  EXPECT_EQ(j["shadow"]["pixels"].get<int>() + j["non_shadow"]["pixels"].get<int>(), j["all"]["pixels"].get<int>());

  const auto only_empty = evaluate_dataset({{&a, &b, &none}}, RmseSpace::rgb);
  EXPECT_TRUE(only_empty.to_json()["shadow"]["psnr"].is_null());
}

TEST(Report, RmseSpaceParsing) {
  EXPECT_EQ(parse_rmse_space("lab"), RmseSpace::lab);
  EXPECT_EQ(to_string(RmseSpace::rgb), "rgb");
  EXPECT_THROW(parse_rmse_space("xyz"), ConfigError);
}
