#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <vector>

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>

#include "oracles.hpp"
#include "shadowkit/error.hpp"
#include "shadowkit/image.hpp"

namespace fs = std::filesystem;
using namespace shadowkit;

namespace {

fs::path temp_dir() {
  const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
  auto d = fs::temp_directory_path() / "shadowkit_imagecore" / (std::string(info->test_suite_name()) + "_" + info->name());
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

ImageTensor random_image(int h, int w, int c, unsigned seed) {
  std::mt19937 rng(seed);
  std::uniform_real_distribution<double> d(0.0, 1.0);
  ImageTensor img(h, w, c);
  for (auto& v : img.data()) v = d(rng);
  return img;
}

void write_bytes(const fs::path& p, const cv::Mat& m) { ASSERT_TRUE(cv::imwrite(p.string(), m)); }

}  // namespace

TEST(LoadImage, AllWhiteAndAllBlack) {
  const auto d = temp_dir();
  write_bytes(d / "w.png", cv::Mat(2, 2, CV_8UC3, cv::Scalar(255, 255, 255)));
  write_bytes(d / "k.png", cv::Mat(2, 2, CV_8UC3, cv::Scalar(0, 0, 0)));
  const auto w = load_image(d / "w.png");
  const auto k = load_image(d / "k.png");
  for (double v : w.data()) EXPECT_EQ(v, 1.0);
  for (double v : k.data()) EXPECT_EQ(v, 0.0);
}

TEST(LoadImage, ByteScalingAndChannelOrder) {
  const auto d = temp_dir();
  cv::Mat m(2, 2, CV_8UC3, cv::Scalar(0, 0, 0));
  m.at<cv::Vec3b>(0, 0) = cv::Vec3b(10, 20, 128);  // stored B,G,R
  write_bytes(d / "p.png", m);
  const auto img = load_image(d / "p.png");
  EXPECT_EQ(img.channels(), 3);
  EXPECT_DOUBLE_EQ(img.at(0, 0, 0), 128.0 / 255.0);
  EXPECT_NEAR(img.at(0, 0, 0), 0.501961, 5e-7);
  EXPECT_DOUBLE_EQ(img.at(0, 0, 1), 20.0 / 255.0);
  EXPECT_DOUBLE_EQ(img.at(0, 0, 2), 10.0 / 255.0);
}

TEST(LoadImage, GrayscaleKeepsOneChannel) {
  const auto d = temp_dir();
  write_bytes(d / "g.png", cv::Mat(3, 4, CV_8UC1, cv::Scalar(51)));
  const auto img = load_image(d / "g.png");
  EXPECT_EQ(img.channels(), 1);
  EXPECT_EQ(img.height(), 3);
  EXPECT_EQ(img.width(), 4);
  EXPECT_DOUBLE_EQ(img.at(2, 3, 0), 0.2);
}

TEST(LoadImage, Errors) {
  const auto d = temp_dir();
  EXPECT_THROW(load_image(d / "missing.png"), IoError);

  write_bytes(d / "deep.png", cv::Mat(2, 2, CV_16UC3, cv::Scalar(1000, 1000, 1000)));
  try {
    load_image(d / "deep.png");
    FAIL() << "16-bit PNG accepted";
  } catch (const DecodeError& e) {
    EXPECT_NE(std::string(e.what()).find("bit depth"), std::string::npos) << e.what();
  }

  write_bytes(d / "rgba.png", cv::Mat(2, 2, CV_8UC4, cv::Scalar(1, 2, 3, 4)));
  try {
    load_image(d / "rgba.png");
    FAIL() << "4-channel PNG accepted";
  } catch (const DecodeError& e) {
    EXPECT_NE(std::string(e.what()).find("channel count"), std::string::npos) << e.what();
  }

  { std::ofstream(d / "junk.png") << "definitely not a png"; }
  EXPECT_THROW(load_image(d / "junk.png"), DecodeError);
}

TEST(SaveImage, QuantisationBound) {
  const auto d = temp_dir();
  const ImageTensor half(5, 7, 3, 0.5);
  save_image(half, d / "h.png");
  const auto back = load_image(d / "h.png");
  for (double v : back.data()) EXPECT_LE(std::abs(v - 0.5), 1.0 / 510.0);

  for (double fill : {0.0, 1.0}) {
    save_image(ImageTensor(4, 4, 3, fill), d / "e.png");
    EXPECT_EQ(load_image(d / "e.png"), ImageTensor(4, 4, 3, fill));
  }
}

TEST(SaveImage, RandomRoundTripWithinHalfStep) {
  const auto d = temp_dir();
  for (unsigned s = 0; s < 20; ++s) {
    const auto img = random_image(3 + s % 5, 2 + s % 7, s % 2 ? 3 : 1, s);
    save_image(img, d / "r.png");
    const auto back = load_image(d / "r.png");
    ASSERT_EQ(back.channels(), img.channels());
    double worst = 0;
    for (std::size_t i = 0; i < img.data().size(); ++i) worst = std::max(worst, std::abs(back.data()[i] - img.data()[i]));
    EXPECT_LE(worst, 1.0 / 510.0 + 1e-12);
    for (double v : back.data()) {
      EXPECT_GE(v, 0.0);
      EXPECT_LE(v, 1.0);
    }
  }
}

TEST(SaveImage, UnwritablePath) {
  EXPECT_THROW(save_image(ImageTensor(2, 2, 3, 0.1), "/nonexistent_dir_shadowkit/x.png"), IoError);
}

TEST(Masks, RoundTripAndBinarisation) {
  const auto d = temp_dir();
  ShadowMask m(4, 4, 0.0);
  m.at(1, 2) = 1.0;
  m.at(3, 3) = 1.0;
  save_mask(m, d / "m.png");
  const auto back = load_mask(d / "m.png");
  EXPECT_EQ(back, m);
  EXPECT_EQ(back.shadow_pixel_count(), 2u);
  EXPECT_EQ(back.complement().shadow_pixel_count(), 14u);

  ShadowMask soft(2, 2, std::vector<double>{0.2, 0.5, 0.7, 0.49});
  const auto b = soft.binarized();
  EXPECT_EQ(b.at(0, 0), 0.0);
  EXPECT_EQ(b.at(0, 1), 1.0);
  EXPECT_EQ(b.at(1, 0), 1.0);
  EXPECT_EQ(b.at(1, 1), 0.0);
}

TEST(Lab, ReferenceColours) {
  const auto white = srgb_pixel_to_lab(1, 1, 1);
  EXPECT_NEAR(white[0], 100.0, 1e-4);
  EXPECT_LT(std::abs(white[1]), 0.01);
  EXPECT_LT(std::abs(white[2]), 0.01);
  const auto black = srgb_pixel_to_lab(0, 0, 0);
  EXPECT_NEAR(black[0], 0.0, 1e-12);
  EXPECT_NEAR(black[1], 0.0, 1e-12);
  EXPECT_NEAR(black[2], 0.0, 1e-12);
  const auto gray = srgb_pixel_to_lab(0.5, 0.5, 0.5);
  EXPECT_NEAR(gray[0], 53.39, 0.005);
  EXPECT_LT(std::abs(gray[1]), 0.01);
  EXPECT_LT(std::abs(gray[2]), 0.01);
}

TEST(Lab, AgreesWithOracleAndGraysStayNeutral) {
  std::mt19937 rng(5);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int i = 0; i < 200; ++i) {
    const double r = u(rng), g = u(rng), b = u(rng);
    const auto got = srgb_pixel_to_lab(r, g, b);
    const auto want = oracle::lab(r, g, b);
    for (int c = 0; c < 3; ++c) EXPECT_NEAR(got[c], want[c], 1e-3);
    const auto gray = srgb_pixel_to_lab(r, r, r);
    EXPECT_LT(std::abs(gray[1]), 0.01);
    EXPECT_LT(std::abs(gray[2]), 0.01);
  }
}

TEST(ImageTensor, ValidationRejectsBadValuesAndShapes) {
  EXPECT_THROW(ImageTensor(2, 2, 1, std::vector<double>{0, 0.5, 1.5, 0}), ShapeError);
  EXPECT_THROW(ImageTensor(2, 2, 1, std::vector<double>{0, NAN, 0, 0}), ShapeError);
  EXPECT_THROW(ImageTensor(1, 4, 3), ShapeError);
  EXPECT_THROW(ImageTensor(4, 4, 2), ShapeError);
  EXPECT_THROW(ShadowMask(2, 2, std::vector<double>{0, -0.1, 0, 0}), ShapeError);
}

TEST(Padding, SymmetricIndexAndCrop) {
  EXPECT_EQ(symmetric_index(-1, 5), 0);
  EXPECT_EQ(symmetric_index(-2, 5), 1);
  EXPECT_EQ(symmetric_index(5, 5), 4);
  EXPECT_EQ(symmetric_index(6, 5), 3);
  const auto img = random_image(5, 7, 3, 9);
  const auto padded = pad_symmetric(img, 4);
  EXPECT_EQ(padded.height(), 8);
  EXPECT_EQ(padded.width(), 8);
  EXPECT_EQ(padded.at(5, 2, 1), img.at(4, 2, 1));
  EXPECT_EQ(padded.at(6, 7, 0), img.at(3, 6, 0));
  EXPECT_EQ(crop(padded, 5, 7), img);
  EXPECT_EQ(pad_symmetric(img, 1), img);
}

TEST(Panels, HstackConvertsToRgb) {
  const ImageTensor a(3, 2, 3, 0.25);
  const ImageTensor b(3, 4, 1, 0.75);
  const auto s = hstack({a, b});
  EXPECT_EQ(s.width(), 6);
  EXPECT_EQ(s.channels(), 3);
  EXPECT_EQ(s.at(1, 1, 2), 0.25);
  EXPECT_EQ(s.at(1, 5, 0), 0.75);
  EXPECT_THROW(hstack({a, ImageTensor(4, 2, 3)}), ShapeError);
}
