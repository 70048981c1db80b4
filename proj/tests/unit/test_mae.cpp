#include <gtest/gtest.h>

#include <random>
#include <set>

#include "gradcheck.hpp"
#include "shadowkit/convert.hpp"
#include "shadowkit/error.hpp"
#include "shadowkit/mae.hpp"

using namespace shadowkit;
using nn::Tensor;
using nn::Var;

namespace {

ImageTensor random_image(int h, int w, int c, unsigned seed) {
  std::mt19937 rng(seed);
  std::uniform_real_distribution<double> d(0.0, 1.0);
  ImageTensor img(h, w, c);
  for (auto& v : img.data()) v = d(rng);
  return img;
}

MaeConfig tiny() {
  MaeConfig c;
  c.patch_size = 4;
  c.encoder_dim = 8;
  c.encoder_layers = 1;
  c.encoder_heads = 2;
  c.decoder_dim = 8;
  c.decoder_layers = 1;
  c.decoder_heads = 2;
  return c;
}

/// Hidden patches found by scanning every pixel once.
std::set<int> brute_force_hidden(const ShadowMask& m, int p) {
  std::set<int> out;
  const int gw = m.width() / p;
  for (int y = 0; y < m.height(); ++y)
    for (int x = 0; x < m.width(); ++x)
      if (m.at(y, x) >= m.threshold()) out.insert((y / p) * gw + x / p);
  return out;
}

}  // namespace

TEST(Patchify, ShapeArithmetic) {
  const auto t = patchify(random_image(64, 64, 3, 1), 8);
  EXPECT_EQ(t.shape(), (nn::Shape{64, 192}));
  EXPECT_THROW(patchify(random_image(12, 16, 3, 1), 8), ShapeError);
}

TEST(Patchify, MatchesNaiveOracle) {
  ImageTensor img(16, 16, 1);
  for (int y = 0; y < 16; ++y)
    for (int x = 0; x < 16; ++x) img.at(y, x, 0) = (y * 16 + x) / 255.0;
  const auto t = patchify(img, 8);
  ASSERT_EQ(t.shape(), (nn::Shape{4, 64}));
  for (int k = 0; k < 4; ++k)
    for (int i = 0; i < 8; ++i)
      for (int j = 0; j < 8; ++j) EXPECT_EQ(t[k * 64 + i * 8 + j], img.at((k / 2) * 8 + i, (k % 2) * 8 + j, 0));
  // Patch 0 is the top-left block flattened row-major.
  for (int i = 0; i < 64; ++i) EXPECT_EQ(t[i], ((i / 8) * 16 + i % 8) / 255.0);
}

TEST(Patchify, UnpatchifyInverts) {
  const auto img = random_image(12, 20, 3, 2);
  EXPECT_EQ(unpatchify(patchify(img, 4), 12, 20, 3, 4), img);
}

TEST(PatchSplit, CountsAndPartition) {
  const auto s = random_patch_split(3, 64, 0.75, 9);
  EXPECT_EQ(s.hidden_count, 48);
  EXPECT_EQ(s.visible_count, 16);
  for (int b = 0; b < 3; ++b) {
    std::set<int> all;
    for (int i = 0; i < 16; ++i) all.insert(s.visible[b * 16 + i]);
    for (int i = 0; i < 48; ++i) all.insert(s.hidden[b * 48 + i]);
    EXPECT_EQ(all.size(), 64u);
    EXPECT_TRUE(std::is_sorted(s.hidden.begin() + b * 48, s.hidden.begin() + (b + 1) * 48));
  }
  const auto again = random_patch_split(3, 64, 0.75, 9);
  EXPECT_EQ(s.hidden, again.hidden);
}

TEST(HiddenPatches, AgreesWithPerPixelScan) {
  std::mt19937 rng(3);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int t = 0; t < 30; ++t) {
    ShadowMask m(32, 24, 0.0);
    const double density = 0.002 * t;
    for (auto& v : m.data()) v = u(rng) < density ? u(rng) : 0.0;
    const auto got = hidden_patches(m, 8);
    const auto want = brute_force_hidden(m, 8);
    EXPECT_EQ(std::set<int>(got.begin(), got.end()), want);
    EXPECT_TRUE(std::is_sorted(got.begin(), got.end()));
  }
}

TEST(Prior, ZeroMaskReturnsInputExactly) {
  MaskedAutoencoder<float> mae(tiny(), 3, 4);
  const auto img = random_image(16, 16, 3, 5);
  EXPECT_EQ(mae.generate_prior(img, ShadowMask(16, 16, 0.0)), img);
}

TEST(Prior, FullMaskReconstructsEverythingInRange) {
  MaskedAutoencoder<float> mae(tiny(), 3, 6);
  const auto img = random_image(16, 16, 3, 7);
  const auto prior = mae.generate_prior(img, ShadowMask(16, 16, 1.0));
  EXPECT_NO_THROW(prior.validate());
  int changed = 0;
  for (std::size_t i = 0; i < img.data().size(); ++i) changed += prior.data()[i] != img.data()[i];
  EXPECT_GT(changed, static_cast<int>(img.data().size()) / 2);
}

TEST(Prior, OnePatchMaskTouchesOnlyThatPatch) {
  MaskedAutoencoder<float> mae(MaeConfig{}, 3, 8);  // patch 8
  const auto img = random_image(32, 32, 3, 9);
  ShadowMask m(32, 32, 0.0);
  for (int y = 8; y < 16; ++y)
    for (int x = 16; x < 24; ++x) m.at(y, x) = 1.0;
  const auto prior = mae.generate_prior(img, m);
  int inside_changed = 0;
  for (int y = 0; y < 32; ++y)
    for (int x = 0; x < 32; ++x)
      for (int c = 0; c < 3; ++c) {
        const bool inside = y >= 8 && y < 16 && x >= 16 && x < 24;
        if (!inside) {
          ASSERT_EQ(prior.at(y, x, c), img.at(y, x, c)) << y << "," << x;
        } else {
          inside_changed += prior.at(y, x, c) != img.at(y, x, c);
        }
      }
  EXPECT_GT(inside_changed, 0);
}

TEST(Prior, MaskOverlapHidesEveryTouchedPatch) {
  MaskedAutoencoder<float> mae(MaeConfig{}, 3, 10);
  const auto img = random_image(32, 32, 3, 11);
  ShadowMask m(32, 32, 0.0);
  m.at(7, 7) = 0.6;  // corner pixel of patch 0
  m.at(8, 8) = 0.7;  // corner pixel of patch 5
  m.at(20, 30) = 0.4;  // below threshold
  const auto hidden = hidden_patches(m, 8);
  EXPECT_EQ(hidden, (std::vector<int>{0, 5}));
  const auto prior = mae.generate_prior(img, m);
  for (int y = 16; y < 32; ++y)
    for (int x = 24; x < 32; ++x) EXPECT_EQ(prior.at(y, x, 0), img.at(y, x, 0));
}

TEST(Prior, DeterministicAndShapeChecked) {
  MaskedAutoencoder<float> mae(tiny(), 3, 12);
  const auto img = random_image(16, 16, 3, 13);
  ShadowMask m(16, 16, 0.0);
  m.at(5, 9) = 1.0;
  EXPECT_EQ(mae.generate_prior(img, m), mae.generate_prior(img, m));
  EXPECT_THROW(mae.generate_prior(img, ShadowMask(8, 16, 0.0)), ShapeError);
  EXPECT_THROW(mae.generate_prior(random_image(14, 16, 3, 1), ShadowMask(14, 16, 1.0)), ShapeError);
}

TEST(MaeLoss, OnlyHiddenPatchesCount) {
  MaskedAutoencoder<double> mae(tiny(), 3, 14);
  auto img = random_image(8, 8, 3, 15);
  const auto split = random_patch_split(1, 4, 0.5, 16);
  const double base = mae.loss(image_to_tensor<double>(img), split).value()[0];
  const auto patches = patchify_batch(image_to_tensor<double>(img), 4);
  const auto pred = mae.reconstruct(patches, split, 2, 2).value();
  double se = 0;
  for (int k : split.hidden)
    for (int d = 0; d < 48; ++d) {
      const double diff = pred[k * 48 + d] - patches[k * 48 + d];
      se += diff * diff;
    }
  EXPECT_NEAR(base, se / (2 * 48), 1e-12);
}

TEST(MaeLoss, GradientOnDecoderSlice) {
  MaskedAutoencoder<double> mae(tiny(), 3, 17);
  const auto images = image_to_tensor<double>(random_image(8, 8, 3, 18));
  const auto split = random_patch_split(1, 4, 0.5, 19);
  std::vector<std::pair<std::string, Var<double>>> inputs;
  for (const auto& [name, v] : mae.params().entries()) {
    if (name.rfind("decoder.", 0) == 0 || name == "encoder.embed.w") inputs.emplace_back(name, v);
  }
  const auto r = gradcheck::check([&] { return mae.loss(images, split); }, inputs, 12);
  EXPECT_LE(r.worst_rel, 1e-3) << r.worst_name;
}

TEST(MaeConfig, Validation) {
  MaeConfig c;
  c.train_mask_ratio = 1.0;
  EXPECT_THROW(c.validate(), ConfigError);
  c.train_mask_ratio = 0.5;
  c.encoder_dim = 10;
  EXPECT_THROW(c.validate(), ConfigError);
}
