#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "gradcheck.hpp"
#include "shadowkit/convert.hpp"
#include "shadowkit/error.hpp"
#include "shadowkit/removal.hpp"

using namespace shadowkit;
using nn::Tensor;
using nn::Var;

namespace {

ImageTensor random_image(int h, int w, unsigned seed, double lo = 0.0, double hi = 1.0) {
  std::mt19937 rng(seed);
  std::uniform_real_distribution<double> d(lo, hi);
  ImageTensor img(h, w, 3);
  for (auto& v : img.data()) v = d(rng);
  return img;
}

ShadowMask box_mask(int h, int w, int y0, int y1, int x0, int x1) {
  ShadowMask m(h, w, 0.0);
  for (int y = y0; y < y1; ++y)
    for (int x = x0; x < x1; ++x) m.at(y, x) = 1.0;
  return m;
}

RemovalConfig tiny(RemovalVariant v = RemovalVariant::prior_ffc) {
  RemovalConfig c;
  c.base_channels = 4;
  c.depth = 2;
  c.sim_heads = 2;
  c.sim_ffc_blocks = 1;
  c.apply_variant(v);
  return c;
}

template <typename T>
void perturb(nn::ParamStore<T>& ps, const std::string& prefix, double sd, unsigned seed) {
  std::mt19937 rng(seed);
  std::normal_distribution<double> d(0.0, sd);
  for (auto& [name, v] : ps.entries()) {
    if (name.rfind(prefix, 0) != 0) continue;
    for (auto& x : v.mutable_value().data()) x = static_cast<T>(x + d(rng));
  }
}

Tensor<double> uniform(nn::Shape s, unsigned seed, double lo, double hi) {
  std::mt19937 rng(seed);
  std::uniform_real_distribution<double> d(lo, hi);
  Tensor<double> t(std::move(s));
  for (auto& v : t.data()) v = d(rng);
  return t;
}

}  // namespace

TEST(RemovalConfig, VariantsAndValidation) {
  RemovalConfig c;
  c.apply_variant(RemovalVariant::baseline);
  EXPECT_FALSE(c.use_prior);
  EXPECT_EQ(c.input_channels(), 4);
  c.apply_variant(RemovalVariant::prior);
  EXPECT_TRUE(c.use_prior);
  EXPECT_FALSE(c.use_ffc);
  EXPECT_EQ(c.input_channels(), 7);
  c.apply_variant(RemovalVariant::prior_ffc);
  EXPECT_EQ(c.variant(), RemovalVariant::prior_ffc);
  for (auto v : {RemovalVariant::baseline, RemovalVariant::prior, RemovalVariant::prior_ffc})
    EXPECT_EQ(parse_variant(to_string(v)), v);
  EXPECT_THROW(parse_variant("fancy"), ConfigError);
  c.sim_ffc_blocks = 0;
  EXPECT_THROW(c.validate(), ConfigError);
}

TEST(RemoveShadow, ZeroHeadIsBitwiseIdentity) {
  for (auto v : {RemovalVariant::baseline, RemovalVariant::prior, RemovalVariant::prior_ffc}) {
    RemovalNet<float> net(tiny(v), 3);
    const auto img = random_image(16, 16, 4);
    const auto prior = random_image(16, 16, 5);
    const auto out = net.remove_shadow(img, box_mask(16, 16, 2, 9, 3, 12), v == RemovalVariant::baseline ? nullptr : &prior);
    EXPECT_EQ(out, img) << to_string(v);
  }
}

TEST(RemoveShadow, ShapeRangeAndDeterminism) {
  RemovalConfig cfg;  // default widths
  RemovalNet<float> net(cfg, 6);
  perturb(net.params(), "head", 0.5, 7);
  const auto img = random_image(64, 64, 8);
  const auto prior = random_image(64, 64, 9);
  const auto mask = box_mask(64, 64, 10, 40, 5, 30);
  const auto out = net.remove_shadow(img, mask, &prior);
  EXPECT_EQ(out.height(), 64);
  EXPECT_EQ(out.width(), 64);
  EXPECT_EQ(out.channels(), 3);
  EXPECT_NO_THROW(out.validate());
  EXPECT_NE(out, img);
  EXPECT_EQ(out, net.remove_shadow(img, mask, &prior));
}

TEST(RemoveShadow, OutputStaysInRangeUnderLargeResiduals) {
  RemovalNet<float> net(tiny(), 10);
  perturb(net.params(), "", 2.0, 11);
  for (unsigned s = 0; s < 5; ++s) {
    const auto img = random_image(16, 16, 12 + s);
    const auto out = net.remove_shadow(img, box_mask(16, 16, 0, 8, 0, 8), &img);
    for (double v : out.data()) {
      ASSERT_GE(v, 0.0);
      ASSERT_LE(v, 1.0);
    }
  }
}

TEST(RemoveShadow, ContractErrors) {
  RemovalNet<float> net(tiny(), 13);
  const auto img = random_image(16, 16, 14);
  const auto mask = box_mask(16, 16, 0, 4, 0, 4);
  EXPECT_THROW(net.remove_shadow(img, mask, nullptr), ConfigError);
  EXPECT_THROW(net.remove_shadow(img, box_mask(8, 16, 0, 4, 0, 4), &img), ShapeError);
  const auto odd = random_image(18, 16, 15);
  EXPECT_THROW(net.remove_shadow(odd, box_mask(18, 16, 0, 4, 0, 4), &odd), ShapeError);
  RemovalNet<float> base(tiny(RemovalVariant::baseline), 13);
  EXPECT_THROW(base.remove_shadow(img, mask, &img), ConfigError);
}

TEST(RemovalLoss, ClosedForms) {
  const auto a = random_image(8, 8, 16);
  EXPECT_EQ(removal_loss(a, a), 0.0);
  const ImageTensor gt(8, 8, 3, 0.5), pred(8, 8, 3, 0.6);
  const double want = std::sqrt(0.01 + 1e-6) - 1e-3;
  // sqrt(0.010001) = 0.1000049999, so the closed form is 0.0990050.
  EXPECT_NEAR(want, 0.099005, 5e-7);
  EXPECT_NEAR(removal_loss(pred, gt), want, 1e-12);
  EXPECT_GE(removal_loss(gt, random_image(8, 8, 17)), 0.0);
}

TEST(Sim, ZeroGateWithEmptyMaskIsIdentity) {
  for (bool ffc : {false, true}) {
    auto cfg = tiny(ffc ? RemovalVariant::prior_ffc : RemovalVariant::prior);
    nn::ParamStore<double> ps;
    nn::Rng rng(18);
    const auto sim = SimBlock<double>::create(ps, "sim", cfg, rng);
    // Everything except the zero-initialised output projection is random.
    perturb(ps, "sim.norm", 0.3, 19);
    perturb(ps, "sim.cross_bias", 0.3, 20);
    if (ffc) ps.zero_values("sim.ffc");
    const int c = cfg.bottleneck_channels();
    const auto feats = uniform({2, 4, 4, c}, 21, -1, 1);
    const auto out = sim(Var<double>::constant(feats), Tensor<double>({2, 4, 4, 1}));
    EXPECT_EQ(out.value().storage(), feats.storage()) << "ffc=" << ffc;
  }
}

TEST(Sim, ShapePreservation) {
  RemovalConfig cfg;
  cfg.base_channels = 32;  // bottleneck 128
  nn::ParamStore<float> ps;
  nn::Rng rng(22);
  const auto sim = SimBlock<float>::create(ps, "sim", cfg, rng);
  Tensor<float> feats({2, 16, 16, 128}, 0.1f), mask({2, 16, 16, 1}, 0.5f);
  EXPECT_EQ(sim(Var<float>::constant(feats), mask).shape(), feats.shape());
  EXPECT_THROW(sim(Var<float>::constant(feats), Tensor<float>({2, 8, 8, 1})), ShapeError);
}

TEST(Sim, GradientMatchesFiniteDifferences) {
  const auto cfg = tiny();
  nn::ParamStore<double> ps;
  nn::Rng rng(23);
  const auto sim = SimBlock<double>::create(ps, "sim", cfg, rng);
  perturb(ps, "sim", 0.3, 24);
  const int c = cfg.bottleneck_channels();
  auto feats = Var<double>::leaf(uniform({1, 4, 4, c}, 25, -1, 1));
  const auto mask = uniform({1, 4, 4, 1}, 26, 0, 1);
  const auto probe = Var<double>::constant(uniform({1, 4, 4, c}, 27, -1, 1));
  std::vector<std::pair<std::string, Var<double>>> inputs(ps.entries().begin(), ps.entries().end());
  inputs.emplace_back("feats", feats);
  const auto r = gradcheck::check([&] { return nn::sum(nn::mul(sim(feats, mask), probe)); }, inputs, 16);
  EXPECT_LE(r.worst_rel, 1e-3) << r.worst_name;
}

TEST(RemovalNet, EndToEndGradient) {
  RemovalNet<double> net(tiny(), 28);
  perturb(net.params(), "head", 0.02, 29);
  perturb(net.params(), "sim", 0.1, 30);
  const auto img = image_to_tensor<double>(random_image(16, 16, 31, 0.3, 0.7));
  const auto prior = image_to_tensor<double>(random_image(16, 16, 32, 0.3, 0.7));
  const auto mask = mask_to_tensor<double>(box_mask(16, 16, 3, 11, 4, 13));
  const auto gt = image_to_tensor<double>(random_image(16, 16, 33, 0.3, 0.7));
  std::vector<std::pair<std::string, Var<double>>> inputs(net.params().entries().begin(),
                                                          net.params().entries().end());
  const auto r = gradcheck::check([&] { return removal_loss(net.forward(img, mask, &prior), gt); }, inputs, 6);
  EXPECT_LE(r.worst_rel, 1e-3) << r.worst_name;
}
