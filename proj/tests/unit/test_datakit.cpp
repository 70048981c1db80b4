#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>

#include <nlohmann/json.hpp>

#include "shadowkit/data.hpp"
#include "shadowkit/error.hpp"

namespace fs = std::filesystem;
using namespace shadowkit;

namespace {

fs::path temp_dir() {
  const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
  auto d = fs::temp_directory_path() / "shadowkit_datakit" / (std::string(info->test_suite_name()) + "_" + info->name());
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

SynthConfig config(int count, std::uint64_t seed, int size = 32) {
  SynthConfig c;
  c.count = count;
  c.seed = seed;
  c.size = size;
  return c;
}

void write_triplet(const fs::path& root, const std::string& name, double v = 0.5) {
  for (const char* sub : {"A", "B", "C"}) fs::create_directories(root / sub);
  save_image(ImageTensor(4, 4, 3, v), root / "A" / (name + ".png"));
  save_mask(ShadowMask(4, 4, 1.0), root / "B" / (name + ".png"));
  save_image(ImageTensor(4, 4, 3, v), root / "C" / (name + ".png"));
}

}  // namespace

TEST(Synthesize, ConstructionLawsOnAThousandTriplets) {
  auto cfg = config(1000, 42);
  cfg.tint = true;
  const auto samples = synthesize(cfg);
  ASSERT_EQ(samples.size(), 1000u);
  for (const auto& s : samples) {
    ASSERT_NO_THROW(s.shadow.validate());
    ASSERT_NO_THROW(s.free.validate());
    const double frac = static_cast<double>(s.mask.shadow_pixel_count()) / s.mask.pixel_count();
    EXPECT_GE(frac, 0.05) << s.name;
    EXPECT_LE(frac, 0.40) << s.name;
    for (int y = 0; y < 32; ++y)
      for (int x = 0; x < 32; ++x) {
        for (int c = 0; c < 3; ++c) {
          ASSERT_LE(s.shadow.at(y, x, c), s.free.at(y, x, c)) << s.name;
          if (s.mask.at(y, x) == 0.0) ASSERT_EQ(s.shadow.at(y, x, c), s.free.at(y, x, c)) << s.name;
        }
        ASSERT_TRUE(s.mask.at(y, x) == 0.0 || s.mask.at(y, x) == 1.0);
      }
  }
}

TEST(Synthesize, DeterministicAndIndexAddressable) {
  const auto cfg = config(6, 9);
  const auto a = synthesize(cfg), b = synthesize(cfg);
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].shadow, b[i].shadow);
    EXPECT_EQ(a[i].mask, b[i].mask);
    EXPECT_EQ(a[i].free, b[i].free);
    const auto one = synthesize_one(cfg, static_cast<int>(i));
    EXPECT_EQ(one.shadow, a[i].shadow);
    EXPECT_EQ(one.name, a[i].name);
  }
  EXPECT_EQ(a[3].name, "000003");
  EXPECT_NE(synthesize(config(1, 10))[0].free, a[0].free);
}

TEST(Synthesize, ConfigValidation) {
  auto c = config(1, 1);
  c.darken_min = 0.0;
  EXPECT_THROW(synthesize(c), ConfigError);
  c = config(0, 1);
  EXPECT_THROW(synthesize(c), ConfigError);
  c = config(1, 1);
  c.ellipses = c.polygons = false;
  EXPECT_THROW(synthesize(c), ConfigError);
}

TEST(ApplyShadow, ClosedForm) {
  const ImageTensor free(2, 2, 3, 0.8);
  const auto shadow = apply_shadow(free, {1.0, 0.0, 0.5, 1.0}, 0.5);
  EXPECT_DOUBLE_EQ(shadow.at(0, 0, 0), 0.4);
  EXPECT_EQ(shadow.at(0, 1, 2), 0.8);
  EXPECT_DOUBLE_EQ(shadow.at(1, 0, 1), 0.8 * (1 - 0.25));
  const auto tinted = apply_shadow(free, {1.0, 1.0, 1.0, 1.0}, 0.5, {1.0, 0.9, 0.8});
  EXPECT_DOUBLE_EQ(tinted.at(1, 1, 2), 0.8 * (1 - 0.4));
  EXPECT_THROW(apply_shadow(free, {1.0}, 0.5), ShapeError);
}

TEST(IstdLayout, RoundTripWithinQuantisation) {
  const auto root = temp_dir();
  const auto cfg = config(12, 3);
  const auto samples = synthesize(cfg);
  write_istd_layout(root, samples, &cfg);
  const auto loaded = load_istd_layout(root);
  ASSERT_EQ(loaded.size(), samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    EXPECT_EQ(loaded[i].name, samples[i].name);
    EXPECT_EQ(loaded[i].mask, samples[i].mask);
    for (std::size_t k = 0; k < samples[i].shadow.data().size(); ++k) {
      ASSERT_LE(std::abs(loaded[i].shadow.data()[k] - samples[i].shadow.data()[k]), 1.0 / 510.0 + 1e-12);
      ASSERT_LE(std::abs(loaded[i].free.data()[k] - samples[i].free.data()[k]), 1.0 / 510.0 + 1e-12);
    }
  }
  std::ifstream in(root / "manifest.json");
  const auto j = nlohmann::json::parse(in);
  EXPECT_EQ(j.at("count").get<int>(), 12);
  EXPECT_EQ(j.at("generator_version").get<int>(), kGeneratorVersion);
  EXPECT_EQ(j.at("seed").get<std::uint64_t>(), 3u);
}

TEST(IstdLayout, SingleTripletNamedByStem) {
  const auto root = temp_dir();
  write_triplet(root, "x");
  const auto loaded = load_istd_layout(root);
  ASSERT_EQ(loaded.size(), 1u);
  EXPECT_EQ(loaded[0].name, "x");
}

TEST(IstdLayout, LexicographicOrder) {
  const auto root = temp_dir();
  for (const char* n : {"charlie", "alpha", "bravo"}) write_triplet(root, n);
  const auto loaded = load_istd_layout(root);
  ASSERT_EQ(loaded.size(), 3u);
  EXPECT_EQ(loaded[0].name, "alpha");
  EXPECT_EQ(loaded[1].name, "bravo");
  EXPECT_EQ(loaded[2].name, "charlie");
}

TEST(IstdLayout, OrphanIsNamed) {
  const auto root = temp_dir();
  write_triplet(root, "ok");
  write_triplet(root, "x");
  fs::remove(root / "C" / "x.png");
  try {
    load_istd_layout(root);
    FAIL() << "orphan accepted";
  } catch (const DatasetError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("x"), std::string::npos) << msg;
    EXPECT_NE(msg.find("C"), std::string::npos) << msg;
  }
}

TEST(IstdLayout, MissingSubdirectory) {
  const auto root = temp_dir();
  write_triplet(root, "x");
  fs::remove_all(root / "B");
  try {
    load_istd_layout(root);
    FAIL() << "missing B accepted";
  } catch (const DatasetError& e) {
    EXPECT_NE(std::string(e.what()).find("B"), std::string::npos) << e.what();
  }
}

TEST(IstdLayout, DimensionMismatchWithinTriplet) {
  const auto root = temp_dir();
  write_triplet(root, "x");
  save_image(ImageTensor(6, 4, 3, 0.5), root / "C" / "x.png");
  EXPECT_THROW(load_istd_layout(root), DatasetError);
}

TEST(IstdLayout, MasksAreBinarised) {
  const auto root = temp_dir();
  write_triplet(root, "x");
  ShadowMask soft(4, 4, 0.3);
  soft.at(0, 0) = 0.8;
  save_mask(soft, root / "B" / "x.png");
  const auto m = load_istd_layout(root)[0].mask;
  EXPECT_EQ(m.at(0, 0), 1.0);
  EXPECT_EQ(m.at(1, 1), 0.0);
}

TEST(Split, SizesDeterminismAndPartition) {
  const auto samples = synthesize(config(100, 5, 8));
  const auto s = split(samples, 0.8, 77);
  EXPECT_EQ(s.train.size(), 80u);
  EXPECT_EQ(s.test.size(), 20u);
  const auto again = split(samples, 0.8, 77);
  for (std::size_t i = 0; i < s.train.size(); ++i) EXPECT_EQ(s.train[i].name, again.train[i].name);
  std::map<std::string, int> seen;
  for (const auto& t : s.train) ++seen[t.name];
  for (const auto& t : s.test) ++seen[t.name];
  EXPECT_EQ(seen.size(), 100u);
  for (const auto& [_, k] : seen) EXPECT_EQ(k, 1);
  const auto other = split(samples, 0.8, 78);
  bool differs = false;
  for (std::size_t i = 0; i < s.train.size(); ++i) differs |= s.train[i].name != other.train[i].name;
  EXPECT_TRUE(differs);
}

TEST(Split, Errors) {
  const auto samples = synthesize(config(3, 5, 8));
  EXPECT_THROW(split(samples, 1.0, 1), ConfigError);
  EXPECT_THROW(split({samples[0]}, 0.5, 1), DatasetError);
  const auto tiny = split({samples[0], samples[1]}, 0.99, 1);
  EXPECT_EQ(tiny.train.size(), 1u);
  EXPECT_EQ(tiny.test.size(), 1u);
}
