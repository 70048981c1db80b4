#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>
#include <vector>

#include <nlohmann/json.hpp>

#include "shadowkit/error.hpp"
#include "shadowkit/harness.hpp"
#include "shadowkit/pipeline.hpp"

namespace fs = std::filesystem;
using namespace shadowkit;

namespace {

const fs::path kRoot = fs::temp_directory_path() / "shadowkit_harness";

fs::path dataset() {
  static const fs::path root = [] {
    const fs::path d = kRoot / "data";
    fs::remove_all(d);
    SynthConfig c;
    c.count = 8;
    c.size = 16;
    c.seed = 21;
    write_istd_layout(d, synthesize(c), &c);
    return d;
  }();
  return root;
}

fs::path out_dir(const std::string& tag = "") {
  const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
  auto d = kRoot / (std::string(info->test_suite_name()) + "_" + info->name() + tag);
  fs::remove_all(d);
  return d;
}

RunConfig tiny_run(Task task, const fs::path& out) {
  RunConfig c;
  c.task = task;
  c.dataset_root = dataset();
  c.output_dir = out;
  c.epochs = 1;
  c.batch_size = 2;
  c.learning_rate = 1e-3;
  c.seed = 4;
  c.split_seed = 5;
  c.train_fraction = 0.5;
  c.seg.base_channels = 4;
  c.seg.depth = 2;
  c.seg.adapter_channels = 3;
  c.mae.patch_size = 4;
  c.mae.encoder_dim = 8;
  c.mae.encoder_layers = 1;
  c.mae.encoder_heads = 2;
  c.mae.decoder_dim = 8;
  c.mae.decoder_layers = 1;
  c.mae.decoder_heads = 2;
  c.removal.base_channels = 4;
  c.removal.depth = 2;
  c.removal.sim_heads = 2;
  c.removal.sim_ffc_blocks = 1;
  return c;
}

/// One tiny MAE checkpoint shared by every removal test.
fs::path mae_checkpoint() {
  static const fs::path ckpt = [] {
    const auto m = train(tiny_run(Task::mae, kRoot / "shared_mae"));
    return fs::path(m.best_checkpoint);
  }();
  return ckpt;
}

ImageTensor random_image(int h, int w, unsigned seed) {
  std::mt19937 rng(seed);
  std::uniform_real_distribution<double> d(0.0, 1.0);
  ImageTensor img(h, w, 3);
  for (auto& v : img.data()) v = d(rng);
  return img;
}

std::vector<float> flatten(const nn::ParamStore<float>& ps) {
  std::vector<float> out;
  for (const auto& [_, v] : ps.entries()) out.insert(out.end(), v.value().data().begin(), v.value().data().end());
  return out;
}

}  // namespace

TEST(Train, OneSegEpochWritesEveryOutput) {
  const auto out = out_dir();
  const auto m = train(tiny_run(Task::seg, out));
  EXPECT_EQ(m.status, "completed");
  ASSERT_EQ(m.history.size(), 1u);
  EXPECT_EQ(m.val_metric_name, "iou");
  EXPECT_EQ(m.threshold, kSegIouThreshold);
  for (const char* f : {"manifest.json", "train_loss.csv", "val_metric.csv", "best.ckpt", "last.ckpt", "best.ckpt.json"})
    EXPECT_TRUE(fs::exists(out / f)) << f;

  const auto back = read_manifest(out / "manifest.json");
  ASSERT_EQ(back.history.size(), 1u);
  EXPECT_EQ(back.history[0].train_loss, m.history[0].train_loss);
  EXPECT_EQ(back.config["seed"].get<int>(), 4);
  EXPECT_EQ(back.config["lr_schedule"].get<std::string>(), "cosine");
  EXPECT_FALSE(back.diverged_epoch.has_value());

  const auto model = load_segmenter(back.best_checkpoint);
  const auto mask = model->predict_mask(random_image(16, 16, 1));
  EXPECT_EQ(mask.height(), 16);
}

TEST(Train, SameSeedSameCurve) {
  for (Task t : {Task::seg, Task::mae}) {
    auto c = tiny_run(t, out_dir("_a" + to_string(t)));
    c.epochs = 2;
    const auto a = train(c);
    c.output_dir = out_dir("_b" + to_string(t));
    const auto b = train(c);
    ASSERT_EQ(a.history.size(), b.history.size());
    for (std::size_t i = 0; i < a.history.size(); ++i) {
      EXPECT_NEAR(a.history[i].train_loss, b.history[i].train_loss, 1e-6) << to_string(t);
      EXPECT_NEAR(a.history[i].val_metric, b.history[i].val_metric, 1e-6) << to_string(t);
    }
  }
}

TEST(Train, RemovalManifestCarriesReportAndInputPsnr) {
  auto c = tiny_run(Task::removal, out_dir());
  c.mae_checkpoint = mae_checkpoint();
  const auto m = train(c);
  ASSERT_TRUE(m.input_psnr.has_value());
  EXPECT_GT(*m.input_psnr, 0.0);
  EXPECT_TRUE(m.final_report.contains("shadow"));
  const auto model = load_removal(m.last_checkpoint);
  EXPECT_EQ(model->config().variant(), RemovalVariant::prior_ffc);
  const auto side = nlohmann::json::parse(std::ifstream(sidecar_path(m.last_checkpoint)));
  EXPECT_EQ(side["variant"].get<std::string>(), "prior_ffc");
  EXPECT_EQ(side["seed"].get<int>(), 4);
  EXPECT_EQ(side["task"].get<std::string>(), "removal");
}

TEST(Train, HugeLearningRateDivergesAndIsRecorded) {
  const auto out = out_dir();
  auto c = tiny_run(Task::mae, out);
  c.epochs = 3;
  c.learning_rate = 1e30;
  c.lr_min = 0.0;
  try {
    train(c);
    FAIL() << "training with lr 1e30 stayed finite";
  } catch (const DivergenceError& e) {
    const auto m = read_manifest(out / "manifest.json");
    EXPECT_EQ(m.status, "diverged");
    ASSERT_TRUE(m.diverged_epoch.has_value());
    ASSERT_TRUE(m.diverged_step.has_value());
    EXPECT_EQ(*m.diverged_epoch, e.epoch());
    EXPECT_EQ(*m.diverged_step, e.step());
  }
}

TEST(Train, ConfigErrors) {
  auto c = tiny_run(Task::removal, out_dir());
  EXPECT_THROW(c.validate(), ConfigError);  // prior variant without an MAE checkpoint
  c.variant = RemovalVariant::baseline;
  EXPECT_NO_THROW(c.validate());
  c.mask_source = MaskSource::predicted;
  EXPECT_THROW(c.validate(), ConfigError);
  c = tiny_run(Task::seg, out_dir());
  c.train_fraction = 1.0;
  EXPECT_THROW(train(c), ConfigError);
  c = tiny_run(Task::seg, out_dir());
  c.dataset_root = kRoot / "nowhere";
  EXPECT_THROW(train(c), DatasetError);
  EXPECT_THROW(parse_mask_source("oracle"), ConfigError);
}

TEST(RunConfig, JsonRoundTrip) {
  auto c = tiny_run(Task::removal, "out");
  c.variant = RemovalVariant::prior;
  c.hflip = true;
  RunConfig back;
  apply_json(c.to_json(), back);
  EXPECT_EQ(back.to_json(), c.to_json());
  RunConfig partial;
  apply_json(nlohmann::json{{"epochs", 7}}, partial);
  EXPECT_EQ(partial.epochs, 7);
  EXPECT_EQ(partial.batch_size, RunConfig{}.batch_size);
  EXPECT_THROW(apply_json(nlohmann::json{{"epochs", "many"}}, partial), ConfigError);
  EXPECT_THROW(apply_json(nlohmann::json::array(), partial), ConfigError);
}

TEST(RunConfig, DefaultOutputDirHonoursEnvironment) {
  ::setenv("SHADOWKIT_OUTPUT_ROOT", "/tmp/skroot", 1);
  EXPECT_EQ(default_output_dir("seg"), fs::path("/tmp/skroot/seg"));
  ::unsetenv("SHADOWKIT_OUTPUT_ROOT");
  EXPECT_EQ(default_output_dir("seg"), fs::path("runs/seg"));
}

TEST(Checkpoint, BitwiseRoundTrip) {
  const auto out = out_dir();
  fs::create_directories(out);
  auto c = tiny_run(Task::seg, out);
  Segmenter<float> model(c.seg, 9);
  std::mt19937 rng(2);
  std::normal_distribution<float> d(0.0f, 1.0f);
  for (auto& [_, v] : model.params().entries())
    for (auto& x : v.mutable_value().data()) x = d(rng);
  save_checkpoint(out / "m.ckpt", model.params(), {Task::seg, to_json(c.seg), "", 9});

  const auto loaded = load_segmenter(out / "m.ckpt");
  EXPECT_EQ(flatten(loaded->params()), flatten(model.params()));
  const auto img = random_image(16, 16, 3);
  EXPECT_EQ(loaded->predict_mask(img), model.predict_mask(img));

  EXPECT_THROW(load_checkpoint(out / "m.ckpt", Task::mae), ConfigError);
  EXPECT_THROW(load_checkpoint(out / "missing.ckpt", Task::seg), IoError);
  Segmenter<float> other(tiny_run(Task::seg, out).seg, 10);
  other.params().zero_values("");
  apply_checkpoint(load_checkpoint(out / "m.ckpt", Task::seg), other.params());
  EXPECT_EQ(flatten(other.params()), flatten(model.params()));
  nn::ParamStore<float> wrong;
  EXPECT_THROW(apply_checkpoint(load_checkpoint(out / "m.ckpt", Task::seg), wrong), ConfigError);
}

TEST(Ablation, RowsPerRunAndSharedSplit) {
  auto c = tiny_run(Task::removal, out_dir());
  c.mae_checkpoint = mae_checkpoint();
  const auto r = run_ablation(c, {RemovalVariant::baseline, RemovalVariant::prior_ffc}, {3, 3});
  ASSERT_EQ(r.runs.size(), 4u);
  const auto j = r.to_json();
  ASSERT_EQ(j["runs"].size(), 4u);
  ASSERT_EQ(j["summary"].size(), 2u);
  // Identical (variant, seed) pairs give identical rows apart from paths and timing.
  for (int k : {0, 2}) {
    EXPECT_EQ(j["runs"][k]["final_psnr"], j["runs"][k + 1]["final_psnr"]);
    EXPECT_EQ(j["runs"][k]["input_psnr"], j["runs"][k + 1]["input_psnr"]);
  }
  EXPECT_EQ(j["runs"][0]["input_psnr"], j["runs"][2]["input_psnr"]);
  for (const auto& row : j["runs"]) {
    if (row["final_psnr"].get<double>() < kRemovalPsnrThreshold) EXPECT_TRUE(row["epochs_to_threshold"].is_null());
  }
  EXPECT_TRUE(fs::exists(c.output_dir / "ablation.json"));
  std::ifstream csv(c.output_dir / "convergence.csv");
  std::string line;
  int lines = 0;
  while (std::getline(csv, line)) ++lines;
  EXPECT_EQ(lines, 1 + 4);
  EXPECT_THROW(run_ablation(c, {RemovalVariant::baseline}, {1}), ConfigError);
}

class PipelineTest : public ::testing::Test {
 protected:
  static Pipeline make(bool with_seg = true, bool with_mae = true, bool with_removal = true) {
    const auto c = tiny_run(Task::removal, "unused");
    RemovalConfig rc = c.removal;
    rc.apply_variant(RemovalVariant::prior_ffc);
    return Pipeline(with_seg ? std::make_unique<Segmenter<float>>(c.seg, 1) : nullptr,
                    with_mae ? std::make_unique<MaskedAutoencoder<float>>(c.mae, 3, 2) : nullptr,
                    with_removal ? std::make_unique<RemovalNet<float>>(rc, 3) : nullptr);
  }
};

TEST_F(PipelineTest, StagesRunInOrder) {
  const auto p = make();
  std::vector<std::string> seen;
  const auto img = random_image(16, 16, 4);
  const auto r = p.run(img, nullptr, nullptr, [&](const std::string& s) { seen.push_back(s); });
  EXPECT_EQ(seen, (std::vector<std::string>{"mask", "prior", "removal"}));
  EXPECT_EQ(r.output.height(), 16);
  for (double v : r.binary_mask.data()) EXPECT_TRUE(v == 0.0 || v == 1.0);
}

TEST_F(PipelineTest, EmptyMaskLeavesPriorAndOutputUntouched) {
  const auto p = make(false);
  const auto img = random_image(16, 16, 5);
  const ShadowMask none(16, 16, 0.0);
  const auto r = p.run(img, &none);
  EXPECT_EQ(r.prior, img);
  EXPECT_EQ(r.output, img);  // zero-initialised head
}

TEST_F(PipelineTest, OddSizesArePaddedAndCropped) {
  const auto p = make();
  const auto img = random_image(13, 18, 6);
  const auto r = p.run(img);
  EXPECT_EQ(r.output.height(), 13);
  EXPECT_EQ(r.output.width(), 18);
  EXPECT_EQ(r.prior.width(), 18);
}

TEST_F(PipelineTest, PanelIsFourWide) {
  const auto p = make();
  const auto img = random_image(16, 12, 7);
  const auto panel = p.run(img).panel(img);
  EXPECT_EQ(panel.width(), 48);
  EXPECT_EQ(panel.height(), 16);
  const auto path = kRoot / "panel.png";
  fs::create_directories(kRoot);
  save_image(panel, path);
  EXPECT_EQ(load_image(path).width(), 48);
}

TEST_F(PipelineTest, ErrorsNameTheStage) {
  const auto img = random_image(16, 16, 8);
  auto stage_of = [&](const Pipeline& p, const ShadowMask* m, const ImageTensor* prior) -> std::string {
    try {
      p.run(img, m, prior);
    } catch (const StageError& e) {
      return e.stage();
    }
    return "none";
  };
  EXPECT_EQ(stage_of(make(true, true, false), nullptr, nullptr), "removal");
  EXPECT_EQ(stage_of(make(false), nullptr, nullptr), "mask");
  EXPECT_EQ(stage_of(make(true, false), nullptr, nullptr), "prior");
  const ShadowMask small(8, 8, 0.0);
  EXPECT_EQ(stage_of(make(), &small, nullptr), "mask");
  const auto wide = random_image(16, 20, 9);
  EXPECT_EQ(stage_of(make(), nullptr, &wide), "prior");
  EXPECT_THROW(Pipeline("", "", kRoot / "absent.ckpt"), StageError);
}
