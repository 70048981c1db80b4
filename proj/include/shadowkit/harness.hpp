// SPDX-License-Identifier: Apache-2.0
//
// Training loops for the three models, run manifests, and the ablation
// runner for removal variants.
#pragma once

#include <cstdint>
#include <filesystem>
#include <nlohmann/json.hpp>
#include <optional>
#include <string>
#include <vector>

#include "shadowkit/checkpoint.hpp"
#include "shadowkit/data.hpp"

namespace shadowkit {

enum class MaskSource { gt, predicted };
std::string to_string(MaskSource m);
MaskSource parse_mask_source(const std::string& s);

inline constexpr double kRemovalPsnrThreshold = 25.0;
inline constexpr double kSegIouThreshold = 0.85;
inline constexpr double kMaeMseThreshold = 0.02;

struct RunConfig {
  Task task = Task::seg;
  std::filesystem::path dataset_root;
  std::filesystem::path output_dir;
  int epochs = 1;
  int batch_size = 8;
  double learning_rate = 2e-4;
  double lr_min = 1e-6;
  /// Global gradient-norm clip; 0 disables.
  double max_grad_norm = 0.0;
  std::uint64_t seed = 0;
  /// Seeds the train/test split separately so runs with different
  /// training seeds share one split.
  std::uint64_t split_seed = 0;
  double train_fraction = 0.8;
  bool hflip = false;
  /// Stop after the first epoch whose validation metric meets the task threshold.
  bool stop_at_threshold = false;

  RemovalVariant variant = RemovalVariant::prior_ffc;
  MaskSource mask_source = MaskSource::gt;
  std::filesystem::path mae_checkpoint;
  std::filesystem::path seg_checkpoint;

  SegmenterConfig seg;
  MaeConfig mae;
  RemovalConfig removal;

  void validate() const;
  nlohmann::json to_json() const;
};

/// Reads the keys of a JSON config object into cfg; missing keys keep
/// their current values.
void apply_json(const nlohmann::json& j, RunConfig& cfg);

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;
  double val_metric = 0.0;
  double seconds = 0.0;
};

struct RunManifest {
  nlohmann::json config;
  std::string status = "running";  // running | completed | diverged
  std::string val_metric_name;
  bool higher_is_better = true;
  double threshold = 0.0;
  std::vector<EpochRecord> history;
  double wall_clock_seconds = 0.0;
  std::string best_checkpoint;
  std::string last_checkpoint;
  std::optional<int> best_epoch;
  std::optional<int> epochs_to_threshold;
  std::optional<int> diverged_epoch;
  std::optional<int> diverged_step;
  /// Removal only: PSNR of the untouched shadow input on the test split.
  std::optional<double> input_psnr;
  /// Removal only: region report of the final parameters on the test split.
  nlohmann::json final_report;

  nlohmann::json to_json() const;
  static RunManifest from_json(const nlohmann::json& j);
};

RunManifest read_manifest(const std::filesystem::path& path);

/// Loads the dataset, splits it, trains, and writes checkpoints, the
/// manifest and CSV curves into cfg.output_dir after every epoch.
/// Throws DivergenceError on a non-finite loss after recording it.
RunManifest train(const RunConfig& cfg);

/// Evaluation helpers shared with the CLI and tests.
double mean_iou(const Segmenter<float>& model, const std::vector<SampleTriplet>& samples);
/// Mean hidden-patch MSE over shadow-free images with a seeded random split
/// at the configured training mask ratio.
double mae_hidden_mse(const MaskedAutoencoder<float>& model, const std::vector<SampleTriplet>& samples,
                      std::uint64_t seed);

struct AblationRun {
  RemovalVariant variant;
  std::uint64_t seed;
  std::filesystem::path dir;
  RunManifest manifest;
};

struct AblationReport {
  std::vector<AblationRun> runs;
  nlohmann::json to_json() const;
};

/// Trains every (variant, seed) pair on the shared split of base, then
/// writes ablation.json and convergence.csv into base.output_dir.
AblationReport run_ablation(const RunConfig& base, const std::vector<RemovalVariant>& variants,
                            const std::vector<std::uint64_t>& seeds);

/// $SHADOWKIT_OUTPUT_ROOT/name when set, otherwise runs/name.
std::filesystem::path default_output_dir(const std::string& name);

}  // namespace shadowkit
