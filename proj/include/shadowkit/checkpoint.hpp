// SPDX-License-Identifier: Apache-2.0
//
// Parameter checkpoints: a little-endian binary tensor file plus a JSON
// sidecar (<file>.json) holding {format_version, task, config, variant, seed}.
#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <nlohmann/json.hpp>
#include <string>
#include <utility>
#include <vector>

#include "shadowkit/layers.hpp"
#include "shadowkit/mae.hpp"
#include "shadowkit/removal.hpp"
#include "shadowkit/segmenter.hpp"

namespace shadowkit {

enum class Task { seg, mae, removal };
std::string to_string(Task t);
Task parse_task(const std::string& s);

inline constexpr int kCheckpointVersion = 1;

struct CheckpointMeta {
  Task task = Task::seg;
  nlohmann::json config;
  std::string variant;  // empty for non-removal tasks
  std::uint64_t seed = 0;
};

struct Checkpoint {
  CheckpointMeta meta;
  std::vector<std::pair<std::string, nn::Tensor<float>>> tensors;
};

std::filesystem::path sidecar_path(const std::filesystem::path& ckpt);

void save_checkpoint(const std::filesystem::path& path, const nn::ParamStore<float>& params,
                     const CheckpointMeta& meta);
/// Reads file and sidecar. Throws ConfigError when the stored task differs
/// from `expected` or the format version is unknown.
Checkpoint load_checkpoint(const std::filesystem::path& path, Task expected);
/// Copies tensors into params; names and shapes must match one to one.
void apply_checkpoint(const Checkpoint& ckpt, nn::ParamStore<float>& params);

nlohmann::json to_json(const SegmenterConfig& c);
nlohmann::json to_json(const MaeConfig& c);
nlohmann::json to_json(const RemovalConfig& c);
/// Missing keys keep their defaults.
void from_json(const nlohmann::json& j, SegmenterConfig& c);
void from_json(const nlohmann::json& j, MaeConfig& c);
void from_json(const nlohmann::json& j, RemovalConfig& c);

std::unique_ptr<Segmenter<float>> load_segmenter(const std::filesystem::path& path);
std::unique_ptr<MaskedAutoencoder<float>> load_mae(const std::filesystem::path& path);
std::unique_ptr<RemovalNet<float>> load_removal(const std::filesystem::path& path);

}  // namespace shadowkit
