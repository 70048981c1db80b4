// SPDX-License-Identifier: Apache-2.0
#include "shadowkit/checkpoint.hpp"

#include <array>
#include <cstring>
#include <fstream>

#include "shadowkit/error.hpp"

namespace shadowkit {

namespace fs = std::filesystem;

namespace {

constexpr std::array<char, 8> kMagic = {'S', 'K', 'C', 'K', 'P', 'T', '\0', '\1'};
constexpr std::uint32_t kDtypeF32 = 1;

template <typename U>
void put(std::ostream& out, U v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <typename U>
U get(std::istream& in, const fs::path& path) {
  U v{};
  in.read(reinterpret_cast<char*>(&v), sizeof v);
  if (!in) throw IoError("truncated checkpoint: " + path.string());
  return v;
}

}  // namespace

std::string to_string(Task t) {
  switch (t) {
    case Task::seg: return "seg";
    case Task::mae: return "mae";
    case Task::removal: return "removal";
  }
  return "unknown";
}

Task parse_task(const std::string& s) {
  if (s == "seg") return Task::seg;
  if (s == "mae") return Task::mae;
  if (s == "removal") return Task::removal;
  throw ConfigError("unknown task: " + s);
}

fs::path sidecar_path(const fs::path& ckpt) { return fs::path(ckpt.string() + ".json"); }

void save_checkpoint(const fs::path& path, const nn::ParamStore<float>& params, const CheckpointMeta& meta) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  // Write to a temporary name first so a crash never leaves a torn file
  // under the real name.
  const fs::path tmp = fs::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write checkpoint: " + path.string());
    out.write(kMagic.data(), kMagic.size());
    put<std::uint32_t>(out, kCheckpointVersion);
    put<std::uint32_t>(out, kDtypeF32);
    put<std::uint32_t>(out, static_cast<std::uint32_t>(params.entries().size()));
    for (const auto& [name, v] : params.entries()) {
      put<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
      out.write(name.data(), static_cast<std::streamsize>(name.size()));
      const auto& t = v.value();
      put<std::uint32_t>(out, static_cast<std::uint32_t>(t.rank()));
      for (int d : t.shape()) put<std::int32_t>(out, d);
      out.write(reinterpret_cast<const char*>(t.ptr()), static_cast<std::streamsize>(t.size() * sizeof(float)));
    }
    if (!out) throw IoError("short write: " + path.string());
  }
  fs::rename(tmp, path);
  nlohmann::json side = {{"format_version", kCheckpointVersion},
                         {"task", to_string(meta.task)},
                         {"config", meta.config},
                         {"variant", meta.variant.empty() ? nlohmann::json(nullptr) : nlohmann::json(meta.variant)},
                         {"seed", meta.seed}};
  std::ofstream js(sidecar_path(path));
  if (!js) throw IoError("cannot write checkpoint sidecar: " + sidecar_path(path).string());
  js << side.dump(2) << "\n";
}

Checkpoint load_checkpoint(const fs::path& path, Task expected) {
  std::ifstream js(sidecar_path(path));
  if (!js) throw IoError("missing checkpoint sidecar: " + sidecar_path(path).string());
  nlohmann::json side;
  try {
    side = nlohmann::json::parse(js);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("unreadable checkpoint sidecar " + sidecar_path(path).string() + ": " + e.what());
  }
  Checkpoint ck;
  if (side.value("format_version", -1) != kCheckpointVersion) {
    throw ConfigError("checkpoint format version " + side.value("format_version", nlohmann::json(nullptr)).dump() +
                      " is not supported (expected " + std::to_string(kCheckpointVersion) + ")");
  }
  ck.meta.task = parse_task(side.at("task").get<std::string>());
  if (ck.meta.task != expected) {
    throw ConfigError("checkpoint " + path.string() + " holds a " + to_string(ck.meta.task) + " model, expected " +
                      to_string(expected));
  }
  ck.meta.config = side.value("config", nlohmann::json::object());
  ck.meta.variant = side["variant"].is_string() ? side["variant"].get<std::string>() : "";
  ck.meta.seed = side.value("seed", std::uint64_t{0});

  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint: " + path.string());
  std::array<char, 8> magic{};
  in.read(magic.data(), magic.size());
  if (!in || magic != kMagic) throw ConfigError("not a shadowkit checkpoint: " + path.string());
  const auto version = get<std::uint32_t>(in, path);
  if (version != kCheckpointVersion) throw ConfigError("checkpoint binary version mismatch: " + path.string());
  if (get<std::uint32_t>(in, path) != kDtypeF32) throw ConfigError("unsupported checkpoint dtype: " + path.string());
  const auto count = get<std::uint32_t>(in, path);
  for (std::uint32_t k = 0; k < count; ++k) {
    std::string name(get<std::uint32_t>(in, path), '\0');
    in.read(name.data(), static_cast<std::streamsize>(name.size()));
    nn::Shape shape(get<std::uint32_t>(in, path));
    for (int& d : shape) d = get<std::int32_t>(in, path);
    nn::Tensor<float> t(shape);
    in.read(reinterpret_cast<char*>(t.ptr()), static_cast<std::streamsize>(t.size() * sizeof(float)));
    if (!in) throw IoError("truncated checkpoint: " + path.string());
    ck.tensors.emplace_back(std::move(name), std::move(t));
  }
  return ck;
}

void apply_checkpoint(const Checkpoint& ckpt, nn::ParamStore<float>& params) {
  auto& entries = params.entries();
  if (entries.size() != ckpt.tensors.size()) {
    throw ConfigError("checkpoint holds " + std::to_string(ckpt.tensors.size()) + " tensors, model has " +
                      std::to_string(entries.size()));
  }
  for (std::size_t i = 0; i < entries.size(); ++i) {
    const auto& [name, t] = ckpt.tensors[i];
    if (entries[i].first != name || entries[i].second.shape() != t.shape()) {
      throw ConfigError("checkpoint tensor " + name + " " + nn::shape_str(t.shape()) + " does not match model tensor " +
                        entries[i].first + " " + nn::shape_str(entries[i].second.shape()));
    }
    entries[i].second.mutable_value() = t;
  }
}

nlohmann::json to_json(const SegmenterConfig& c) {
  return {{"base_channels", c.base_channels},
          {"depth", c.depth},
          {"adapter_channels", c.adapter_channels},
          {"use_wavelet", c.use_wavelet}};
}

nlohmann::json to_json(const MaeConfig& c) {
  return {{"patch_size", c.patch_size},         {"encoder_dim", c.encoder_dim},
          {"encoder_layers", c.encoder_layers}, {"encoder_heads", c.encoder_heads},
          {"decoder_dim", c.decoder_dim},       {"decoder_layers", c.decoder_layers},
          {"decoder_heads", c.decoder_heads},   {"train_mask_ratio", c.train_mask_ratio}};
}

nlohmann::json to_json(const RemovalConfig& c) {
  return {{"base_channels", c.base_channels},
          {"depth", c.depth},
          {"sim_ffc_blocks", c.sim_ffc_blocks},
          {"sim_heads", c.sim_heads},
          {"ffc_global_ratio", c.ffc_global_ratio},
          {"use_prior", c.use_prior},
          {"use_ffc", c.use_ffc}};
}

void from_json(const nlohmann::json& j, SegmenterConfig& c) {
  c.base_channels = j.value("base_channels", c.base_channels);
  c.depth = j.value("depth", c.depth);
  c.adapter_channels = j.value("adapter_channels", c.adapter_channels);
  c.use_wavelet = j.value("use_wavelet", c.use_wavelet);
}

void from_json(const nlohmann::json& j, MaeConfig& c) {
  c.patch_size = j.value("patch_size", c.patch_size);
  c.encoder_dim = j.value("encoder_dim", c.encoder_dim);
  c.encoder_layers = j.value("encoder_layers", c.encoder_layers);
  c.encoder_heads = j.value("encoder_heads", c.encoder_heads);
  c.decoder_dim = j.value("decoder_dim", c.decoder_dim);
  c.decoder_layers = j.value("decoder_layers", c.decoder_layers);
  c.decoder_heads = j.value("decoder_heads", c.decoder_heads);
  c.train_mask_ratio = j.value("train_mask_ratio", c.train_mask_ratio);
}

void from_json(const nlohmann::json& j, RemovalConfig& c) {
  c.base_channels = j.value("base_channels", c.base_channels);
  c.depth = j.value("depth", c.depth);
  c.sim_ffc_blocks = j.value("sim_ffc_blocks", c.sim_ffc_blocks);
  c.sim_heads = j.value("sim_heads", c.sim_heads);
  c.ffc_global_ratio = j.value("ffc_global_ratio", c.ffc_global_ratio);
  c.use_prior = j.value("use_prior", c.use_prior);
  c.use_ffc = j.value("use_ffc", c.use_ffc);
}

std::unique_ptr<Segmenter<float>> load_segmenter(const fs::path& path) {
  const auto ck = load_checkpoint(path, Task::seg);
  SegmenterConfig cfg;
  from_json(ck.meta.config, cfg);
  auto m = std::make_unique<Segmenter<float>>(cfg, ck.meta.seed);
  apply_checkpoint(ck, m->params());
  return m;
}

std::unique_ptr<MaskedAutoencoder<float>> load_mae(const fs::path& path) {
  const auto ck = load_checkpoint(path, Task::mae);
  MaeConfig cfg;
  from_json(ck.meta.config, cfg);
  auto m = std::make_unique<MaskedAutoencoder<float>>(cfg, 3, ck.meta.seed);
  apply_checkpoint(ck, m->params());
  return m;
}

std::unique_ptr<RemovalNet<float>> load_removal(const fs::path& path) {
  const auto ck = load_checkpoint(path, Task::removal);
  RemovalConfig cfg;
  from_json(ck.meta.config, cfg);
  auto m = std::make_unique<RemovalNet<float>>(cfg, ck.meta.seed);
  apply_checkpoint(ck, m->params());
  return m;
}

}  // namespace shadowkit
