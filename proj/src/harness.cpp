// SPDX-License-Identifier: Apache-2.0
#include "shadowkit/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <map>
#include <numeric>
#include <random>

#include "shadowkit/convert.hpp"
#include "shadowkit/error.hpp"
#include "shadowkit/metrics.hpp"
#include "shadowkit/optim.hpp"

namespace shadowkit {

namespace fs = std::filesystem;
using nn::Tensor;
using nn::Var;

std::string to_string(MaskSource m) { return m == MaskSource::gt ? "gt" : "predicted"; }

MaskSource parse_mask_source(const std::string& s) {
  if (s == "gt") return MaskSource::gt;
  if (s == "predicted") return MaskSource::predicted;
  throw ConfigError("unknown mask source: " + s);
}

void RunConfig::validate() const {
  if (epochs < 1) throw ConfigError("epochs must be >= 1");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");
  if (lr_min < 0.0 || lr_min > learning_rate) throw ConfigError("lr_min must lie in [0, learning_rate]");
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) throw ConfigError("train_fraction must lie in (0,1)");
  if (dataset_root.empty()) throw ConfigError("dataset root is required");
  if (output_dir.empty()) throw ConfigError("output directory is required");
  seg.validate();
  mae.validate();
  if (task == Task::removal) {
    RemovalConfig rc = removal;
    rc.apply_variant(variant);
    rc.validate();
    if (rc.use_prior && mae_checkpoint.empty()) throw ConfigError("variant " + to_string(variant) + " needs an MAE checkpoint");
    if (mask_source == MaskSource::predicted && seg_checkpoint.empty()) {
      throw ConfigError("mask source 'predicted' needs a segmenter checkpoint");
    }
  }
}

nlohmann::json RunConfig::to_json() const {
  RemovalConfig rc = removal;
  rc.apply_variant(variant);
  return {{"task", to_string(task)},
          {"dataset", dataset_root.string()},
          {"output", output_dir.string()},
          {"epochs", epochs},
          {"batch_size", batch_size},
          {"learning_rate", learning_rate},
          {"lr_min", lr_min},
          {"lr_schedule", "cosine"},
          {"max_grad_norm", max_grad_norm},
          {"seed", seed},
          {"split_seed", split_seed},
          {"train_fraction", train_fraction},
          {"hflip", hflip},
          {"stop_at_threshold", stop_at_threshold},
          {"variant", to_string(variant)},
          {"mask_source", to_string(mask_source)},
          {"mae_checkpoint", mae_checkpoint.string()},
          {"seg_checkpoint", seg_checkpoint.string()},
          {"seg", shadowkit::to_json(seg)},
          {"mae", shadowkit::to_json(mae)},
          {"removal", shadowkit::to_json(rc)}};
}

void apply_json(const nlohmann::json& j, RunConfig& c) {
  if (!j.is_object()) throw ConfigError("run config must be a JSON object");
  try {
    if (j.contains("task")) c.task = parse_task(j["task"].get<std::string>());
    if (j.contains("dataset")) c.dataset_root = j["dataset"].get<std::string>();
    if (j.contains("output")) c.output_dir = j["output"].get<std::string>();
    c.epochs = j.value("epochs", c.epochs);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.learning_rate = j.value("learning_rate", c.learning_rate);
    c.lr_min = j.value("lr_min", c.lr_min);
    c.max_grad_norm = j.value("max_grad_norm", c.max_grad_norm);
    c.seed = j.value("seed", c.seed);
    c.split_seed = j.value("split_seed", c.split_seed);
    c.train_fraction = j.value("train_fraction", c.train_fraction);
    c.hflip = j.value("hflip", c.hflip);
    c.stop_at_threshold = j.value("stop_at_threshold", c.stop_at_threshold);
    if (j.contains("variant")) c.variant = parse_variant(j["variant"].get<std::string>());
    if (j.contains("mask_source")) c.mask_source = parse_mask_source(j["mask_source"].get<std::string>());
    if (j.contains("mae_checkpoint")) c.mae_checkpoint = j["mae_checkpoint"].get<std::string>();
    if (j.contains("seg_checkpoint")) c.seg_checkpoint = j["seg_checkpoint"].get<std::string>();
    if (j.contains("seg")) from_json(j["seg"], c.seg);
    if (j.contains("mae")) from_json(j["mae"], c.mae);
    if (j.contains("removal")) from_json(j["removal"], c.removal);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("bad run config: ") + e.what());
  }
}

namespace {

template <typename U>
nlohmann::json opt_json(const std::optional<U>& v) {
  return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
}

template <typename U>
std::optional<U> json_opt(const nlohmann::json& j, const char* key) {
  if (!j.contains(key) || j[key].is_null()) return std::nullopt;
  return j[key].get<U>();
}

}  // namespace

nlohmann::json RunManifest::to_json() const {
  nlohmann::json hist = nlohmann::json::array();
  for (const auto& r : history) {
    hist.push_back({{"epoch", r.epoch}, {"train_loss", r.train_loss}, {val_metric_name, r.val_metric}, {"seconds", r.seconds}});
  }
  return {{"config", config},
          {"status", status},
          {"val_metric", val_metric_name},
          {"higher_is_better", higher_is_better},
          {"threshold", threshold},
          {"history", hist},
          {"wall_clock_seconds", wall_clock_seconds},
          {"best_checkpoint", best_checkpoint},
          {"last_checkpoint", last_checkpoint},
          {"best_epoch", opt_json(best_epoch)},
          {"epochs_to_threshold", opt_json(epochs_to_threshold)},
          {"diverged_epoch", opt_json(diverged_epoch)},
          {"diverged_step", opt_json(diverged_step)},
          {"input_psnr", opt_json(input_psnr)},
          {"final_report", final_report}};
}

RunManifest RunManifest::from_json(const nlohmann::json& j) {
  RunManifest m;
  m.config = j.at("config");
  m.status = j.at("status").get<std::string>();
  m.val_metric_name = j.at("val_metric").get<std::string>();
  m.higher_is_better = j.at("higher_is_better").get<bool>();
  m.threshold = j.at("threshold").get<double>();
  for (const auto& r : j.at("history")) {
    m.history.push_back({r.at("epoch").get<int>(), r.at("train_loss").get<double>(),
                         r.at(m.val_metric_name).get<double>(), r.at("seconds").get<double>()});
  }
  m.wall_clock_seconds = j.at("wall_clock_seconds").get<double>();
  m.best_checkpoint = j.at("best_checkpoint").get<std::string>();
  m.last_checkpoint = j.at("last_checkpoint").get<std::string>();
  m.best_epoch = json_opt<int>(j, "best_epoch");
  m.epochs_to_threshold = json_opt<int>(j, "epochs_to_threshold");
  m.diverged_epoch = json_opt<int>(j, "diverged_epoch");
  m.diverged_step = json_opt<int>(j, "diverged_step");
  m.input_psnr = json_opt<double>(j, "input_psnr");
  m.final_report = j.value("final_report", nlohmann::json());
  return m;
}

RunManifest read_manifest(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read manifest: " + path.string());
  try {
    return RunManifest::from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("malformed manifest " + path.string() + ": " + e.what());
  }
}

fs::path default_output_dir(const std::string& name) {
  if (const char* root = std::getenv("SHADOWKIT_OUTPUT_ROOT"); root && *root) return fs::path(root) / name;
  return fs::path("runs") / name;
}

// ---------------------------------------------------------------------------
// Evaluation helpers

double mean_iou(const Segmenter<float>& model, const std::vector<SampleTriplet>& samples) {
  if (samples.empty()) throw DatasetError("no samples to evaluate");
  double s = 0;
  for (const auto& t : samples) s += mask_iou(model.predict_mask(t.shadow), t.mask);
  return s / static_cast<double>(samples.size());
}

double mae_hidden_mse(const MaskedAutoencoder<float>& model, const std::vector<SampleTriplet>& samples,
                      std::uint64_t seed) {
  if (samples.empty()) throw DatasetError("no samples to evaluate");
  nn::NoGradGuard guard;
  const int ps = model.config().patch_size;
  constexpr int kBatch = 16;
  double total = 0;
  for (std::size_t b = 0; b < samples.size(); b += kBatch) {
    std::vector<const ImageTensor*> imgs;
    for (std::size_t i = b; i < std::min(samples.size(), b + kBatch); ++i) imgs.push_back(&samples[i].free);
    const auto x = images_to_tensor<float>(imgs);
    const int np = (x.dim(1) / ps) * (x.dim(2) / ps);
    const auto split = random_patch_split(static_cast<int>(imgs.size()), np, model.config().train_mask_ratio, seed + b);
    total += static_cast<double>(model.loss(x, split).value()[0]) * imgs.size();
  }
  return total / static_cast<double>(samples.size());
}

namespace {

ImageTensor flipped(const ImageTensor& img) {
  ImageTensor out = img;
  for (int y = 0; y < img.height(); ++y) {
    for (int x = 0; x < img.width(); ++x) {
      for (int c = 0; c < img.channels(); ++c) out.at(y, x, c) = img.at(y, img.width() - 1 - x, c);
    }
  }
  return out;
}

ShadowMask flipped(const ShadowMask& m) {
  ShadowMask out = m;
  for (int y = 0; y < m.height(); ++y) {
    for (int x = 0; x < m.width(); ++x) out.at(y, x) = m.at(y, m.width() - 1 - x);
  }
  return out;
}

template <typename U>
std::vector<const U*> pointers(const std::vector<U>& v) {
  std::vector<const U*> out;
  for (const auto& x : v) out.push_back(&x);
  return out;
}

void write_csv(const fs::path& path, const std::string& header, const std::vector<std::pair<int, double>>& rows) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out.precision(10);
  out << header << "\n";
  for (const auto& [e, v] : rows) out << e << "," << v << "\n";
}

void write_run_outputs(const fs::path& dir, const RunManifest& m) {
  fs::create_directories(dir);
  {
    std::ofstream out(dir / "manifest.json");
    if (!out) throw IoError("cannot write manifest in " + dir.string());
    out << m.to_json().dump(2) << "\n";
  }
  std::vector<std::pair<int, double>> loss, val;
  for (const auto& r : m.history) {
    loss.emplace_back(r.epoch, r.train_loss);
    val.emplace_back(r.epoch, r.val_metric);
  }
  write_csv(dir / "train_loss.csv", "epoch,train_loss", loss);
  write_csv(dir / "val_metric.csv", "epoch," + m.val_metric_name, val);
}

using StepFn = std::function<Var<float>(const std::vector<int>& batch, std::mt19937_64& rng)>;
using EvalFn = std::function<double()>;

struct LoopSpec {
  std::string metric;
  bool higher_is_better;
  double threshold;
  CheckpointMeta meta;
};

RunManifest run_loop(const RunConfig& cfg, nn::ParamStore<float>& params, const LoopSpec& spec, int n_train,
                     const StepFn& step_fn, const EvalFn& eval_fn, RunManifest m) {
  using clock = std::chrono::steady_clock;
  const auto t0 = clock::now();
  m.config = cfg.to_json();
  m.val_metric_name = spec.metric;
  m.higher_is_better = spec.higher_is_better;
  m.threshold = spec.threshold;
  const fs::path last = cfg.output_dir / "last.ckpt", best = cfg.output_dir / "best.ckpt";
  fs::create_directories(cfg.output_dir);

  nn::AdamOptions opt_cfg;
  opt_cfg.max_grad_norm = cfg.max_grad_norm;
  nn::Adam<float> opt(params, opt_cfg);
  const int batches = (n_train + cfg.batch_size - 1) / cfg.batch_size;
  const long total_steps = static_cast<long>(batches) * cfg.epochs;
  long step = 0;
  std::optional<double> best_val;
  std::vector<int> order(n_train);

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const auto e0 = clock::now();
    std::mt19937_64 rng(cfg.seed * 0x9E3779B97F4A7C15ull + static_cast<std::uint64_t>(epoch));
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0;
    for (int b = 0; b < batches; ++b) {
      const int lo = b * cfg.batch_size, hi = std::min(n_train, lo + cfg.batch_size);
      const std::vector<int> batch(order.begin() + lo, order.begin() + hi);
      const auto loss = step_fn(batch, rng);
      const double lv = loss.value()[0];
      if (!std::isfinite(lv)) {
        m.status = "diverged";
        m.diverged_epoch = epoch;
        m.diverged_step = b;
        m.wall_clock_seconds = std::chrono::duration<double>(clock::now() - t0).count();
        write_run_outputs(cfg.output_dir, m);
        throw DivergenceError("non-finite " + to_string(cfg.task) + " loss at epoch " + std::to_string(epoch) +
                                  ", step " + std::to_string(b),
                              epoch, b);
      }
      nn::backward(loss);
      opt.step(nn::cosine_lr(cfg.learning_rate, cfg.lr_min, step++, total_steps));
      loss_sum += lv * static_cast<double>(batch.size());
    }
    const double val = eval_fn();
    save_checkpoint(last, params, spec.meta);
    const bool improved = !best_val || (spec.higher_is_better ? val > *best_val : val < *best_val);
    if (improved) {
      best_val = val;
      m.best_epoch = epoch;
      save_checkpoint(best, params, spec.meta);
    }
    m.last_checkpoint = last.string();
    m.best_checkpoint = best.string();
    m.history.push_back({epoch, loss_sum / n_train, val, std::chrono::duration<double>(clock::now() - e0).count()});
    const bool reached = spec.higher_is_better ? val >= spec.threshold : val <= spec.threshold;
    if (reached && !m.epochs_to_threshold) m.epochs_to_threshold = epoch;
    m.wall_clock_seconds = std::chrono::duration<double>(clock::now() - t0).count();
    write_run_outputs(cfg.output_dir, m);
    if (reached && cfg.stop_at_threshold) break;
  }
  m.status = "completed";
  m.wall_clock_seconds = std::chrono::duration<double>(clock::now() - t0).count();
  write_run_outputs(cfg.output_dir, m);
  return m;
}

Split load_split(const RunConfig& cfg) {
  auto all = load_istd_layout(cfg.dataset_root);
  return split(std::move(all), cfg.train_fraction, cfg.split_seed);
}

RunManifest train_seg(const RunConfig& cfg, const Split& data) {
  Segmenter<float> model(cfg.seg, cfg.seed);
  const auto& tr = data.train;
  auto step = [&](const std::vector<int>& batch, std::mt19937_64& rng) {
    std::vector<ImageTensor> imgs;
    std::vector<ShadowMask> masks;
    for (int i : batch) {
      const bool flip = cfg.hflip && (rng() & 1);
      imgs.push_back(flip ? flipped(tr[i].shadow) : tr[i].shadow);
      masks.push_back(flip ? flipped(tr[i].mask) : tr[i].mask);
    }
    const auto ip = pointers(imgs);
    std::vector<Var<float>> wave;
    for (auto& t : wavelet_batch<float>(ip, cfg.seg.depth)) wave.push_back(Var<float>::constant(std::move(t)));
    const auto probs = model.forward(Var<float>::constant(images_to_tensor<float>(ip)), wave);
    return segmentation_loss(probs, masks_to_tensor<float>(pointers(masks)));
  };
  auto eval = [&] { return mean_iou(model, data.test); };
  LoopSpec spec{"iou", true, kSegIouThreshold, {Task::seg, to_json(cfg.seg), "", cfg.seed}};
  return run_loop(cfg, model.params(), spec, static_cast<int>(tr.size()), step, eval, {});
}

RunManifest train_mae(const RunConfig& cfg, const Split& data) {
  MaskedAutoencoder<float> model(cfg.mae, 3, cfg.seed);
  const auto& tr = data.train;
  const int ps = cfg.mae.patch_size;
  auto step = [&](const std::vector<int>& batch, std::mt19937_64& rng) {
    std::vector<ImageTensor> imgs;
    for (int i : batch) imgs.push_back(cfg.hflip && (rng() & 1) ? flipped(tr[i].free) : tr[i].free);
    const auto x = images_to_tensor<float>(pointers(imgs));
    const int np = (x.dim(1) / ps) * (x.dim(2) / ps);
    return model.loss(x, random_patch_split(x.dim(0), np, cfg.mae.train_mask_ratio, rng()));
  };
  auto eval = [&] { return mae_hidden_mse(model, data.test, cfg.split_seed + 1); };
  LoopSpec spec{"hidden_mse", false, kMaeMseThreshold, {Task::mae, to_json(cfg.mae), "", cfg.seed}};
  return run_loop(cfg, model.params(), spec, static_cast<int>(tr.size()), step, eval, {});
}

struct RemovalInputs {
  std::vector<ShadowMask> masks;
  std::vector<ImageTensor> priors;
};

RemovalInputs removal_inputs(const std::vector<SampleTriplet>& samples, const RemovalConfig& rc,
                             const Segmenter<float>* seg, const MaskedAutoencoder<float>* mae) {
  RemovalInputs in;
  for (const auto& s : samples) {
    in.masks.push_back(seg ? seg->predict_mask(s.shadow).binarized() : s.mask.binarized());
    if (rc.use_prior) in.priors.push_back(mae->generate_prior(s.shadow, in.masks.back()));
  }
  return in;
}

RunManifest train_removal(const RunConfig& cfg, const Split& data) {
  RemovalConfig rc = cfg.removal;
  rc.apply_variant(cfg.variant);
  std::unique_ptr<Segmenter<float>> seg;
  std::unique_ptr<MaskedAutoencoder<float>> mae;
  if (cfg.mask_source == MaskSource::predicted) seg = load_segmenter(cfg.seg_checkpoint);
  if (rc.use_prior) mae = load_mae(cfg.mae_checkpoint);
  const auto tr_in = removal_inputs(data.train, rc, seg.get(), mae.get());
  const auto te_in = removal_inputs(data.test, rc, seg.get(), mae.get());

  RemovalNet<float> model(rc, cfg.seed);
  const auto& tr = data.train;
  auto step = [&](const std::vector<int>& batch, std::mt19937_64& rng) {
    std::vector<ImageTensor> imgs, priors, targets;
    std::vector<ShadowMask> masks;
    for (int i : batch) {
      const bool flip = cfg.hflip && (rng() & 1);
      auto pick = [flip](const auto& x) { return flip ? flipped(x) : x; };
      imgs.push_back(pick(tr[i].shadow));
      targets.push_back(pick(tr[i].free));
      masks.push_back(pick(tr_in.masks[i]));
      if (rc.use_prior) priors.push_back(pick(tr_in.priors[i]));
    }
    Tensor<float> prior_t;
    if (rc.use_prior) prior_t = images_to_tensor<float>(pointers(priors));
    // The loss sees the unclamped sum; clamping here zeroes the gradient of
    // every pixel pushed out of range, and a few large early steps can park
    // the whole output there.
    const auto images_t = images_to_tensor<float>(pointers(imgs));
    const auto pred = nn::add(Var<float>::constant(images_t),
                              model.residual(images_t, masks_to_tensor<float>(pointers(masks)),
                                             rc.use_prior ? &prior_t : nullptr));
    return removal_loss(pred, images_to_tensor<float>(pointers(targets)));
  };
  auto predict_test = [&] {
    std::vector<ImageTensor> out;
    for (std::size_t i = 0; i < data.test.size(); ++i) {
      out.push_back(model.remove_shadow(data.test[i].shadow, te_in.masks[i], rc.use_prior ? &te_in.priors[i] : nullptr));
    }
    return out;
  };
  auto eval = [&] {
    const auto preds = predict_test();
    double s = 0;
    for (std::size_t i = 0; i < preds.size(); ++i) s += psnr(preds[i], data.test[i].free);
    return s / static_cast<double>(preds.size());
  };
  RunManifest seed_manifest;
  double in_psnr = 0;
  for (const auto& t : data.test) in_psnr += psnr(t.shadow, t.free);
  seed_manifest.input_psnr = in_psnr / static_cast<double>(data.test.size());
  LoopSpec spec{"psnr", true, kRemovalPsnrThreshold, {Task::removal, to_json(rc), to_string(cfg.variant), cfg.seed}};
  auto m = run_loop(cfg, model.params(), spec, static_cast<int>(tr.size()), step, eval, std::move(seed_manifest));

  const auto preds = predict_test();
  std::vector<EvalPair> pairs;
  for (std::size_t i = 0; i < preds.size(); ++i) pairs.push_back({&preds[i], &data.test[i].free, &data.test[i].mask});
  auto report = evaluate_dataset(pairs, RmseSpace::rgb);
  report.dataset = cfg.dataset_root.string();
  report.checkpoint = m.last_checkpoint;
  m.final_report = report.to_json();
  write_run_outputs(cfg.output_dir, m);
  return m;
}

}  // namespace

RunManifest train(const RunConfig& cfg) {
  cfg.validate();
  const Split data = load_split(cfg);
  switch (cfg.task) {
    case Task::seg: return train_seg(cfg, data);
    case Task::mae: return train_mae(cfg, data);
    case Task::removal: return train_removal(cfg, data);
  }
  throw ConfigError("unknown task");
}

// ---------------------------------------------------------------------------
// Ablation

nlohmann::json AblationReport::to_json() const {
  nlohmann::json rows = nlohmann::json::array();
  std::map<std::string, std::vector<const AblationRun*>> by_variant;
  std::vector<std::string> order;
  for (const auto& r : runs) {
    const auto& h = r.manifest.history;
    rows.push_back({{"variant", to_string(r.variant)},
                    {"seed", r.seed},
                    {"dir", r.dir.string()},
                    {"epochs_run", h.size()},
                    {"epochs_to_threshold", opt_json(r.manifest.epochs_to_threshold)},
                    {"final_psnr", h.empty() ? nlohmann::json(nullptr) : nlohmann::json(h.back().val_metric)},
                    {"input_psnr", opt_json(r.manifest.input_psnr)},
                    {"wall_clock_seconds", r.manifest.wall_clock_seconds}});
    const auto name = to_string(r.variant);
    if (!by_variant.count(name)) order.push_back(name);
    by_variant[name].push_back(&r);
  }
  nlohmann::json summary = nlohmann::json::array();
  for (const auto& name : order) {
    const auto& rs = by_variant[name];
    double psnr_sum = 0, ett_sum = 0;
    int reached = 0;
    for (const auto* r : rs) {
      psnr_sum += r->manifest.history.empty() ? 0.0 : r->manifest.history.back().val_metric;
      if (r->manifest.epochs_to_threshold) {
        ++reached;
        ett_sum += *r->manifest.epochs_to_threshold;
      }
    }
    summary.push_back({{"variant", name},
                       {"runs", rs.size()},
                       {"runs_reaching_threshold", reached},
                       {"mean_epochs_to_threshold",
                        reached == static_cast<int>(rs.size()) ? nlohmann::json(ett_sum / reached) : nlohmann::json(nullptr)},
                       {"mean_final_psnr", psnr_sum / static_cast<double>(rs.size())}});
  }
  return {{"threshold_psnr", kRemovalPsnrThreshold}, {"runs", rows}, {"summary", summary}};
}

AblationReport run_ablation(const RunConfig& base, const std::vector<RemovalVariant>& variants,
                            const std::vector<std::uint64_t>& seeds) {
  if (variants.size() < 2) throw ConfigError("ablation needs at least two variants");
  if (seeds.empty()) throw ConfigError("ablation needs at least one seed");
  RunConfig probe = base;
  probe.task = Task::removal;
  for (auto v : variants) {
    probe.variant = v;
    probe.validate();
  }
  AblationReport report;
  int k = 0;
  for (auto v : variants) {
    for (auto s : seeds) {
      RunConfig cfg = base;
      cfg.task = Task::removal;
      cfg.variant = v;
      cfg.seed = s;
      cfg.output_dir = base.output_dir / ("run" + std::to_string(k++) + "_" + to_string(v) + "_seed" + std::to_string(s));
      report.runs.push_back({v, s, cfg.output_dir, train(cfg)});
    }
  }
  fs::create_directories(base.output_dir);
  {
    std::ofstream out(base.output_dir / "ablation.json");
    if (!out) throw IoError("cannot write ablation report");
    out << report.to_json().dump(2) << "\n";
  }
  std::ofstream csv(base.output_dir / "convergence.csv");
  if (!csv) throw IoError("cannot write convergence.csv");
  csv.precision(10);
  csv << "variant,seed,epoch,train_loss,psnr\n";
  for (const auto& r : report.runs) {
    for (const auto& h : r.manifest.history) {
      csv << to_string(r.variant) << "," << r.seed << "," << h.epoch << "," << h.train_loss << "," << h.val_metric << "\n";
    }
  }
  return report;
}

}  // namespace shadowkit
