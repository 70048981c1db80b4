// SPDX-License-Identifier: Apache-2.0
//
// Command-line front end: dataset generation, the three training tasks,
// evaluation, inference and the removal ablation.
#include <CLI11.hpp>
#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <nlohmann/json.hpp>

#include "shadowkit/error.hpp"
#include "shadowkit/harness.hpp"
#include "shadowkit/metrics.hpp"
#include "shadowkit/pipeline.hpp"
#include "shadowkit/wavelet.hpp"

namespace fs = std::filesystem;
using namespace shadowkit;

namespace {

/// Training flags shared by train-* and ablate. Values given on the command
/// line override the JSON config file, which overrides defaults.
struct TrainFlags {
  std::string config_file, data, out;
  int epochs = 0, batch_size = 0;
  double lr = 0, lr_min = 0, train_fraction = 0, grad_clip = 0;
  std::uint64_t seed = 0, split_seed = 0;
  bool hflip = false, stop = false;
  std::map<std::string, CLI::Option*> opts;

  void add(CLI::App* app) {
    opts["config"] = app->add_option("--config", config_file, "JSON run config (flags take precedence)");
    opts["data"] = app->add_option("--data", data, "dataset root in A/B/C layout");
    opts["out"] = app->add_option("--out", out, "output directory");
    opts["epochs"] = app->add_option("--epochs", epochs)->check(CLI::PositiveNumber);
    opts["batch"] = app->add_option("--batch-size", batch_size)->check(CLI::PositiveNumber);
    opts["lr"] = app->add_option("--lr", lr, "peak learning rate");
    opts["lr_min"] = app->add_option("--lr-min", lr_min, "final learning rate of the cosine schedule");
    opts["clip"] = app->add_option("--grad-clip", grad_clip, "global gradient norm clip (0 = off)");
    opts["seed"] = app->add_option("--seed", seed);
    opts["split_seed"] = app->add_option("--split-seed", split_seed);
    opts["fraction"] = app->add_option("--train-fraction", train_fraction);
    opts["hflip"] = app->add_flag("--hflip", hflip, "random horizontal flips");
    opts["stop"] = app->add_flag("--stop-at-threshold", stop, "stop once the validation target is met");
  }
  bool given(const std::string& k) const { return opts.at(k)->count() > 0; }

  RunConfig build(Task task, const std::string& default_name) const {
    RunConfig cfg;
    cfg.task = task;
    if (given("config")) {
      std::ifstream in(config_file);
      if (!in) throw ConfigError("cannot read config file " + config_file);
      try {
        apply_json(nlohmann::json::parse(in), cfg);
      } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError("config file " + config_file + " is not valid JSON: " + e.what());
      }
      cfg.task = task;
    }
    if (given("data")) cfg.dataset_root = data;
    if (given("out")) cfg.output_dir = out;
    if (given("epochs")) cfg.epochs = epochs;
    if (given("batch")) cfg.batch_size = batch_size;
    if (given("lr")) cfg.learning_rate = lr;
    if (given("lr_min")) cfg.lr_min = lr_min;
    if (given("clip")) cfg.max_grad_norm = grad_clip;
    if (given("seed")) cfg.seed = seed;
    if (given("split_seed")) cfg.split_seed = split_seed;
    if (given("fraction")) cfg.train_fraction = train_fraction;
    if (given("hflip")) cfg.hflip = hflip;
    if (given("stop")) cfg.stop_at_threshold = stop;
    if (cfg.output_dir.empty()) cfg.output_dir = default_output_dir(default_name);
    return cfg;
  }
};

struct RemovalFlags {
  std::string variant, mask_source, mae_ckpt, seg_ckpt;
  int base_channels = 0, depth = 0, ffc_blocks = 0;
  std::map<std::string, CLI::Option*> opts;

  void add(CLI::App* app, bool with_variant) {
    if (with_variant) {
      opts["variant"] = app->add_option("--variant", variant)->check(CLI::IsMember({"baseline", "prior", "prior_ffc"}));
    }
    opts["mask_source"] = app->add_option("--mask-source", mask_source)->check(CLI::IsMember({"gt", "predicted"}));
    opts["mae"] = app->add_option("--mae-ckpt", mae_ckpt, "MAE checkpoint used to build priors");
    opts["seg"] = app->add_option("--seg-ckpt", seg_ckpt, "segmenter checkpoint for --mask-source predicted");
    opts["base"] = app->add_option("--base-channels", base_channels)->check(CLI::PositiveNumber);
    opts["depth"] = app->add_option("--depth", depth)->check(CLI::PositiveNumber);
    opts["ffc"] = app->add_option("--ffc-blocks", ffc_blocks)->check(CLI::PositiveNumber);
  }
  bool given(const std::string& k) const { return opts.count(k) && opts.at(k)->count() > 0; }
  void apply(RunConfig& cfg) const {
    if (given("variant")) cfg.variant = parse_variant(variant);
    if (given("mask_source")) cfg.mask_source = parse_mask_source(mask_source);
    if (given("mae")) cfg.mae_checkpoint = mae_ckpt;
    if (given("seg")) cfg.seg_checkpoint = seg_ckpt;
    if (given("base")) cfg.removal.base_channels = base_channels;
    if (given("depth")) cfg.removal.depth = depth;
    if (given("ffc")) cfg.removal.sim_ffc_blocks = ffc_blocks;
  }
};

void print_manifest(const RunManifest& m) {
  const auto& last = m.history.back();
  std::printf("%s: %zu epochs, final %s %.6g, best epoch %d, epochs_to_threshold %s (%.1f s)\n", m.status.c_str(),
              m.history.size(), m.val_metric_name.c_str(), last.val_metric, m.best_epoch.value_or(0),
              m.epochs_to_threshold ? std::to_string(*m.epochs_to_threshold).c_str() : "null", m.wall_clock_seconds);
  std::printf("checkpoint: %s\n", m.best_checkpoint.c_str());
}

std::vector<fs::path> pngs_in(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw DatasetError("not a directory: " + dir.string());
  std::vector<fs::path> out;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().extension() == ".png") out.push_back(e.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

ImageTensor rescale_for_view(const Plane& p) {
  const auto [lo, hi] = std::minmax_element(p.data.begin(), p.data.end());
  const double span = *hi - *lo;
  std::vector<double> v(p.data.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = span > 0 ? (p.data[i] - *lo) / span : 0.0;
  return ImageTensor(p.height, p.width, 1, std::move(v));
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"shadowkit: shadow segmentation, contextual priors and shadow removal"};
  app.require_subcommand(1);

  // gen-data
  auto* gen = app.add_subcommand("gen-data", "write a synthetic dataset in A/B/C layout");
  SynthConfig synth;
  std::string gen_out;
  gen->add_option("--out", gen_out)->required();
  gen->add_option("--count", synth.count)->required()->check(CLI::PositiveNumber);
  gen->add_option("--size", synth.size, "image side in pixels")->capture_default_str();
  gen->add_option("--seed", synth.seed)->capture_default_str();
  gen->add_option("--soft-edge-sigma", synth.soft_edge_sigma)->capture_default_str();
  gen->add_flag("--tint", synth.tint, "random per-channel shadow tint");

  // train-*
  auto* tseg = app.add_subcommand("train-seg", "train the shadow mask predictor");
  TrainFlags seg_flags;
  seg_flags.add(tseg);
  int seg_base = 0, seg_depth = 0, seg_adapter = 0;
  bool seg_no_wavelet = false;
  auto* o_seg_base = tseg->add_option("--base-channels", seg_base)->check(CLI::PositiveNumber);
  auto* o_seg_depth = tseg->add_option("--depth", seg_depth)->check(CLI::PositiveNumber);
  auto* o_seg_adapter = tseg->add_option("--adapter-channels", seg_adapter)->check(CLI::PositiveNumber);
  tseg->add_flag("--no-wavelet", seg_no_wavelet, "feed zeros to the wavelet adapter");

  auto* tmae = app.add_subcommand("train-mae", "pretrain the masked autoencoder on shadow-free images");
  TrainFlags mae_flags;
  mae_flags.add(tmae);
  int mae_enc_layers = 0, mae_dec_layers = 0;
  double mae_ratio = 0;
  auto* o_mae_enc = tmae->add_option("--encoder-layers", mae_enc_layers);
  auto* o_mae_dec = tmae->add_option("--decoder-layers", mae_dec_layers);
  auto* o_mae_ratio = tmae->add_option("--mask-ratio", mae_ratio);

  auto* trem = app.add_subcommand("train-removal", "train the shadow removal network");
  TrainFlags rem_flags;
  rem_flags.add(trem);
  RemovalFlags rem_model;
  rem_model.add(trem, true);

  // ablate
  auto* abl = app.add_subcommand("ablate", "train removal variants over several seeds and compare convergence");
  TrainFlags abl_flags;
  abl_flags.add(abl);
  RemovalFlags abl_model;
  abl_model.add(abl, false);
  std::vector<std::string> abl_variants{"baseline", "prior", "prior_ffc"};
  std::vector<std::uint64_t> abl_seeds{0, 1};
  abl->add_option("--variants", abl_variants)->check(CLI::IsMember({"baseline", "prior", "prior_ffc"}));
  abl->add_option("--seeds", abl_seeds);

  // eval
  auto* ev = app.add_subcommand("eval", "region-wise PSNR/SSIM/RMSE over matching PNG folders");
  std::string pred_dir, gt_dir, mask_dir, space = "lab", report_path;
  ev->add_option("--pred-dir", pred_dir)->required();
  ev->add_option("--gt-dir", gt_dir)->required();
  ev->add_option("--mask-dir", mask_dir)->required();
  ev->add_option("--space", space)->check(CLI::IsMember({"rgb", "lab"}))->capture_default_str();
  ev->add_option("--report", report_path, "write the JSON report here");

  // infer
  auto* inf = app.add_subcommand("infer", "mask -> prior -> removal on one image");
  std::string inf_image, inf_mask, inf_prior, inf_seg, inf_mae, inf_rem, inf_out, inf_panel;
  inf->add_option("--image", inf_image)->required();
  inf->add_option("--mask", inf_mask, "use this mask instead of the segmenter");
  inf->add_option("--prior", inf_prior, "use this prior instead of the MAE");
  inf->add_option("--seg-ckpt", inf_seg);
  inf->add_option("--mae-ckpt", inf_mae);
  inf->add_option("--removal-ckpt", inf_rem)->required();
  inf->add_option("--out", inf_out, "shadow-free PNG")->required();
  inf->add_option("--panel", inf_panel, "input|mask|prior|output PNG (default: <out>_panel.png)");

  auto* sinf = app.add_subcommand("seg-infer", "predict a shadow mask");
  std::string sinf_ckpt, sinf_image, sinf_out;
  bool sinf_soft = false;
  sinf->add_option("--ckpt", sinf_ckpt)->required();
  sinf->add_option("--image", sinf_image)->required();
  sinf->add_option("--out", sinf_out)->required();
  sinf->add_flag("--soft", sinf_soft, "write probabilities instead of the binarised mask");

  auto* gp = app.add_subcommand("gen-prior", "build the MAE prior for an image and mask");
  std::string gp_ckpt, gp_image, gp_mask, gp_out;
  gp->add_option("--ckpt", gp_ckpt)->required();
  gp->add_option("--image", gp_image)->required();
  gp->add_option("--mask", gp_mask)->required();
  gp->add_option("--out", gp_out)->required();

  auto* wd = app.add_subcommand("wavelet-dump", "write Haar subbands as PNGs (rescaled per band)");
  std::string wd_image, wd_out;
  int wd_levels = 3;
  wd->add_option("--image", wd_image)->required();
  wd->add_option("--levels", wd_levels)->check(CLI::PositiveNumber)->capture_default_str();
  wd->add_option("--out", wd_out)->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*gen) {
      const auto samples = synthesize(synth);
      write_istd_layout(gen_out, samples, &synth);
      std::printf("wrote %d samples to %s\n", synth.count, gen_out.c_str());
    } else if (*tseg) {
      RunConfig cfg = seg_flags.build(Task::seg, "seg-seed" + std::to_string(seg_flags.seed));
      if (o_seg_base->count()) cfg.seg.base_channels = seg_base;
      if (o_seg_depth->count()) cfg.seg.depth = seg_depth;
      if (o_seg_adapter->count()) cfg.seg.adapter_channels = seg_adapter;
      if (seg_no_wavelet) cfg.seg.use_wavelet = false;
      print_manifest(train(cfg));
    } else if (*tmae) {
      RunConfig cfg = mae_flags.build(Task::mae, "mae-seed" + std::to_string(mae_flags.seed));
      if (o_mae_enc->count()) cfg.mae.encoder_layers = mae_enc_layers;
      if (o_mae_dec->count()) cfg.mae.decoder_layers = mae_dec_layers;
      if (o_mae_ratio->count()) cfg.mae.train_mask_ratio = mae_ratio;
      print_manifest(train(cfg));
    } else if (*trem) {
      RunConfig cfg = rem_flags.build(Task::removal, "removal");
      rem_model.apply(cfg);
      if (!rem_flags.given("out")) {
        cfg.output_dir = default_output_dir("removal-" + to_string(cfg.variant) + "-seed" + std::to_string(cfg.seed));
      }
      const auto m = train(cfg);
      print_manifest(m);
      if (m.input_psnr) std::printf("input psnr %.3f dB\n", *m.input_psnr);
    } else if (*abl) {
      RunConfig cfg = abl_flags.build(Task::removal, "ablation");
      abl_model.apply(cfg);
      std::vector<RemovalVariant> vs;
      for (const auto& v : abl_variants) vs.push_back(parse_variant(v));
      const auto report = run_ablation(cfg, vs, abl_seeds);
      std::cout << report.to_json()["summary"].dump(2) << "\n";
    } else if (*ev) {
      const auto preds = pngs_in(pred_dir);
      if (preds.empty()) throw DatasetError("no PNGs in " + pred_dir);
      std::vector<ImageTensor> p, g;
      std::vector<ShadowMask> m;
      for (const auto& f : preds) {
        const auto name = f.filename();
        for (const auto& [dir, what] : {std::pair{gt_dir, "ground truth"}, std::pair{mask_dir, "mask"}}) {
          if (!fs::exists(fs::path(dir) / name)) throw DatasetError(std::string("no ") + what + " for " + name.string());
        }
        p.push_back(to_rgb(load_image(f)));
        g.push_back(to_rgb(load_image(fs::path(gt_dir) / name)));
        m.push_back(load_mask(fs::path(mask_dir) / name).binarized());
      }
      std::vector<EvalPair> pairs;
      for (std::size_t i = 0; i < p.size(); ++i) pairs.push_back({&p[i], &g[i], &m[i]});
      auto report = evaluate_dataset(pairs, parse_rmse_space(space));
      report.dataset = gt_dir;
      report.checkpoint = pred_dir;
      const auto j = report.to_json();
      if (!report_path.empty()) {
        std::ofstream out(report_path);
        if (!out) throw IoError("cannot write " + report_path);
        out << j.dump(2) << "\n";
      }
      std::cout << j.dump(2) << "\n";
    } else if (*inf) {
      const Pipeline pipe(inf_mask.empty() ? fs::path() : fs::path(inf_seg), inf_prior.empty() ? fs::path(inf_mae) : fs::path(),
                          inf_rem);
      const ImageTensor img = to_rgb(load_image(inf_image));
      ShadowMask mask;
      ImageTensor prior;
      if (!inf_mask.empty()) mask = load_mask(inf_mask);
      if (!inf_prior.empty()) prior = to_rgb(load_image(inf_prior));
      const auto r = pipe.run(img, inf_mask.empty() ? nullptr : &mask, inf_prior.empty() ? nullptr : &prior,
                              [](const std::string& s) { std::fprintf(stderr, "stage: %s\n", s.c_str()); });
      save_image(r.output, inf_out);
      const fs::path panel =
          inf_panel.empty() ? fs::path(fs::path(inf_out).replace_extension("").string() + "_panel.png") : fs::path(inf_panel);
      save_image(r.panel(img), panel);
      std::printf("wrote %s and %s\n", inf_out.c_str(), panel.string().c_str());
    } else if (*sinf) {
      const auto model = load_segmenter(sinf_ckpt);
      const ImageTensor img = to_rgb(load_image(sinf_image));
      const int step = 1 << model->config().depth;
      const auto soft = crop(model->predict_mask(pad_symmetric(img, step)), img.height(), img.width());
      save_mask(sinf_soft ? soft : soft.binarized(), sinf_out);
    } else if (*gp) {
      const auto model = load_mae(gp_ckpt);
      const ImageTensor img = to_rgb(load_image(gp_image));
      const ShadowMask mask = load_mask(gp_mask);
      const int ps = model->config().patch_size;
      const auto prior = model->generate_prior(pad_symmetric(img, ps), pad_symmetric(mask, ps).binarized());
      save_image(crop(prior, img.height(), img.width()), gp_out);
    } else if (*wd) {
      const ImageTensor img = load_image(wd_image);
      fs::create_directories(wd_out);
      for (int c = 0; c < img.channels(); ++c) {
        const auto pyr = haar_dwt2(channel_plane(img, c), wd_levels);
        for (int l = 0; l < wd_levels; ++l) {
          const auto& s = pyr.levels[l];
          const std::pair<const char*, const Plane*> bands[] = {{"LL", &s.ll}, {"LH", &s.lh}, {"HL", &s.hl}, {"HH", &s.hh}};
          for (const auto& [name, plane] : bands) {
            const auto file = fs::path(wd_out) / ("c" + std::to_string(c) + "_l" + std::to_string(l + 1) + "_" + name + ".png");
            save_image(rescale_for_view(*plane), file);
          }
        }
      }
      std::printf("wrote subbands to %s\n", wd_out.c_str());
    }
  } catch (const DivergenceError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 3;
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
