// SPDX-License-Identifier: Apache-2.0
#include "shadowkit/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <nlohmann/json.hpp>
#include <numbers>
#include <opencv2/core.hpp>
#include <opencv2/imgproc.hpp>
#include <random>
#include <set>

#include "shadowkit/error.hpp"

namespace shadowkit {

namespace fs = std::filesystem;

void SynthConfig::validate() const {
  if (size < 8) throw ConfigError("synthetic image size must be >= 8");
  if (count < 1) throw ConfigError("synthetic count must be >= 1");
  if (!(darken_min > 0.0 && darken_max < 1.0 && darken_min <= darken_max)) {
    throw ConfigError("darken range must lie inside (0,1)");
  }
  if (soft_edge_sigma < 0.0) throw ConfigError("soft_edge_sigma must be non-negative");
  if (!ellipses && !polygons) throw ConfigError("at least one shadow shape family must be enabled");
}

namespace {

using Rng = std::mt19937_64;

double uniform(Rng& rng, double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); }

ImageTensor random_background(int n, Rng& rng) {
  ImageTensor img(n, n, 3);
  double base[3], gx[3], gy[3];
  for (int c = 0; c < 3; ++c) {
    base[c] = uniform(rng, 0.3, 0.8);
    gx[c] = uniform(rng, -0.15, 0.15);
    gy[c] = uniform(rng, -0.15, 0.15);
  }
  struct Wave {
    double fx, fy, phase, amp[3];
  };
  std::vector<Wave> waves(3);
  for (auto& w : waves) {
    w.fx = uniform(rng, 0.5, 2.5) * 2 * std::numbers::pi / n;
    w.fy = uniform(rng, 0.5, 2.5) * 2 * std::numbers::pi / n;
    w.phase = uniform(rng, 0, 2 * std::numbers::pi);
    for (double& a : w.amp) a = uniform(rng, -0.05, 0.05);
  }
  for (int y = 0; y < n; ++y) {
    for (int x = 0; x < n; ++x) {
      const double u = static_cast<double>(x) / (n - 1) - 0.5, v = static_cast<double>(y) / (n - 1) - 0.5;
      for (int c = 0; c < 3; ++c) {
        double val = base[c] + gx[c] * u + gy[c] * v;
        for (const auto& w : waves) val += w.amp[c] * std::sin(w.fx * x + w.fy * y + w.phase);
        img.at(y, x, c) = val;
      }
    }
  }
  // A few textured rectangles.
  const int rects = std::uniform_int_distribution<int>(1, 3)(rng);
  for (int r = 0; r < rects; ++r) {
    const int w = std::uniform_int_distribution<int>(n / 8, n / 2)(rng);
    const int h = std::uniform_int_distribution<int>(n / 8, n / 2)(rng);
    const int x0 = std::uniform_int_distribution<int>(0, n - w)(rng);
    const int y0 = std::uniform_int_distribution<int>(0, n - h)(rng);
    double col[3];
    for (double& c : col) c = uniform(rng, 0.25, 0.85);
    const int period = std::uniform_int_distribution<int>(2, 6)(rng);
    const double amp = uniform(rng, 0.03, 0.08);
    const bool checker = rng() & 1;
    for (int y = y0; y < y0 + h; ++y) {
      for (int x = x0; x < x0 + w; ++x) {
        const int k = checker ? (x / period + y / period) : (x / period);
        const double tex = (k % 2 ? amp : -amp);
        for (int c = 0; c < 3; ++c) img.at(y, x, c) = col[c] + tex;
      }
    }
  }
  for (double& v : img.data()) v = std::clamp(v, 0.02, 0.98);
  return img;
}

cv::Mat random_shape(const SynthConfig& cfg, Rng& rng) {
  const int n = cfg.size;
  const double total = static_cast<double>(n) * n;
  for (;;) {
    cv::Mat m = cv::Mat::zeros(n, n, CV_8UC1);
    const bool ellipse = cfg.ellipses && (!cfg.polygons || (rng() & 1));
    const cv::Point2d c(uniform(rng, 0.2, 0.8) * n, uniform(rng, 0.2, 0.8) * n);
    if (ellipse) {
      const cv::Size axes(static_cast<int>(uniform(rng, 0.1, 0.4) * n), static_cast<int>(uniform(rng, 0.1, 0.4) * n));
      cv::ellipse(m, cv::Point(static_cast<int>(c.x), static_cast<int>(c.y)), axes, uniform(rng, 0, 180), 0, 360,
                  cv::Scalar(255), cv::FILLED);
    } else {
      const int k = std::uniform_int_distribution<int>(5, 8)(rng);
      const double r0 = uniform(rng, 0.15, 0.35) * n;
      std::vector<cv::Point> pts;
      const double start = uniform(rng, 0, 2 * std::numbers::pi);
      for (int i = 0; i < k; ++i) {
        const double a = start + 2 * std::numbers::pi * i / k;
        const double r = r0 * uniform(rng, 0.6, 1.3);
        pts.emplace_back(static_cast<int>(std::lround(c.x + r * std::cos(a))),
                         static_cast<int>(std::lround(c.y + r * std::sin(a))));
      }
      cv::fillPoly(m, std::vector<std::vector<cv::Point>>{pts}, cv::Scalar(255));
    }
    const double frac = cv::countNonZero(m) / total;
    if (frac >= 0.05 && frac <= 0.40) return m;
  }
}

}  // namespace

ImageTensor apply_shadow(const ImageTensor& free, const std::vector<double>& soft, double darken,
                         const std::vector<double>& tint) {
  if (soft.size() != free.pixel_count()) throw ShapeError("soft mask size does not match image");
  ImageTensor out = free;
  const int ch = free.channels();
  for (std::size_t i = 0; i < free.pixel_count(); ++i) {
    if (soft[i] == 0.0) continue;
    for (int c = 0; c < ch; ++c) {
      const double t = tint.empty() ? 1.0 : tint[c];
      out.data()[i * ch + c] = free.data()[i * ch + c] * (1.0 - darken * t * soft[i]);
    }
  }
  return out;
}

SampleTriplet synthesize_one(const SynthConfig& cfg, int index) {
  cfg.validate();
  std::seed_seq seq{static_cast<std::uint32_t>(cfg.seed), static_cast<std::uint32_t>(cfg.seed >> 32),
                    static_cast<std::uint32_t>(index), 0x5eedu};
  Rng rng(seq);
  const int n = cfg.size;
  SampleTriplet s;
  char name[32];
  std::snprintf(name, sizeof name, "%06d", index);
  s.name = name;
  s.free = random_background(n, rng);

  const cv::Mat shape = random_shape(cfg, rng);
  cv::Mat binary;
  shape.convertTo(binary, CV_64F, 1.0 / 255.0);
  cv::Mat blurred = binary.clone();
  if (cfg.soft_edge_sigma > 0) cv::GaussianBlur(binary, blurred, cv::Size(0, 0), cfg.soft_edge_sigma);
  // The soft profile never leaves the binary support, so pixels outside the
  // stored mask stay untouched.
  std::vector<double> soft(static_cast<std::size_t>(n) * n), hard(soft.size());
  for (int y = 0; y < n; ++y) {
    for (int x = 0; x < n; ++x) {
      const double b = binary.at<double>(y, x);
      hard[static_cast<std::size_t>(y) * n + x] = b;
      soft[static_cast<std::size_t>(y) * n + x] = std::clamp(b * blurred.at<double>(y, x), 0.0, 1.0);
    }
  }
  const double d = uniform(rng, cfg.darken_min, cfg.darken_max);
  std::vector<double> tint;
  if (cfg.tint) {
    for (int c = 0; c < 3; ++c) tint.push_back(uniform(rng, 0.85, 1.0));
  }
  s.shadow = apply_shadow(s.free, soft, d, tint);
  s.mask = ShadowMask(n, n, std::move(hard));
  return s;
}

std::vector<SampleTriplet> synthesize(const SynthConfig& cfg) {
  cfg.validate();
  std::vector<SampleTriplet> out(cfg.count);
#pragma omp parallel for schedule(dynamic)
  for (int i = 0; i < cfg.count; ++i) out[i] = synthesize_one(cfg, i);
  return out;
}

void write_istd_layout(const fs::path& root, const std::vector<SampleTriplet>& samples, const SynthConfig* cfg) {
  for (const char* sub : {"A", "B", "C"}) fs::create_directories(root / sub);
  for (const auto& s : samples) {
    save_image(s.shadow, root / "A" / (s.name + ".png"));
    save_mask(s.mask, root / "B" / (s.name + ".png"));
    save_image(s.free, root / "C" / (s.name + ".png"));
  }
  nlohmann::json manifest = {{"count", samples.size()}, {"generator_version", kGeneratorVersion}};
  manifest["size"] = samples.empty() ? 0 : samples[0].shadow.height();
  manifest["seed"] = cfg ? nlohmann::json(cfg->seed) : nlohmann::json(nullptr);
  std::ofstream out(root / "manifest.json");
  if (!out) throw IoError("cannot write " + (root / "manifest.json").string());
  out << manifest.dump(2) << "\n";
}

std::vector<SampleTriplet> load_istd_layout(const fs::path& root) {
  std::map<std::string, fs::path> files[3];
  const char* subs[3] = {"A", "B", "C"};
  for (int k = 0; k < 3; ++k) {
    const fs::path dir = root / subs[k];
    if (!fs::is_directory(dir)) throw DatasetError("missing subdirectory " + std::string(subs[k]) + " in " + root.string());
    for (const auto& e : fs::directory_iterator(dir)) {
      if (e.is_regular_file() && e.path().extension() == ".png") files[k][e.path().stem().string()] = e.path();
    }
  }
  std::set<std::string> all;
  for (const auto& f : files) {
    for (const auto& [name, _] : f) all.insert(name);
  }
  std::vector<std::string> orphans;
  for (const auto& name : all) {
    std::string missing;
    for (int k = 0; k < 3; ++k) {
      if (!files[k].count(name)) missing += subs[k];
    }
    if (!missing.empty()) orphans.push_back(name + " (missing in " + missing + ")");
  }
  if (!orphans.empty()) {
    std::string msg = "unmatched samples:";
    for (const auto& o : orphans) msg += " " + o;
    throw DatasetError(msg);
  }
  std::vector<SampleTriplet> out;
  out.reserve(all.size());
  for (const auto& name : all) {
    SampleTriplet s;
    s.name = name;
    s.shadow = to_rgb(load_image(files[0][name]));
    s.mask = load_mask(files[1][name]).binarized();
    s.free = to_rgb(load_image(files[2][name]));
    if (s.shadow.height() != s.free.height() || s.shadow.width() != s.free.width() ||
        s.mask.height() != s.shadow.height() || s.mask.width() != s.shadow.width()) {
      throw DatasetError("dimension mismatch within sample " + name);
    }
    out.push_back(std::move(s));
  }
  return out;
}

Split split(std::vector<SampleTriplet> samples, double train_fraction, std::uint64_t seed) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) throw ConfigError("train_fraction must lie in (0,1)");
  const int n = static_cast<int>(samples.size());
  if (n < 2) throw DatasetError("split needs at least 2 samples, got " + std::to_string(n));
  std::vector<int> order(n);
  for (int i = 0; i < n; ++i) order[i] = i;
  std::shuffle(order.begin(), order.end(), std::mt19937_64(seed));
  const int n_train = std::clamp(static_cast<int>(std::lround(train_fraction * n)), 1, n - 1);
  Split s;
  for (int i = 0; i < n; ++i) (i < n_train ? s.train : s.test).push_back(std::move(samples[order[i]]));
  return s;
}

}  // namespace shadowkit
