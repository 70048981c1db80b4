// SPDX-License-Identifier: Apache-2.0
//
// Synthetic shadow triplets and the A/B/C (shadow / mask / shadow-free)
// directory layout.
#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "shadowkit/image.hpp"

namespace shadowkit {

struct SampleTriplet {
  std::string name;
  ImageTensor shadow;
  ShadowMask mask;  // binary
  ImageTensor free;
};

struct SynthConfig {
  int size = 64;
  int count = 1;
  std::uint64_t seed = 0;
  double darken_min = 0.3;
  double darken_max = 0.7;
  double soft_edge_sigma = 1.5;
  bool ellipses = true;
  bool polygons = true;
  /// Per-channel darkening factors in [0.85, 1] on top of d.
  bool tint = false;

  void validate() const;
};

inline constexpr int kGeneratorVersion = 1;

/// Triplet `index` of the stream; depends only on (cfg, index).
SampleTriplet synthesize_one(const SynthConfig& cfg, int index);
/// All cfg.count triplets, generated in parallel.
std::vector<SampleTriplet> synthesize(const SynthConfig& cfg);

/// shadow = free * (1 - darken * tint_c * soft). tint may be empty (all 1).
ImageTensor apply_shadow(const ImageTensor& free, const std::vector<double>& soft, double darken,
                         const std::vector<double>& tint = {});

/// Writes A/, B/, C/ and manifest.json under root.
void write_istd_layout(const std::filesystem::path& root, const std::vector<SampleTriplet>& samples,
                       const SynthConfig* cfg = nullptr);
/// Triplets matched by file stem, sorted by name; masks binarised at 0.5.
std::vector<SampleTriplet> load_istd_layout(const std::filesystem::path& root);

struct Split {
  std::vector<SampleTriplet> train;
  std::vector<SampleTriplet> test;
};
/// Seeded shuffle, then the first round(fraction * n) go to train. Both
/// sides keep at least one sample.
Split split(std::vector<SampleTriplet> samples, double train_fraction, std::uint64_t seed);

}  // namespace shadowkit
