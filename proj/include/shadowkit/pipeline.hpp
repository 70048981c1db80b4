// SPDX-License-Identifier: Apache-2.0
//
// End-to-end inference: mask prediction, then the MAE prior, then removal.
#pragma once

#include <filesystem>
#include <functional>
#include <memory>
#include <string>

#include "shadowkit/checkpoint.hpp"

namespace shadowkit {

struct PipelineResult {
  ShadowMask mask;  // soft mask (or the supplied one)
  ShadowMask binary_mask;
  ImageTensor prior;
  ImageTensor output;

  /// input | mask | prior | output, side by side.
  ImageTensor panel(const ImageTensor& input) const;
};

class Pipeline {
 public:
  /// Called with "mask", "prior" and "removal" as each stage starts.
  using StageTrace = std::function<void(const std::string& stage)>;

  /// Any path may be empty; the matching stage then needs its result
  /// supplied to run().
  Pipeline(const std::filesystem::path& seg_ckpt, const std::filesystem::path& mae_ckpt,
           const std::filesystem::path& removal_ckpt);
  /// Takes ownership of already-built models (any may be null).
  Pipeline(std::unique_ptr<Segmenter<float>> seg, std::unique_ptr<MaskedAutoencoder<float>> mae,
           std::unique_ptr<RemovalNet<float>> removal);

  /// Pads to a multiple every stage accepts, runs the stages in order and
  /// crops back. Errors are rethrown as StageError naming the stage.
  PipelineResult run(const ImageTensor& img, const ShadowMask* mask = nullptr, const ImageTensor* prior = nullptr,
                     const StageTrace& trace = {}) const;

 private:
  std::unique_ptr<Segmenter<float>> seg_;
  std::unique_ptr<MaskedAutoencoder<float>> mae_;
  std::unique_ptr<RemovalNet<float>> removal_;
};

}  // namespace shadowkit
