// SPDX-License-Identifier: Apache-2.0
#include "shadowkit/pipeline.hpp"

#include <numeric>

#include "shadowkit/error.hpp"

namespace shadowkit {

namespace {

template <typename F>
auto in_stage(const std::string& stage, const Pipeline::StageTrace& trace, F&& f) {
  if (trace) trace(stage);
  try {
    return f();
  } catch (const StageError&) {
    throw;
  } catch (const std::exception& e) {
    throw StageError(stage, e.what());
  }
}

template <typename M>
std::unique_ptr<M> load_if(const std::filesystem::path& p, const std::string& stage,
                           std::unique_ptr<M> (*loader)(const std::filesystem::path&)) {
  if (p.empty()) return nullptr;
  try {
    return loader(p);
  } catch (const std::exception& e) {
    throw StageError(stage, e.what());
  }
}

}  // namespace

ImageTensor PipelineResult::panel(const ImageTensor& input) const {
  return hstack({input, mask_to_image(mask), prior, output});
}

Pipeline::Pipeline(const std::filesystem::path& seg_ckpt, const std::filesystem::path& mae_ckpt,
                   const std::filesystem::path& removal_ckpt)
    : seg_(load_if(seg_ckpt, "mask", &load_segmenter)),
      mae_(load_if(mae_ckpt, "prior", &load_mae)),
      removal_(load_if(removal_ckpt, "removal", &load_removal)) {}

Pipeline::Pipeline(std::unique_ptr<Segmenter<float>> seg, std::unique_ptr<MaskedAutoencoder<float>> mae,
                   std::unique_ptr<RemovalNet<float>> removal)
    : seg_(std::move(seg)), mae_(std::move(mae)), removal_(std::move(removal)) {}

PipelineResult Pipeline::run(const ImageTensor& input, const ShadowMask* mask, const ImageTensor* prior,
                             const StageTrace& trace) const {
  if (!removal_) throw StageError("removal", "no removal checkpoint loaded");
  if (!mask && !seg_) throw StageError("mask", "no mask supplied and no segmenter checkpoint loaded");
  if (!prior && !mae_) throw StageError("prior", "no prior supplied and no MAE checkpoint loaded");
  const ImageTensor img = to_rgb(input);
  if (mask && (mask->height() != img.height() || mask->width() != img.width())) {
    throw StageError("mask", "supplied mask does not match the image size");
  }
  if (prior && (prior->height() != img.height() || prior->width() != img.width())) {
    throw StageError("prior", "supplied prior does not match the image size");
  }

  int multiple = 1 << removal_->config().depth;
  if (seg_) multiple = std::lcm(multiple, 1 << seg_->config().depth);
  if (mae_) multiple = std::lcm(multiple, mae_->config().patch_size);
  const ImageTensor padded = pad_symmetric(img, multiple);
  const int h = img.height(), w = img.width();

  PipelineResult r;
  const ShadowMask soft = in_stage("mask", trace, [&] {
    return mask ? pad_symmetric(*mask, multiple) : seg_->predict_mask(padded);
  });
  const ShadowMask binary = soft.binarized();
  const ImageTensor prior_img = in_stage("prior", trace, [&] {
    return prior ? pad_symmetric(to_rgb(*prior), multiple) : mae_->generate_prior(padded, binary);
  });
  const ImageTensor out = in_stage("removal", trace, [&] {
    return removal_->remove_shadow(padded, binary, removal_->config().use_prior ? &prior_img : nullptr);
  });
  r.mask = crop(soft, h, w);
  r.binary_mask = crop(binary, h, w);
  r.prior = crop(prior_img, h, w);
  r.output = crop(out, h, w);
  return r;
}

}  // namespace shadowkit
