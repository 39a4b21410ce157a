#include "hypm/augment.hpp"

#include <cmath>
#include <stdexcept>

namespace hypm {

void CropMask::validate(std::size_t image_h, std::size_t image_w) const {
  if (height < 1 || width < 1 || top + height > image_h || left + width > image_w)
    throw std::out_of_range("CropMask: window out of bounds");
}

void AugmentConfig::validate() const {
  if (!(crop_fraction > 0.0 && crop_fraction <= 1.0))
    throw std::invalid_argument("AugmentConfig: crop_fraction must be in (0,1]");
}

Tensor mix_pair(const Tensor& a, const Tensor& b) {
  if (!a.same_shape(b)) throw std::invalid_argument("mix_pair: shape mismatch");
  Tensor out(a.shape);
  for (std::size_t i = 0; i < out.numel(); ++i) out.data[i] = (a.data[i] + b.data[i]) / 2.0;
  return out;
}

CropMask random_crop_mask(std::size_t image_h, std::size_t image_w, const AugmentConfig& cfg,
                          RngStream& rng) {
  cfg.validate();
  CropMask m;
  m.height = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::llround(cfg.crop_fraction * static_cast<double>(image_h))));
  m.width = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::llround(cfg.crop_fraction * static_cast<double>(image_w))));
  m.height = std::min(m.height, image_h);
  m.width = std::min(m.width, image_w);
  if (cfg.mode == PromptMode::fixed_crop) {
    m.top = 0;
    m.left = 0;
  } else {
    m.top = static_cast<std::size_t>(rng.uniform_below(image_h - m.height + 1));
    m.left = static_cast<std::size_t>(rng.uniform_below(image_w - m.width + 1));
  }
  return m;
}

Tensor apply_prompt(const Tensor& mixed, const Tensor& prompt, const CropMask& mask) {
  if (!mixed.same_shape(prompt))
    throw std::invalid_argument("apply_prompt: prompt shape must equal image shape");
  const std::size_t h = mixed.shape[0], w = mixed.shape[1], c = mixed.shape[2];
  mask.validate(h, w);
  Tensor out = mixed;
  for (std::size_t y = mask.top; y < mask.top + mask.height; ++y)
    for (std::size_t x = mask.left; x < mask.left + mask.width; ++x)
      for (std::size_t ch = 0; ch < c; ++ch)
        out.data[(y * w + x) * c + ch] = prompt.data[(y * w + x) * c + ch];
  return out;
}

AugmentedBatch build_augmented_batch(const Tensor& clean_batch,
                                     const Tensor& different_class_batch, const Tensor& prompt,
                                     std::size_t num_known_classes, const AugmentConfig& cfg,
                                     RngStream& rng) {
  if (!clean_batch.same_shape(different_class_batch))
    throw std::invalid_argument("build_augmented_batch: batch shape mismatch");
  if (clean_batch.rank() != 4)
    throw std::invalid_argument("build_augmented_batch: batches must be {B,H,W,3}");
  const std::size_t b = clean_batch.shape[0], h = clean_batch.shape[1], w = clean_batch.shape[2],
                    c = clean_batch.shape[3];
  AugmentedBatch out;
  out.mask = random_crop_mask(h, w, cfg, rng);  // one mask per batch step
  out.label = static_cast<int>(num_known_classes);
  out.images = Tensor(clean_batch.shape);
  const std::size_t stride = h * w * c;
  for (std::size_t bi = 0; bi < b; ++bi)
    for (std::size_t i = 0; i < stride; ++i)
      out.images.data[bi * stride + i] =
          (clean_batch.data[bi * stride + i] + different_class_batch.data[bi * stride + i]) / 2.0;
  for (std::size_t bi = 0; bi < b; ++bi)
    for (std::size_t y = out.mask.top; y < out.mask.top + out.mask.height; ++y)
      for (std::size_t x = out.mask.left; x < out.mask.left + out.mask.width; ++x)
        for (std::size_t ch = 0; ch < c; ++ch)
          out.images.data[bi * stride + (y * w + x) * c + ch] = prompt.data[(y * w + x) * c + ch];
  return out;
}

}  // namespace hypm
