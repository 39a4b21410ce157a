#pragma once

#include <cstddef>
#include <vector>

#include "hypm/rng.hpp"
#include "hypm/tensor.hpp"

namespace hypm {

/// Window within an H x W image.
struct CropMask {
  std::size_t top = 0;
  std::size_t left = 0;
  std::size_t height = 1;
  std::size_t width = 1;

  void validate(std::size_t image_h, std::size_t image_w) const;
};

enum class PromptMode { synchronous, asynchronous, adversarial, fixed_crop };

struct AugmentConfig {
  double crop_fraction = 0.5;  // window side = round(fraction * dim), in (0,1]
  PromptMode mode = PromptMode::synchronous;
  /// Mixing partner from a different domain instead of the same one.
  bool mix_cross_domain = false;

  void validate() const;
};

/// Elementwise average of two equally shaped images.
Tensor mix_pair(const Tensor& a, const Tensor& b);

/// Window size from crop_fraction; position uniform over valid placements.
/// fixed_crop pins the window to the origin.
CropMask random_crop_mask(std::size_t image_h, std::size_t image_w, const AugmentConfig& cfg,
                          RngStream& rng);

/// Replace the window with the prompt values at the same coordinates; pixels
/// outside the window are untouched. (The differentiable counterpart lives in
/// ad::paste_window.)
Tensor apply_prompt(const Tensor& mixed, const Tensor& prompt, const CropMask& mask);

/// Mix aligned pairs, paste one shared mask per call, label everything as the
/// extra class. Returns the batch images; the constant label is
/// num_known_classes (0-based index of the C+1-th output).
struct AugmentedBatch {
  Tensor images;  // {B,H,W,3}
  int label = 0;
  CropMask mask;
};

AugmentedBatch build_augmented_batch(const Tensor& clean_batch, const Tensor& different_class_batch,
                                     const Tensor& prompt, std::size_t num_known_classes,
                                     const AugmentConfig& cfg, RngStream& rng);

}  // namespace hypm
