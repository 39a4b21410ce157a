#pragma once

#include <filesystem>
#include <vector>

#include "hypm/autodiff.hpp"
#include "hypm/rng.hpp"
#include "hypm/tensor.hpp"

namespace hypm {

/// Architecture of the desk-scale backbone: two 3x3 conv blocks (stride 1,
/// ReLU, 2x2 max-pool), global average pooling, and a fully connected layer
/// to the embedding, followed by a classification head with C+1 outputs.
struct ConvNetConfig {
  std::size_t in_h = 32;
  std::size_t in_w = 32;
  std::size_t conv1_channels = 8;
  std::size_t conv2_channels = 16;
  std::size_t embed_dim = 64;
  std::size_t num_known_classes = 6;  // C; the extra output is class index C

  std::size_t head_outputs() const { return num_known_classes + 1; }
  void validate() const;
};

struct SgdConfig {
  double lr = 1e-3;
  double decay_factor = 0.1;
  long decay_at_step = 8000;
  long max_steps = 10000;
  std::size_t batch_size = 16;

  void validate() const;
  /// lr * decay_factor once the step counter has reached decay_at_step.
  double lr_at(long step) const;
};

/// Backbone parameters, head parameters, the learnable image-wise prompt and
/// the optimizer step counter. Parameter declaration order (used by the
/// checkpoint format and gradient vectors):
///   conv1_w, conv1_b, conv2_w, conv2_b, fc_w, fc_b, head_w, head_b, prompt
struct ModelState {
  ConvNetConfig arch;
  Tensor conv1_w, conv1_b;  // {C1,3,3,3}, {C1}
  Tensor conv2_w, conv2_b;  // {C2,3,3,C1}, {C2}
  Tensor fc_w, fc_b;        // {embed,C2}, {embed}
  Tensor head_w, head_b;    // {C+1,embed}, {C+1}
  Tensor prompt;            // {H,W,3}, clamped to [0,1]
  long step = 0;

  static ModelState init(const ConvNetConfig& arch, RngStream& stream);

  std::vector<Tensor*> parameters();
  std::vector<const Tensor*> parameters() const;
  std::size_t num_params() const;
};

/// Gradient vector aligned with ModelState::parameters() order.
using ParamGrads = std::vector<Tensor>;

ParamGrads zero_grads(const ModelState& state);
void accumulate(ParamGrads& into, const ParamGrads& from);

/// Parameter leaves for one differentiable graph build.
struct ModelGraph {
  ad::Var conv1_w, conv1_b, conv2_w, conv2_b, fc_w, fc_b, head_w, head_b, prompt;

  /// All parameters as differentiable leaves.
  static ModelGraph leaves(const ModelState& state);
  /// Backbone + head over an images node.
  ad::Var embeddings(const ad::Var& images) const;
  ad::Var logits(const ad::Var& images) const;
  /// Gradients after backward(); zero tensors for untouched parameters.
  ParamGrads collect_grads(const ModelState& state) const;
};

// ---- inference (no gradient recording) ----

/// {B,H,W,3} batch -> {B,embed_dim} embeddings.
Tensor backbone_forward(const ModelState& state, const Tensor& batch);
/// {B,embed_dim} -> {B,C+1} logits.
Tensor head_forward(const ModelState& state, const Tensor& z);

// ---- optimizer ----

/// theta -= lr * grad for every parameter; clamps the prompt to [0,1].
/// Throws std::runtime_error on non-finite gradients (step aborted).
void apply_sgd(ModelState& state, const ParamGrads& grads, double lr);

/// Scheduled outer step: apply_sgd at lr_at(state.step), then increment the
/// step counter.
void sgd_step(ModelState& state, const ParamGrads& grads, const SgdConfig& cfg);

// ---- oracles & persistence ----

/// Central finite differences vs reverse-mode on the cross-entropy loss over
/// `batch`; returns the maximum relative error across all parameters.
/// Intended for small models (<= 1e4 parameters).
double grad_check(const ModelState& state, const Tensor& batch, const std::vector<int>& labels,
                  double h = 1e-5);

/// Versioned binary checkpoint: magic "HYPM1", tensor shapes and 64-bit
/// little-endian values in declaration order, then the step counter.
void save_checkpoint(const ModelState& state, const std::filesystem::path& path);
ModelState load_checkpoint(const std::filesystem::path& path);

}  // namespace hypm
