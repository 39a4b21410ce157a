#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "hypm/geometry.hpp"
#include "hypm/tensor.hpp"

namespace hypm::ad {

/// One node of a reverse-mode tape. Graphs are built per training step and
/// discarded after backward(); nodes own their value and (after backward)
/// their gradient.
class Node {
 public:
  Tensor value;
  Tensor grad;  // allocated by backward(); same shape as value
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backprop;  // accumulates this->grad into parents

  bool has_grad() const { return grad.numel() == value.numel() && value.numel() > 0; }
};

using Var = std::shared_ptr<Node>;

Var constant(Tensor v);
Var leaf(Tensor v);  // differentiable input

/// Seeds d(loss)/d(loss) = 1 and runs the reverse sweep. `loss` must be a
/// scalar (numel 1). Gradients of all reachable differentiable nodes are
/// available afterwards.
void backward(const Var& loss);

// ---- network layers (images are {B,H,W,C} channels-last) ----

/// 3x3 convolution, stride 1, zero padding 1. weight {Co,3,3,Ci}, bias {Co}.
Var conv2d(const Var& x, const Var& weight, const Var& bias);
Var relu(const Var& x);
/// 2x2 max pooling, stride 2; trailing odd row/column is dropped.
Var max_pool2(const Var& x);
/// {B,H,W,C} -> {B,C} spatial mean.
Var global_avg_pool(const Var& x);
/// x {B,n}, weight {out,n}, bias {out} -> {B,out}.
Var linear(const Var& x, const Var& weight, const Var& bias);
/// Mean negative log-softmax of the labelled class. labels[b] in [0, K).
Var cross_entropy(const Var& logits, std::vector<int> labels);
/// mean((pred - target)^2); quadratic oracle for gradient checks.
Var mse_loss(const Var& pred, Tensor target);

/// Copy of `base` {B,H,W,C} with the window replaced by the prompt {H,W,C}
/// values at the same coordinates, for every batch element. Gradient flows
/// to the prompt only, restricted to the window.
Var paste_window(Tensor base, const Var& prompt, std::size_t top, std::size_t left,
                 std::size_t height, std::size_t width);

// ---- elementwise / reduction primitives ----

Var add(const Var& a, const Var& b);  // same shape
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var neg(const Var& x);
Var affine(const Var& x, double k, double c);  // k*x + c
Var reciprocal(const Var& x);
Var atanh_el(const Var& x);
Var dot(const Var& a, const Var& b);            // vectors -> scalar
Var norm(const Var& x);                         // Euclidean norm -> scalar
Var scale_by(const Var& vec, const Var& s);     // vector * scalar

/// Geodesic distance between two interior points as a differentiable graph
/// (no boundary projection; callers keep inputs strictly inside the ball).
Var hyperbolic_distance(const Var& a, const Var& b, const BallConfig& cfg);

// ---- forward-only kernels shared with inference paths ----

namespace kernels {
void conv2d_forward(const Tensor& x, const Tensor& w, const Tensor& b, Tensor& y);
void relu_forward(const Tensor& x, Tensor& y);
void max_pool2_forward(const Tensor& x, Tensor& y, std::vector<std::size_t>* argmax);
void global_avg_pool_forward(const Tensor& x, Tensor& y);
void linear_forward(const Tensor& x, const Tensor& w, const Tensor& b, Tensor& y);
/// Row-wise softmax with max subtraction.
Tensor softmax(const Tensor& logits);
/// Mean cross entropy; also returns softmax rows via `probs` if non-null.
double cross_entropy_value(const Tensor& logits, const std::vector<int>& labels,
                           Tensor* probs = nullptr);
}  // namespace kernels

}  // namespace hypm::ad
