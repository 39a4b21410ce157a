#include "hypm/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>
#include <unordered_set>

namespace hypm::ad {

namespace {

void ensure_grad(Node& n) {
  if (!n.has_grad()) n.grad = Tensor(n.value.shape);
}

Var make_node(Tensor value, std::vector<Var> parents, std::function<void(Node&)> backprop) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  n->parents = std::move(parents);
  for (const Var& p : n->parents)
    if (p->requires_grad) n->requires_grad = true;
  if (n->requires_grad) n->backprop = std::move(backprop);
  return n;
}

void check_same_shape(const Var& a, const Var& b, const char* who) {
  if (!a->value.same_shape(b->value))
    throw std::invalid_argument(std::string(who) + ": shape mismatch");
}

}  // namespace

Var constant(Tensor v) {
  auto n = std::make_shared<Node>();
  n->value = std::move(v);
  n->requires_grad = false;
  return n;
}

Var leaf(Tensor v) {
  auto n = std::make_shared<Node>();
  n->value = std::move(v);
  n->requires_grad = true;
  return n;
}

void backward(const Var& loss) {
  if (loss->value.numel() != 1) throw std::logic_error("backward: loss must be scalar");
  // Iterative post-order DFS for the topological order.
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, std::size_t>> stack{{loss.get(), 0}};
  visited.insert(loss.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* parent = node->parents[next++].get();
      if (parent->requires_grad && visited.insert(parent).second) stack.push_back({parent, 0});
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  for (Node* n : order) ensure_grad(*n);
  loss->grad.data[0] = 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it)
    if ((*it)->backprop) (*it)->backprop(**it);
}

// ---------------------------------------------------------------- kernels

namespace kernels {

void conv2d_forward(const Tensor& x, const Tensor& w, const Tensor& b, Tensor& y) {
  const std::size_t B = x.shape[0], H = x.shape[1], W = x.shape[2], Ci = x.shape[3];
  const std::size_t Co = w.shape[0];
  y = Tensor({B, H, W, Co});
  const std::size_t patch_len = 9 * Ci;
  std::vector<double> patch(patch_len);
  for (std::size_t bi = 0; bi < B; ++bi) {
    const double* xb = x.data.data() + bi * H * W * Ci;
    double* yb = y.data.data() + bi * H * W * Co;
    for (std::size_t oy = 0; oy < H; ++oy) {
      for (std::size_t ox = 0; ox < W; ++ox) {
        double* pp = patch.data();
        for (int ky = -1; ky <= 1; ++ky) {
          const long iy = static_cast<long>(oy) + ky;
          if (iy < 0 || iy >= static_cast<long>(H)) {
            std::fill(pp, pp + 3 * Ci, 0.0);
            pp += 3 * Ci;
            continue;
          }
          for (int kx = -1; kx <= 1; ++kx) {
            const long ix = static_cast<long>(ox) + kx;
            if (ix < 0 || ix >= static_cast<long>(W)) {
              std::fill(pp, pp + Ci, 0.0);
            } else {
              const double* src = xb + (static_cast<std::size_t>(iy) * W + ix) * Ci;
              std::copy(src, src + Ci, pp);
            }
            pp += Ci;
          }
        }
        double* out = yb + (oy * W + ox) * Co;
        for (std::size_t co = 0; co < Co; ++co) {
          const double* wr = w.data.data() + co * patch_len;
          double acc = b.data[co];
          for (std::size_t j = 0; j < patch_len; ++j) acc += patch[j] * wr[j];
          out[co] = acc;
        }
      }
    }
  }
}

namespace {

// Shared patch-walk for the conv backward pass.
void conv2d_backward(const Tensor& x, const Tensor& w, const Tensor& gy, Tensor* gx, Tensor* gw,
                     Tensor* gb) {
  const std::size_t B = x.shape[0], H = x.shape[1], W = x.shape[2], Ci = x.shape[3];
  const std::size_t Co = w.shape[0];
  const std::size_t patch_len = 9 * Ci;
  std::vector<double> patch(patch_len), dpatch(patch_len);
  for (std::size_t bi = 0; bi < B; ++bi) {
    const double* xb = x.data.data() + bi * H * W * Ci;
    const double* gyb = gy.data.data() + bi * H * W * Co;
    double* gxb = gx ? gx->data.data() + bi * H * W * Ci : nullptr;
    for (std::size_t oy = 0; oy < H; ++oy) {
      for (std::size_t ox = 0; ox < W; ++ox) {
        const double* g = gyb + (oy * W + ox) * Co;
        if (gw) {
          double* pp = patch.data();
          for (int ky = -1; ky <= 1; ++ky) {
            const long iy = static_cast<long>(oy) + ky;
            if (iy < 0 || iy >= static_cast<long>(H)) {
              std::fill(pp, pp + 3 * Ci, 0.0);
              pp += 3 * Ci;
              continue;
            }
            for (int kx = -1; kx <= 1; ++kx) {
              const long ix = static_cast<long>(ox) + kx;
              if (ix < 0 || ix >= static_cast<long>(W))
                std::fill(pp, pp + Ci, 0.0);
              else {
                const double* src = xb + (static_cast<std::size_t>(iy) * W + ix) * Ci;
                std::copy(src, src + Ci, pp);
              }
              pp += Ci;
            }
          }
        }
        if (gx) std::fill(dpatch.begin(), dpatch.end(), 0.0);
        for (std::size_t co = 0; co < Co; ++co) {
          const double gc = g[co];
          if (gc == 0.0) continue;
          const double* wr = w.data.data() + co * patch_len;
          if (gx)
            for (std::size_t j = 0; j < patch_len; ++j) dpatch[j] += gc * wr[j];
          if (gw) {
            double* gwr = gw->data.data() + co * patch_len;
            for (std::size_t j = 0; j < patch_len; ++j) gwr[j] += gc * patch[j];
          }
          if (gb) gb->data[co] += gc;
        }
        if (gx) {
          const double* pp = dpatch.data();
          for (int ky = -1; ky <= 1; ++ky) {
            const long iy = static_cast<long>(oy) + ky;
            if (iy < 0 || iy >= static_cast<long>(H)) {
              pp += 3 * Ci;
              continue;
            }
            for (int kx = -1; kx <= 1; ++kx) {
              const long ix = static_cast<long>(ox) + kx;
              if (ix >= 0 && ix < static_cast<long>(W)) {
                double* dst = gxb + (static_cast<std::size_t>(iy) * W + ix) * Ci;
                for (std::size_t c = 0; c < Ci; ++c) dst[c] += pp[c];
              }
              pp += Ci;
            }
          }
        }
      }
    }
  }
}

}  // namespace

void relu_forward(const Tensor& x, Tensor& y) {
  y = Tensor(x.shape);
  for (std::size_t i = 0; i < x.numel(); ++i) y.data[i] = x.data[i] > 0.0 ? x.data[i] : 0.0;
}

void max_pool2_forward(const Tensor& x, Tensor& y, std::vector<std::size_t>* argmax) {
  const std::size_t B = x.shape[0], H = x.shape[1], W = x.shape[2], C = x.shape[3];
  const std::size_t Ho = H / 2, Wo = W / 2;
  y = Tensor({B, Ho, Wo, C});
  if (argmax) argmax->assign(y.numel(), 0);
  for (std::size_t bi = 0; bi < B; ++bi)
    for (std::size_t oy = 0; oy < Ho; ++oy)
      for (std::size_t ox = 0; ox < Wo; ++ox)
        for (std::size_t c = 0; c < C; ++c) {
          std::size_t best_idx = ((bi * H + 2 * oy) * W + 2 * ox) * C + c;
          double best = x.data[best_idx];
          for (int dy = 0; dy < 2; ++dy)
            for (int dx = 0; dx < 2; ++dx) {
              const std::size_t idx = ((bi * H + 2 * oy + dy) * W + 2 * ox + dx) * C + c;
              if (x.data[idx] > best) {
                best = x.data[idx];
                best_idx = idx;
              }
            }
          const std::size_t oidx = ((bi * Ho + oy) * Wo + ox) * C + c;
          y.data[oidx] = best;
          if (argmax) (*argmax)[oidx] = best_idx;
        }
}

void global_avg_pool_forward(const Tensor& x, Tensor& y) {
  const std::size_t B = x.shape[0], H = x.shape[1], W = x.shape[2], C = x.shape[3];
  y = Tensor({B, C});
  const double inv = 1.0 / static_cast<double>(H * W);
  for (std::size_t bi = 0; bi < B; ++bi) {
    double* out = y.data.data() + bi * C;
    const double* in = x.data.data() + bi * H * W * C;
    for (std::size_t p = 0; p < H * W; ++p)
      for (std::size_t c = 0; c < C; ++c) out[c] += in[p * C + c];
    for (std::size_t c = 0; c < C; ++c) out[c] *= inv;
  }
}

void linear_forward(const Tensor& x, const Tensor& w, const Tensor& b, Tensor& y) {
  const std::size_t B = x.shape[0], In = x.shape[1], Out = w.shape[0];
  y = Tensor({B, Out});
  for (std::size_t bi = 0; bi < B; ++bi) {
    const double* xr = x.data.data() + bi * In;
    double* yr = y.data.data() + bi * Out;
    for (std::size_t o = 0; o < Out; ++o) {
      const double* wr = w.data.data() + o * In;
      double acc = b.data[o];
      for (std::size_t j = 0; j < In; ++j) acc += xr[j] * wr[j];
      yr[o] = acc;
    }
  }
}

Tensor softmax(const Tensor& logits) {
  const std::size_t B = logits.shape[0], K = logits.shape[1];
  Tensor p(logits.shape);
  for (std::size_t bi = 0; bi < B; ++bi) {
    const double* row = logits.data.data() + bi * K;
    double* pr = p.data.data() + bi * K;
    double mx = row[0];
    for (std::size_t k = 1; k < K; ++k) mx = std::max(mx, row[k]);
    double sum = 0.0;
    for (std::size_t k = 0; k < K; ++k) {
      pr[k] = std::exp(row[k] - mx);
      sum += pr[k];
    }
    for (std::size_t k = 0; k < K; ++k) pr[k] /= sum;
  }
  return p;
}

double cross_entropy_value(const Tensor& logits, const std::vector<int>& labels, Tensor* probs) {
  const std::size_t B = logits.shape[0], K = logits.shape[1];
  if (labels.size() != B) throw std::invalid_argument("cross_entropy: labels/batch mismatch");
  for (int l : labels)
    if (l < 0 || static_cast<std::size_t>(l) >= K)
      throw std::out_of_range("cross_entropy: label out of range");
  Tensor p = softmax(logits);
  double loss = 0.0;
  for (std::size_t bi = 0; bi < B; ++bi) {
    const double* row = logits.data.data() + bi * K;
    double mx = row[0];
    for (std::size_t k = 1; k < K; ++k) mx = std::max(mx, row[k]);
    double lse = 0.0;
    for (std::size_t k = 0; k < K; ++k) lse += std::exp(row[k] - mx);
    lse = mx + std::log(lse);
    loss += lse - row[labels[bi]];
  }
  if (probs) *probs = std::move(p);
  return loss / static_cast<double>(B);
}

}  // namespace kernels

// ----------------------------------------------------------------- layers

Var conv2d(const Var& x, const Var& weight, const Var& bias) {
  if (x->value.rank() != 4) throw std::invalid_argument("conv2d: input must be {B,H,W,C}");
  if (weight->value.shape[3] != x->value.shape[3])
    throw std::invalid_argument("conv2d: channel mismatch");
  Tensor y;
  kernels::conv2d_forward(x->value, weight->value, bias->value, y);
  return make_node(std::move(y), {x, weight, bias}, [](Node& n) {
    Node& xn = *n.parents[0];
    Node& wn = *n.parents[1];
    Node& bn = *n.parents[2];
    Tensor* gx = nullptr;
    Tensor* gw = nullptr;
    Tensor* gb = nullptr;
    if (xn.requires_grad) {
      ensure_grad(xn);
      gx = &xn.grad;
    }
    if (wn.requires_grad) {
      ensure_grad(wn);
      gw = &wn.grad;
    }
    if (bn.requires_grad) {
      ensure_grad(bn);
      gb = &bn.grad;
    }
    kernels::conv2d_backward(xn.value, wn.value, n.grad, gx, gw, gb);
  });
}

Var relu(const Var& x) {
  Tensor y;
  kernels::relu_forward(x->value, y);
  return make_node(std::move(y), {x}, [](Node& n) {
    Node& xn = *n.parents[0];
    ensure_grad(xn);
    for (std::size_t i = 0; i < n.value.numel(); ++i)
      if (xn.value.data[i] > 0.0) xn.grad.data[i] += n.grad.data[i];
  });
}

Var max_pool2(const Var& x) {
  Tensor y;
  auto argmax = std::make_shared<std::vector<std::size_t>>();
  kernels::max_pool2_forward(x->value, y, argmax.get());
  return make_node(std::move(y), {x}, [argmax](Node& n) {
    Node& xn = *n.parents[0];
    ensure_grad(xn);
    for (std::size_t i = 0; i < n.value.numel(); ++i)
      xn.grad.data[(*argmax)[i]] += n.grad.data[i];
  });
}

Var global_avg_pool(const Var& x) {
  Tensor y;
  kernels::global_avg_pool_forward(x->value, y);
  return make_node(std::move(y), {x}, [](Node& n) {
    Node& xn = *n.parents[0];
    ensure_grad(xn);
    const std::size_t B = xn.value.shape[0], H = xn.value.shape[1], W = xn.value.shape[2],
                      C = xn.value.shape[3];
    const double inv = 1.0 / static_cast<double>(H * W);
    for (std::size_t bi = 0; bi < B; ++bi) {
      const double* g = n.grad.data.data() + bi * C;
      double* gx = xn.grad.data.data() + bi * H * W * C;
      for (std::size_t p = 0; p < H * W; ++p)
        for (std::size_t c = 0; c < C; ++c) gx[p * C + c] += g[c] * inv;
    }
  });
}

Var linear(const Var& x, const Var& weight, const Var& bias) {
  if (x->value.rank() != 2) throw std::invalid_argument("linear: input must be {B,n}");
  if (x->value.shape[1] != weight->value.shape[1])
    throw std::invalid_argument("linear: dimension mismatch");
  Tensor y;
  kernels::linear_forward(x->value, weight->value, bias->value, y);
  return make_node(std::move(y), {x, weight, bias}, [](Node& n) {
    Node& xn = *n.parents[0];
    Node& wn = *n.parents[1];
    Node& bn = *n.parents[2];
    const std::size_t B = xn.value.shape[0], In = xn.value.shape[1], Out = wn.value.shape[0];
    if (xn.requires_grad) {
      ensure_grad(xn);
      for (std::size_t bi = 0; bi < B; ++bi) {
        const double* g = n.grad.data.data() + bi * Out;
        double* gx = xn.grad.data.data() + bi * In;
        for (std::size_t o = 0; o < Out; ++o) {
          const double* wr = wn.value.data.data() + o * In;
          for (std::size_t j = 0; j < In; ++j) gx[j] += g[o] * wr[j];
        }
      }
    }
    if (wn.requires_grad) {
      ensure_grad(wn);
      for (std::size_t bi = 0; bi < B; ++bi) {
        const double* g = n.grad.data.data() + bi * Out;
        const double* xr = xn.value.data.data() + bi * In;
        for (std::size_t o = 0; o < Out; ++o) {
          double* gw = wn.grad.data.data() + o * In;
          for (std::size_t j = 0; j < In; ++j) gw[j] += g[o] * xr[j];
        }
      }
    }
    if (bn.requires_grad) {
      ensure_grad(bn);
      for (std::size_t bi = 0; bi < B; ++bi) {
        const double* g = n.grad.data.data() + bi * Out;
        for (std::size_t o = 0; o < Out; ++o) bn.grad.data[o] += g[o];
      }
    }
  });
}

Var cross_entropy(const Var& logits, std::vector<int> labels) {
  auto probs = std::make_shared<Tensor>();
  const double loss = kernels::cross_entropy_value(logits->value, labels, probs.get());
  auto labels_p = std::make_shared<std::vector<int>>(std::move(labels));
  return make_node(Tensor::scalar(loss), {logits}, [probs, labels_p](Node& n) {
    Node& ln = *n.parents[0];
    ensure_grad(ln);
    const std::size_t B = ln.value.shape[0], K = ln.value.shape[1];
    const double g = n.grad.data[0] / static_cast<double>(B);
    for (std::size_t bi = 0; bi < B; ++bi)
      for (std::size_t k = 0; k < K; ++k) {
        double d = probs->data[bi * K + k];
        if (k == static_cast<std::size_t>((*labels_p)[bi])) d -= 1.0;
        ln.grad.data[bi * K + k] += g * d;
      }
  });
}

Var mse_loss(const Var& pred, Tensor target) {
  if (!pred->value.same_shape(target)) throw std::invalid_argument("mse_loss: shape mismatch");
  auto tgt = std::make_shared<Tensor>(std::move(target));
  double acc = 0.0;
  for (std::size_t i = 0; i < pred->value.numel(); ++i) {
    const double d = pred->value.data[i] - tgt->data[i];
    acc += d * d;
  }
  acc /= static_cast<double>(pred->value.numel());
  return make_node(Tensor::scalar(acc), {pred}, [tgt](Node& n) {
    Node& pn = *n.parents[0];
    ensure_grad(pn);
    const double g = 2.0 * n.grad.data[0] / static_cast<double>(pn.value.numel());
    for (std::size_t i = 0; i < pn.value.numel(); ++i)
      pn.grad.data[i] += g * (pn.value.data[i] - tgt->data[i]);
  });
}

Var paste_window(Tensor base, const Var& prompt, std::size_t top, std::size_t left,
                 std::size_t height, std::size_t width) {
  const std::size_t B = base.shape[0], H = base.shape[1], W = base.shape[2], C = base.shape[3];
  if (prompt->value.shape != std::vector<std::size_t>{H, W, C})
    throw std::invalid_argument("paste_window: prompt shape must match image shape");
  if (top + height > H || left + width > W || height < 1 || width < 1)
    throw std::out_of_range("paste_window: mask out of bounds");
  Tensor y = std::move(base);
  for (std::size_t bi = 0; bi < B; ++bi)
    for (std::size_t yy = top; yy < top + height; ++yy)
      for (std::size_t xx = left; xx < left + width; ++xx)
        for (std::size_t c = 0; c < C; ++c)
          y.data[((bi * H + yy) * W + xx) * C + c] = prompt->value.data[(yy * W + xx) * C + c];
  return make_node(std::move(y), {prompt}, [top, left, height, width](Node& n) {
    Node& pn = *n.parents[0];
    ensure_grad(pn);
    const std::size_t B = n.value.shape[0], H = n.value.shape[1], W = n.value.shape[2],
                      C = n.value.shape[3];
    for (std::size_t bi = 0; bi < B; ++bi)
      for (std::size_t yy = top; yy < top + height; ++yy)
        for (std::size_t xx = left; xx < left + width; ++xx)
          for (std::size_t c = 0; c < C; ++c)
            pn.grad.data[(yy * W + xx) * C + c] += n.grad.data[((bi * H + yy) * W + xx) * C + c];
  });
}

// ------------------------------------------------------------- elementwise

Var add(const Var& a, const Var& b) {
  check_same_shape(a, b, "add");
  Tensor y(a->value.shape);
  for (std::size_t i = 0; i < y.numel(); ++i) y.data[i] = a->value.data[i] + b->value.data[i];
  return make_node(std::move(y), {a, b}, [](Node& n) {
    for (int p = 0; p < 2; ++p) {
      Node& pn = *n.parents[p];
      if (!pn.requires_grad) continue;
      ensure_grad(pn);
      for (std::size_t i = 0; i < n.value.numel(); ++i) pn.grad.data[i] += n.grad.data[i];
    }
  });
}

Var sub(const Var& a, const Var& b) {
  check_same_shape(a, b, "sub");
  Tensor y(a->value.shape);
  for (std::size_t i = 0; i < y.numel(); ++i) y.data[i] = a->value.data[i] - b->value.data[i];
  return make_node(std::move(y), {a, b}, [](Node& n) {
    Node& an = *n.parents[0];
    Node& bn = *n.parents[1];
    if (an.requires_grad) {
      ensure_grad(an);
      for (std::size_t i = 0; i < n.value.numel(); ++i) an.grad.data[i] += n.grad.data[i];
    }
    if (bn.requires_grad) {
      ensure_grad(bn);
      for (std::size_t i = 0; i < n.value.numel(); ++i) bn.grad.data[i] -= n.grad.data[i];
    }
  });
}

Var mul(const Var& a, const Var& b) {
  check_same_shape(a, b, "mul");
  Tensor y(a->value.shape);
  for (std::size_t i = 0; i < y.numel(); ++i) y.data[i] = a->value.data[i] * b->value.data[i];
  return make_node(std::move(y), {a, b}, [](Node& n) {
    Node& an = *n.parents[0];
    Node& bn = *n.parents[1];
    if (an.requires_grad) {
      ensure_grad(an);
      for (std::size_t i = 0; i < n.value.numel(); ++i)
        an.grad.data[i] += n.grad.data[i] * bn.value.data[i];
    }
    if (bn.requires_grad) {
      ensure_grad(bn);
      for (std::size_t i = 0; i < n.value.numel(); ++i)
        bn.grad.data[i] += n.grad.data[i] * an.value.data[i];
    }
  });
}

Var neg(const Var& x) { return affine(x, -1.0, 0.0); }

Var affine(const Var& x, double k, double c) {
  Tensor y(x->value.shape);
  for (std::size_t i = 0; i < y.numel(); ++i) y.data[i] = k * x->value.data[i] + c;
  return make_node(std::move(y), {x}, [k](Node& n) {
    Node& xn = *n.parents[0];
    ensure_grad(xn);
    for (std::size_t i = 0; i < n.value.numel(); ++i) xn.grad.data[i] += k * n.grad.data[i];
  });
}

Var reciprocal(const Var& x) {
  Tensor y(x->value.shape);
  for (std::size_t i = 0; i < y.numel(); ++i) y.data[i] = 1.0 / x->value.data[i];
  return make_node(std::move(y), {x}, [](Node& n) {
    Node& xn = *n.parents[0];
    ensure_grad(xn);
    for (std::size_t i = 0; i < n.value.numel(); ++i)
      xn.grad.data[i] -= n.grad.data[i] * n.value.data[i] * n.value.data[i];
  });
}

Var atanh_el(const Var& x) {
  Tensor y(x->value.shape);
  for (std::size_t i = 0; i < y.numel(); ++i) y.data[i] = std::atanh(x->value.data[i]);
  return make_node(std::move(y), {x}, [](Node& n) {
    Node& xn = *n.parents[0];
    ensure_grad(xn);
    for (std::size_t i = 0; i < n.value.numel(); ++i) {
      const double v = xn.value.data[i];
      xn.grad.data[i] += n.grad.data[i] / (1.0 - v * v);
    }
  });
}

Var dot(const Var& a, const Var& b) {
  check_same_shape(a, b, "dot");
  double acc = 0.0;
  for (std::size_t i = 0; i < a->value.numel(); ++i) acc += a->value.data[i] * b->value.data[i];
  return make_node(Tensor::scalar(acc), {a, b}, [](Node& n) {
    Node& an = *n.parents[0];
    Node& bn = *n.parents[1];
    const double g = n.grad.data[0];
    if (an.requires_grad) {
      ensure_grad(an);
      for (std::size_t i = 0; i < an.value.numel(); ++i)
        an.grad.data[i] += g * bn.value.data[i];
    }
    if (bn.requires_grad) {
      ensure_grad(bn);
      for (std::size_t i = 0; i < bn.value.numel(); ++i)
        bn.grad.data[i] += g * an.value.data[i];
    }
  });
}

Var norm(const Var& x) {
  double acc = 0.0;
  for (double v : x->value.data) acc += v * v;
  const double nrm = std::sqrt(acc);
  return make_node(Tensor::scalar(nrm), {x}, [nrm](Node& n) {
    Node& xn = *n.parents[0];
    ensure_grad(xn);
    if (nrm == 0.0) return;  // subgradient 0 at the origin
    const double g = n.grad.data[0] / nrm;
    for (std::size_t i = 0; i < xn.value.numel(); ++i) xn.grad.data[i] += g * xn.value.data[i];
  });
}

Var scale_by(const Var& vec, const Var& s) {
  if (s->value.numel() != 1) throw std::invalid_argument("scale_by: scale must be scalar");
  Tensor y(vec->value.shape);
  const double sv = s->value.data[0];
  for (std::size_t i = 0; i < y.numel(); ++i) y.data[i] = sv * vec->value.data[i];
  return make_node(std::move(y), {vec, s}, [](Node& n) {
    Node& vn = *n.parents[0];
    Node& sn = *n.parents[1];
    const double sv = sn.value.data[0];
    if (vn.requires_grad) {
      ensure_grad(vn);
      for (std::size_t i = 0; i < n.value.numel(); ++i) vn.grad.data[i] += sv * n.grad.data[i];
    }
    if (sn.requires_grad) {
      ensure_grad(sn);
      double acc = 0.0;
      for (std::size_t i = 0; i < n.value.numel(); ++i)
        acc += n.grad.data[i] * vn.value.data[i];
      sn.grad.data[0] += acc;
    }
  });
}

Var hyperbolic_distance(const Var& a, const Var& b, const BallConfig& cfg) {
  check_same_shape(a, b, "hyperbolic_distance");
  const double g = cfg.gamma;
  const double r = cfg.radius();
  Var p = neg(a);
  Var d_pb = dot(p, b);
  Var n2p = dot(p, p);
  Var n2b = dot(b, b);
  // coefficients of the gyrovector sum (-a) (+) b
  Var ca = add(affine(d_pb, 2.0 * g, 1.0), affine(n2b, g, 0.0));
  Var cb = affine(n2p, -g, 1.0);
  Var den = add(affine(d_pb, 2.0 * g, 1.0), affine(mul(n2p, n2b), g * g, 0.0));
  Var m = scale_by(add(scale_by(p, ca), scale_by(b, cb)), reciprocal(den));
  Var u = affine(norm(m), 1.0 / r, 0.0);
  return affine(atanh_el(u), 2.0 * r, 0.0);
}

}  // namespace hypm::ad
