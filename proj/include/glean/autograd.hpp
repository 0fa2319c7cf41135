#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "glean/tensor.hpp"

// Minimal reverse-mode automatic differentiation over Tensor values.
//
// A Var is a shared handle to a graph node. Operations record their parents
// and a backward closure only while gradient recording is enabled and at
// least one input requires a gradient; otherwise they return plain values.
// Leaf parameters with requires_grad=false still pass gradients through to
// their inputs, which is how frozen weights are realized.

namespace glean::ag {

struct Node {
  Tensor value;
  Tensor grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward;

  /// Gradient accumulator, zero-allocated on first use.
  Tensor& grad_buffer();
};

class Var {
 public:
  Var() = default;
  explicit Var(Tensor value, bool requires_grad = false);

  bool defined() const { return static_cast<bool>(node_); }
  explicit operator bool() const { return defined(); }

  const Tensor& value() const { return node_->value; }
  Tensor& mutable_value() { return node_->value; }
  const Shape& shape() const { return node_->value.shape(); }
  /// Empty tensor when no gradient has been accumulated.
  const Tensor& grad() const { return node_->grad; }
  bool requires_grad() const { return node_ && node_->requires_grad; }
  void set_requires_grad(bool flag) { node_->requires_grad = flag; }
  void zero_grad() { node_->grad = Tensor(); }

  Node* node() const { return node_.get(); }
  const std::shared_ptr<Node>& shared() const { return node_; }
  static Var from_node(std::shared_ptr<Node> node);

 private:
  std::shared_ptr<Node> node_;
};

bool grad_enabled();

class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

/// Builds an op result; records the graph only when needed.
Var make_result(Tensor value, std::vector<Var> parents, std::function<void(Node&)> backward);

/// Back-propagates from a single-element root (seeded with 1).
void backward(const Var& root);

Var detach(const Var& x);

// Elementwise and structural ops.
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var scale(const Var& a, float s);
/// sa·a + sb·b for same-shaped inputs.
Var lin_comb(const Var& a, float sa, const Var& b, float sb);
Var leaky_relu(const Var& x, float slope = 0.2f);
Var tanh(const Var& x);
Var reshape(const Var& x, Shape shape);
Var concat_channels(const Var& a, const Var& b);
Var upsample_nearest2x(const Var& x);
Var pixel_shuffle(const Var& x, int r);
Var pixel_unshuffle(const Var& x, int r);
/// Per-(n,c) normalization over H×W with biased variance.
Var instance_norm(const Var& x, float eps = 1e-5f);
/// y = x·(1+γ)+β with style = [γ | β] of shape N×2C.
Var modulate(const Var& x, const Var& style);
/// N×k×d → N×d row `row`.
Var select_row(const Var& latents, int row);
/// N×d → N×k×d by repetition.
Var repeat_rows(const Var& z, int k);
/// 1×C×H×W → N×C×H×W by repetition along the batch axis.
Var repeat_batch(const Var& x, int n);
/// Per-item flatten to N×(rest).
Var flatten(const Var& x);
/// N×C×H×W → N×C spatial mean.
Var global_avg_pool(const Var& x);

// Dense layers. Weight layout: conv OC×IC×K×K, linear OUT×IN. Bias may be undefined.
Var conv2d(const Var& x, const Var& weight, const Var& bias, int stride, int pad);
Var linear(const Var& x, const Var& weight, const Var& bias);

// Scalar reductions (result shape {1}).
Var mean(const Var& x);
Var mse(const Var& a, const Var& b);
/// mean(softplus(sign·x)), computed stably.
Var mean_softplus(const Var& x, float sign);

}  // namespace glean::ag
