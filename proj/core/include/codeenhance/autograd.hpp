// Copyright (c) 2026 CodeEnhance Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Minimal reverse-mode automatic differentiation over dense tensors.
//
// A Var is a handle to a graph node. Ops build new nodes whose backward
// closures accumulate into their inputs' gradients. Nodes that do not depend
// on any gradient-requiring leaf keep no inputs and no closure, so inference
// graphs cost only their forward values.

#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <vector>

#include "codeenhance/tensor.hpp"

namespace codeenhance::ag {

template <typename T>
struct Node {
  Tensor<T> value;
  Tensor<T> grad;  // allocated on first accumulation
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> inputs;
  std::function<void(Node&)> backward_fn;

  Tensor<T>& grad_buffer() {
    if (grad.size() != value.size()) grad = Tensor<T>(value.shape());
    return grad;
  }
  void accumulate(const Tensor<T>& g) {
    auto& buf = grad_buffer();
    for (std::size_t i = 0; i < buf.size(); ++i) buf[i] += g[i];
  }
};

template <typename T>
class Var {
 public:
  Var() = default;
  explicit Var(std::shared_ptr<Node<T>> node) : node_(std::move(node)) {}

  /// Leaf holding `value`. Gradient-requiring leaves act as trainable parameters.
  static Var leaf(Tensor<T> value, bool requires_grad = false) {
    auto n = std::make_shared<Node<T>>();
    n->value = std::move(value);
    n->requires_grad = requires_grad;
    return Var(std::move(n));
  }

  bool defined() const noexcept { return node_ != nullptr; }
  const Tensor<T>& value() const { return node_->value; }
  Tensor<T>& mutable_value() { return node_->value; }
  const Shape& shape() const { return node_->value.shape(); }
  std::int64_t dim(int i) const { return node_->value.dim(i); }
  bool requires_grad() const { return node_ && node_->requires_grad; }
  void set_requires_grad(bool r) { node_->requires_grad = r; }

  /// Gradient accumulated by backward(); zeros when nothing reached this node.
  const Tensor<T>& grad() const { return node_->grad_buffer(); }
  Tensor<T>& mutable_grad() { return node_->grad_buffer(); }
  void zero_grad() {
    if (!node_->grad.empty()) node_->grad.fill(T(0));
  }
  T item() const { return node_->value[0]; }

  const std::shared_ptr<Node<T>>& node() const { return node_; }

 private:
  std::shared_ptr<Node<T>> node_;
};

/// Seeds d(root)/d(root) = 1 for a single-element root and propagates to every
/// gradient-requiring ancestor.
template <typename T>
void backward(const Var<T>& root);

template <typename T>
Var<T> constant(Tensor<T> value) {
  return Var<T>::leaf(std::move(value), false);
}

/// Stop-gradient: same value, no path back to the input.
template <typename T>
Var<T> detach(const Var<T>& x);

// Elementwise (operands must share a shape).
template <typename T> Var<T> add(const Var<T>& a, const Var<T>& b);
template <typename T> Var<T> sub(const Var<T>& a, const Var<T>& b);
template <typename T> Var<T> mul(const Var<T>& a, const Var<T>& b);
template <typename T> Var<T> scale(const Var<T>& a, T s);
template <typename T> Var<T> add_scalar(const Var<T>& a, T s);
template <typename T> Var<T> square(const Var<T>& a);
template <typename T> Var<T> abs(const Var<T>& a);
template <typename T> Var<T> log(const Var<T>& a);
template <typename T> Var<T> sigmoid(const Var<T>& a);
template <typename T> Var<T> swish(const Var<T>& a);
template <typename T> Var<T> leaky_relu(const Var<T>& a, T slope);
/// Gradient is zero wherever the input lies outside [lo, hi].
template <typename T> Var<T> clamp(const Var<T>& a, T lo, T hi);

// Reductions to a rank-0 scalar.
template <typename T> Var<T> sum(const Var<T>& a);
template <typename T> Var<T> mean(const Var<T>& a);
/// sqrt(sum(a^2)); the subgradient at a == 0 is taken as zero.
template <typename T> Var<T> frobenius_norm(const Var<T>& a);

/// NCHW convolution with zero padding. `bias` may be undefined.
template <typename T>
Var<T> conv2d(const Var<T>& x, const Var<T>& weight, const Var<T>& bias, int stride, int pad);

template <typename T> Var<T> upsample_nearest2x(const Var<T>& x);
template <typename T> Var<T> concat_channels(const Var<T>& a, const Var<T>& b);
template <typename T> Var<T> slice_channels(const Var<T>& x, std::int64_t start, std::int64_t count);
template <typename T> Var<T> reshape(const Var<T>& x, Shape shape);
/// [B, M, N] -> [B, N, M]
template <typename T> Var<T> transpose_last2(const Var<T>& x);
/// [B, M, K] x [B, K, N] -> [B, M, N]
template <typename T> Var<T> bmm(const Var<T>& a, const Var<T>& b);
template <typename T> Var<T> softmax_lastdim(const Var<T>& x);

/// Per (batch, channel) spatial mean of an NCHW tensor -> [B, C].
template <typename T> Var<T> channel_mean(const Var<T>& x);
/// Per (batch, channel) population standard deviation -> [B, C]; zero-variance
/// channels get a zero subgradient.
template <typename T> Var<T> channel_std(const Var<T>& x);
/// x[b,c,h,w] * s[b,c]
template <typename T> Var<T> mul_channelwise(const Var<T>& x, const Var<T>& s);
/// x[b,c,h,w] + s[b,c]
template <typename T> Var<T> add_channelwise(const Var<T>& x, const Var<T>& s);

/// Rows of `table` [N, d] selected by `indices` (length B*H*W, row-major over
/// b,h,w) laid out as [B, d, H, W]. Gradients scatter-add back into the rows.
template <typename T>
Var<T> gather_rows(const Var<T>& table, const std::vector<std::int32_t>& indices, std::int64_t batch,
                   std::int64_t height, std::int64_t width);

/// Forward value of `q`; backward passes the incoming gradient unchanged to
/// `z` and, when `q` requires it, to `q` as well.
template <typename T> Var<T> straight_through(const Var<T>& z, const Var<T>& q);

// Composite helpers used throughout the losses.
template <typename T>
Var<T> mse(const Var<T>& a, const Var<T>& b) {
  return mean(square(sub(a, b)));
}
template <typename T>
Var<T> mean_abs_diff(const Var<T>& a, const Var<T>& b) {
  return mean(abs(sub(a, b)));
}

}  // namespace codeenhance::ag
