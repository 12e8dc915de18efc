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

#include "codeenhance/autograd.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <unordered_set>
#include <utility>

namespace codeenhance::ag {
namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MapMat = Eigen::Map<RowMat<T>>;
template <typename T>
using CMapMat = Eigen::Map<const RowMat<T>>;

template <typename T>
Var<T> make_result(Tensor<T> value, std::initializer_list<Var<T>> inputs,
                   std::function<void(Node<T>&)> fn) {
  auto n = std::make_shared<Node<T>>();
  n->value = std::move(value);
  bool needs = false;
  for (const auto& in : inputs) needs = needs || in.requires_grad();
  if (needs) {
    n->requires_grad = true;
    for (const auto& in : inputs) n->inputs.push_back(in.defined() ? in.node() : nullptr);
    n->backward_fn = std::move(fn);
  }
  return Var<T>(std::move(n));
}

template <typename T>
bool wants(const Node<T>& n, std::size_t i) {
  return i < n.inputs.size() && n.inputs[i] && n.inputs[i]->requires_grad;
}

void require_same_shape(const Shape& a, const Shape& b, const char* op) {
  if (a != b) {
    throw ContractViolation(std::string(op) + ": shape mismatch " + shape_str(a) + " vs " + shape_str(b));
  }
}

void require_rank(const Shape& s, std::size_t rank, const char* op) {
  if (s.size() != rank) {
    throw ContractViolation(std::string(op) + ": expected rank " + std::to_string(rank) + ", got " +
                            shape_str(s));
  }
}

// y = f(x); dx = g * df(x, y)
template <typename T, typename F, typename DF>
Var<T> unary(const Var<T>& a, F f, DF df) {
  const auto& x = a.value();
  Tensor<T> y(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = f(x[i]);
  return make_result<T>(std::move(y), {a}, [df](Node<T>& n) {
    const auto& xv = n.inputs[0]->value;
    auto& gx = n.inputs[0]->grad_buffer();
    for (std::size_t i = 0; i < xv.size(); ++i) gx[i] += n.grad[i] * df(xv[i], n.value[i]);
  });
}

template <typename T>
void im2col(const T* x, std::int64_t c, std::int64_t h, std::int64_t w, int k, int stride, int pad,
            std::int64_t ho, std::int64_t wo, T* col) {
  for (std::int64_t ci = 0; ci < c; ++ci) {
    for (int ki = 0; ki < k; ++ki) {
      for (int kj = 0; kj < k; ++kj) {
        T* row = col + ((ci * k + ki) * k + kj) * ho * wo;
        for (std::int64_t oh = 0; oh < ho; ++oh) {
          const std::int64_t ih = oh * stride - pad + ki;
          T* dst = row + oh * wo;
          if (ih < 0 || ih >= h) {
            std::fill(dst, dst + wo, T(0));
            continue;
          }
          const T* src = x + (ci * h + ih) * w;
          for (std::int64_t ow = 0; ow < wo; ++ow) {
            const std::int64_t iw = ow * stride - pad + kj;
            dst[ow] = (iw >= 0 && iw < w) ? src[iw] : T(0);
          }
        }
      }
    }
  }
}

template <typename T>
void col2im(const T* col, std::int64_t c, std::int64_t h, std::int64_t w, int k, int stride, int pad,
            std::int64_t ho, std::int64_t wo, T* dx) {
  for (std::int64_t ci = 0; ci < c; ++ci) {
    for (int ki = 0; ki < k; ++ki) {
      for (int kj = 0; kj < k; ++kj) {
        const T* row = col + ((ci * k + ki) * k + kj) * ho * wo;
        for (std::int64_t oh = 0; oh < ho; ++oh) {
          const std::int64_t ih = oh * stride - pad + ki;
          if (ih < 0 || ih >= h) continue;
          T* dst = dx + (ci * h + ih) * w;
          const T* src = row + oh * wo;
          for (std::int64_t ow = 0; ow < wo; ++ow) {
            const std::int64_t iw = ow * stride - pad + kj;
            if (iw >= 0 && iw < w) dst[iw] += src[ow];
          }
        }
      }
    }
  }
}

}  // namespace

template <typename T>
void backward(const Var<T>& root) {
  if (root.value().size() != 1) {
    throw ContractViolation("backward: root must hold a single element, got " + shape_str(root.shape()));
  }
  if (!root.requires_grad()) return;

  // Iterative post-order DFS gives a topological order (inputs before users).
  std::vector<Node<T>*> order;
  std::unordered_set<Node<T>*> visited;
  std::vector<std::pair<Node<T>*, std::size_t>> stack;
  stack.emplace_back(root.node().get(), 0);
  visited.insert(root.node().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->inputs.size()) {
      Node<T>* child = node->inputs[next++].get();
      if (child && child->requires_grad && visited.insert(child).second) stack.emplace_back(child, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  root.node()->grad_buffer()[0] += T(1);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node<T>* n = *it;
    if (n->backward_fn && !n->grad.empty()) n->backward_fn(*n);
  }
}

template <typename T>
Var<T> detach(const Var<T>& x) {
  return Var<T>::leaf(x.value(), false);
}

template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
  require_same_shape(a.shape(), b.shape(), "add");
  Tensor<T> y(a.shape());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = a.value()[i] + b.value()[i];
  return make_result<T>(std::move(y), {a, b}, [](Node<T>& n) {
    if (wants(n, 0)) n.inputs[0]->accumulate(n.grad);
    if (wants(n, 1)) n.inputs[1]->accumulate(n.grad);
  });
}

template <typename T>
Var<T> sub(const Var<T>& a, const Var<T>& b) {
  require_same_shape(a.shape(), b.shape(), "sub");
  Tensor<T> y(a.shape());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = a.value()[i] - b.value()[i];
  return make_result<T>(std::move(y), {a, b}, [](Node<T>& n) {
    if (wants(n, 0)) n.inputs[0]->accumulate(n.grad);
    if (wants(n, 1)) {
      auto& g = n.inputs[1]->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] -= n.grad[i];
    }
  });
}

template <typename T>
Var<T> mul(const Var<T>& a, const Var<T>& b) {
  require_same_shape(a.shape(), b.shape(), "mul");
  Tensor<T> y(a.shape());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = a.value()[i] * b.value()[i];
  return make_result<T>(std::move(y), {a, b}, [](Node<T>& n) {
    const auto& av = n.inputs[0]->value;
    const auto& bv = n.inputs[1]->value;
    if (wants(n, 0)) {
      auto& g = n.inputs[0]->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i] * bv[i];
    }
    if (wants(n, 1)) {
      auto& g = n.inputs[1]->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i] * av[i];
    }
  });
}

template <typename T>
Var<T> scale(const Var<T>& a, T s) {
  return unary(a, [s](T x) { return x * s; }, [s](T, T) { return s; });
}

template <typename T>
Var<T> add_scalar(const Var<T>& a, T s) {
  return unary(a, [s](T x) { return x + s; }, [](T, T) { return T(1); });
}

template <typename T>
Var<T> square(const Var<T>& a) {
  return unary(a, [](T x) { return x * x; }, [](T x, T) { return T(2) * x; });
}

template <typename T>
Var<T> abs(const Var<T>& a) {
  return unary(
      a, [](T x) { return std::abs(x); },
      [](T x, T) { return x > T(0) ? T(1) : (x < T(0) ? T(-1) : T(0)); });
}

template <typename T>
Var<T> log(const Var<T>& a) {
  return unary(a, [](T x) { return std::log(x); }, [](T x, T) { return T(1) / x; });
}

template <typename T>
Var<T> sigmoid(const Var<T>& a) {
  return unary(
      a, [](T x) { return T(1) / (T(1) + std::exp(-x)); }, [](T, T y) { return y * (T(1) - y); });
}

template <typename T>
Var<T> swish(const Var<T>& a) {
  return unary(
      a, [](T x) { return x / (T(1) + std::exp(-x)); },
      [](T x, T) {
        const T s = T(1) / (T(1) + std::exp(-x));
        return s + x * s * (T(1) - s);
      });
}

template <typename T>
Var<T> leaky_relu(const Var<T>& a, T slope) {
  return unary(
      a, [slope](T x) { return x > T(0) ? x : slope * x; },
      [slope](T x, T) { return x > T(0) ? T(1) : slope; });
}

template <typename T>
Var<T> clamp(const Var<T>& a, T lo, T hi) {
  return unary(
      a, [lo, hi](T x) { return std::clamp(x, lo, hi); },
      [lo, hi](T x, T) { return (x >= lo && x <= hi) ? T(1) : T(0); });
}

template <typename T>
Var<T> sum(const Var<T>& a) {
  T acc = 0;
  for (T v : a.value().vec()) acc += v;
  return make_result<T>(Tensor<T>(Shape{}, acc), {a}, [](Node<T>& n) {
    auto& g = n.inputs[0]->grad_buffer();
    const T s = n.grad[0];
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += s;
  });
}

template <typename T>
Var<T> mean(const Var<T>& a) {
  const auto count = static_cast<T>(a.value().size());
  if (a.value().empty()) throw ContractViolation("mean: empty tensor");
  T acc = 0;
  for (T v : a.value().vec()) acc += v;
  return make_result<T>(Tensor<T>(Shape{}, acc / count), {a}, [count](Node<T>& n) {
    auto& g = n.inputs[0]->grad_buffer();
    const T s = n.grad[0] / count;
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += s;
  });
}

template <typename T>
Var<T> frobenius_norm(const Var<T>& a) {
  T acc = 0;
  for (T v : a.value().vec()) acc += v * v;
  const T norm = std::sqrt(acc);
  return make_result<T>(Tensor<T>(Shape{}, norm), {a}, [](Node<T>& n) {
    const T nv = n.value[0];
    if (nv == T(0)) return;
    const auto& x = n.inputs[0]->value;
    auto& g = n.inputs[0]->grad_buffer();
    const T s = n.grad[0] / nv;
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += s * x[i];
  });
}

template <typename T>
Var<T> conv2d(const Var<T>& x, const Var<T>& weight, const Var<T>& bias, int stride, int pad) {
  require_rank(x.shape(), 4, "conv2d input");
  require_rank(weight.shape(), 4, "conv2d weight");
  const std::int64_t batch = x.dim(0), cin = x.dim(1), h = x.dim(2), w = x.dim(3);
  const std::int64_t cout = weight.dim(0);
  const int k = static_cast<int>(weight.dim(2));
  if (weight.dim(1) != cin || weight.dim(3) != k) {
    throw ContractViolation("conv2d: weight " + shape_str(weight.shape()) + " incompatible with input " +
                            shape_str(x.shape()));
  }
  if (bias.defined() && (bias.value().size() != static_cast<std::size_t>(cout))) {
    throw ContractViolation("conv2d: bias size mismatch");
  }
  const std::int64_t ho = (h + 2 * pad - k) / stride + 1;
  const std::int64_t wo = (w + 2 * pad - k) / stride + 1;
  if (ho <= 0 || wo <= 0) throw ContractViolation("conv2d: input " + shape_str(x.shape()) + " too small");
  const std::int64_t ck = cin * k * k;
  const std::int64_t hw_out = ho * wo;
  const bool pointwise = (k == 1 && stride == 1 && pad == 0);

  Tensor<T> y(Shape{batch, cout, ho, wo});
  std::vector<T> col(pointwise ? 0 : static_cast<std::size_t>(ck * hw_out));
  CMapMat<T> wm(weight.value().data(), cout, ck);
  for (std::int64_t b = 0; b < batch; ++b) {
    const T* xb = x.value().data() + b * cin * h * w;
    const T* colp = xb;
    if (!pointwise) {
      im2col(xb, cin, h, w, k, stride, pad, ho, wo, col.data());
      colp = col.data();
    }
    MapMat<T> yb(y.data() + b * cout * hw_out, cout, hw_out);
    yb.noalias() = wm * CMapMat<T>(colp, ck, hw_out);
    if (bias.defined()) {
      for (std::int64_t c = 0; c < cout; ++c) yb.row(c).array() += bias.value()[static_cast<std::size_t>(c)];
    }
  }

  return make_result<T>(std::move(y), {x, weight, bias}, [=](Node<T>& n) {
    const auto& xv = n.inputs[0]->value;
    const auto& wv = n.inputs[1]->value;
    CMapMat<T> wmat(wv.data(), cout, ck);
    std::vector<T> colb(pointwise ? 0 : static_cast<std::size_t>(ck * hw_out));
    std::vector<T> dcol(static_cast<std::size_t>(ck * hw_out));
    for (std::int64_t b = 0; b < batch; ++b) {
      CMapMat<T> gy(n.grad.data() + b * cout * hw_out, cout, hw_out);
      const T* xb = xv.data() + b * cin * h * w;
      if (wants(n, 1)) {
        const T* colp = xb;
        if (!pointwise) {
          im2col(xb, cin, h, w, k, stride, pad, ho, wo, colb.data());
          colp = colb.data();
        }
        MapMat<T> gw(n.inputs[1]->grad_buffer().data(), cout, ck);
        gw.noalias() += gy * CMapMat<T>(colp, ck, hw_out).transpose();
      }
      if (wants(n, 2)) {
        auto& gb = n.inputs[2]->grad_buffer();
        const T* gyb = n.grad.data() + b * cout * hw_out;
        for (std::int64_t c = 0; c < cout; ++c) {
          T acc{};
          for (std::int64_t i = 0; i < hw_out; ++i) acc += gyb[c * hw_out + i];
          gb[static_cast<std::size_t>(c)] += acc;
        }
      }
      if (wants(n, 0)) {
        T* gxb = n.inputs[0]->grad_buffer().data() + b * cin * h * w;
        if (pointwise) {
          MapMat<T> gx(gxb, cin, hw_out);
          gx.noalias() += wmat.transpose() * gy;
        } else {
          MapMat<T> dc(dcol.data(), ck, hw_out);
          dc.noalias() = wmat.transpose() * gy;
          col2im(dcol.data(), cin, h, w, k, stride, pad, ho, wo, gxb);
        }
      }
    }
  });
}

template <typename T>
Var<T> upsample_nearest2x(const Var<T>& x) {
  require_rank(x.shape(), 4, "upsample_nearest2x");
  const std::int64_t b = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  Tensor<T> y(Shape{b, c, 2 * h, 2 * w});
  const auto& xv = x.value();
  for (std::int64_t p = 0; p < b * c; ++p) {
    const T* src = xv.data() + p * h * w;
    T* dst = y.data() + p * 4 * h * w;
    for (std::int64_t i = 0; i < 2 * h; ++i) {
      for (std::int64_t j = 0; j < 2 * w; ++j) dst[i * 2 * w + j] = src[(i / 2) * w + j / 2];
    }
  }
  return make_result<T>(std::move(y), {x}, [b, c, h, w](Node<T>& n) {
    auto& g = n.inputs[0]->grad_buffer();
    for (std::int64_t p = 0; p < b * c; ++p) {
      T* dst = g.data() + p * h * w;
      const T* src = n.grad.data() + p * 4 * h * w;
      for (std::int64_t i = 0; i < 2 * h; ++i) {
        for (std::int64_t j = 0; j < 2 * w; ++j) dst[(i / 2) * w + j / 2] += src[i * 2 * w + j];
      }
    }
  });
}

template <typename T>
Var<T> concat_channels(const Var<T>& a, const Var<T>& b) {
  require_rank(a.shape(), 4, "concat_channels");
  require_rank(b.shape(), 4, "concat_channels");
  if (a.dim(0) != b.dim(0) || a.dim(2) != b.dim(2) || a.dim(3) != b.dim(3)) {
    throw ContractViolation("concat_channels: incompatible " + shape_str(a.shape()) + " and " +
                            shape_str(b.shape()));
  }
  const std::int64_t batch = a.dim(0), ca = a.dim(1), cb = b.dim(1), hw = a.dim(2) * a.dim(3);
  Tensor<T> y(Shape{batch, ca + cb, a.dim(2), a.dim(3)});
  for (std::int64_t n = 0; n < batch; ++n) {
    std::copy_n(a.value().data() + n * ca * hw, ca * hw, y.data() + n * (ca + cb) * hw);
    std::copy_n(b.value().data() + n * cb * hw, cb * hw, y.data() + (n * (ca + cb) + ca) * hw);
  }
  return make_result<T>(std::move(y), {a, b}, [=](Node<T>& node) {
    for (std::int64_t n = 0; n < batch; ++n) {
      const T* g = node.grad.data() + n * (ca + cb) * hw;
      if (wants(node, 0)) {
        T* ga = node.inputs[0]->grad_buffer().data() + n * ca * hw;
        for (std::int64_t i = 0; i < ca * hw; ++i) ga[i] += g[i];
      }
      if (wants(node, 1)) {
        T* gb = node.inputs[1]->grad_buffer().data() + n * cb * hw;
        for (std::int64_t i = 0; i < cb * hw; ++i) gb[i] += g[ca * hw + i];
      }
    }
  });
}

template <typename T>
Var<T> slice_channels(const Var<T>& x, std::int64_t start, std::int64_t count) {
  require_rank(x.shape(), 4, "slice_channels");
  const std::int64_t batch = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
  if (start < 0 || count <= 0 || start + count > c) {
    throw ContractViolation("slice_channels: range out of bounds for " + shape_str(x.shape()));
  }
  Tensor<T> y(Shape{batch, count, x.dim(2), x.dim(3)});
  for (std::int64_t n = 0; n < batch; ++n) {
    std::copy_n(x.value().data() + (n * c + start) * hw, count * hw, y.data() + n * count * hw);
  }
  return make_result<T>(std::move(y), {x}, [=](Node<T>& node) {
    auto& g = node.inputs[0]->grad_buffer();
    for (std::int64_t n = 0; n < batch; ++n) {
      T* dst = g.data() + (n * c + start) * hw;
      const T* src = node.grad.data() + n * count * hw;
      for (std::int64_t i = 0; i < count * hw; ++i) dst[i] += src[i];
    }
  });
}

template <typename T>
Var<T> reshape(const Var<T>& x, Shape shape) {
  Tensor<T> y = x.value().reshaped(std::move(shape));
  return make_result<T>(std::move(y), {x}, [](Node<T>& n) { n.inputs[0]->accumulate(n.grad); });
}

template <typename T>
Var<T> transpose_last2(const Var<T>& x) {
  require_rank(x.shape(), 3, "transpose_last2");
  const std::int64_t b = x.dim(0), m = x.dim(1), k = x.dim(2);
  Tensor<T> y(Shape{b, k, m});
  for (std::int64_t n = 0; n < b; ++n) {
    MapMat<T>(y.data() + n * m * k, k, m) = CMapMat<T>(x.value().data() + n * m * k, m, k).transpose();
  }
  return make_result<T>(std::move(y), {x}, [b, m, k](Node<T>& node) {
    auto& g = node.inputs[0]->grad_buffer();
    for (std::int64_t n = 0; n < b; ++n) {
      MapMat<T>(g.data() + n * m * k, m, k) += CMapMat<T>(node.grad.data() + n * m * k, k, m).transpose();
    }
  });
}

template <typename T>
Var<T> bmm(const Var<T>& a, const Var<T>& b) {
  require_rank(a.shape(), 3, "bmm");
  require_rank(b.shape(), 3, "bmm");
  const std::int64_t batch = a.dim(0), m = a.dim(1), k = a.dim(2), n = b.dim(2);
  if (b.dim(0) != batch || b.dim(1) != k) {
    throw ContractViolation("bmm: incompatible " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
  }
  Tensor<T> y(Shape{batch, m, n});
  for (std::int64_t i = 0; i < batch; ++i) {
    MapMat<T>(y.data() + i * m * n, m, n).noalias() =
        CMapMat<T>(a.value().data() + i * m * k, m, k) * CMapMat<T>(b.value().data() + i * k * n, k, n);
  }
  return make_result<T>(std::move(y), {a, b}, [=](Node<T>& node) {
    for (std::int64_t i = 0; i < batch; ++i) {
      CMapMat<T> g(node.grad.data() + i * m * n, m, n);
      CMapMat<T> am(node.inputs[0]->value.data() + i * m * k, m, k);
      CMapMat<T> bm(node.inputs[1]->value.data() + i * k * n, k, n);
      if (wants(node, 0)) MapMat<T>(node.inputs[0]->grad_buffer().data() + i * m * k, m, k).noalias() += g * bm.transpose();
      if (wants(node, 1)) MapMat<T>(node.inputs[1]->grad_buffer().data() + i * k * n, k, n).noalias() += am.transpose() * g;
    }
  });
}

template <typename T>
Var<T> softmax_lastdim(const Var<T>& x) {
  if (x.value().rank() < 1) throw ContractViolation("softmax_lastdim: rank-0 input");
  const std::int64_t cols = x.dim(-1);
  const std::int64_t rows = static_cast<std::int64_t>(x.value().size()) / cols;
  Tensor<T> y(x.shape());
  for (std::int64_t r = 0; r < rows; ++r) {
    const T* src = x.value().data() + r * cols;
    T* dst = y.data() + r * cols;
    const T mx = *std::max_element(src, src + cols);
    T total = 0;
    for (std::int64_t c = 0; c < cols; ++c) total += (dst[c] = std::exp(src[c] - mx));
    for (std::int64_t c = 0; c < cols; ++c) dst[c] /= total;
  }
  return make_result<T>(std::move(y), {x}, [rows, cols](Node<T>& n) {
    auto& gx = n.inputs[0]->grad_buffer();
    for (std::int64_t r = 0; r < rows; ++r) {
      const T* yv = n.value.data() + r * cols;
      const T* g = n.grad.data() + r * cols;
      T dot = 0;
      for (std::int64_t c = 0; c < cols; ++c) dot += g[c] * yv[c];
      T* dst = gx.data() + r * cols;
      for (std::int64_t c = 0; c < cols; ++c) dst[c] += yv[c] * (g[c] - dot);
    }
  });
}

template <typename T>
Var<T> channel_mean(const Var<T>& x) {
  require_rank(x.shape(), 4, "channel_mean");
  const std::int64_t bc = x.dim(0) * x.dim(1), hw = x.dim(2) * x.dim(3);
  if (hw < 1) throw ContractViolation("channel_mean: empty spatial extent");
  Tensor<T> y(Shape{x.dim(0), x.dim(1)});
  for (std::int64_t p = 0; p < bc; ++p) {
    const T* src = x.value().data() + p * hw;
    T acc = 0;
    for (std::int64_t i = 0; i < hw; ++i) acc += src[i];
    y[static_cast<std::size_t>(p)] = acc / static_cast<T>(hw);
  }
  return make_result<T>(std::move(y), {x}, [bc, hw](Node<T>& n) {
    auto& g = n.inputs[0]->grad_buffer();
    for (std::int64_t p = 0; p < bc; ++p) {
      const T s = n.grad[static_cast<std::size_t>(p)] / static_cast<T>(hw);
      T* dst = g.data() + p * hw;
      for (std::int64_t i = 0; i < hw; ++i) dst[i] += s;
    }
  });
}

template <typename T>
Var<T> channel_std(const Var<T>& x) {
  require_rank(x.shape(), 4, "channel_std");
  const std::int64_t bc = x.dim(0) * x.dim(1), hw = x.dim(2) * x.dim(3);
  if (hw < 1) throw ContractViolation("channel_std: empty spatial extent");
  Tensor<T> y(Shape{x.dim(0), x.dim(1)});
  std::vector<T> means(static_cast<std::size_t>(bc));
  for (std::int64_t p = 0; p < bc; ++p) {
    const T* src = x.value().data() + p * hw;
    T acc = 0;
    for (std::int64_t i = 0; i < hw; ++i) acc += src[i];
    const T mu = acc / static_cast<T>(hw);
    T var = 0;
    for (std::int64_t i = 0; i < hw; ++i) var += (src[i] - mu) * (src[i] - mu);
    means[static_cast<std::size_t>(p)] = mu;
    y[static_cast<std::size_t>(p)] = std::sqrt(var / static_cast<T>(hw));
  }
  return make_result<T>(std::move(y), {x}, [bc, hw, means = std::move(means)](Node<T>& n) {
    auto& g = n.inputs[0]->grad_buffer();
    for (std::int64_t p = 0; p < bc; ++p) {
      const T sigma = n.value[static_cast<std::size_t>(p)];
      if (sigma == T(0)) continue;
      const T s = n.grad[static_cast<std::size_t>(p)] / (static_cast<T>(hw) * sigma);
      const T mu = means[static_cast<std::size_t>(p)];
      const T* src = n.inputs[0]->value.data() + p * hw;
      T* dst = g.data() + p * hw;
      for (std::int64_t i = 0; i < hw; ++i) dst[i] += s * (src[i] - mu);
    }
  });
}

template <typename T>
Var<T> mul_channelwise(const Var<T>& x, const Var<T>& s) {
  require_rank(x.shape(), 4, "mul_channelwise");
  if (s.shape() != Shape{x.dim(0), x.dim(1)}) {
    throw ContractViolation("mul_channelwise: scale " + shape_str(s.shape()) + " does not match " +
                            shape_str(x.shape()));
  }
  const std::int64_t bc = x.dim(0) * x.dim(1), hw = x.dim(2) * x.dim(3);
  Tensor<T> y(x.shape());
  for (std::int64_t p = 0; p < bc; ++p) {
    const T sv = s.value()[static_cast<std::size_t>(p)];
    const T* src = x.value().data() + p * hw;
    T* dst = y.data() + p * hw;
    for (std::int64_t i = 0; i < hw; ++i) dst[i] = src[i] * sv;
  }
  return make_result<T>(std::move(y), {x, s}, [bc, hw](Node<T>& n) {
    const auto& xv = n.inputs[0]->value;
    const auto& sv = n.inputs[1]->value;
    for (std::int64_t p = 0; p < bc; ++p) {
      const T* g = n.grad.data() + p * hw;
      if (wants(n, 0)) {
        T* gx = n.inputs[0]->grad_buffer().data() + p * hw;
        const T scale = sv[static_cast<std::size_t>(p)];
        for (std::int64_t i = 0; i < hw; ++i) gx[i] += g[i] * scale;
      }
      if (wants(n, 1)) {
        T acc = 0;
        const T* src = xv.data() + p * hw;
        for (std::int64_t i = 0; i < hw; ++i) acc += g[i] * src[i];
        n.inputs[1]->grad_buffer()[static_cast<std::size_t>(p)] += acc;
      }
    }
  });
}

template <typename T>
Var<T> add_channelwise(const Var<T>& x, const Var<T>& s) {
  require_rank(x.shape(), 4, "add_channelwise");
  if (s.shape() != Shape{x.dim(0), x.dim(1)}) {
    throw ContractViolation("add_channelwise: offset " + shape_str(s.shape()) + " does not match " +
                            shape_str(x.shape()));
  }
  const std::int64_t bc = x.dim(0) * x.dim(1), hw = x.dim(2) * x.dim(3);
  Tensor<T> y(x.shape());
  for (std::int64_t p = 0; p < bc; ++p) {
    const T sv = s.value()[static_cast<std::size_t>(p)];
    const T* src = x.value().data() + p * hw;
    T* dst = y.data() + p * hw;
    for (std::int64_t i = 0; i < hw; ++i) dst[i] = src[i] + sv;
  }
  return make_result<T>(std::move(y), {x, s}, [bc, hw](Node<T>& n) {
    if (wants(n, 0)) n.inputs[0]->accumulate(n.grad);
    if (wants(n, 1)) {
      auto& gs = n.inputs[1]->grad_buffer();
      for (std::int64_t p = 0; p < bc; ++p) {
        const T* g = n.grad.data() + p * hw;
        T acc = 0;
        for (std::int64_t i = 0; i < hw; ++i) acc += g[i];
        gs[static_cast<std::size_t>(p)] += acc;
      }
    }
  });
}

template <typename T>
Var<T> gather_rows(const Var<T>& table, const std::vector<std::int32_t>& indices, std::int64_t batch,
                   std::int64_t height, std::int64_t width) {
  require_rank(table.shape(), 2, "gather_rows");
  const std::int64_t rows = table.dim(0), d = table.dim(1), hw = height * width;
  if (static_cast<std::int64_t>(indices.size()) != batch * hw) {
    throw ContractViolation("gather_rows: index count does not match output grid");
  }
  Tensor<T> y(Shape{batch, d, height, width});
  for (std::int64_t b = 0; b < batch; ++b) {
    for (std::int64_t p = 0; p < hw; ++p) {
      const std::int32_t idx = indices[static_cast<std::size_t>(b * hw + p)];
      if (idx < 0 || idx >= rows) throw InvalidInput("gather_rows: index out of range");
      const T* row = table.value().data() + idx * d;
      for (std::int64_t c = 0; c < d; ++c) y[static_cast<std::size_t>((b * d + c) * hw + p)] = row[c];
    }
  }
  return make_result<T>(std::move(y), {table}, [=](Node<T>& n) {
    auto& g = n.inputs[0]->grad_buffer();
    for (std::int64_t b = 0; b < batch; ++b) {
      for (std::int64_t p = 0; p < hw; ++p) {
        const std::int32_t idx = indices[static_cast<std::size_t>(b * hw + p)];
        T* row = g.data() + idx * d;
        for (std::int64_t c = 0; c < d; ++c) row[c] += n.grad[static_cast<std::size_t>((b * d + c) * hw + p)];
      }
    }
  });
}

template <typename T>
Var<T> straight_through(const Var<T>& z, const Var<T>& q) {
  require_same_shape(z.shape(), q.shape(), "straight_through");
  return make_result<T>(q.value(), {z, q}, [](Node<T>& n) {
    if (wants(n, 0)) n.inputs[0]->accumulate(n.grad);
    if (wants(n, 1)) n.inputs[1]->accumulate(n.grad);
  });
}

#define CODEENHANCE_INSTANTIATE_AG(T)                                                              \
  template void backward<T>(const Var<T>&);                                                        \
  template Var<T> detach<T>(const Var<T>&);                                                        \
  template Var<T> add<T>(const Var<T>&, const Var<T>&);                                            \
  template Var<T> sub<T>(const Var<T>&, const Var<T>&);                                            \
  template Var<T> mul<T>(const Var<T>&, const Var<T>&);                                            \
  template Var<T> scale<T>(const Var<T>&, T);                                                      \
  template Var<T> add_scalar<T>(const Var<T>&, T);                                                 \
  template Var<T> square<T>(const Var<T>&);                                                        \
  template Var<T> abs<T>(const Var<T>&);                                                           \
  template Var<T> log<T>(const Var<T>&);                                                           \
  template Var<T> sigmoid<T>(const Var<T>&);                                                       \
  template Var<T> swish<T>(const Var<T>&);                                                         \
  template Var<T> leaky_relu<T>(const Var<T>&, T);                                                 \
  template Var<T> clamp<T>(const Var<T>&, T, T);                                                   \
  template Var<T> sum<T>(const Var<T>&);                                                           \
  template Var<T> mean<T>(const Var<T>&);                                                          \
  template Var<T> frobenius_norm<T>(const Var<T>&);                                                \
  template Var<T> conv2d<T>(const Var<T>&, const Var<T>&, const Var<T>&, int, int);                \
  template Var<T> upsample_nearest2x<T>(const Var<T>&);                                            \
  template Var<T> concat_channels<T>(const Var<T>&, const Var<T>&);                                \
  template Var<T> slice_channels<T>(const Var<T>&, std::int64_t, std::int64_t);                    \
  template Var<T> reshape<T>(const Var<T>&, Shape);                                                \
  template Var<T> transpose_last2<T>(const Var<T>&);                                               \
  template Var<T> bmm<T>(const Var<T>&, const Var<T>&);                                            \
  template Var<T> softmax_lastdim<T>(const Var<T>&);                                               \
  template Var<T> channel_mean<T>(const Var<T>&);                                                  \
  template Var<T> channel_std<T>(const Var<T>&);                                                   \
  template Var<T> mul_channelwise<T>(const Var<T>&, const Var<T>&);                                \
  template Var<T> add_channelwise<T>(const Var<T>&, const Var<T>&);                                \
  template Var<T> gather_rows<T>(const Var<T>&, const std::vector<std::int32_t>&, std::int64_t,    \
                                 std::int64_t, std::int64_t);                                      \
  template Var<T> straight_through<T>(const Var<T>&, const Var<T>&);

CODEENHANCE_INSTANTIATE_AG(float)
CODEENHANCE_INSTANTIATE_AG(double)

#undef CODEENHANCE_INSTANTIATE_AG

}  // namespace codeenhance::ag
