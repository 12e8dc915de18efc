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

// Training objectives. Every norm is element-mean normalised so magnitudes do
// not depend on resolution; stop-gradient is expressed with ag::detach.

#pragma once

#include <functional>

#include "codeenhance/autograd.hpp"

namespace codeenhance {

struct LossWeights {
  double beta = 0.25;     // commitment / feature-matching trade-off
  double gamma = 0.1;     // adversarial weight
  double lambda1 = 1e-4;  // codebook-shift regulariser

  void validate() const;
};

/// Probability clamp applied inside every log.
inline constexpr double kProbEpsilon = 1e-7;

template <typename T>
ag::Var<T> loss_l1(const ag::Var<T>& a, const ag::Var<T>& b);

/// beta * |z - sg(z_q)|^2 + |sg(z) - z_q|^2
template <typename T>
ag::Var<T> loss_cma(const ag::Var<T>& z, const ag::Var<T>& z_q, T beta);

/// Non-saturating generator term -E[log D(fake)].
template <typename T>
ag::Var<T> loss_adv_g(const ag::Var<T>& fake_logits);

/// -(gamma * E[log D(real)] + E[log(1 - D(fake))]).
template <typename T>
ag::Var<T> loss_adv_d(const ag::Var<T>& real_logits, const ag::Var<T>& fake_logits, T gamma);

/// Per-item Z Z^T / (d m n) of the flattened [d, m n] feature.
template <typename T>
ag::Var<T> gram(const ag::Var<T>& z);

/// beta * |z_ll - sg(z_gt_q)|^2 + |gram(z_ll) - gram(sg(z_gt))|^2
template <typename T>
ag::Var<T> loss_fema(const ag::Var<T>& z_ll, const ag::Var<T>& z_gt, const ag::Var<T>& z_gt_q, T beta);

template <typename T>
using FeatureFn = std::function<ag::Var<T>(const ag::Var<T>&)>;

/// L1 plus mean-squared distance of psi features.
template <typename T>
ag::Var<T> loss_rec(const ag::Var<T>& gt, const ag::Var<T>& rec, const FeatureFn<T>& psi);

/// Frobenius norm of the shift matrix.
template <typename T>
ag::Var<T> loss_reg(const ag::Var<T>& shift);

template <typename T>
struct Stage2LossParts {
  ag::Var<T> fema;
  ag::Var<T> rec;
  ag::Var<T> adv;
};

template <typename T>
ag::Var<T> loss_total_stage2(const Stage2LossParts<T>& parts, const ag::Var<T>& shift, const LossWeights& w);

}  // namespace codeenhance
