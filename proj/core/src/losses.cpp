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

#include "codeenhance/losses.hpp"

namespace codeenhance {

using ag::Var;

void LossWeights::validate() const {
  if (beta < 0 || gamma < 0 || lambda1 < 0) throw ContractViolation("loss weights must be non-negative");
}

namespace {

template <typename T>
void require_same(const Var<T>& a, const Var<T>& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ContractViolation(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                            shape_str(b.shape()));
  }
}

template <typename T>
Var<T> clamped_log_prob(const Var<T>& logits) {
  const T eps = static_cast<T>(kProbEpsilon);
  return ag::log(ag::clamp(ag::sigmoid(logits), eps, T(1) - eps));
}

}  // namespace

template <typename T>
Var<T> loss_l1(const Var<T>& a, const Var<T>& b) {
  require_same(a, b, "loss_l1");
  return ag::mean_abs_diff(a, b);
}

template <typename T>
Var<T> loss_cma(const Var<T>& z, const Var<T>& z_q, T beta) {
  require_same(z, z_q, "loss_cma");
  return ag::add(ag::scale(ag::mse(z, ag::detach(z_q)), beta), ag::mse(ag::detach(z), z_q));
}

template <typename T>
Var<T> loss_adv_g(const Var<T>& fake_logits) {
  return ag::scale(ag::mean(clamped_log_prob(fake_logits)), T(-1));
}

template <typename T>
Var<T> loss_adv_d(const Var<T>& real_logits, const Var<T>& fake_logits, T gamma) {
  // log(1 - sigmoid(x)) == log(sigmoid(-x))
  Var<T> real_term = ag::scale(ag::mean(clamped_log_prob(real_logits)), gamma);
  Var<T> fake_term = ag::mean(clamped_log_prob(ag::scale(fake_logits, T(-1))));
  return ag::scale(ag::add(real_term, fake_term), T(-1));
}

template <typename T>
Var<T> gram(const Var<T>& z) {
  if (z.value().rank() != 4) throw ContractViolation("gram: expected [B, d, m, n], got " + shape_str(z.shape()));
  const std::int64_t b = z.dim(0), d = z.dim(1), mn = z.dim(2) * z.dim(3);
  if (mn < 1) throw ContractViolation("gram: empty spatial extent");
  Var<T> flat = ag::reshape(z, {b, d, mn});
  return ag::scale(ag::bmm(flat, ag::transpose_last2(flat)), T(1) / static_cast<T>(d * mn));
}

template <typename T>
Var<T> loss_fema(const Var<T>& z_ll, const Var<T>& z_gt, const Var<T>& z_gt_q, T beta) {
  require_same(z_ll, z_gt, "loss_fema");
  require_same(z_ll, z_gt_q, "loss_fema");
  Var<T> match = ag::scale(ag::mse(z_ll, ag::detach(z_gt_q)), beta);
  Var<T> style = ag::mse(gram(z_ll), gram(ag::detach(z_gt)));
  return ag::add(match, style);
}

template <typename T>
Var<T> loss_rec(const Var<T>& gt, const Var<T>& rec, const FeatureFn<T>& psi) {
  require_same(gt, rec, "loss_rec");
  Var<T> l1 = loss_l1(gt, rec);
  if (!psi) return l1;
  return ag::add(l1, ag::mse(ag::detach(psi(gt)), psi(rec)));
}

template <typename T>
Var<T> loss_reg(const Var<T>& shift) {
  return ag::frobenius_norm(shift);
}

template <typename T>
Var<T> loss_total_stage2(const Stage2LossParts<T>& parts, const Var<T>& shift, const LossWeights& w) {
  Var<T> total = ag::add(ag::add(parts.fema, parts.rec), parts.adv);
  return ag::add(total, ag::scale(loss_reg(shift), static_cast<T>(w.lambda1)));
}

#define CODEENHANCE_INSTANTIATE_LOSS(T)                                                      \
  template Var<T> loss_l1<T>(const Var<T>&, const Var<T>&);                                  \
  template Var<T> loss_cma<T>(const Var<T>&, const Var<T>&, T);                              \
  template Var<T> loss_adv_g<T>(const Var<T>&);                                              \
  template Var<T> loss_adv_d<T>(const Var<T>&, const Var<T>&, T);                            \
  template Var<T> gram<T>(const Var<T>&);                                                    \
  template Var<T> loss_fema<T>(const Var<T>&, const Var<T>&, const Var<T>&, T);              \
  template Var<T> loss_rec<T>(const Var<T>&, const Var<T>&, const FeatureFn<T>&);            \
  template Var<T> loss_reg<T>(const Var<T>&);                                                \
  template Var<T> loss_total_stage2<T>(const Stage2LossParts<T>&, const Var<T>&, const LossWeights&);

CODEENHANCE_INSTANTIATE_LOSS(float)
CODEENHANCE_INSTANTIATE_LOSS(double)

#undef CODEENHANCE_INSTANTIATE_LOSS

}  // namespace codeenhance
