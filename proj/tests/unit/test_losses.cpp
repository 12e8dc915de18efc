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

#include <gtest/gtest.h>

#include <Eigen/Dense>

#include "codeenhance/errors.hpp"
#include "codeenhance/losses.hpp"
#include "oracles.hpp"

namespace codeenhance {
namespace {

using ag::Var;
using testing::check_gradients;
using testing::random_tensor;

Var<double> filled(Shape s, double v) { return ag::constant(Tensor<double>(std::move(s), v)); }
Var<double> scalar(double v) { return ag::constant(Tensor<double>(Shape{}, v)); }
Var<double> leaf(Tensor<double> t) { return Var<double>::leaf(std::move(t), true); }

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

TEST(LossL1, HandValues) {
  auto a = filled({2, 3}, 0.0);
  EXPECT_EQ(loss_l1(a, a).item(), 0.0);
  EXPECT_EQ(loss_l1(a, filled({2, 3}, 1.0)).item(), 1.0);
  Tensor<double> half(Shape{4}, {0.5, 0.5, 0, 0});
  EXPECT_DOUBLE_EQ(loss_l1(filled({4}, 0.0), ag::constant(half)).item(), 0.25);
  EXPECT_THROW(loss_l1(a, filled({3, 2}, 0.0)), ContractViolation);
}

TEST(LossCma, HandValues) {
  auto z = filled({1, 1, 1, 1}, 1.0);
  auto zq = filled({1, 1, 1, 1}, 0.0);
  EXPECT_DOUBLE_EQ(loss_cma(z, zq, 0.25).item(), 1.25);
  EXPECT_EQ(loss_cma(z, z, 0.25).item(), 0.0);
  EXPECT_THROW(loss_cma(z, filled({1, 2, 1, 1}, 0.0), 0.25), ContractViolation);
}

TEST(LossCma, GradientSplitsAcrossStopGradients) {
  std::mt19937_64 rng(1);
  auto z = leaf(random_tensor<double>({1, 2, 2, 2}, rng));
  auto zq = leaf(random_tensor<double>({1, 2, 2, 2}, rng));
  const double beta = 0.25;
  ag::backward(loss_cma(z, zq, beta));
  const double n = 8;
  for (std::size_t i = 0; i < 8; ++i) {
    const double diff = z.value()[i] - zq.value()[i];
    EXPECT_NEAR(z.grad()[i], 2 * beta * diff / n, 1e-15);
    EXPECT_NEAR(zq.grad()[i], -2 * diff / n, 1e-15);
  }
}

TEST(LossCma, PerturbingTargetLeavesNoSecondOrderPathIntoLatent) {
  // d loss / d z depends on z_q only through the first term's residual.
  std::mt19937_64 rng(2);
  auto z = leaf(random_tensor<double>({1, 2, 2, 1}, rng));
  auto zq = leaf(random_tensor<double>({1, 2, 2, 1}, rng));
  auto grad_z = [&] {
    z.zero_grad();
    zq.zero_grad();
    ag::backward(loss_cma(z, zq, 0.5));
    return z.grad();
  };
  const auto g0 = grad_z();
  zq.mutable_value()[0] += 0.1;
  const auto g1 = grad_z();
  EXPECT_NEAR(g1[0] - g0[0], -2 * 0.5 * 0.1 / 4, 1e-15);
  for (std::size_t i = 1; i < 4; ++i) EXPECT_EQ(g1[i], g0[i]);
}

TEST(LossAdv, HandValues) {
  EXPECT_NEAR(loss_adv_g(filled({1, 1, 2, 2}, 0.0)).item(), std::log(2.0), 1e-12);
  // Saturated discriminator: the loss sits at its clamp floor.
  auto near_opt = loss_adv_d(filled({4}, 40.0), filled({4}, -40.0), 0.1).item();
  EXPECT_GE(near_opt, 0.0);
  EXPECT_LT(near_opt, 1e-5);
  // gamma = 0 drops the real term entirely.
  auto fake = filled({3}, 0.3);
  const double a = loss_adv_d(filled({3}, -2.0), fake, 0.0).item();
  const double b = loss_adv_d(filled({3}, 5.0), fake, 0.0).item();
  EXPECT_EQ(a, b);
  EXPECT_NEAR(a, -std::log(1 - sigmoid(0.3)), 1e-12);
}

TEST(LossAdv, DiscriminatorLogForm) {
  const double r = 0.7, f = -0.4, gamma = 0.1;
  const double expected = -(gamma * std::log(sigmoid(r)) + std::log(1 - sigmoid(f)));
  EXPECT_NEAR(loss_adv_d(filled({2}, r), filled({2}, f), gamma).item(), expected, 1e-12);
}

TEST(Gram, HandValues) {
  Tensor<double> eye(Shape{1, 2, 1, 2}, {1, 0, 0, 1});
  auto g = gram(ag::constant(eye)).value();
  ASSERT_EQ(g.shape(), (Shape{1, 2, 2}));
  EXPECT_EQ(g[0], 0.25);
  EXPECT_EQ(g[1], 0.0);
  EXPECT_EQ(g[2], 0.0);
  EXPECT_EQ(g[3], 0.25);
  const auto zero = gram(filled({2, 3, 2, 2}, 0.0)).value();
  for (double v : zero.vec()) EXPECT_EQ(v, 0.0);
}

TEST(Gram, SymmetricPsdAndMatchesOracle) {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    auto z = random_tensor<double>({2, 4, 3, 2}, rng);
    auto g = gram(ag::constant(z)).value();
    auto oracle = testing::scalar_gram(z);
    for (std::int64_t b = 0; b < 2; ++b) {
      Eigen::Matrix4d m;
      for (int p = 0; p < 4; ++p)
        for (int q = 0; q < 4; ++q) {
          const auto i = static_cast<std::size_t>((b * 4 + p) * 4 + q);
          m(p, q) = g[i];
          EXPECT_NEAR(g[i], oracle[i], 1e-14);
        }
      EXPECT_EQ((m - m.transpose()).cwiseAbs().maxCoeff(), 0.0);
      Eigen::SelfAdjointEigenSolver<Eigen::Matrix4d> eig(m);
      EXPECT_GE(eig.eigenvalues().minCoeff(), -1e-10);
    }
  }
}

TEST(LossFema, ZeroAtPerfectMatchAndGramScaling) {
  std::mt19937_64 rng(4);
  auto z = ag::constant(random_tensor<double>({1, 3, 2, 2}, rng));
  EXPECT_EQ(loss_fema(z, z, z, 0.25).item(), 0.0);

  // beta = 0 isolates the gram term; doubling z_ll quadruples its gram.
  auto zgt = random_tensor<double>({1, 3, 2, 2}, rng);
  Tensor<double> z2 = z.value();
  for (auto& v : z2.vec()) v *= 2;
  const auto g_ll = testing::scalar_gram(z.value());
  const auto g_gt = testing::scalar_gram(zgt);
  double expected = 0;
  for (std::size_t i = 0; i < g_ll.size(); ++i) expected += std::pow(4 * g_ll[i] - g_gt[i], 2);
  expected /= static_cast<double>(g_ll.size());
  const double got = loss_fema(ag::constant(z2), ag::constant(zgt), ag::constant(zgt), 0.0).item();
  EXPECT_NEAR(got, expected, 1e-14);
}

TEST(LossFema, NoGradientIntoGroundTruthBranches) {
  std::mt19937_64 rng(5);
  auto zll = leaf(random_tensor<double>({1, 2, 2, 2}, rng));
  auto zgt = leaf(random_tensor<double>({1, 2, 2, 2}, rng));
  auto zgq = leaf(random_tensor<double>({1, 2, 2, 2}, rng));
  ag::backward(loss_fema(zll, zgt, zgq, 0.25));
  for (double g : zgt.grad().vec()) EXPECT_EQ(g, 0.0);
  for (double g : zgq.grad().vec()) EXPECT_EQ(g, 0.0);
}

TEST(LossRec, ComposesL1AndFeatureTerm) {
  std::mt19937_64 rng(6);
  auto gt = ag::constant(random_tensor<double>({1, 3, 4, 4}, rng, 0, 1));
  auto rec = ag::constant(random_tensor<double>({1, 3, 4, 4}, rng, 0, 1));
  FeatureFn<double> psi = [](const Var<double>& x) { return ag::square(x); };
  EXPECT_EQ(loss_rec(gt, gt, psi).item(), 0.0);

  double l1 = 0, feat = 0;
  for (std::size_t i = 0; i < 48; ++i) {
    const double a = gt.value()[i], b = rec.value()[i];
    l1 += std::abs(a - b);
    feat += std::pow(a * a - b * b, 2);
  }
  EXPECT_NEAR(loss_rec(gt, rec, psi).item(), l1 / 48 + feat / 48, 1e-14);

  FeatureFn<double> constant_psi = [](const Var<double>&) { return filled({1, 2}, 3.0); };
  EXPECT_NEAR(loss_rec(gt, rec, constant_psi).item(), l1 / 48, 1e-14);
}

TEST(LossTotal, RegulariserHandValues) {
  Stage2LossParts<double> parts{scalar(0.5), scalar(0.25), scalar(0.125)};
  LossWeights w;
  auto zero_shift = filled({2, 3}, 0.0);
  EXPECT_EQ(loss_reg(zero_shift).item(), 0.0);
  EXPECT_EQ(loss_total_stage2(parts, zero_shift, w).item(), 0.875);
  Tensor<double> one_entry(Shape{2, 3}, 0.0);
  one_entry[4] = 3;
  EXPECT_NEAR(loss_total_stage2(parts, ag::constant(one_entry), w).item() - 0.875, 3e-4, 1e-15);
  EXPECT_EQ(w.lambda1, 1e-4);
  EXPECT_EQ(w.beta, 0.25);
  EXPECT_EQ(w.gamma, 0.1);
}

TEST(LossWeights, RejectNegative) {
  LossWeights w;
  w.gamma = -1;
  EXPECT_THROW(w.validate(), ContractViolation);
}

// Finite-difference checks, double precision, step 1e-5, rtol 1e-4.

TEST(LossGradients, L1) {
  std::mt19937_64 rng(10);
  auto a = leaf(random_tensor<double>({1, 2, 3, 3}, rng));
  auto b = leaf(random_tensor<double>({1, 2, 3, 3}, rng));
  auto r = check_gradients({a, b}, [&] { return loss_l1(a, b); });
  EXPECT_TRUE(r.ok) << r.worst;
}

TEST(LossGradients, CmaWithStopGradients) {
  std::mt19937_64 rng(11);
  auto z = leaf(random_tensor<double>({1, 3, 2, 2}, rng));
  auto zq = ag::constant(random_tensor<double>({1, 3, 2, 2}, rng));
  // sg(z_q): only the beta term depends on z.
  auto r = check_gradients({z}, [&] {
    return ag::add(loss_cma(z, zq, 0.25), ag::scale(ag::mse(ag::detach(z), zq), -1.0));
  });
  EXPECT_TRUE(r.ok) << r.worst;
}

TEST(LossGradients, Adversarial) {
  std::mt19937_64 rng(12);
  auto real = leaf(random_tensor<double>({2, 1, 2, 2}, rng, -3, 3));
  auto fake = leaf(random_tensor<double>({2, 1, 2, 2}, rng, -3, 3));
  auto rd = check_gradients({real, fake}, [&] { return loss_adv_d(real, fake, 0.1); });
  EXPECT_TRUE(rd.ok) << rd.worst;
  auto rg = check_gradients({fake}, [&] { return loss_adv_g(fake); });
  EXPECT_TRUE(rg.ok) << rg.worst;
}

TEST(LossGradients, FemaIncludingGramTerm) {
  std::mt19937_64 rng(13);
  auto zll = leaf(random_tensor<double>({2, 3, 2, 2}, rng));
  auto zgt = ag::constant(random_tensor<double>({2, 3, 2, 2}, rng));
  auto zgq = ag::constant(random_tensor<double>({2, 3, 2, 2}, rng));
  auto r = check_gradients({zll}, [&] { return loss_fema(zll, zgt, zgq, 0.25); });
  EXPECT_TRUE(r.ok) << r.worst;
  auto rg = check_gradients({zll}, [&] { return ag::sum(gram(zll)); });
  EXPECT_TRUE(rg.ok) << rg.worst;
}

TEST(LossGradients, Rec) {
  std::mt19937_64 rng(14);
  auto gt = ag::constant(random_tensor<double>({1, 3, 3, 3}, rng, 0, 1));
  auto rec = leaf(random_tensor<double>({1, 3, 3, 3}, rng, 0, 1));
  FeatureFn<double> psi = [](const Var<double>& x) { return ag::sigmoid(ag::scale(x, 3.0)); };
  auto r = check_gradients({rec}, [&] { return loss_rec(gt, rec, psi); });
  EXPECT_TRUE(r.ok) << r.worst;
}

TEST(LossGradients, TotalStage2) {
  std::mt19937_64 rng(15);
  auto fema = leaf(Tensor<double>(Shape{}, 0.3));
  auto rec = leaf(Tensor<double>(Shape{}, 0.2));
  auto adv = leaf(Tensor<double>(Shape{}, 0.7));
  auto shift = leaf(random_tensor<double>({4, 3}, rng));
  LossWeights w;
  w.lambda1 = 0.5;
  auto r = check_gradients({fema, rec, adv, shift}, [&] {
    return loss_total_stage2(Stage2LossParts<double>{fema, rec, adv}, shift, w);
  });
  EXPECT_TRUE(r.ok) << r.worst;
}

}  // namespace
}  // namespace codeenhance
