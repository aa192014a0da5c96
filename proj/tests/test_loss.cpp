/*
 *  Copyright 2026 The radseg Authors
 *
 *  Licensed under the Apache License, Version 2.0 (the "License");
 *  you may not use this file except in compliance with the License.
 *  You may obtain a copy of the License at
 *
 *      http://www.apache.org/licenses/LICENSE-2.0
 *
 *  Unless required by applicable law or agreed to in writing, software
 *  distributed under the License is distributed on an "AS IS" BASIS,
 *  WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 *  See the License for the specific language governing permissions and
 *  limitations under the License.
 */


#include "gradcheck.hpp"

#include "radseg/loss.hpp"
#include "radseg/nn/unet.hpp"

#include <gtest/gtest.h>

namespace {

using namespace radseg;
using namespace radseg::loss;
using radseg::testing::numeric_gradient;
using radseg::testing::relative_error;

constexpr double kLossTol = 1e-6;

GdlVariant variant(GdlMode m) {
  GdlVariant v;
  v.mode = m;
  return v;
}

Eigen::ArrayXd perfect(int n, int f) {
  Eigen::ArrayXd r = Eigen::ArrayXd::Zero(n);
  r.head(f) = 1.0;
  return r;
}

// The printed formula evaluated term by term, independent of the library sums.
double printed_formula(const Eigen::ArrayXd& p, const Eigen::ArrayXd& r, double eps) {
  double pr = 0, sp = 0, sr = 0, bg = 0;
  for (Index i = 0; i < p.size(); ++i) {
    pr += p[i] * r[i];
    sp += p[i];
    sr += r[i];
    bg += (1 - p[i]) * (1 - r[i]);
  }
  return 1.0 - pr / (sp + sr + eps) - bg / (sp + sr + eps);
}

// Epsilon shifts a perfect score by about eps/(2F) + eps/(2(N-F)); sizes keep that below 1e-9.
TEST(Gdl, CorrectedIsZeroOnPerfectPredictions) {
  for (int n : {400, 1000, 4096})
    for (int f : {200, n / 2, n - 200}) {
      const auto r = perfect(n, f);
      EXPECT_NEAR(gdl(r, r, variant(GdlMode::corrected)), 0.0, 1e-9) << n << " " << f;
    }
}

TEST(Gdl, CorrectedPerfectScoreOnSmallTensorsIsWithinEpsilon) {
  for (int f = 1; f < 4; ++f) {
    const auto r = perfect(4, f);
    const double v = gdl(r, r, variant(GdlMode::corrected));
    EXPECT_GE(v, 0.0);
    EXPECT_LT(v, 1e-7);
  }
}

// A single-class label leaves one term at 0/eps, so even a perfect prediction scores 1/2.
TEST(Gdl, CorrectedSingleClassPerfectPredictionScoresHalf) {
  const Eigen::ArrayXd zeros = Eigen::ArrayXd::Zero(6), ones = Eigen::ArrayXd::Ones(6);
  EXPECT_NEAR(gdl(zeros, zeros, variant(GdlMode::corrected)), 0.5, 1e-7);
  EXPECT_NEAR(gdl(ones, ones, variant(GdlMode::corrected)), 0.5, 1e-7);
}

TEST(Gdl, CorrectedAllOnesHasFiniteGradient) {
  const Eigen::ArrayXd ones = Eigen::ArrayXd::Ones(8);
  EXPECT_TRUE(gdl_gradient(ones, ones, variant(GdlMode::corrected)).isFinite().all());
  EXPECT_TRUE(std::isfinite(gdl(ones, ones, variant(GdlMode::corrected))));
}

TEST(Gdl, CorrectedRangeAndZeroOnlyAtPerfectBinaryPrediction) {
  Rng rng(11);
  const double eps = 1e-7;
  for (int trial = 0; trial < 2000; ++trial) {
    const Index n = rng.integer(2, 6);
    Eigen::ArrayXd p(n), r(n), b(n);
    for (Index i = 0; i < n; ++i) {
      p[i] = rng.uniform();
      r[i] = rng.uniform() < 0.5 ? 1.0 : 0.0;
      b[i] = rng.uniform() < 0.5 ? 1.0 : 0.0;
    }
    const double v = gdl(p, r, variant(GdlMode::corrected));
    EXPECT_GE(v, -eps * static_cast<double>(n));
    EXPECT_LE(v, 1.0);
    if (r.sum() == 0.0 || r.sum() == static_cast<double>(n)) continue;
    const double vb = gdl(b, r, variant(GdlMode::corrected));
    if ((b == r).all())
      EXPECT_LT(std::abs(vb), 1e-6);
    else
      EXPECT_GT(vb, 1e-3);
  }
}

// Hand values hold as eps -> 0; at the default eps they shift by O(eps).
TEST(Gdl, AsWrittenHandValues) {
  const auto two = perfect(4, 2);
  const auto one = perfect(4, 1);
  GdlVariant tiny = variant(GdlMode::as_written);
  tiny.epsilon = 1e-15;
  EXPECT_NEAR(gdl(two, two, tiny), 0.0, 1e-9);
  EXPECT_NEAR(gdl(one, one, tiny), -1.0, 1e-9);
  EXPECT_NEAR(gdl(two, two, variant(GdlMode::as_written)), 0.0, 1e-7);
  EXPECT_NEAR(gdl(one, one, variant(GdlMode::as_written)), -1.0, 1e-7);
  EXPECT_NEAR(printed_formula(two, two, 1e-15), 0.0, 1e-9);
  EXPECT_NEAR(printed_formula(one, one, 1e-15), -1.0, 1e-9);
}

TEST(Gdl, AsWrittenMatchesPrintedFormula) {
  Rng rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    Eigen::ArrayXd p(30), r(30);
    for (Index i = 0; i < 30; ++i) {
      p[i] = rng.uniform();
      r[i] = rng.uniform() < 0.3 ? 1.0 : 0.0;
    }
    EXPECT_NEAR(gdl(p, r, variant(GdlMode::as_written)), printed_formula(p, r, 1e-7), 1e-12);
  }
}

TEST(Gdl, CorrectedLiesInUnitIntervalAndPenalizesErrors) {
  Rng rng(4);
  const auto r = perfect(50, 20);
  double last = gdl(r, r, variant(GdlMode::corrected));
  Eigen::ArrayXd p = r;
  for (int k = 0; k < 10; ++k) {
    p[k] = 0.0;  // drop foreground pixels one at a time
    const double v = gdl(p, r, variant(GdlMode::corrected));
    EXPECT_GT(v, last);
    EXPECT_LE(v, 1.0);
    last = v;
  }
  EXPECT_NEAR(gdl(1.0 - r, r, variant(GdlMode::corrected)), 1.0, 1e-9);
}

void check_gdl_gradient(GdlMode mode, double epsilon) {
  Rng rng(5);
  GdlVariant v = variant(mode);
  v.epsilon = epsilon;
  for (int trial = 0; trial < 5; ++trial) {
    Eigen::ArrayXd p(40), r(40);
    for (Index i = 0; i < 40; ++i) {
      p[i] = rng.uniform(0.05, 0.95);
      r[i] = rng.uniform() < 0.4 ? 1.0 : 0.0;
    }
    auto f = [&] { return gdl(p, r, v); };
    const Eigen::ArrayXd analytic = gdl_gradient(p, r, v);
    EXPECT_LT(relative_error(analytic, numeric_gradient(p, f)), kLossTol) << to_string(mode);
  }
}

TEST(Gdl, CorrectedGradient) { check_gdl_gradient(GdlMode::corrected, 1e-7); }
TEST(Gdl, AsWrittenGradient) { check_gdl_gradient(GdlMode::as_written, 1e-7); }
TEST(Gdl, GradientWithLargeEpsilon) {
  check_gdl_gradient(GdlMode::corrected, 0.5);
  check_gdl_gradient(GdlMode::as_written, 0.5);
}

TEST(Gdl, RejectsBadOperands) {
  Eigen::ArrayXd p = Eigen::ArrayXd::Constant(4, 0.5), r = perfect(4, 2);
  Eigen::ArrayXd soft = r;
  soft[0] = 0.5;
  EXPECT_THROW(gdl(p, soft), ValidationError);
  Eigen::ArrayXd big = p;
  big[1] = 1.5;
  EXPECT_THROW(gdl(big, r), ValidationError);
  EXPECT_THROW(gdl(p.head(3), r), ShapeError);
  GdlVariant v;
  v.epsilon = 0.0;
  EXPECT_THROW(gdl(p, r, v), ConfigError);
}

TEST(Gdl, ModeNamesRoundTrip) {
  for (auto m : {GdlMode::corrected, GdlMode::as_written}) EXPECT_EQ(parse_gdl_mode(to_string(m)), m);
  EXPECT_THROW(parse_gdl_mode("dice"), ConfigError);
}

TEST(L2Penalty, ValueAndGradient) {
  Rng rng(6);
  Eigen::ArrayXd w(25);
  for (auto& x : w) x = rng.normal();
  const double lambda = 0.1;
  EXPECT_NEAR(l2_penalty(w, lambda), 0.05 * w.square().sum(), 1e-14);
  auto f = [&] { return l2_penalty(w, lambda); };
  EXPECT_LT(relative_error(lambda * w, numeric_gradient(w, f)), kLossTol);
  EXPECT_THROW(l2_penalty(w, -1.0), ConfigError);
}

TEST(L2Penalty, NetworkSumSkipsUndecayedParameters) {
  nn::NetConfig c;
  c.base_features = 2;
  c.levels = 2;
  nn::UNet<double> net(c, 1);
  auto params = net.parameters();
  double expected = 0.0;
  for (auto& p : params) {
    if (p.decay) expected += 0.5 * 0.2 * p.tensor->values().square().sum();
    p.tensor->values() += 0.01;  // make biases and BN shifts nonzero
  }
  expected = 0.0;
  for (auto& p : params)
    if (p.decay) expected += 0.1 * p.tensor->values().square().sum();
  net.zero_grad();
  EXPECT_NEAR(l2_penalty(params, 0.2, true), expected, 1e-12);
  for (auto& p : params) {
    if (p.decay)
      EXPECT_LT((p.tensor->grad() - 0.2 * p.tensor->values()).abs().maxCoeff(), 1e-15) << p.name;
    else
      EXPECT_EQ(p.tensor->grad().abs().maxCoeff(), 0.0) << p.name;
  }
}

TEST(ForegroundGdl, GradientThroughProbabilityTensor) {
  Rng rng(7);
  nn::Tensor<double> probs({2, 2, 3, 3}), labels({2, 1, 3, 3});
  for (Index n = 0; n < 2; ++n)
    for (Index i = 0; i < 3; ++i)
      for (Index j = 0; j < 3; ++j) {
        const double q = rng.uniform(0.1, 0.9);
        probs(n, 0, i, j) = 1.0 - q;
        probs(n, 1, i, j) = q;
        labels(n, 0, i, j) = rng.uniform() < 0.5 ? 1.0 : 0.0;
      }
  for (auto mode : {GdlMode::corrected, GdlMode::as_written}) {
    auto f = [&] { return foreground_gdl(probs, labels, variant(mode)).value; };
    const auto out = foreground_gdl(probs, labels, variant(mode));
    EXPECT_LT(relative_error(out.grad_probs.values(), numeric_gradient(probs, f)), kLossTol);
    for (Index i = 0; i < 9; ++i) EXPECT_EQ(out.grad_probs.values()[i], 0.0);  // background channel
  }
}

TEST(ForegroundGdl, ThroughNetworkMatchesFiniteDifferences) {
  nn::NetConfig c;
  c.base_features = 2;
  c.levels = 2;
  nn::UNet<double> net(c, 3);
  Rng rng(8);
  auto x = radseg::testing::random_tensor({2, 1, 4, 4}, rng);
  nn::Tensor<double> labels({2, 1, 4, 4});
  for (auto& v : labels.values()) v = rng.uniform() < 0.5 ? 1.0 : 0.0;
  auto f = [&] { return foreground_gdl(net.forward(x, nn::Mode::train), labels).value; };
  net.zero_grad();
  const auto out = foreground_gdl(net.forward(x, nn::Mode::train), labels);
  const auto gx = net.backward(out.grad_probs);
  EXPECT_LT(relative_error(gx.values(), numeric_gradient(x, f)), 1e-4);
}

TEST(ForegroundGdl, RejectsLabelShape) {
  nn::Tensor<double> probs({1, 2, 4, 4}, 0.5), labels({1, 2, 4, 4});
  EXPECT_THROW(foreground_gdl(probs, labels), ShapeError);
}

}  // namespace
