// Copyright 2026 The texgen Authors.
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

#include "texgen/nn.h"

#include <cmath>
#include <functional>
#include <random>

#include <gtest/gtest.h>

#include "texgen/lpc.h"

namespace texgen::nn {
namespace {

Matrix RandomMatrix(std::size_t r, std::size_t c, std::mt19937_64& rng, double scale = 1.0) {
  Matrix m(r, c);
  std::normal_distribution<double> n(0.0, scale);
  for (double& v : m.data) v = n(rng);
  return m;
}

double RelErr(double a, double b) { return std::abs(a - b) / std::max({1e-6, std::abs(a), std::abs(b)}); }

// Scalar probe L = sum(w * layer(x)). Checks dL/dx and every trainable
// parameter against central differences.
void CheckLayerGradients(Layer& layer, ParamStore& store, Matrix x, bool training,
                         double tol = 1e-5) {
  std::mt19937_64 rng(7);
  Context ctx{training, nullptr};
  Matrix y;
  layer.Forward(x, y, ctx);
  const Matrix w = RandomMatrix(y.rows, y.cols, rng);
  auto loss = [&](const Matrix& in) {
    Matrix out;
    Context c{training, nullptr};
    layer.Forward(in, out, c);
    double s = 0.0;
    for (std::size_t i = 0; i < out.data.size(); ++i) s += w.data[i] * out.data[i];
    return s;
  };
  store.ZeroGrad();
  layer.Forward(x, y, ctx);
  Matrix dx;
  layer.Backward(w, dx);
  const double h = 1e-5;
  for (std::size_t i = 0; i < x.data.size(); ++i) {
    Matrix xp = x, xm = x;
    xp.data[i] += h;
    xm.data[i] -= h;
    const double fd = (loss(xp) - loss(xm)) / (2 * h);
    EXPECT_LT(RelErr(dx.data[i], fd), tol) << "input " << i << " analytic " << dx.data[i] << " fd " << fd;
  }
  for (auto& p : store.params()) {
    if (!p->trainable) continue;
    const std::vector<double> grad = p->grad;
    for (std::size_t i = 0; i < p->size(); ++i) {
      const double orig = p->value[i];
      p->value[i] = orig + h;
      const double lp = loss(x);
      p->value[i] = orig - h;
      const double lm = loss(x);
      p->value[i] = orig;
      const double fd = (lp - lm) / (2 * h);
      EXPECT_LT(RelErr(grad[i], fd), tol) << p->name << "[" << i << "]";
    }
  }
}

void RandomizeParams(ParamStore& store, std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 0.5);
  for (auto& p : store.params())
    if (p->trainable)
      for (double& v : p->value) v = n(rng);
}

TEST(Layers, LinearGradient) {
  std::mt19937_64 rng(1);
  ParamStore store;
  Linear lin(store, "fc", 5, 3);
  RandomizeParams(store, rng);
  CheckLayerGradients(lin, store, RandomMatrix(4, 5, rng), false);
}

TEST(Layers, LinearForwardMatchesHandProduct) {
  ParamStore store;
  Linear lin(store, "fc", 2, 2);
  lin.weight().value = {1, 2, 3, 4};  // rows are inputs
  lin.bias().value = {0.5, -0.5};
  Matrix x(1, 2);
  x.data = {1, 1};
  Matrix y;
  Context ctx;
  lin.Forward(x, y, ctx);
  EXPECT_DOUBLE_EQ(y(0, 0), 4.5);
  EXPECT_DOUBLE_EQ(y(0, 1), 5.5);
}

TEST(Layers, LinearRejectsWrongWidth) {
  ParamStore store;
  Linear lin(store, "fc", 3, 2);
  Matrix x(1, 4), y;
  Context ctx;
  try {
    lin.Forward(x, y, ctx);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kShapeError);
  }
}

TEST(Layers, ReluSoftplusL2Gradients) {
  std::mt19937_64 rng(2);
  ParamStore store;
  Relu relu;
  CheckLayerGradients(relu, store, RandomMatrix(3, 6, rng), false);
  Softplus sp;
  CheckLayerGradients(sp, store, RandomMatrix(3, 6, rng, 3.0), false);
  L2Normalize l2;
  CheckLayerGradients(l2, store, RandomMatrix(3, 6, rng), false);
}

TEST(Layers, SoftplusIsStableForLargeInputs) {
  EXPECT_DOUBLE_EQ(SoftplusValue(800.0), 800.0);
  EXPECT_GT(SoftplusValue(-800.0), -1e-300);
  EXPECT_NEAR(SoftplusValue(0.0), std::log(2.0), 1e-15);
}

TEST(Layers, BatchNormGradientTrainingAndEval) {
  std::mt19937_64 rng(3);
  ParamStore store;
  BatchNorm bn(store, "bn", 4);
  RandomizeParams(store, rng);
  CheckLayerGradients(bn, store, RandomMatrix(5, 4, rng), true, 1e-4);
  ParamStore store2;
  BatchNorm bn2(store2, "bn", 4);
  RandomizeParams(store2, rng);
  CheckLayerGradients(bn2, store2, RandomMatrix(5, 4, rng), false);
}

TEST(Layers, BatchNormTrainingNormalizesColumns) {
  std::mt19937_64 rng(4);
  ParamStore store;
  BatchNorm bn(store, "bn", 3);
  Matrix x = RandomMatrix(64, 3, rng, 4.0);
  for (std::size_t r = 0; r < x.rows; ++r) x(r, 1) += 10.0;
  Matrix y;
  Context ctx{true, nullptr};
  bn.Forward(x, y, ctx);
  for (std::size_t c = 0; c < 3; ++c) {
    double m = 0, v = 0;
    for (std::size_t r = 0; r < 64; ++r) m += y(r, c);
    m /= 64;
    for (std::size_t r = 0; r < 64; ++r) v += (y(r, c) - m) * (y(r, c) - m);
    v /= 64;
    EXPECT_NEAR(m, 0.0, 1e-12);
    EXPECT_NEAR(v, 1.0, 1e-3);
  }
  EXPECT_GT(store.Find("bn.running_mean")->value[1], 0.5);
  EXPECT_FALSE(store.Find("bn.running_mean")->trainable);
}

TEST(Layers, ResidualAndSequentialGradient) {
  std::mt19937_64 rng(5);
  ParamStore store;
  Sequential seq;
  seq.Add(std::make_unique<Linear>(store, "a", 4, 6));
  seq.Add(std::make_unique<Relu>());
  seq.Add(std::make_unique<Residual>(store, "res", 6, 0.0));
  seq.Add(std::make_unique<Linear>(store, "b", 6, 2));
  RandomizeParams(store, rng);
  CheckLayerGradients(seq, store, RandomMatrix(3, 4, rng), false);
}

TEST(Layers, DropoutIdentityInEvalAndScaledInTraining) {
  Dropout d(0.5);
  Matrix x(100, 100);
  x.Fill(1.0);
  Matrix y;
  Context eval;
  d.Forward(x, y, eval);
  EXPECT_EQ(y.data, x.data);
  std::mt19937_64 rng(9);
  Context train{true, &rng};
  d.Forward(x, y, train);
  double sum = 0.0;
  for (double v : y.data) {
    EXPECT_TRUE(v == 0.0 || v == 2.0);
    sum += v;
  }
  EXPECT_NEAR(sum / 10000.0, 1.0, 0.05);
  Matrix dx;
  d.Backward(x, dx);
  EXPECT_EQ(dx.data, y.data);
}

TEST(Layers, LsfHeadMatchesProjectionAndGradient) {
  std::mt19937_64 rng(6);
  ParamStore store;
  LsfHead head(kArOrder);
  Matrix x = RandomMatrix(2, 2 * kArOrder, rng);
  Matrix y;
  Context ctx;
  head.Forward(x, y, ctx);
  for (std::size_t g = 0; g < 2; ++g) {
    const auto ref = lpc::ProjectToLsf(std::span<const double>(x.Row(1) + g * kArOrder, kArOrder));
    for (int i = 0; i < kArOrder; ++i) EXPECT_EQ(y(1, g * kArOrder + i), ref[i]);
  }
  CheckLayerGradients(head, store, x, false);
}

TEST(Layers, LsfHeadZeroLogitsGiveFlatLsf) {
  LsfHead head(kArOrder);
  Matrix x(1, kArOrder), y;
  Context ctx;
  head.Forward(x, y, ctx);
  for (int i = 0; i < kArOrder; ++i) {
    EXPECT_NEAR(y(0, i), (i + 1) * kPi / (kArOrder + 1), 1e-12);
  }
}

// ---- Losses -----------------------------------------------------------------

void CheckLossGradient(const std::function<double(const Matrix&)>& f, Matrix x, const Matrix& grad,
                       double tol = 1e-6) {
  const double h = 1e-5;
  for (std::size_t i = 0; i < x.data.size(); ++i) {
    Matrix xp = x, xm = x;
    xp.data[i] += h;
    xm.data[i] -= h;
    const double fd = (f(xp) - f(xm)) / (2 * h);
    EXPECT_LT(RelErr(grad.data[i], fd), tol) << i << " analytic " << grad.data[i] << " fd " << fd;
  }
}

TEST(Losses, SmoothL1ValueAndGradient) {
  Matrix p(1, 3), t(1, 3), g;
  p.data = {0.5, 3.0, -2.0};
  t.data = {0.0, 0.0, 0.0};
  // 0.125 + 2.5 + 1.5 over 3 elements.
  EXPECT_NEAR(SmoothL1(p, t, &g), 4.125 / 3.0, 1e-15);
  EXPECT_NEAR(g.data[0], 0.5 / 3, 1e-15);
  EXPECT_NEAR(g.data[1], 1.0 / 3, 1e-15);
  EXPECT_NEAR(g.data[2], -1.0 / 3, 1e-15);
  std::mt19937_64 rng(11);
  Matrix a = RandomMatrix(3, 4, rng, 2.0), b = RandomMatrix(3, 4, rng);
  SmoothL1(a, b, &g);
  CheckLossGradient([&](const Matrix& m) { return SmoothL1(m, b, nullptr); }, a, g);
}

TEST(Losses, KlClosedForm) {
  Matrix mu(2, 3), lv(2, 3);
  EXPECT_DOUBLE_EQ(GaussianKl(mu, lv, nullptr, nullptr), 0.0);
  // One row with mu = 1 in a single dim, one row at zero: 0.5 / 2 rows.
  mu(0, 0) = 1.0;
  EXPECT_DOUBLE_EQ(GaussianKl(mu, lv, nullptr, nullptr), 0.25);
  Matrix mu1(1, 1), lv1(1, 1);
  mu1(0, 0) = 1.0;
  EXPECT_DOUBLE_EQ(GaussianKl(mu1, lv1, nullptr, nullptr), 0.5);
  std::mt19937_64 rng(12);
  Matrix m = RandomMatrix(3, 4, rng), l = RandomMatrix(3, 4, rng);
  Matrix gm, gl;
  GaussianKl(m, l, &gm, &gl);
  CheckLossGradient([&](const Matrix& x) { return GaussianKl(x, l, nullptr, nullptr); }, m, gm);
  CheckLossGradient([&](const Matrix& x) { return GaussianKl(m, x, nullptr, nullptr); }, l, gl);
}

TEST(Losses, InfoNceOrthogonalPairs) {
  Matrix a(2, 2), b(2, 2);
  a.data = {1, 0, 0, 1};
  b = a;
  // log(1 + e^-10) for each direction.
  EXPECT_NEAR(InfoNce(a, b, 0.1, nullptr, nullptr), 4.5398899e-5, 1e-11);
}

TEST(Losses, InfoNceGradientAndSymmetry) {
  std::mt19937_64 rng(13);
  Matrix a = RandomMatrix(5, 4, rng, 0.5), b = RandomMatrix(5, 4, rng, 0.5);
  Matrix ga, gb;
  const double l = InfoNce(a, b, 0.1, &ga, &gb);
  EXPECT_NEAR(l, InfoNce(b, a, 0.1, nullptr, nullptr), 1e-12);
  CheckLossGradient([&](const Matrix& x) { return InfoNce(x, b, 0.1, nullptr, nullptr); }, a, ga);
  CheckLossGradient([&](const Matrix& x) { return InfoNce(a, x, 0.1, nullptr, nullptr); }, b, gb);
}

TEST(Losses, InfoNceNeedsTwoRows) {
  Matrix a(1, 3), b(1, 3);
  try {
    InfoNce(a, b, 0.1, nullptr, nullptr);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kBatchTooSmall);
  }
}

TEST(Losses, SquaredDistanceGradient) {
  std::mt19937_64 rng(14);
  Matrix a = RandomMatrix(3, 4, rng), b = RandomMatrix(3, 4, rng);
  Matrix ga, gb;
  SquaredDistance(a, b, &ga, &gb);
  CheckLossGradient([&](const Matrix& x) { return SquaredDistance(x, b, nullptr, nullptr); }, a, ga);
  CheckLossGradient([&](const Matrix& x) { return SquaredDistance(a, x, nullptr, nullptr); }, b, gb);
  Matrix z(2, 2), o(2, 2);
  o.Fill(1.0);
  EXPECT_DOUBLE_EQ(SquaredDistance(z, o, nullptr, nullptr), 2.0);
}

// ---- Optimizer ----------------------------------------------------------------

TEST(Optimizer, ClippingCapsGlobalNorm) {
  ParamStore store;
  Param& p = store.Add("p", 1, 2);
  Param& q = store.Add("q", 1, 1);
  p.grad = {3.0, 0.0};
  q.grad = {4.0};
  EXPECT_DOUBLE_EQ(ClipGradNorm(store, 1.0), 5.0);
  EXPECT_NEAR(store.GradNorm(), 1.0, 1e-15);
  EXPECT_NEAR(p.grad[0], 0.6, 1e-15);
  q.grad = {0.5};
  p.grad = {0.0, 0.0};
  ClipGradNorm(store, 1.0);
  EXPECT_DOUBLE_EQ(q.grad[0], 0.5);
}

TEST(Optimizer, AdamFirstStepMovesByLearningRate) {
  ParamStore store;
  Param& p = store.Add("p", 1, 2);
  Param& buf = store.Add("buf", 1, 1, false);
  p.grad = {0.3, -0.2};
  buf.grad = {100.0};
  Adam adam(store, AdamConfig{.lr = 0.01});
  adam.Step();
  EXPECT_NEAR(p.value[0], -0.01, 1e-9);
  EXPECT_NEAR(p.value[1], 0.01, 1e-9);
  EXPECT_EQ(buf.value[0], 0.0);
  EXPECT_EQ(adam.steps(), 1);
}

TEST(Optimizer, AdamMinimizesQuadratic) {
  ParamStore store;
  Param& p = store.Add("p", 1, 1);
  p.value = {5.0};
  Adam adam(store, AdamConfig{.lr = 0.1, .clip_norm = 0.0});
  for (int i = 0; i < 2000; ++i) {
    p.grad = {2.0 * (p.value[0] - 1.0)};
    adam.Step();
  }
  EXPECT_NEAR(p.value[0], 1.0, 1e-3);
}

TEST(Optimizer, NonFiniteGradientNamesParameter) {
  ParamStore store;
  store.Add("enc.fc1.weight", 1, 1).grad = {NAN};
  Adam adam(store, AdamConfig{});
  try {
    adam.Step();
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kNonFiniteGradient);
    EXPECT_NE(std::string(e.what()).find("enc.fc1.weight"), std::string::npos);
  }
}

TEST(ParamStoreTest, HashChangesWithValuesAndDuplicatesRejected) {
  ParamStore store;
  Param& p = store.Add("p", 2, 2);
  const auto h0 = store.Hash();
  p.value[3] = 1e-300;
  EXPECT_NE(store.Hash(), h0);
  EXPECT_THROW(store.Add("p", 1, 1), Error);
  EXPECT_EQ(store.TrainableCount(), 4u);
}

}  // namespace
}  // namespace texgen::nn
