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

#include "texgen/lpc.h"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <string>

namespace texgen::lpc {
namespace {

using Poly = std::array<long double, kMaxLpcOrder + 3>;

void CheckOrder(std::size_t p) {
  if (p == 0 || p > static_cast<std::size_t>(kMaxLpcOrder)) {
    throw Error(ErrorCode::kInvalidArgument,
                "LPC order " + std::to_string(p) + " outside [1, " +
                    std::to_string(kMaxLpcOrder) + "]");
  }
}

// poly (degree deg) *= (1 + b x + x^2); returns new degree.
int MulQuadratic(Poly& poly, int deg, long double b) {
  poly[deg + 2] = 0.0;
  poly[deg + 1] = 0.0;
  for (int i = deg + 2; i >= 0; --i) {
    long double v = poly[i];
    if (i >= 1) v += b * poly[i - 1];
    if (i >= 2) v += poly[i - 2];
    poly[i] = v;
  }
  return deg + 2;
}

// poly *= (1 + s x) with s = +-1.
int MulLinear(Poly& poly, int deg, double s) {
  poly[deg + 1] = 0.0;
  for (int i = deg + 1; i >= 1; --i) poly[i] += s * poly[i - 1];
  return deg + 1;
}

// Builds A(x) = (P + Q) / 2 from interlaced LSFs; writes predictor a_k = -A_k.
void RawLsfToPredictor(std::span<const double> lsf, std::span<double> a) {
  const int p = static_cast<int>(lsf.size());
  Poly pp{};
  Poly qq{};
  pp[0] = 1.0;
  qq[0] = 1.0;
  int dp = 0;
  int dq = 0;
  for (int i = 0; i < p; i += 2) dp = MulQuadratic(pp, dp, -2.0L * std::cos(static_cast<long double>(lsf[i])));
  for (int i = 1; i < p; i += 2) dq = MulQuadratic(qq, dq, -2.0L * std::cos(static_cast<long double>(lsf[i])));
  if (p % 2 == 1) {
    // Q carries both trivial roots: (1 - x)(1 + x) = 1 - x^2.
    dq = MulLinear(qq, dq, -1.0);
    dq = MulLinear(qq, dq, 1.0);
  } else {
    dp = MulLinear(pp, dp, 1.0);
    dq = MulLinear(qq, dq, -1.0);
  }
  for (int k = 1; k <= p; ++k) a[k - 1] = static_cast<double>(-0.5L * (pp[k] + qq[k]));
}

// Real-valued form of a palindromic polynomial of degree 2m on the unit circle:
// G(w) = r_m + 2 sum_j r_{m+j} cos(j w).
double PalindromicValue(const double* r, int m, double w, double* deriv) {
  long double g = r[m];
  long double dg = 0.0L;
  const long double lw = w;
  for (int j = 1; j <= m; ++j) {
    g += 2.0L * r[m + j] * std::cos(j * lw);
    dg -= 2.0L * j * r[m + j] * std::sin(j * lw);
  }
  *deriv = static_cast<double>(dg);
  return static_cast<double>(g);
}

// Angles in (0, pi) of the m conjugate root pairs of a palindromic polynomial
// with coefficients r[0..2m].
void UnitCircleAngles(const double* r, int m, double* angles) {
  if (m == 0) return;
  Eigen::MatrixXd companion = Eigen::MatrixXd::Zero(2 * m, 2 * m);
  const double lead = r[2 * m];
  for (int j = 0; j < 2 * m; ++j) companion(0, j) = -r[2 * m - 1 - j] / lead;
  for (int j = 1; j < 2 * m; ++j) companion(j, j - 1) = 1.0;
  Eigen::EigenSolver<Eigen::MatrixXd> solver(companion, false);
  const auto& roots = solver.eigenvalues();
  std::array<double, 2 * kMaxLpcOrder + 2> abs_args{};
  for (int j = 0; j < 2 * m; ++j) abs_args[j] = std::abs(std::arg(roots[j]));
  std::sort(abs_args.begin(), abs_args.begin() + 2 * m);
  for (int j = 0; j < m; ++j) {
    double w = 0.5 * (abs_args[2 * j] + abs_args[2 * j + 1]);
    // Newton polish on the real form; keeps the eigen estimate if a step
    // misbehaves.
    for (int iter = 0; iter < 40; ++iter) {
      double dg = 0.0;
      const double g = PalindromicValue(r, m, w, &dg);
      if (dg == 0.0) break;
      const double step = g / dg;
      if (!std::isfinite(step) || std::abs(step) > 1e-2) break;
      w -= step;
      if (std::abs(step) < 1e-15) break;
    }
    angles[j] = w;
  }
}

// Divides poly (degree deg) by (1 + s x), s = +-1; assumes exact divisibility.
int DivLinear(double* poly, int deg, double s) {
  for (int i = 1; i <= deg; ++i) poly[i] -= s * poly[i - 1];
  return deg - 1;
}

}  // namespace

void ValidateLsf(std::span<const double> lsf) {
  for (std::size_t i = 0; i < lsf.size(); ++i) {
    const double w = lsf[i];
    if (!std::isfinite(w) || w <= 0.0 || w > kLsfUpper) {
      throw Error(ErrorCode::kInvalidLsf,
                  "LSF " + std::to_string(i + 1) + " = " + std::to_string(w) +
                      " outside (0, pi - 1e-4]");
    }
    if (i > 0 && !(w - lsf[i - 1] >= kLsfMinGap)) {
      throw Error(ErrorCode::kInvalidLsf,
                  "LSF " + std::to_string(i + 1) + " not above LSF " +
                      std::to_string(i) + " by the minimum gap");
    }
  }
}

void FlatLsf(std::span<double> lsf) {
  const double step = kPi / static_cast<double>(lsf.size() + 1);
  for (std::size_t i = 0; i < lsf.size(); ++i) lsf[i] = step * static_cast<double>(i + 1);
}

void LsfToPredictor(std::span<const double> lsf, std::span<double> a) {
  const std::size_t p = lsf.size();
  CheckOrder(p);
  if (a.size() != p) {
    throw Error(ErrorCode::kShapeError, "predictor size must equal LSF count");
  }
  ValidateLsf(lsf);
  RawLsfToPredictor(lsf, a);
  if (IsStable(a)) return;

  // Pull toward the flat spectrum until the pole margin holds.
  std::array<double, kMaxLpcOrder> flat{};
  std::array<double, kMaxLpcOrder> blended{};
  FlatLsf(std::span<double>(flat.data(), p));
  for (double s = 1e-6; s < 1.0; s *= 4.0) {
    for (std::size_t i = 0; i < p; ++i) blended[i] = (1.0 - s) * lsf[i] + s * flat[i];
    RawLsfToPredictor(std::span<const double>(blended.data(), p), a);
    if (IsStable(a)) return;
  }
  std::fill(a.begin(), a.end(), 0.0);
}

ArCoeffs LsfToAr(const LsfVector& lsf, double variance) {
  ArCoeffs out;
  LsfToPredictor(lsf, out.a);
  out.variance = variance;
  return out;
}

void PredictorToLsf(std::span<const double> a, std::span<double> lsf) {
  const int p = static_cast<int>(a.size());
  CheckOrder(a.size());
  if (lsf.size() != a.size()) {
    throw Error(ErrorCode::kShapeError, "LSF size must equal predictor size");
  }
  for (double v : a) {
    if (!std::isfinite(v)) throw Error(ErrorCode::kNonFiniteInput, "non-finite AR coefficient");
  }
  if (!IsStable(a)) {
    throw Error(ErrorCode::kUnstablePolynomial,
                "AR polynomial has a pole on or outside radius 1 - 1e-9");
  }
  // A(x) coefficients, then P and Q of degree p+1.
  std::array<double, kMaxLpcOrder + 2> poly_a{};
  poly_a[0] = 1.0;
  for (int k = 1; k <= p; ++k) poly_a[k] = -a[k - 1];
  std::array<double, kMaxLpcOrder + 2> pp{};
  std::array<double, kMaxLpcOrder + 2> qq{};
  for (int k = 0; k <= p + 1; ++k) {
    const double rev = poly_a[p + 1 - k];
    pp[k] = poly_a[k] + rev;
    qq[k] = poly_a[k] - rev;
  }
  int dp = p + 1;
  int dq = p + 1;
  if (p % 2 == 1) {
    dq = DivLinear(qq.data(), dq, -1.0);
    dq = DivLinear(qq.data(), dq, 1.0);
  } else {
    dp = DivLinear(pp.data(), dp, 1.0);
    dq = DivLinear(qq.data(), dq, -1.0);
  }
  std::array<double, kMaxLpcOrder> p_angles{};
  std::array<double, kMaxLpcOrder> q_angles{};
  UnitCircleAngles(pp.data(), dp / 2, p_angles.data());
  UnitCircleAngles(qq.data(), dq / 2, q_angles.data());
  for (int i = 0; i < p; ++i) {
    lsf[i] = (i % 2 == 0) ? p_angles[i / 2] : q_angles[i / 2];
  }
  // Interlacing is guaranteed for stable input; this only absorbs roundoff.
  EnforceLsfSpacing(lsf);
}

LsfVector ArToLsf(const ArCoeffs& ar) {
  LsfVector out{};
  PredictorToLsf(ar.a, out);
  return out;
}

void EnforceLsfSpacing(std::span<double> lsf) {
  const std::size_t p = lsf.size();
  if (p == 0) return;
  // Bounds are nudged by ulps so the gap test holds after rounding.
  double prev = 0.0;
  for (std::size_t i = 0; i < p; ++i) {
    double floor_value = prev + kLsfMinGap;
    while (floor_value - prev < kLsfMinGap) floor_value = std::nextafter(floor_value, INFINITY);
    lsf[i] = std::max(lsf[i], floor_value);
    prev = lsf[i];
  }
  if (lsf[p - 1] > kLsfUpper) lsf[p - 1] = kLsfUpper;
  for (std::size_t i = p - 1; i-- > 0;) {
    double ceiling = lsf[i + 1] - kLsfMinGap;
    while (lsf[i + 1] - ceiling < kLsfMinGap) ceiling = std::nextafter(ceiling, -INFINITY);
    lsf[i] = std::min(lsf[i], ceiling);
  }
}

void ProjectToLsf(std::span<const double> logits, std::span<double> lsf) {
  const std::size_t p = logits.size();
  if (lsf.size() != p) {
    throw Error(ErrorCode::kShapeError, "LSF size must equal logit count");
  }
  double max_logit = -INFINITY;
  for (double v : logits) {
    if (!std::isfinite(v)) throw Error(ErrorCode::kNonFiniteInput, "non-finite LSF logit");
    max_logit = std::max(max_logit, v);
  }
  double total = 0.0;
  for (std::size_t i = 0; i < p; ++i) {
    lsf[i] = std::exp(logits[i] - max_logit);
    total += lsf[i];
  }
  const double scale = kPi * static_cast<double>(p) / static_cast<double>(p + 1);
  double cum = 0.0;
  for (std::size_t i = 0; i < p; ++i) {
    cum += lsf[i];
    lsf[i] = std::min(scale * (cum / total), kLsfUpper);
  }
  EnforceLsfSpacing(lsf);
}

LsfVector ProjectToLsf(std::span<const double> logits) {
  if (logits.size() != static_cast<std::size_t>(kArOrder)) {
    throw Error(ErrorCode::kShapeError, "expected 21 LSF logits");
  }
  LsfVector out{};
  ProjectToLsf(logits, std::span<double>(out));
  return out;
}

bool IsStable(std::span<const double> a, double margin) {
  const std::size_t p = a.size();
  if (p > static_cast<std::size_t>(kMaxLpcOrder)) return false;
  const double radius = 1.0 - margin;
  // c holds the monic polynomial 1 + c_1 x + ... in the scaled variable.
  std::array<double, kMaxLpcOrder + 1> c{};
  double scale = 1.0;
  for (std::size_t k = 1; k <= p; ++k) {
    scale /= radius;
    c[k] = -a[k - 1] * scale;
    if (!std::isfinite(c[k])) return false;
  }
  std::array<double, kMaxLpcOrder + 1> next{};
  for (std::size_t m = p; m >= 1; --m) {
    const double k = c[m];
    if (!(std::abs(k) < 1.0)) return false;
    const double denom = 1.0 - k * k;
    for (std::size_t i = 1; i < m; ++i) next[i] = (c[i] - k * c[m - i]) / denom;
    for (std::size_t i = 1; i < m; ++i) c[i] = next[i];
  }
  return true;
}

std::vector<std::complex<double>> PredictorPoles(std::span<const double> a) {
  const int p = static_cast<int>(a.size());
  if (p == 0) return {};
  Eigen::MatrixXd companion = Eigen::MatrixXd::Zero(p, p);
  for (int j = 0; j < p; ++j) companion(0, j) = a[j];
  for (int j = 1; j < p; ++j) companion(j, j - 1) = 1.0;
  Eigen::EigenSolver<Eigen::MatrixXd> solver(companion, false);
  std::vector<std::complex<double>> poles(p);
  for (int j = 0; j < p; ++j) poles[j] = solver.eigenvalues()[j];
  return poles;
}

double MaxPoleModulus(std::span<const double> a) {
  double max_mod = 0.0;
  for (const auto& pole : PredictorPoles(a)) max_mod = std::max(max_mod, std::abs(pole));
  return max_mod;
}

}  // namespace texgen::lpc
