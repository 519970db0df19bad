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

#ifndef TEXGEN_LPC_H_
#define TEXGEN_LPC_H_

#include <array>
#include <complex>
#include <span>
#include <vector>

#include "texgen/common.h"

// Line spectral frequency <-> autoregressive predictor conversion.
//
// Convention: the AR recursion is y[n] = sum_k a_k y[n-k] + e[n], so the
// inverse filter is A(z) = 1 - sum_k a_k z^-k. For order p the sum and
// difference polynomials
//   P(z) = A(z) + z^-(p+1) A(1/z),   Q(z) = A(z) - z^-(p+1) A(1/z)
// have interlaced unit-circle roots; the odd-indexed LSFs (1st, 3rd, ...) are
// the root angles of P and the even-indexed ones those of Q. Trivial roots at
// z = +-1 are not part of the vector.
//
// Functions taking spans work for any order up to kMaxLpcOrder and never
// allocate; they are safe inside the servo tick.
namespace texgen::lpc {

inline constexpr int kMaxLpcOrder = 31;

using LsfVector = std::array<double, kArOrder>;

struct ArCoeffs {
  std::array<double, kArOrder> a{};
  double variance = 0.0;
};

// Throws Error(kInvalidLsf) unless lsf is finite, strictly ascending with gaps
// >= kLsfMinGap, and inside (0, kLsfUpper].
void ValidateLsf(std::span<const double> lsf);

// Equally spaced LSFs i*pi/(p+1), the LSFs of A(z) = 1.
void FlatLsf(std::span<double> lsf);

// Converts LSFs to predictor coefficients a_1..a_p. When the result would have
// a pole closer than kStabilityMargin to the unit circle, the LSFs are pulled
// toward uniform spacing until the margin holds.
void LsfToPredictor(std::span<const double> lsf, std::span<double> a);

ArCoeffs LsfToAr(const LsfVector& lsf, double variance = 0.0);

// Inverse of LsfToPredictor. Throws Error(kUnstablePolynomial) when A(z) has a
// pole with modulus > 1 - kStabilityMargin.
void PredictorToLsf(std::span<const double> a, std::span<double> lsf);

LsfVector ArToLsf(const ArCoeffs& ar);

// Decoder-side mapping from unconstrained logits to a valid LSF vector:
// softmax, cumulative sum, scale by pi*p/(p+1), clamp at kLsfUpper. Throws
// Error(kNonFiniteInput) on NaN/inf.
void ProjectToLsf(std::span<const double> logits, std::span<double> lsf);

LsfVector ProjectToLsf(std::span<const double> logits);

// Nudges a nearly valid vector into the valid set: entries clamped to
// [kLsfMinGap, kLsfUpper] with consecutive gaps >= kLsfMinGap.
void EnforceLsfSpacing(std::span<double> lsf);

// Step-down (reflection coefficient) test on the radius-scaled polynomial:
// true iff every pole of 1/A(z) has modulus < 1 - margin.
bool IsStable(std::span<const double> a, double margin = kStabilityMargin);

// Poles of 1/A(z) as eigenvalues of the companion matrix. Allocates.
std::vector<std::complex<double>> PredictorPoles(std::span<const double> a);

double MaxPoleModulus(std::span<const double> a);

}  // namespace texgen::lpc

#endif  // TEXGEN_LPC_H_
