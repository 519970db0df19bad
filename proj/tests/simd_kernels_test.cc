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

#include "texgen/simd/kernels.h"

#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <vector>

namespace texgen::simd {
namespace {

std::vector<double> RandomVector(std::size_t n, std::mt19937_64& rng) {
  std::normal_distribution<double> g(0.0, 1.0);
  std::vector<double> v(n);
  for (double& x : v) x = g(rng);
  return v;
}

// Plain triple loop, independent of both kernel variants.
std::vector<double> NaiveGemm(std::size_t m, std::size_t n, std::size_t k,
                              const std::vector<double>& a,
                              const std::vector<double>& b) {
  std::vector<double> c(m * n, 0.0);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      long double s = 0;
      for (std::size_t p = 0; p < k; ++p) s += (long double)a[i * k + p] * b[p * n + j];
      c[i * n + j] = static_cast<double>(s);
    }
  return c;
}

std::vector<const KernelSet*> AllSets() {
  std::vector<const KernelSet*> sets{&ScalarKernels()};
  if (const KernelSet* avx2 = Avx2Kernels()) sets.push_back(avx2);
  return sets;
}

TEST(SimdKernels, ActiveSetIsOneOfTheVariants) {
  const KernelSet& active = ActiveKernels();
  bool found = false;
  for (const KernelSet* s : AllSets()) found |= (s == &active);
  EXPECT_TRUE(found) << active.name;
}

TEST(SimdKernels, VectorKernelsAgreeAcrossVariants) {
  std::mt19937_64 rng(7);
  for (std::size_t n : {0u, 1u, 3u, 4u, 5u, 7u, 8u, 9u, 21u, 64u, 511u, 1300u}) {
    const auto a = RandomVector(n, rng);
    const auto b = RandomVector(n, rng);
    long double dot_ref = 0, dist_ref = 0;
    for (std::size_t i = 0; i < n; ++i) {
      dot_ref += (long double)a[i] * b[i];
      dist_ref += (long double)(a[i] - b[i]) * (a[i] - b[i]);
    }
    for (const KernelSet* set : AllSets()) {
      SCOPED_TRACE(std::string(set->name) + " n=" + std::to_string(n));
      EXPECT_NEAR(set->dot(a.data(), b.data(), n), (double)dot_ref, 1e-12 * (n + 1));
      EXPECT_NEAR(set->squared_distance(a.data(), b.data(), n), (double)dist_ref,
                  1e-12 * (n + 1));
      auto y = b;
      set->axpy(0.75, a.data(), y.data(), n);
      for (std::size_t i = 0; i < n; ++i) EXPECT_NEAR(y[i], b[i] + 0.75 * a[i], 1e-15);
    }
  }
}

TEST(SimdKernels, GemmMatchesNaiveOnRaggedShapes) {
  std::mt19937_64 rng(11);
  const std::size_t shapes[][3] = {{1, 1, 1},  {3, 5, 2},   {4, 8, 16}, {5, 9, 7},
                                   {32, 64, 396}, {13, 100, 3}, {7, 13, 64}, {32, 1300, 33}};
  for (const auto& s : shapes) {
    const std::size_t m = s[0], n = s[1], k = s[2];
    const auto a = RandomVector(m * k, rng);
    const auto b = RandomVector(k * n, rng);
    const auto ref = NaiveGemm(m, n, k, a, b);
    for (const KernelSet* set : AllSets()) {
      SCOPED_TRACE(std::string(set->name) + " " + std::to_string(m) + "x" +
                   std::to_string(n) + "x" + std::to_string(k));
      std::vector<double> c(m * n, 123.0);
      set->gemm(m, n, k, a.data(), k, b.data(), n, c.data(), n, false);
      for (std::size_t i = 0; i < m * n; ++i) ASSERT_NEAR(c[i], ref[i], 1e-11 * (k + 1));
      // Accumulating a second product doubles the result.
      set->gemm(m, n, k, a.data(), k, b.data(), n, c.data(), n, true);
      for (std::size_t i = 0; i < m * n; ++i) ASSERT_NEAR(c[i], 2 * ref[i], 2e-11 * (k + 1));
    }
  }
}

TEST(SimdKernels, GemmHonorsLeadingDimensions) {
  std::mt19937_64 rng(3);
  const std::size_t m = 5, n = 10, k = 6, lda = 9, ldb = 13, ldc = 17;
  const auto a = RandomVector(m * lda, rng);
  const auto b = RandomVector(k * ldb, rng);
  for (const KernelSet* set : AllSets()) {
    std::vector<double> c(m * ldc, -1.0);
    set->gemm(m, n, k, a.data(), lda, b.data(), ldb, c.data(), ldc, false);
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        double s = 0;
        for (std::size_t p = 0; p < k; ++p) s += a[i * lda + p] * b[p * ldb + j];
        EXPECT_NEAR(c[i * ldc + j], s, 1e-12);
      }
      for (std::size_t j = n; j < ldc; ++j) EXPECT_EQ(c[i * ldc + j], -1.0) << "padding touched";
    }
  }
}

TEST(SimdKernels, TransposeRoundTrip) {
  std::mt19937_64 rng(5);
  const auto a = RandomVector(37 * 70, rng);
  std::vector<double> t(a.size()), back(a.size());
  Transpose(37, 70, a.data(), t.data());
  EXPECT_EQ(t[5 * 37 + 3], a[3 * 70 + 5]);
  Transpose(70, 37, t.data(), back.data());
  EXPECT_EQ(back, a);
}

}  // namespace
}  // namespace texgen::simd
