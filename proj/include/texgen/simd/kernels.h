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

#ifndef TEXGEN_SIMD_KERNELS_H_
#define TEXGEN_SIMD_KERNELS_H_

#include <cstddef>

// Data-parallel inner loops. Every kernel has a portable scalar reference and,
// where the CPU supports it, an AVX2+FMA variant picked at startup. The two
// variants differ only in summation order; tests pin them against each other.
//
// Set TEXGEN_SIMD=scalar in the environment to force the reference path.

namespace texgen::simd {

struct KernelSet {
  const char* name;

  double (*dot)(const double* a, const double* b, std::size_t n);
  // y += alpha * x
  void (*axpy)(double alpha, const double* x, double* y, std::size_t n);
  double (*squared_distance)(const double* a, const double* b, std::size_t n);
  // C[m x n] = (accumulate ? C : 0) + A[m x k] * B[k x n], all row-major.
  void (*gemm)(std::size_t m, std::size_t n, std::size_t k, const double* a,
               std::size_t lda, const double* b, std::size_t ldb, double* c,
               std::size_t ldc, bool accumulate);
};

const KernelSet& ScalarKernels();

// nullptr when the running CPU lacks AVX2/FMA or the build excluded it.
const KernelSet* Avx2Kernels();

// The set chosen for this process.
const KernelSet& ActiveKernels();

inline double Dot(const double* a, const double* b, std::size_t n) {
  return ActiveKernels().dot(a, b, n);
}

inline void Axpy(double alpha, const double* x, double* y, std::size_t n) {
  ActiveKernels().axpy(alpha, x, y, n);
}

inline double SquaredDistance(const double* a, const double* b,
                              std::size_t n) {
  return ActiveKernels().squared_distance(a, b, n);
}

inline void Gemm(std::size_t m, std::size_t n, std::size_t k, const double* a,
                 std::size_t lda, const double* b, std::size_t ldb, double* c,
                 std::size_t ldc, bool accumulate) {
  ActiveKernels().gemm(m, n, k, a, lda, b, ldb, c, ldc, accumulate);
}

// out[cols x rows] = transpose(in[rows x cols]).
void Transpose(std::size_t rows, std::size_t cols, const double* in,
               double* out);

}  // namespace texgen::simd

#endif  // TEXGEN_SIMD_KERNELS_H_
