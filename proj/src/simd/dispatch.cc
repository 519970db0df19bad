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

#include <cstdlib>
#include <cstring>

#include "simd/kernels_internal.h"

namespace texgen::simd {
namespace {

bool CpuHasAvx2() {
#if defined(TEXGEN_HAVE_AVX2) && (defined(__GNUC__) || defined(__clang__))
  __builtin_cpu_init();
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

const KernelSet& Select() {
  const char* forced = std::getenv("TEXGEN_SIMD");
  if (forced != nullptr && std::strcmp(forced, "scalar") == 0) {
    return ScalarKernels();
  }
  if (const KernelSet* avx2 = Avx2Kernels()) return *avx2;
  return ScalarKernels();
}

}  // namespace

const KernelSet* Avx2Kernels() {
#if defined(TEXGEN_HAVE_AVX2)
  static const bool supported = CpuHasAvx2();
  return supported ? &Avx2KernelSet() : nullptr;
#else
  return nullptr;
#endif
}

const KernelSet& ActiveKernels() {
  static const KernelSet& active = Select();
  return active;
}

void Transpose(std::size_t rows, std::size_t cols, const double* in,
               double* out) {
  constexpr std::size_t kBlock = 32;
  for (std::size_t i0 = 0; i0 < rows; i0 += kBlock) {
    const std::size_t i1 = i0 + kBlock < rows ? i0 + kBlock : rows;
    for (std::size_t j0 = 0; j0 < cols; j0 += kBlock) {
      const std::size_t j1 = j0 + kBlock < cols ? j0 + kBlock : cols;
      for (std::size_t i = i0; i < i1; ++i) {
        for (std::size_t j = j0; j < j1; ++j) out[j * rows + i] = in[i * cols + j];
      }
    }
  }
}

}  // namespace texgen::simd
