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

#ifndef TEXGEN_SRC_SIMD_KERNELS_INTERNAL_H_
#define TEXGEN_SRC_SIMD_KERNELS_INTERNAL_H_

#include "texgen/simd/kernels.h"

namespace texgen::simd {

#if defined(TEXGEN_HAVE_AVX2)
// Defined in kernels_avx2.cc; only valid on CPUs with AVX2 and FMA.
const KernelSet& Avx2KernelSet();
#endif

}  // namespace texgen::simd

#endif  // TEXGEN_SRC_SIMD_KERNELS_INTERNAL_H_
