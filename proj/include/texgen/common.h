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

#ifndef TEXGEN_COMMON_H_
#define TEXGEN_COMMON_H_

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace texgen {

// Fixed tensor geometry shared by every material.
inline constexpr int kArOrder = 21;
inline constexpr int kNumConditions = 18;
inline constexpr int kArChannels = kArOrder + 1;  // LSFs + excitation variance
inline constexpr int kArTensorSize = kNumConditions * kArChannels;  // 396
inline constexpr int kNumTapTraces = 13;
inline constexpr int kTapSamples = 100;
inline constexpr int kTapTensorSize = kNumTapTraces * kTapSamples;  // 1300
inline constexpr int kLatentDim = 64;
inline constexpr int kTextDim = 512;
inline constexpr double kSignalRateHz = 10000.0;

inline constexpr double kPi = 3.14159265358979323846;
// Upper clamp for any LSF value.
inline constexpr double kLsfUpper = kPi - 1e-4;
// Minimum spacing between consecutive LSFs.
inline constexpr double kLsfMinGap = 1e-9;
// Required pole-modulus margin: every pole satisfies |p| <= 1 - kStabilityMargin.
inline constexpr double kStabilityMargin = 1e-9;

enum class ErrorCode {
  kNotFound,
  kFormatError,
  kIoError,
  kInvalidArgument,
  kInsufficientClasses,
  kInvalidLsf,
  kUnstablePolynomial,
  kNonFiniteInput,
  kDegenerateGrid,
  kInvalidScript,
  kZeroVector,
  kShapeError,
  kBatchTooSmall,
  kNonFiniteGradient,
  kModelNotReady,
  kEmptyIndex,
  kDegenerateAxis,
  kEmptyInput,
  kDegenerateInput,
  kEmbeddingNotFound,
};

// Stable, machine-readable name ("FormatError", "ZeroVector", ...).
const char* ErrorCodeName(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace texgen

#endif  // TEXGEN_COMMON_H_
