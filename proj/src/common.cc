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

#include "texgen/common.h"

namespace texgen {

const char* ErrorCodeName(ErrorCode code) {
  switch (code) {
    case ErrorCode::kNotFound: return "NotFound";
    case ErrorCode::kFormatError: return "FormatError";
    case ErrorCode::kIoError: return "IoError";
    case ErrorCode::kInvalidArgument: return "InvalidArgument";
    case ErrorCode::kInsufficientClasses: return "InsufficientClasses";
    case ErrorCode::kInvalidLsf: return "InvalidLsf";
    case ErrorCode::kUnstablePolynomial: return "UnstablePolynomial";
    case ErrorCode::kNonFiniteInput: return "NonFiniteInput";
    case ErrorCode::kDegenerateGrid: return "DegenerateGrid";
    case ErrorCode::kInvalidScript: return "InvalidScript";
    case ErrorCode::kZeroVector: return "ZeroVector";
    case ErrorCode::kShapeError: return "ShapeError";
    case ErrorCode::kBatchTooSmall: return "BatchTooSmall";
    case ErrorCode::kNonFiniteGradient: return "NonFiniteGradient";
    case ErrorCode::kModelNotReady: return "ModelNotReady";
    case ErrorCode::kEmptyIndex: return "EmptyIndex";
    case ErrorCode::kDegenerateAxis: return "DegenerateAxis";
    case ErrorCode::kEmptyInput: return "EmptyInput";
    case ErrorCode::kDegenerateInput: return "DegenerateInput";
    case ErrorCode::kEmbeddingNotFound: return "EmbeddingNotFound";
  }
  return "Unknown";
}

}  // namespace texgen
