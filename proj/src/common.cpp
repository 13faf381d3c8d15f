// Copyright 2026 The occtrack Authors
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

#include "occtrack/common.hpp"

namespace occtrack {

const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kUsage: return "UsageError";
    case ErrorCode::kInfeasibleGeometry: return "InfeasibleGeometry";
    case ErrorCode::kDegenerateSum: return "DegenerateSum";
    case ErrorCode::kZeroVector: return "ZeroVector";
    case ErrorCode::kAssumptionViolated: return "AssumptionViolated";
    case ErrorCode::kSingularInnovation: return "SingularInnovation";
    case ErrorCode::kEmptyLogs: return "EmptyLogs";
    case ErrorCode::kNoEligibleSteps: return "NoEligibleSteps";
    case ErrorCode::kSamplingExhausted: return "SamplingExhausted";
    case ErrorCode::kNoPath: return "NoPath";
    case ErrorCode::kNonFiniteLoss: return "NonFiniteLoss";
    case ErrorCode::kNonFiniteOutput: return "NonFiniteOutput";
    case ErrorCode::kFormat: return "FormatError";
    case ErrorCode::kIo: return "IoError";
  }
  return "Error";
}

}  // namespace occtrack
