/* Copyright 2026 The Auditor Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#include "auditor/error.hpp"

namespace auditor {

std::string_view ErrorCodeName(ErrorCode code) {
  switch (code) {
    case ErrorCode::kOk: return "Ok";
    case ErrorCode::kInvalidArgument: return "InvalidArgument";
    case ErrorCode::kConfig: return "ConfigError";
    case ErrorCode::kConfigMismatch: return "ConfigMismatch";
    case ErrorCode::kIo: return "IoError";
    case ErrorCode::kImageLoad: return "ImageLoadError";
    case ErrorCode::kCorruptManifest: return "CorruptManifest";
    case ErrorCode::kRejectedEmptyManifest: return "RejectedEmptyManifest";
    case ErrorCode::kOracleUnavailable: return "OracleUnavailable";
    case ErrorCode::kOracleRejected: return "OracleRejected";
    case ErrorCode::kFixtureMiss: return "FixtureMiss";
    case ErrorCode::kBadResponse: return "BadResponse";
    case ErrorCode::kDimensionMismatch: return "DimensionMismatch";
    case ErrorCode::kSpaceMismatch: return "SpaceMismatch";
    case ErrorCode::kZeroVector: return "ZeroVector";
    case ErrorCode::kEmptyErrorSet: return "EmptyErrorSet";
    case ErrorCode::kUnknownQueryId: return "UnknownQueryId";
    case ErrorCode::kEmptyNeighborhood: return "EmptyNeighborhood";
    case ErrorCode::kSingletonErrorSet: return "SingletonErrorSet";
    case ErrorCode::kMissingGroundTruth: return "MissingGroundTruth";
    case ErrorCode::kEmptyCounts: return "EmptyCounts";
    case ErrorCode::kDuplicateVerdict: return "DuplicateVerdict";
    case ErrorCode::kInvalidVerdict: return "InvalidVerdict";
    case ErrorCode::kUncoveredPrediction: return "UncoveredPrediction";
    case ErrorCode::kStageDependencyMissing: return "StageDependencyMissing";
    case ErrorCode::kRunLocked: return "RunLocked";
    case ErrorCode::kInternal: return "InternalError";
  }
  return "Unknown";
}

void Rethrow(const Error& e, const std::string& context) {
  // what() already carries the code name; strip it so it is not repeated.
  std::string what = e.what();
  const std::string prefix = std::string(ErrorCodeName(e.code())) + ": ";
  if (what.rfind(prefix, 0) == 0) what.erase(0, prefix.size());
  throw Error(e.code(), context + ": " + what);
}

}  // namespace auditor
