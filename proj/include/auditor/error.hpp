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

#ifndef AUDITOR_ERROR_HPP_
#define AUDITOR_ERROR_HPP_

#include <stdexcept>
#include <string>
#include <string_view>

namespace auditor {

// Every failure the library reports. Values are stable: the C API exposes
// them verbatim as auditor_status.
enum class ErrorCode : int {
  kOk = 0,
  kInvalidArgument = 1,
  kConfig = 2,
  kConfigMismatch = 3,
  kIo = 4,
  kImageLoad = 5,
  kCorruptManifest = 6,
  kRejectedEmptyManifest = 7,
  kOracleUnavailable = 8,
  kOracleRejected = 9,
  kFixtureMiss = 10,
  kBadResponse = 11,
  kDimensionMismatch = 12,
  kSpaceMismatch = 13,
  kZeroVector = 14,
  kEmptyErrorSet = 15,
  kUnknownQueryId = 16,
  kEmptyNeighborhood = 17,
  kSingletonErrorSet = 18,
  kMissingGroundTruth = 19,
  kEmptyCounts = 20,
  kDuplicateVerdict = 21,
  kInvalidVerdict = 22,
  kUncoveredPrediction = 23,
  kStageDependencyMissing = 24,
  kRunLocked = 25,
  kInternal = 26,
};

std::string_view ErrorCodeName(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(ErrorCodeName(code)) + ": " + message),
        code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void Fail(ErrorCode code, const std::string& message) {
  throw Error(code, message);
}

// Rethrows `e` with `context` prepended, keeping the code.
[[noreturn]] void Rethrow(const Error& e, const std::string& context);

}  // namespace auditor

#endif  // AUDITOR_ERROR_HPP_
