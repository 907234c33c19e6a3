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

#ifndef AUDITOR_ERROR_DETECTION_HPP_
#define AUDITOR_ERROR_DETECTION_HPP_

#include <string>
#include <vector>

#include "auditor/oracle.hpp"
#include "auditor/patch_extraction.hpp"

namespace auditor {

// Patches of one class on which the detector found nothing.
struct ErrorPatchSet {
  SemanticClass cls;
  std::vector<std::string> error_patch_ids;  // ascending
  std::string detector_id;
  double box_threshold = 0.0;
  double text_threshold = 0.0;

  bool Contains(const std::string& patch_id) const;
};

Json ErrorPatchSetToJson(const ErrorPatchSet& set);
ErrorPatchSet ErrorPatchSetFromJson(const Json& j);

struct DetectionOutcome {
  ErrorPatchSet errors;
  std::vector<DetectionResult> detections;  // one per patch, patch_id order
};

// A patch is a precision error iff no box survives the configured
// thresholds. Oracle failures propagate with the patch id; they never count
// as an empty detection.
DetectionOutcome ClassifyPrecisionErrors(const PatchSet& patches, Oracle& oracle,
                                         std::size_t workers = 1);

}  // namespace auditor

#endif  // AUDITOR_ERROR_DETECTION_HPP_
