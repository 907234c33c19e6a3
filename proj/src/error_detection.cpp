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

#include "auditor/error_detection.hpp"

#include <algorithm>

#include "auditor/error.hpp"
#include "auditor/parallel.hpp"

namespace auditor {

bool ErrorPatchSet::Contains(const std::string& patch_id) const {
  return std::binary_search(error_patch_ids.begin(), error_patch_ids.end(),
                            patch_id);
}

Json ErrorPatchSetToJson(const ErrorPatchSet& set) {
  return Json{{"class", set.cls.name},
              {"class_index", set.cls.index},
              {"detector_id", set.detector_id},
              {"box_threshold", set.box_threshold},
              {"text_threshold", set.text_threshold},
              {"error_patch_ids", set.error_patch_ids}};
}

ErrorPatchSet ErrorPatchSetFromJson(const Json& j) {
  ErrorPatchSet set;
  try {
    set.cls.name = j.at("class").get<std::string>();
    set.cls.index = j.at("class_index").get<int>();
    set.detector_id = j.at("detector_id").get<std::string>();
    set.box_threshold = j.at("box_threshold").get<double>();
    set.text_threshold = j.at("text_threshold").get<double>();
    set.error_patch_ids =
        j.at("error_patch_ids").get<std::vector<std::string>>();
  } catch (const Json::exception& e) {
    Fail(ErrorCode::kIo, std::string("error set: ") + e.what());
  }
  if (!std::is_sorted(set.error_patch_ids.begin(), set.error_patch_ids.end())) {
    Fail(ErrorCode::kIo, "error set ids are not sorted");
  }
  return set;
}

DetectionOutcome ClassifyPrecisionErrors(const PatchSet& patches,
                                         Oracle& oracle, std::size_t workers) {
  DetectionOutcome out;
  out.detections.resize(patches.patches.size());
  ParallelFor(patches.patches.size(), workers, [&](std::size_t i) {
    const Patch& p = patches.patches[i];
    try {
      out.detections[i] = oracle.Detect(p, patches.cls);
    } catch (const Error& e) {
      Rethrow(e, "patch " + p.patch_id);
    }
  });
  const OracleConfig& cfg = oracle.config();
  out.errors.cls = patches.cls;
  out.errors.detector_id = cfg.detector_id;
  out.errors.box_threshold = cfg.box_threshold;
  out.errors.text_threshold = cfg.text_threshold;
  for (const auto& d : out.detections) {
    if (d.boxes.empty()) out.errors.error_patch_ids.push_back(d.patch_id);
  }
  // PatchSet order is already ascending by id.
  return out;
}

}  // namespace auditor
