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

#include <gtest/gtest.h>

#include "test_util.hpp"

namespace auditor {
namespace {

using testing::CodeOf;

PatchSet ThreePatches() {
  PatchSet set;
  set.cls = {1, "person", ""};
  for (int i = 0; i < 3; ++i) {
    Patch p;
    p.patch_id = std::string(1, static_cast<char>('a' + i));
    p.cls = set.cls;
    p.bbox = {0, 0, 10, 10};
    p.crop = testing::MakeImage(10, 10, static_cast<std::uint8_t>(i));
    p.content_hash = ContentHash(p.crop);
    set.patches.push_back(p);
  }
  return set;
}

TEST(ClassifyTest, ErrorsAreThePatchesWithoutSurvivingBoxes) {
  const PatchSet set = ThreePatches();
  std::map<std::string, double> score = {{set.patches[0].content_hash, 0.9},
                                         {set.patches[1].content_hash, 0.2},
                                         {set.patches[2].content_hash, 0.35}};
  auto t = std::make_unique<testing::FakeTransport>();
  t->handler = [&](const OracleRequest& req) {
    return Json{{"model_id", "d"},
                {"boxes", Json::array({{{"x0", 0}, {"y0", 0}, {"x1", 5}, {"y1", 5},
                                        {"score", score.at(req.content_hash)}, {"label", "person"}}})}};
  };
  OracleConfig cfg;
  cfg.detector_id = "det";
  Oracle oracle(cfg, std::move(t), std::nullopt);
  const DetectionOutcome out = ClassifyPrecisionErrors(set, oracle, 3);
  EXPECT_EQ(out.errors.error_patch_ids, (std::vector<std::string>{"b", "c"}));
  EXPECT_EQ(out.errors.detector_id, "det");
  EXPECT_EQ(out.detections.size(), 3u);
  EXPECT_TRUE(out.errors.Contains("c"));
  EXPECT_FALSE(out.errors.Contains("a"));
}

TEST(ClassifyTest, OracleFailureIsNeverAnEmptyDetection) {
  const PatchSet set = ThreePatches();
  auto t = std::make_unique<testing::FakeTransport>();
  t->handler = [](const OracleRequest&) -> Json { Fail(ErrorCode::kOracleUnavailable, "x"); };
  Oracle oracle(OracleConfig{}, std::move(t), std::nullopt);
  try {
    ClassifyPrecisionErrors(set, oracle);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kOracleUnavailable);
    EXPECT_NE(std::string(e.what()).find("patch a"), std::string::npos);
  }
}

TEST(ErrorSetJsonTest, RoundTripAndSortedIds) {
  ErrorPatchSet s;
  s.cls = {2, "bike", ""};
  s.error_patch_ids = {"a", "b"};
  s.detector_id = "d";
  s.box_threshold = 0.35;
  s.text_threshold = 0.25;
  const Json j = ErrorPatchSetToJson(s);
  EXPECT_EQ(Canonical(ErrorPatchSetToJson(ErrorPatchSetFromJson(j))), Canonical(j));
  Json bad = j;
  bad["error_patch_ids"] = {"b", "a"};
  EXPECT_EQ(CodeOf([&] { ErrorPatchSetFromJson(bad); }), ErrorCode::kIo);
}

}  // namespace
}  // namespace auditor
