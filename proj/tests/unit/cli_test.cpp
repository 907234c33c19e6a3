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

#include <gtest/gtest.h>

#include <cstdlib>

#include "auditor/fs_util.hpp"
#include "auditor/json_util.hpp"
#include "test_util.hpp"

namespace auditor {
namespace {

using testing::FixtureDir;
using testing::RunCli;

std::string Q(const fs::path& p) { return "'" + p.string() + "'"; }

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override { ::unsetenv("AUDITOR_CACHE_DIR"); }
  fs::path Run() const { return dir_.path() / "run"; }
  testing::TempDir dir_;
};

TEST_F(CliTest, RunSucceeds) {
  const auto r = RunCli("run --config " + Q(FixtureDir() / "config.json") + " --run-dir " + Q(Run()));
  EXPECT_EQ(r.exit_code, 0) << r.output;
  EXPECT_TRUE(testing::FilesEqual(Run() / "systematic.json", FixtureDir() / "golden" / "systematic.json"));
}

TEST_F(CliTest, ConfigErrorsExitTwo) {
  WriteFileAtomic(dir_.path() / "bad.json", std::string("{\"manifest\": 3}"));
  EXPECT_EQ(RunCli("run --config " + Q(dir_.path() / "bad.json") + " --run-dir " + Q(Run())).exit_code, 2);
  EXPECT_EQ(RunCli("run --config " + Q(dir_.path() / "missing.json")).exit_code, 2);
  EXPECT_EQ(RunCli("run --no-such-flag").exit_code, 2);
}

TEST_F(CliTest, ConfigMismatchExitsTwo) {
  ASSERT_EQ(RunCli("run --config " + Q(FixtureDir() / "config.json") + " --run-dir " + Q(Run())).exit_code, 0);
  const auto r = RunCli("run --config " + Q(FixtureDir() / "config_dispersed.json") + " --run-dir " + Q(Run()));
  EXPECT_EQ(r.exit_code, 2) << r.output;
}

TEST_F(CliTest, OracleFailureExitsThree) {
  Json cfg = ReadJsonFile(FixtureDir() / "config.json");
  cfg["oracle"]["fixture_dir"] = (dir_.path() / "empty").string();
  cfg["manifest"] = (FixtureDir() / "data" / "manifest.jsonl").string();
  cfg["verdicts_dir"] = (FixtureDir() / "verdicts").string();
  WriteFileAtomic(dir_.path() / "c.json", cfg.dump());
  const auto r = RunCli("run --config " + Q(dir_.path() / "c.json") + " --run-dir " + Q(Run()));
  EXPECT_EQ(r.exit_code, 3) << r.output;
}

TEST_F(CliTest, MissingDependencyExitsFour) {
  ASSERT_EQ(RunCli("stage extract --config " + Q(FixtureDir() / "config.json") + " --run-dir " + Q(Run())).exit_code, 0);
  const auto r = RunCli("stage score --run-dir " + Q(Run()));
  EXPECT_EQ(r.exit_code, 4) << r.output;
  EXPECT_EQ(RunCli("review --run-dir " + Q(Run())).exit_code, 4);
}

TEST_F(CliTest, StagesOneByOneMatchRun) {
  const std::string cfg = " --config " + Q(FixtureDir() / "config.json");
  for (const char* s : {"extract", "detect", "embed", "caption", "score", "evaluate", "report"}) {
    const auto r = RunCli(std::string("stage ") + s + " --run-dir " + Q(Run()) + cfg);
    ASSERT_EQ(r.exit_code, 0) << s << ": " << r.output;
  }
  EXPECT_TRUE(testing::FilesEqual(Run() / "eval" / "metrics.json", FixtureDir() / "golden" / "metrics.json"));
  const auto again = RunCli("stage detect --run-dir " + Q(Run()));
  EXPECT_NE(again.output.find("up to date"), std::string::npos) << again.output;
}

TEST_F(CliTest, VerdictAggregation) {
  const auto r = RunCli("verdicts aggregate --verdicts-dir " + Q(FixtureDir() / "verdicts") +
                        " --panel ann_a,ann_b,ann_c");
  ASSERT_EQ(r.exit_code, 0) << r.output;
  const Json j = ParseJson(r.output, "cli output");
  EXPECT_EQ(j.at("panel").size(), 3u);
  EXPECT_TRUE(j.at("incomplete").empty());
  const Json golden = ReadJsonFile(FixtureDir() / "golden" / "metrics.json").at("verdicts");
  for (const auto& [id, v] : golden.at("verdicts").items()) EXPECT_EQ(j.at("verdicts").at(id), v) << id;
}

TEST_F(CliTest, EvaluateWithGroundTruthManifest) {
  ASSERT_EQ(RunCli("run --config " + Q(FixtureDir() / "config.json") + " --run-dir " + Q(Run())).exit_code, 0);
  // Point img05 at its own prediction map: its patches become evaluable.
  const fs::path data = FixtureDir() / "data";
  WriteFileAtomic(dir_.path() / "gt.jsonl",
                  Canonical(Json{{"image_id", "img05"},
                                 {"gt_map_path", (data / "pred" / "img05.png").string()}}) + "\n");
  const auto r = RunCli("evaluate --run-dir " + Q(Run()) + " --gt-manifest " + Q(dir_.path() / "gt.jsonl"));
  ASSERT_EQ(r.exit_code, 0) << r.output;
  const Json m = ReadJsonFile(Run() / "eval" / "metrics.json");
  EXPECT_TRUE(m.at("excluded_no_ground_truth").empty());
}

TEST_F(CliTest, ReportAndReviewQueue) {
  ASSERT_EQ(RunCli("run --config " + Q(FixtureDir() / "config.json") + " --run-dir " + Q(Run())).exit_code, 0);
  EXPECT_EQ(RunCli("report --run-dir " + Q(Run())).exit_code, 0);
  const std::string html = ReadFile(Run() / "report" / "index.html");
  EXPECT_NE(html.find("data:image/png;base64,"), std::string::npos);
  const auto r = RunCli("review --run-dir " + Q(Run()));
  EXPECT_EQ(r.exit_code, 0) << r.output;
  EXPECT_EQ(ReadJsonFile(Run() / "review" / "queue.json").at("count"), 5);
}

TEST_F(CliTest, CacheDirFromEnvironment) {
  const fs::path cache = dir_.path() / "envcache";
  const std::string cmd = "AUDITOR_CACHE_DIR=" + Q(cache) + " '" + AUDITOR_CLI_PATH + "' run --config " +
                          Q(FixtureDir() / "config.json") + " --run-dir " + Q(Run()) + " >/dev/null 2>&1";
  ASSERT_EQ(std::system(cmd.c_str()), 0);
  EXPECT_TRUE(fs::exists(cache / "detect"));
  EXPECT_FALSE(fs::exists(Run() / "cache"));
}

TEST_F(CliTest, SweepWritesTables) {
  const auto r = RunCli("sweep --config " + Q(FixtureDir() / "config.json") + " --run-dir " + Q(Run()) +
                        " --min-sizes 60 --qs 3,5 --out " + Q(dir_.path() / "sw"));
  ASSERT_EQ(r.exit_code, 0) << r.output;
  const std::string csv = ReadFile(dir_.path() / "sw" / "tables.csv");
  EXPECT_NE(csv.find("a60_q5/systematic_errors,synthetic,person,80.00"), std::string::npos) << csv;
}

}  // namespace
}  // namespace auditor
