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

#include "auditor/pipeline.hpp"

#include <gtest/gtest.h>

#include <cstdlib>

#include "test_util.hpp"

namespace auditor {
namespace {

using testing::CodeOf;
using testing::FilesEqual;
using testing::FixtureDir;

class PipelineTest : public ::testing::Test {
 protected:
  void SetUp() override { ::unsetenv("AUDITOR_CACHE_DIR"); }

  RunConfig Config(const std::string& name = "config.json") {
    RunConfig cfg = LoadRunConfig(FixtureDir() / name);
    cfg.run_dir = dir_.path() / "run";
    return cfg;
  }

  testing::TempDir dir_;
};

TEST_F(PipelineTest, FixtureRunMatchesGoldens) {
  auto p = Pipeline::Open(Config());
  p->RunAll();
  const fs::path run = p->config().run_dir;
  const fs::path golden = FixtureDir() / "golden";
  EXPECT_TRUE(FilesEqual(run / "errors.json", golden / "errors.json"));
  EXPECT_TRUE(FilesEqual(run / "scores.jsonl", golden / "scores.jsonl"));
  EXPECT_TRUE(FilesEqual(run / "systematic.json", golden / "systematic.json"));
  EXPECT_TRUE(FilesEqual(run / "eval" / "metrics.json", golden / "metrics.json"));
  EXPECT_TRUE(FilesEqual(run / "report" / "report.json", golden / "report.json"));
  for (const char* cls : {"person", "bicycle"}) {
    EXPECT_TRUE(FilesEqual(run / "patches" / cls / "metadata.jsonl",
                           golden / "patches" / cls / "metadata.jsonl"));
  }
}

TEST_F(PipelineTest, SecondRunSkipsEverythingWithoutOracleTraffic) {
  Pipeline::Open(Config())->RunAll();
  auto p = Pipeline::Open(Config());
  for (Stage s : kAllStages) {
    p->RunStage(s);
    EXPECT_TRUE(p->last_stage_skipped()) << StageName(s);
  }
  EXPECT_EQ(p->oracle_stats().transport_calls, 0u);
}

TEST_F(PipelineTest, StagesRefuseToRunOutOfOrder) {
  auto p = Pipeline::Open(Config());
  EXPECT_EQ(CodeOf([&] { p->RunStage(Stage::kScore); }), ErrorCode::kStageDependencyMissing);
  EXPECT_EQ(CodeOf([&] { p->RunStage(Stage::kDetect); }), ErrorCode::kStageDependencyMissing);
  p->RunStage(Stage::kExtract);
  p->RunStage(Stage::kDetect);
  EXPECT_EQ(CodeOf([&] { p->RunStage(Stage::kScore); }), ErrorCode::kStageDependencyMissing);
  p->RunStage(Stage::kEmbed);
  p->RunStage(Stage::kCaption);
  EXPECT_EQ(CodeOf([&] { p->RunStage(Stage::kScore); }), ErrorCode::kOk);
}

TEST_F(PipelineTest, TamperedOutputInvalidatesDownstream) {
  auto p = Pipeline::Open(Config());
  p->RunAll();
  const fs::path errors = p->config().run_dir / "errors.json";
  WriteFileAtomic(errors, ReadFile(errors) + " ");
  EXPECT_EQ(CodeOf([&] { p->RunStage(Stage::kEmbed); }), ErrorCode::kStageDependencyMissing);
  p->RunStage(Stage::kDetect);
  EXPECT_FALSE(p->last_stage_skipped());
  EXPECT_TRUE(FilesEqual(errors, FixtureDir() / "golden" / "errors.json"));
  p->RunStage(Stage::kEmbed);
  EXPECT_TRUE(p->last_stage_skipped());
}

TEST_F(PipelineTest, DifferentSemanticConfigIsRejected) {
  Pipeline::Open(Config())->RunStage(Stage::kExtract);
  RunConfig other = Config();
  other.scoring.alpha = 0.5;
  try {
    Pipeline::Open(other);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kConfigMismatch);
    EXPECT_NE(std::string(e.what()).find("alpha"), std::string::npos);
  }
  RunConfig tuning = Config();
  tuning.workers = 1;
  tuning.oracle.retries = 7;
  EXPECT_EQ(CodeOf([&] { Pipeline::Open(tuning); }), ErrorCode::kOk);
}

TEST_F(PipelineTest, RunDirectoryIsLocked) {
  auto p = Pipeline::Open(Config());
  EXPECT_EQ(CodeOf([&] { Pipeline::Open(Config()); }), ErrorCode::kRunLocked);
}

TEST_F(PipelineTest, OpenDirResumes) {
  Pipeline::Open(Config())->RunStage(Stage::kExtract);
  auto p = Pipeline::OpenDir(dir_.path() / "run");
  p->RunStage(Stage::kExtract);
  EXPECT_TRUE(p->last_stage_skipped());
  EXPECT_EQ(p->config().scoring.alpha, 0.35);
}

TEST_F(PipelineTest, VerdictChangesRerunEvaluate) {
  RunConfig cfg = Config();
  const fs::path vdir = dir_.path() / "verdicts";
  fs::copy(FixtureDir() / "verdicts", vdir);
  cfg.verdicts_dir = vdir;
  auto p = Pipeline::Open(cfg);
  p->RunAll();
  p->Evaluate({});
  EXPECT_TRUE(p->last_stage_skipped());
  // Dropping one evaluator's file leaves predicted patches without a full
  // panel, which evaluate must refuse to score.
  fs::remove(vdir / "ann_c.jsonl");
  EXPECT_EQ(CodeOf([&] { p->Evaluate({}); }), ErrorCode::kUncoveredPrediction);
  const Json state = ReadJsonFile(cfg.run_dir / "state.json");
  EXPECT_EQ(state.at("stages").at("evaluate").at("status"), "failed");
}

TEST_F(PipelineTest, NoVerdictsMeansNoSystematicTable) {
  RunConfig cfg = Config();
  cfg.verdicts_dir = dir_.path() / "empty";
  auto p = Pipeline::Open(cfg);
  p->RunAll();
  const Json m = ReadJsonFile(cfg.run_dir / "eval" / "metrics.json");
  EXPECT_TRUE(m.at("systematic").is_null());
  EXPECT_FALSE(m.at("precision_errors").is_null());
}

TEST_F(PipelineTest, DispersedErrorsYieldNoSystematicErrors) {
  auto p = Pipeline::Open(Config("config_dispersed.json"));
  p->RunAll();
  const Json report = ReadJsonFile(p->config().run_dir / "report" / "report.json");
  EXPECT_EQ(report.at("systematic_count"), 0);
  EXPECT_EQ(report.at("summary"), "No interpretable systematic errors were found.");
  EXPECT_TRUE(FilesEqual(p->config().run_dir / "report" / "report.json",
                         FixtureDir() / "golden_dispersed" / "report.json"));
}

TEST_F(PipelineTest, EmptyErrorSetIsRecordedNotFatal) {
  RunConfig cfg = Config();
  cfg.min_patch_size = 80;
  auto p = Pipeline::Open(cfg);
  p->RunAll();
  const Json sys = ReadJsonFile(cfg.run_dir / "systematic.json");
  std::map<std::string, std::string> status;
  for (const auto& c : sys.at("classes")) status[c.at("class")] = c.at("status");
  EXPECT_EQ(status.at("bicycle"), "empty_error_set");
  EXPECT_EQ(status.at("person"), "scored");
}

TEST_F(PipelineTest, FixtureMissIsAnOracleFailure) {
  RunConfig cfg = Config();
  cfg.oracle.fixture_dir = dir_.path() / "nothing";
  auto p = Pipeline::Open(cfg);
  p->RunStage(Stage::kExtract);
  EXPECT_EQ(CodeOf([&] { p->RunStage(Stage::kDetect); }), ErrorCode::kFixtureMiss);
}

TEST_F(PipelineTest, ReviewQueueListsPredictions) {
  auto p = Pipeline::Open(Config());
  EXPECT_EQ(CodeOf([&] { BuildReviewQueue(p->config().run_dir); }),
            ErrorCode::kStageDependencyMissing);
  p->RunAll();
  const Json q = BuildReviewQueue(p->config().run_dir);
  const Json sys = ReadJsonFile(FixtureDir() / "golden" / "systematic.json");
  std::vector<std::string> ids;
  for (const auto& item : q.at("items")) ids.push_back(item.at("patch_id"));
  EXPECT_EQ(ids, sys.at("systematic_patch_ids").get<std::vector<std::string>>());
}

TEST_F(PipelineTest, SweepSharesCacheAndMatchesPlainRun) {
  RunConfig cfg = Config();
  cfg.cache_dir = dir_.path() / "cache";
  const SweepResult r = Sweep(cfg, {60, 80}, {3, 5}, dir_.path() / "sweep");
  ASSERT_EQ(r.tables.size(), 4u);
  EXPECT_TRUE(FilesEqual(dir_.path() / "sweep" / "a60_q3" / "eval" / "metrics.json",
                         FixtureDir() / "golden" / "metrics.json"));
  const Json tables = ReadJsonFile(dir_.path() / "sweep" / "tables.json");
  EXPECT_EQ(tables.at("tables").size(), 4u);
}

TEST(RunConfigTest, RejectsUnknownKeysAndBadTemplates) {
  Json j = ReadJsonFile(FixtureDir() / "config.json");
  EXPECT_EQ(CodeOf([&] { RunConfigFromJson(j, FixtureDir()); }), ErrorCode::kOk);
  Json bad = j;
  bad["colour"] = "red";
  EXPECT_EQ(CodeOf([&] { RunConfigFromJson(bad, FixtureDir()); }), ErrorCode::kConfig);
  bad = j;
  bad["prompt_template"] = "no slot";
  EXPECT_EQ(CodeOf([&] { RunConfigFromJson(bad, FixtureDir()); }), ErrorCode::kConfig);
  bad = j;
  bad["audit_classes"] = {"unicorn"};
  EXPECT_EQ(CodeOf([&] { RunConfigFromJson(bad, FixtureDir()); }), ErrorCode::kConfig);
}

TEST(RunConfigTest, SemanticConfigIgnoresTuning) {
  RunConfig a = RunConfigFromJson(ReadJsonFile(FixtureDir() / "config.json"), FixtureDir());
  RunConfig b = a;
  b.workers = 9;
  b.cache_dir = "/elsewhere";
  b.oracle.timeout_seconds = 99;
  EXPECT_EQ(Canonical(SemanticConfig(a)), Canonical(SemanticConfig(b)));
  b.oracle.box_threshold = 0.4;
  EXPECT_NE(Canonical(SemanticConfig(a)), Canonical(SemanticConfig(b)));
  const RunConfig c = RunConfigFromJson(RunConfigToJson(a), "/");
  EXPECT_EQ(Canonical(RunConfigToJson(c)), Canonical(RunConfigToJson(a)));
}

TEST(RunConfigTest, CacheDirPrecedence) {
  RunConfig cfg;
  cfg.run_dir = "/r";
  ::unsetenv("AUDITOR_CACHE_DIR");
  EXPECT_EQ(cfg.EffectiveCacheDir(), fs::path("/r/cache"));
  cfg.cache_dir = "/c";
  EXPECT_EQ(cfg.EffectiveCacheDir(), fs::path("/c"));
  ::setenv("AUDITOR_CACHE_DIR", "/env", 1);
  EXPECT_EQ(cfg.EffectiveCacheDir(), fs::path("/env"));
  ::unsetenv("AUDITOR_CACHE_DIR");
}

TEST(StageTest, NamesRoundTrip) {
  for (Stage s : kAllStages) EXPECT_EQ(StageFromName(StageName(s)), s);
  EXPECT_EQ(CodeOf([] { StageFromName("bogus"); }), ErrorCode::kInvalidArgument);
  EXPECT_TRUE(StageDependencies(Stage::kExtract).empty());
}

}  // namespace
}  // namespace auditor
