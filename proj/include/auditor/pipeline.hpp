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

// Stage orchestration over a run directory. The directory is the only
// state: every stage reads declared upstream artifacts, writes its own
// atomically, and records output hashes plus an input fingerprint in
// state.json so resumed runs skip work that is already current.

#ifndef AUDITOR_PIPELINE_HPP_
#define AUDITOR_PIPELINE_HPP_

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "auditor/evaluation.hpp"
#include "auditor/fs_util.hpp"
#include "auditor/json_util.hpp"
#include "auditor/oracle.hpp"
#include "auditor/patch_extraction.hpp"
#include "auditor/systematicity.hpp"

namespace auditor {

struct RunConfig {
  fs::path manifest_path;                  // absolute after loading
  std::vector<SemanticClass> class_table;  // every label the maps use
  std::vector<std::string> audit_classes;  // names, in table order
  int min_patch_size = 60;
  Connectivity connectivity = Connectivity::kEight;
  OracleConfig oracle;
  ScoringOptions scoring;
  fs::path run_dir;
  std::uint64_t seed = 0;
  std::string dataset_id = "dataset";
  std::string ssm_id = "ssm";
  std::optional<fs::path> gt_manifest_path;
  std::optional<fs::path> verdicts_dir;  // default <run_dir>/verdicts
  std::vector<std::string> panel;        // empty: every evaluator file found
  int quorum = 0;                        // 0: the whole panel
  std::optional<fs::path> cache_dir;
  int workers = 4;

  // Audited classes resolved against the table, in table order.
  std::vector<SemanticClass> AuditedClasses() const;
  const SemanticClass* FindClass(std::string_view name) const;
  fs::path EffectiveVerdictsDir() const;
  // AUDITOR_CACHE_DIR, then cache_dir, then <run_dir>/cache.
  fs::path EffectiveCacheDir() const;
};

// Relative paths resolve against `base_dir`. Unknown keys are rejected.
// Throws kConfig.
RunConfig RunConfigFromJson(const Json& j, const fs::path& base_dir);
RunConfig LoadRunConfig(const fs::path& path);
// Paths are written absolute; run_dir is omitted because the file lives in
// it.
Json RunConfigToJson(const RunConfig& cfg);
// The part of the config that determines results: no run_dir, cache_dir or
// worker count.
Json SemanticConfig(const RunConfig& cfg);

enum class Stage { kExtract, kDetect, kEmbed, kCaption, kScore, kEvaluate, kReport };

inline constexpr std::array<Stage, 7> kAllStages = {
    Stage::kExtract, Stage::kDetect, Stage::kEmbed,   Stage::kCaption,
    Stage::kScore,   Stage::kEvaluate, Stage::kReport};

std::string_view StageName(Stage s);
// Throws kInvalidArgument for an unknown name.
Stage StageFromName(std::string_view name);
std::vector<Stage> StageDependencies(Stage s);

enum class StageStatus { kPending, kDone, kFailed };

struct StageRecord {
  StageStatus status = StageStatus::kPending;
  std::string fingerprint;
  std::map<std::string, std::string> outputs;  // run-relative path -> sha256
  double seconds = 0.0;
  std::string error;
};

struct RunState {
  std::map<Stage, StageRecord> stages;
};

Json RunStateToJson(const RunState& state);
RunState RunStateFromJson(const Json& j);

// Parameters of one evaluate invocation that are not part of the config.
struct EvaluateOptions {
  std::optional<fs::path> gt_manifest;
};

class Pipeline {
 public:
  // Creates or resumes `cfg.run_dir`. A run directory that already holds a
  // different config.json is a kConfigMismatch. Holds the directory lock
  // until destroyed.
  static std::unique_ptr<Pipeline> Open(RunConfig cfg);
  // Resumes from <run_dir>/config.json.
  static std::unique_ptr<Pipeline> OpenDir(const fs::path& run_dir);

  ~Pipeline();

  // Runs `stage` unless it is already current. Throws
  // kStageDependencyMissing when an upstream stage is not current.
  void RunStage(Stage stage);
  // Every stage in order.
  void RunAll();
  void Evaluate(const EvaluateOptions& options);

  const RunConfig& config() const { return cfg_; }
  const RunState& state() const { return state_; }
  // Oracle traffic of this session.
  OracleStats oracle_stats() const;
  // True when the last RunStage call found the stage current and did nothing.
  bool last_stage_skipped() const { return last_skipped_; }

 private:
  explicit Pipeline(RunConfig cfg);

  bool IsCurrent(Stage stage);
  std::string Fingerprint(Stage stage);
  std::map<std::string, std::string> Execute(Stage stage);
  void SaveState();
  Oracle& oracle();
  fs::path Path(std::string_view rel) const { return cfg_.run_dir / rel; }
  std::map<std::string, std::string> HashOutputs(
      const std::vector<std::string>& rels) const;

  std::map<std::string, std::string> DoExtract();
  std::map<std::string, std::string> DoDetect();
  std::map<std::string, std::string> DoEmbed();
  std::map<std::string, std::string> DoCaption();
  std::map<std::string, std::string> DoScore();
  std::map<std::string, std::string> DoEvaluate();
  std::map<std::string, std::string> DoReport();
  Json EvaluateInputs();

  RunConfig cfg_;
  std::unique_ptr<DirectoryLock> lock_;
  RunState state_;
  std::unique_ptr<Oracle> oracle_;
  EvaluateOptions eval_options_;
  bool last_skipped_ = false;
};

// Collects aggregated human verdicts from `dir` for `panel` (every file in
// the directory when empty).
VerdictAggregation AggregateVerdictDir(const fs::path& dir,
                                       std::vector<std::string> panel,
                                       int quorum);

// Writes <run_dir>/review/queue.json: one item per predicted systematic
// patch in patch_id order, with crops and neighbor captions for the review
// UI. Throws kStageDependencyMissing before the score stage has run.
Json BuildReviewQueue(const fs::path& run_dir);

struct SweepResult {
  struct Table {
    int min_size = 0;
    int q = 0;
    fs::path run_dir;
    Json metrics;  // the sub-run's eval/metrics.json
  };
  std::vector<Table> tables;
  OracleStats oracle_stats;
};

// One full run per (min_size, q) under <out_dir>/a<min>_q<q>, all sharing
// the base config's cache and verdicts. Writes <out_dir>/tables.json and
// <out_dir>/tables.csv.
SweepResult Sweep(const RunConfig& base, const std::vector<int>& min_sizes,
                  const std::vector<int>& qs, const fs::path& out_dir);

}  // namespace auditor

#endif  // AUDITOR_PIPELINE_HPP_
