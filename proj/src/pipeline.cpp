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

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <set>

#include "auditor/embedding_index.hpp"
#include "auditor/error.hpp"
#include "auditor/error_detection.hpp"
#include "auditor/hashing.hpp"
#include "auditor/image.hpp"
#include "auditor/parallel.hpp"

namespace auditor {
namespace {

constexpr char kConfigFile[] = "config.json";
constexpr char kStateFile[] = "state.json";

std::string PatchDir(const SemanticClass& cls) { return "patches/" + cls.name; }

void WriteJsonFile(const fs::path& path, const Json& j) {
  WriteFileAtomic(path, Canonical(j) + "\n");
}

Json CalibrationToJson(const Calibration& c) {
  return Json{{"scale", c.scale}, {"offset", c.offset}};
}

Calibration CalibrationFromJson(const Json& j) {
  Calibration c;
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (it.key() != "scale" && it.key() != "offset") {
      Fail(ErrorCode::kConfig, "unknown calibration key '" + it.key() + "'");
    }
  }
  c.scale = j.value("scale", 1.0);
  c.offset = j.value("offset", 0.0);
  return c;
}

std::optional<fs::path> OptionalPath(const Json& j, const char* key,
                                     const fs::path& base) {
  if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
  return ResolveAgainst(base, j.at(key).get<std::string>());
}

Json OptionalPathJson(const std::optional<fs::path>& p) {
  return p ? Json(p->string()) : Json(nullptr);
}

// Every file under `dir`, as run-relative paths, sorted.
std::vector<std::string> ListFiles(const fs::path& run_dir,
                                   const std::string& rel_dir) {
  std::vector<std::string> out;
  const fs::path dir = run_dir / rel_dir;
  if (!fs::exists(dir)) return out;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.is_regular_file()) {
      out.push_back(rel_dir + "/" + e.path().filename().string());
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::string_view StatusName(StageStatus s) {
  switch (s) {
    case StageStatus::kPending: return "pending";
    case StageStatus::kDone: return "done";
    case StageStatus::kFailed: return "failed";
  }
  return "pending";
}

StageStatus StatusFromName(const std::string& s) {
  if (s == "done") return StageStatus::kDone;
  if (s == "failed") return StageStatus::kFailed;
  if (s == "pending") return StageStatus::kPending;
  Fail(ErrorCode::kIo, "unknown stage status '" + s + "'");
}

// The stages whose artifacts `s` reads.
std::vector<Stage> StageInputs(Stage s) {
  switch (s) {
    case Stage::kExtract: return {};
    case Stage::kDetect: return {Stage::kExtract};
    case Stage::kEmbed: return {Stage::kExtract, Stage::kDetect};
    case Stage::kCaption: return {Stage::kExtract, Stage::kDetect};
    case Stage::kScore: return {Stage::kDetect, Stage::kEmbed, Stage::kCaption};
    case Stage::kEvaluate: return {Stage::kExtract, Stage::kDetect, Stage::kScore};
    case Stage::kReport: return {Stage::kExtract, Stage::kCaption, Stage::kScore};
  }
  return {};
}

std::string HtmlEscape(std::string_view s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      case '\'': out += "&#39;"; break;
      default: out += c;
    }
  }
  return out;
}

std::string Fixed(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", digits, v);
  return buf;
}

}  // namespace

// ------------------------------------------------------------------- config

std::vector<SemanticClass> RunConfig::AuditedClasses() const {
  std::vector<SemanticClass> out;
  for (const auto& cls : class_table) {
    if (std::find(audit_classes.begin(), audit_classes.end(), cls.name) !=
        audit_classes.end()) {
      out.push_back(cls);
    }
  }
  return out;
}

const SemanticClass* RunConfig::FindClass(std::string_view name) const {
  for (const auto& cls : class_table) {
    if (cls.name == name) return &cls;
  }
  return nullptr;
}

fs::path RunConfig::EffectiveVerdictsDir() const {
  return verdicts_dir ? *verdicts_dir : run_dir / "verdicts";
}

fs::path RunConfig::EffectiveCacheDir() const {
  if (const char* env = std::getenv("AUDITOR_CACHE_DIR"); env && *env) {
    return fs::absolute(env);
  }
  return cache_dir ? *cache_dir : run_dir / "cache";
}

RunConfig RunConfigFromJson(const Json& j, const fs::path& base_dir) {
  static const std::set<std::string> kKnown = {
      "manifest", "classes", "audit_classes", "min_patch_size", "connectivity",
      "oracle", "q", "alpha", "prompt_template", "sigma1_query_from_image",
      "calibration", "run_dir", "seed", "dataset_id", "ssm_id", "gt_manifest",
      "verdicts_dir", "panel", "quorum", "cache_dir", "workers"};
  if (!j.is_object()) Fail(ErrorCode::kConfig, "config must be a JSON object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (!kKnown.count(it.key())) {
      Fail(ErrorCode::kConfig, "unknown config key '" + it.key() + "'");
    }
  }
  const fs::path base = fs::absolute(base_dir);
  RunConfig cfg;
  try {
    if (!j.contains("manifest")) Fail(ErrorCode::kConfig, "config lacks 'manifest'");
    cfg.manifest_path = ResolveAgainst(base, j.at("manifest").get<std::string>());
    if (!j.contains("classes") || !j.at("classes").is_array() ||
        j.at("classes").empty()) {
      Fail(ErrorCode::kConfig, "config needs a nonempty 'classes' table");
    }
    std::set<int> indices;
    std::set<std::string> names;
    for (const auto& c : j.at("classes")) {
      SemanticClass cls;
      cls.index = c.at("index").get<int>();
      cls.name = c.at("name").get<std::string>();
      cls.prompt_name = c.value("prompt_name", std::string());
      ValidateClass(cls);
      if (!indices.insert(cls.index).second || !names.insert(cls.name).second) {
        Fail(ErrorCode::kConfig, "class table repeats '" + cls.name + "'");
      }
      cfg.class_table.push_back(cls);
    }
    std::sort(cfg.class_table.begin(), cfg.class_table.end(),
              [](const auto& a, const auto& b) { return a.index < b.index; });
    const int table_size = static_cast<int>(cfg.class_table.size());
    for (const auto& cls : cfg.class_table) {
      if (cls.index >= table_size) {
        Fail(ErrorCode::kConfig, "class index " + std::to_string(cls.index) +
                                     " outside a table of " +
                                     std::to_string(table_size));
      }
    }
    if (j.contains("audit_classes")) {
      for (const auto& name : j.at("audit_classes")) {
        const std::string n = name.get<std::string>();
        if (!names.count(n)) Fail(ErrorCode::kConfig, "audited class '" + n + "' is not in the table");
        if (std::find(cfg.audit_classes.begin(), cfg.audit_classes.end(), n) ==
            cfg.audit_classes.end()) {
          cfg.audit_classes.push_back(n);
        }
      }
    } else {
      for (const auto& cls : cfg.class_table) cfg.audit_classes.push_back(cls.name);
    }
    if (cfg.audit_classes.empty()) Fail(ErrorCode::kConfig, "no classes to audit");
    // Keep table order so artifacts do not depend on how the list was typed.
    std::vector<std::string> ordered;
    for (const auto& cls : cfg.class_table) {
      if (std::find(cfg.audit_classes.begin(), cfg.audit_classes.end(),
                    cls.name) != cfg.audit_classes.end()) {
        ordered.push_back(cls.name);
      }
    }
    cfg.audit_classes = std::move(ordered);

    cfg.min_patch_size = j.value("min_patch_size", cfg.min_patch_size);
    if (cfg.min_patch_size < 1) Fail(ErrorCode::kConfig, "min_patch_size must be positive");
    try {
      cfg.connectivity = ConnectivityFromInt(j.value("connectivity", 8));
    } catch (const Error& e) {
      Fail(ErrorCode::kConfig, e.what());
    }
    cfg.oracle = OracleConfigFromJson(j.value("oracle", Json::object()), base);
    cfg.scoring.q = j.value("q", cfg.scoring.q);
    if (cfg.scoring.q < 1) Fail(ErrorCode::kConfig, "q must be positive");
    cfg.scoring.alpha = j.value("alpha", cfg.scoring.alpha);
    cfg.scoring.prompt_template =
        j.value("prompt_template", cfg.scoring.prompt_template);
    if (cfg.scoring.prompt_template.find("{class}") == std::string::npos) {
      Fail(ErrorCode::kConfig, "prompt_template must contain {class}");
    }
    cfg.scoring.sigma1_query_from_image = j.value("sigma1_query_from_image", false);
    if (j.contains("calibration")) {
      const Json& cal = j.at("calibration");
      for (auto it = cal.begin(); it != cal.end(); ++it) {
        if (it.key() != "sigma1" && it.key() != "sigma2" && it.key() != "sigma3") {
          Fail(ErrorCode::kConfig, "unknown calibration target '" + it.key() + "'");
        }
      }
      if (cal.contains("sigma1")) cfg.scoring.sigma1_calibration = CalibrationFromJson(cal.at("sigma1"));
      if (cal.contains("sigma2")) cfg.scoring.sigma2_calibration = CalibrationFromJson(cal.at("sigma2"));
      if (cal.contains("sigma3")) cfg.scoring.sigma3_calibration = CalibrationFromJson(cal.at("sigma3"));
    }
    if (j.contains("run_dir") && !j.at("run_dir").is_null()) {
      cfg.run_dir = ResolveAgainst(base, j.at("run_dir").get<std::string>());
    }
    cfg.seed = j.value("seed", std::uint64_t{0});
    cfg.dataset_id = j.value("dataset_id", cfg.dataset_id);
    cfg.ssm_id = j.value("ssm_id", cfg.ssm_id);
    cfg.gt_manifest_path = OptionalPath(j, "gt_manifest", base);
    cfg.verdicts_dir = OptionalPath(j, "verdicts_dir", base);
    cfg.cache_dir = OptionalPath(j, "cache_dir", base);
    if (j.contains("panel")) cfg.panel = j.at("panel").get<std::vector<std::string>>();
    cfg.quorum = j.value("quorum", 0);
    if (cfg.quorum < 0) Fail(ErrorCode::kConfig, "quorum must not be negative");
    if (!cfg.panel.empty() && cfg.quorum > static_cast<int>(cfg.panel.size())) {
      Fail(ErrorCode::kConfig, "quorum exceeds the panel size");
    }
    cfg.workers = j.value("workers", cfg.workers);
    if (cfg.workers < 1) Fail(ErrorCode::kConfig, "workers must be positive");
  } catch (const Json::exception& e) {
    Fail(ErrorCode::kConfig, e.what());
  }
  return cfg;
}

RunConfig LoadRunConfig(const fs::path& path) {
  Json j;
  try {
    j = ReadJsonFile(path);
  } catch (const Error& e) {
    Fail(ErrorCode::kConfig, e.what());
  }
  return RunConfigFromJson(j, fs::absolute(path).parent_path());
}

Json RunConfigToJson(const RunConfig& cfg) {
  Json classes = Json::array();
  for (const auto& c : cfg.class_table) {
    Json row = {{"index", c.index}, {"name", c.name}};
    if (!c.prompt_name.empty()) row["prompt_name"] = c.prompt_name;
    classes.push_back(std::move(row));
  }
  const auto& s = cfg.scoring;
  return Json{
      {"manifest", cfg.manifest_path.string()},
      {"classes", classes},
      {"audit_classes", cfg.audit_classes},
      {"min_patch_size", cfg.min_patch_size},
      {"connectivity", static_cast<int>(cfg.connectivity)},
      {"oracle", OracleConfigToJson(cfg.oracle)},
      {"q", s.q},
      {"alpha", s.alpha},
      {"prompt_template", s.prompt_template},
      {"sigma1_query_from_image", s.sigma1_query_from_image},
      {"calibration",
       {{"sigma1", CalibrationToJson(s.sigma1_calibration)},
        {"sigma2", CalibrationToJson(s.sigma2_calibration)},
        {"sigma3", CalibrationToJson(s.sigma3_calibration)}}},
      {"seed", cfg.seed},
      {"dataset_id", cfg.dataset_id},
      {"ssm_id", cfg.ssm_id},
      {"gt_manifest", OptionalPathJson(cfg.gt_manifest_path)},
      {"verdicts_dir", OptionalPathJson(cfg.verdicts_dir)},
      {"panel", cfg.panel},
      {"quorum", cfg.quorum},
      {"cache_dir", OptionalPathJson(cfg.cache_dir)},
      {"workers", cfg.workers}};
}

Json SemanticConfig(const RunConfig& cfg) {
  Json j = RunConfigToJson(cfg);
  j.erase("cache_dir");
  j.erase("workers");
  j["oracle"].erase("max_inflight");
  j["oracle"].erase("timeout");
  j["oracle"].erase("retries");
  return j;
}

// ------------------------------------------------------------------- stages

std::string_view StageName(Stage s) {
  switch (s) {
    case Stage::kExtract: return "extract";
    case Stage::kDetect: return "detect";
    case Stage::kEmbed: return "embed";
    case Stage::kCaption: return "caption";
    case Stage::kScore: return "score";
    case Stage::kEvaluate: return "evaluate";
    case Stage::kReport: return "report";
  }
  return "?";
}

Stage StageFromName(std::string_view name) {
  for (Stage s : kAllStages) {
    if (StageName(s) == name) return s;
  }
  Fail(ErrorCode::kInvalidArgument, "unknown stage '" + std::string(name) + "'");
}

std::vector<Stage> StageDependencies(Stage s) {
  switch (s) {
    case Stage::kExtract: return {};
    case Stage::kDetect: return {Stage::kExtract};
    case Stage::kEmbed: return {Stage::kDetect};
    case Stage::kCaption: return {Stage::kDetect};
    case Stage::kScore: return {Stage::kEmbed, Stage::kCaption};
    case Stage::kEvaluate: return {Stage::kDetect, Stage::kScore};
    case Stage::kReport: return {Stage::kScore};
  }
  return {};
}

Json RunStateToJson(const RunState& state) {
  Json stages = Json::object();
  for (const auto& [stage, rec] : state.stages) {
    Json outputs = Json::object();
    for (const auto& [path, hash] : rec.outputs) outputs[path] = hash;
    stages[std::string(StageName(stage))] = {
        {"status", StatusName(rec.status)},
        {"fingerprint", rec.fingerprint},
        {"outputs", outputs},
        {"seconds", rec.seconds},
        {"error", rec.error}};
  }
  return Json{{"stages", stages}};
}

RunState RunStateFromJson(const Json& j) {
  RunState state;
  try {
    for (auto it = j.at("stages").begin(); it != j.at("stages").end(); ++it) {
      StageRecord rec;
      rec.status = StatusFromName(it.value().at("status").get<std::string>());
      rec.fingerprint = it.value().at("fingerprint").get<std::string>();
      rec.outputs = it.value().at("outputs").get<std::map<std::string, std::string>>();
      rec.seconds = it.value().value("seconds", 0.0);
      rec.error = it.value().value("error", std::string());
      state.stages[StageFromName(it.key())] = std::move(rec);
    }
  } catch (const Json::exception& e) {
    Fail(ErrorCode::kIo, std::string("state.json: ") + e.what());
  }
  return state;
}

// ----------------------------------------------------------------- pipeline

Pipeline::Pipeline(RunConfig cfg) : cfg_(std::move(cfg)) {}

Pipeline::~Pipeline() = default;

std::unique_ptr<Pipeline> Pipeline::Open(RunConfig cfg) {
  if (cfg.run_dir.empty()) Fail(ErrorCode::kConfig, "no run directory given");
  cfg.run_dir = fs::absolute(cfg.run_dir).lexically_normal();
  std::error_code ec;
  fs::create_directories(cfg.run_dir, ec);
  if (ec) Fail(ErrorCode::kIo, "cannot create " + cfg.run_dir.string());

  std::unique_ptr<Pipeline> p(new Pipeline(std::move(cfg)));
  p->lock_ = std::make_unique<DirectoryLock>(p->cfg_.run_dir);

  const fs::path config_file = p->Path(kConfigFile);
  if (fs::exists(config_file)) {
    const RunConfig existing =
        RunConfigFromJson(ReadJsonFile(config_file), p->cfg_.run_dir);
    const Json a = SemanticConfig(existing);
    const Json b = SemanticConfig(p->cfg_);
    if (a != b) {
      std::string keys;
      for (auto it = b.begin(); it != b.end(); ++it) {
        if (!a.contains(it.key()) || a.at(it.key()) != it.value()) {
          keys += (keys.empty() ? "" : ", ") + it.key();
        }
      }
      Fail(ErrorCode::kConfigMismatch,
           p->cfg_.run_dir.string() + " was created with a different config (" +
               keys + ")");
    }
  } else {
    WriteJsonFile(config_file, RunConfigToJson(p->cfg_));
  }
  if (fs::exists(p->Path(kStateFile))) {
    p->state_ = RunStateFromJson(ReadJsonFile(p->Path(kStateFile)));
  }
  return p;
}

std::unique_ptr<Pipeline> Pipeline::OpenDir(const fs::path& run_dir) {
  const fs::path config_file = run_dir / kConfigFile;
  if (!fs::exists(config_file)) {
    Fail(ErrorCode::kConfig, run_dir.string() + " holds no config.json");
  }
  RunConfig cfg = RunConfigFromJson(ReadJsonFile(config_file), run_dir);
  cfg.run_dir = run_dir;
  return Open(std::move(cfg));
}

OracleStats Pipeline::oracle_stats() const {
  return oracle_ ? oracle_->stats() : OracleStats{};
}

Oracle& Pipeline::oracle() {
  if (!oracle_) oracle_ = Oracle::Create(cfg_.oracle, cfg_.EffectiveCacheDir());
  return *oracle_;
}

void Pipeline::SaveState() { WriteJsonFile(Path(kStateFile), RunStateToJson(state_)); }

std::map<std::string, std::string> Pipeline::HashOutputs(
    const std::vector<std::string>& rels) const {
  std::map<std::string, std::string> out;
  for (const auto& rel : rels) out[rel] = FileSha256(Path(rel));
  return out;
}

Json Pipeline::EvaluateInputs() {
  Json files = Json::object();
  auto note = [&](const fs::path& p) {
    if (fs::exists(p)) files[p.string()] = FileSha256(p);
  };
  const fs::path base = cfg_.manifest_path.parent_path();
  for (const auto& e : ReadManifest(cfg_.manifest_path)) {
    note(ResolveAgainst(base, e.pred_map_path));
    if (e.gt_map_path) note(ResolveAgainst(base, *e.gt_map_path));
  }
  std::optional<fs::path> gt = eval_options_.gt_manifest
                                   ? eval_options_.gt_manifest
                                   : cfg_.gt_manifest_path;
  if (gt) {
    note(*gt);
    for (const auto& row : ReadJsonLines(*gt)) {
      if (row.contains("gt_map_path")) {
        note(ResolveAgainst(gt->parent_path(), row.at("gt_map_path").get<std::string>()));
      }
    }
  }
  const fs::path vdir = cfg_.EffectiveVerdictsDir();
  if (fs::exists(vdir)) {
    for (const auto& e : fs::directory_iterator(vdir)) {
      if (e.path().extension() == ".jsonl") note(e.path());
    }
  }
  return Json{{"files", files},
              {"gt_manifest", OptionalPathJson(gt)},
              {"panel", cfg_.panel},
              {"quorum", cfg_.quorum},
              {"dataset_id", cfg_.dataset_id},
              {"ssm_id", cfg_.ssm_id},
              {"detector_id", cfg_.oracle.detector_id}};
}

std::string Pipeline::Fingerprint(Stage stage) {
  Json params;
  const auto& s = cfg_.scoring;
  switch (stage) {
    case Stage::kExtract: {
      Json cfg = SemanticConfig(cfg_);
      params = {{"manifest_sha256", FileSha256(cfg_.manifest_path)},
                {"classes", cfg.at("classes")},
                {"audit_classes", cfg_.audit_classes},
                {"min_patch_size", cfg_.min_patch_size},
                {"connectivity", static_cast<int>(cfg_.connectivity)}};
      break;
    }
    case Stage::kDetect:
      params = {{"detector_id", cfg_.oracle.detector_id},
                {"box_threshold", cfg_.oracle.box_threshold},
                {"text_threshold", cfg_.oracle.text_threshold}};
      break;
    case Stage::kEmbed:
    case Stage::kCaption:
      params = {{"model_set", cfg_.oracle.model_set}};
      break;
    case Stage::kScore:
      params = {{"model_set", cfg_.oracle.model_set},
                {"q", s.q},
                {"alpha", s.alpha},
                {"prompt_template", s.prompt_template},
                {"sigma1_query_from_image", s.sigma1_query_from_image},
                {"calibration", SemanticConfig(cfg_).at("calibration")}};
      break;
    case Stage::kEvaluate:
      params = EvaluateInputs();
      break;
    case Stage::kReport:
      params = {{"dataset_id", cfg_.dataset_id}, {"ssm_id", cfg_.ssm_id}};
      break;
  }
  Json upstream = Json::object();
  for (Stage dep : StageInputs(stage)) {
    Json outputs = Json::object();
    auto it = state_.stages.find(dep);
    if (it != state_.stages.end()) {
      for (const auto& [path, hash] : it->second.outputs) outputs[path] = hash;
    }
    upstream[std::string(StageName(dep))] = Sha256Hex(Canonical(outputs));
  }
  return Sha256Hex(Canonical(Json{{"stage", StageName(stage)},
                                  {"params", params},
                                  {"upstream", upstream}}));
}

bool Pipeline::IsCurrent(Stage stage) {
  auto it = state_.stages.find(stage);
  if (it == state_.stages.end() || it->second.status != StageStatus::kDone) {
    return false;
  }
  for (Stage dep : StageDependencies(stage)) {
    if (!IsCurrent(dep)) return false;
  }
  for (const auto& [rel, hash] : it->second.outputs) {
    const fs::path p = Path(rel);
    if (!fs::exists(p) || FileSha256(p) != hash) return false;
  }
  return it->second.fingerprint == Fingerprint(stage);
}

void Pipeline::RunStage(Stage stage) {
  for (Stage dep : StageDependencies(stage)) {
    if (!IsCurrent(dep)) {
      Fail(ErrorCode::kStageDependencyMissing,
           "stage " + std::string(StageName(stage)) + " needs " +
               std::string(StageName(dep)) + " to be done first");
    }
  }
  last_skipped_ = IsCurrent(stage);
  if (last_skipped_) return;

  StageRecord& rec = state_.stages[stage];
  rec = StageRecord{};
  rec.fingerprint = Fingerprint(stage);
  const auto start = std::chrono::steady_clock::now();
  try {
    rec.outputs = Execute(stage);
  } catch (const Error& e) {
    rec.status = StageStatus::kFailed;
    rec.error = e.what();
    SaveState();
    Rethrow(e, "stage " + std::string(StageName(stage)));
  }
  rec.status = StageStatus::kDone;
  rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  SaveState();
}

void Pipeline::RunAll() {
  for (Stage s : kAllStages) RunStage(s);
}

void Pipeline::Evaluate(const EvaluateOptions& options) {
  eval_options_ = options;
  if (eval_options_.gt_manifest) {
    eval_options_.gt_manifest = fs::absolute(*eval_options_.gt_manifest);
  }
  RunStage(Stage::kEvaluate);
}

std::map<std::string, std::string> Pipeline::Execute(Stage stage) {
  switch (stage) {
    case Stage::kExtract: return DoExtract();
    case Stage::kDetect: return DoDetect();
    case Stage::kEmbed: return DoEmbed();
    case Stage::kCaption: return DoCaption();
    case Stage::kScore: return DoScore();
    case Stage::kEvaluate: return DoEvaluate();
    case Stage::kReport: return DoReport();
  }
  Fail(ErrorCode::kInternal, "unhandled stage");
}

namespace {

std::vector<ErrorPatchSet> LoadErrorSets(const fs::path& run_dir) {
  std::vector<ErrorPatchSet> out;
  const Json j = ReadJsonFile(run_dir / "errors.json");
  for (const auto& row : j.at("error_sets")) out.push_back(ErrorPatchSetFromJson(row));
  return out;
}

const ErrorPatchSet& ErrorsFor(const std::vector<ErrorPatchSet>& sets,
                               const SemanticClass& cls) {
  for (const auto& s : sets) {
    if (s.cls.name == cls.name) return s;
  }
  Fail(ErrorCode::kStageDependencyMissing, "errors.json lacks class " + cls.name);
}

std::map<std::string, std::string> LoadCaptions(const fs::path& run_dir) {
  std::map<std::string, std::string> out;
  for (const auto& row : ReadJsonLines(run_dir / "captions.jsonl")) {
    out[row.at("patch_id").get<std::string>()] = row.at("text").get<std::string>();
  }
  return out;
}

std::vector<SystematicityScore> LoadScores(const fs::path& run_dir) {
  std::vector<SystematicityScore> out;
  for (const auto& row : ReadJsonLines(run_dir / "scores.jsonl")) {
    out.push_back(ScoreFromJson(row));
  }
  return out;
}

}  // namespace

std::map<std::string, std::string> Pipeline::DoExtract() {
  const auto manifest = ReadManifest(cfg_.manifest_path);
  const fs::path base = cfg_.manifest_path.parent_path();
  std::error_code ec;
  fs::remove_all(Path("patches"), ec);
  std::vector<std::string> outputs = {"manifest.jsonl"};
  WriteFileAtomic(Path("manifest.jsonl"), ReadFile(cfg_.manifest_path));
  const auto workers = static_cast<std::size_t>(cfg_.workers);
  for (const auto& cls : cfg_.AuditedClasses()) {
    const PatchSet set = BuildPatchSet(manifest, base, cls, cfg_.min_patch_size,
                                       cfg_.connectivity, workers);
    WritePatchSet(set, Path(PatchDir(cls)), workers);
    for (auto& f : ListFiles(cfg_.run_dir, PatchDir(cls))) outputs.push_back(f);
  }
  return HashOutputs(outputs);
}

std::map<std::string, std::string> Pipeline::DoDetect() {
  std::vector<Json> rows;
  Json sets = Json::array();
  for (const auto& cls : cfg_.AuditedClasses()) {
    const PatchSet patches = LoadPatchSet(Path(PatchDir(cls)), cls, true);
    const DetectionOutcome outcome = ClassifyPrecisionErrors(
        patches, oracle(), static_cast<std::size_t>(cfg_.workers));
    for (const auto& d : outcome.detections) {
      Json row = DetectionResultToJson(d);
      row["class"] = cls.name;
      rows.push_back(std::move(row));
    }
    sets.push_back(ErrorPatchSetToJson(outcome.errors));
  }
  WriteFileAtomic(Path("detections.jsonl"), JsonLines(rows));
  WriteJsonFile(Path("errors.json"), Json{{"error_sets", sets}});
  return HashOutputs({"detections.jsonl", "errors.json"});
}

std::map<std::string, std::string> Pipeline::DoEmbed() {
  const auto sets = LoadErrorSets(cfg_.run_dir);
  std::error_code ec;
  fs::remove_all(Path("embeddings"), ec);
  fs::create_directories(Path("embeddings"));
  for (const auto& cls : cfg_.AuditedClasses()) {
    const ErrorPatchSet& errors = ErrorsFor(sets, cls);
    if (errors.error_patch_ids.empty()) continue;
    const PatchSet patches = LoadPatchSet(Path(PatchDir(cls)), cls, true);
    const EmbeddingMatrix m = BuildIndex(errors, patches, oracle(),
                                         static_cast<std::size_t>(cfg_.workers));
    SaveMatrix(m, Path("embeddings"), cls.name);
  }
  return HashOutputs(ListFiles(cfg_.run_dir, "embeddings"));
}

std::map<std::string, std::string> Pipeline::DoCaption() {
  const auto sets = LoadErrorSets(cfg_.run_dir);
  std::vector<Json> rows;
  for (const auto& cls : cfg_.AuditedClasses()) {
    const ErrorPatchSet& errors = ErrorsFor(sets, cls);
    if (errors.error_patch_ids.empty()) continue;
    const PatchSet patches = LoadPatchSet(Path(PatchDir(cls)), cls, true);
    Oracle& o = oracle();
    std::vector<Caption> caps(errors.error_patch_ids.size());
    ParallelFor(caps.size(), static_cast<std::size_t>(cfg_.workers),
                [&](std::size_t i) {
                  const std::string& id = errors.error_patch_ids[i];
                  const Patch* p = patches.Find(id);
                  if (p == nullptr) {
                    Fail(ErrorCode::kStageDependencyMissing,
                         "error patch " + id + " missing from patch set");
                  }
                  try {
                    caps[i] = o.CaptionPatch(*p);
                  } catch (const Error& e) {
                    Rethrow(e, "patch " + id);
                  }
                });
    for (const auto& c : caps) {
      rows.push_back({{"patch_id", c.patch_id},
                      {"class", cls.name},
                      {"text", c.text},
                      {"captioner_id", c.captioner_id}});
    }
  }
  WriteFileAtomic(Path("captions.jsonl"), JsonLines(rows));
  return HashOutputs({"captions.jsonl"});
}

std::map<std::string, std::string> Pipeline::DoScore() {
  const auto sets = LoadErrorSets(cfg_.run_dir);
  const auto captions = LoadCaptions(cfg_.run_dir);
  const CaptionLookup lookup = [&](const std::string& id) {
    auto it = captions.find(id);
    if (it == captions.end()) {
      Fail(ErrorCode::kStageDependencyMissing, "no caption for patch " + id);
    }
    return it->second;
  };
  std::vector<Json> rows;
  std::vector<std::string> all_systematic;
  Json classes = Json::array();
  for (const auto& cls : cfg_.AuditedClasses()) {
    const ErrorPatchSet& errors = ErrorsFor(sets, cls);
    const std::size_t n = errors.error_patch_ids.size();
    std::vector<std::string> systematic;
    std::string status = "scored";
    if (n == 0) {
      status = "empty_error_set";
    } else if (n == 1) {
      status = "singleton_error_set";
    } else {
      const EmbeddingMatrix index = LoadMatrix(Path("embeddings"), cls.name);
      const auto scores = ScoreAll(index, lookup, oracle(), cfg_.scoring, cls,
                                   static_cast<std::size_t>(cfg_.workers));
      for (const auto& s : scores) {
        rows.push_back(ScoreToJson(s));
        if (s.omega == 1) systematic.push_back(s.patch_id);
      }
    }
    all_systematic.insert(all_systematic.end(), systematic.begin(), systematic.end());
    classes.push_back({{"class", cls.name},
                       {"error_count", n},
                       {"status", status},
                       {"systematic_patch_ids", systematic}});
  }
  std::sort(all_systematic.begin(), all_systematic.end());
  WriteFileAtomic(Path("scores.jsonl"), JsonLines(rows));
  WriteJsonFile(Path("systematic.json"),
                Json{{"alpha", cfg_.scoring.alpha},
                     {"q", cfg_.scoring.q},
                     {"systematic_patch_ids", all_systematic},
                     {"classes", classes}});
  return HashOutputs({"scores.jsonl", "systematic.json"});
}

VerdictAggregation AggregateVerdictDir(const fs::path& dir,
                                       std::vector<std::string> panel,
                                       int quorum) {
  if (!fs::is_directory(dir)) Fail(ErrorCode::kIo, "no verdict directory " + dir.string());
  const auto records = ReadVerdictDir(dir);
  if (panel.empty()) {
    for (const auto& e : fs::directory_iterator(dir)) {
      if (e.is_regular_file() && e.path().extension() == ".jsonl") {
        panel.push_back(e.path().stem().string());
      }
    }
    std::sort(panel.begin(), panel.end());
    if (panel.empty()) Fail(ErrorCode::kInvalidArgument, "no verdict files in " + dir.string());
  }
  return AggregateVerdicts(records, panel, quorum);
}

Json BuildReviewQueue(const fs::path& run_dir) {
  const fs::path state_path = run_dir / "state.json";
  bool scored = false;
  if (fs::exists(state_path)) {
    const RunState st = RunStateFromJson(ReadJsonFile(state_path));
    auto it = st.stages.find(Stage::kScore);
    scored = it != st.stages.end() && it->second.status == StageStatus::kDone;
  }
  if (!scored) {
    Fail(ErrorCode::kStageDependencyMissing,
         run_dir.string() + " has not been scored yet");
  }
  const auto captions = LoadCaptions(run_dir);
  auto crop = [](const std::string& cls, const std::string& id) {
    return "patches/" + cls + "/" + id + ".png";
  };
  std::vector<SystematicityScore> scores = LoadScores(run_dir);
  std::sort(scores.begin(), scores.end(),
            [](const auto& a, const auto& b) { return a.patch_id < b.patch_id; });
  Json items = Json::array();
  for (const auto& s : scores) {
    if (s.omega != 1) continue;
    Json neighbors = Json::array();
    for (const auto& id : s.neighbor_ids) {
      auto c = captions.find(id);
      neighbors.push_back({{"patch_id", id},
                           {"caption", c == captions.end() ? "" : c->second},
                           {"crop", crop(s.class_name, id)}});
    }
    items.push_back({{"patch_id", s.patch_id},
                     {"class", s.class_name},
                     {"caption", s.caption},
                     {"crop", crop(s.class_name, s.patch_id)},
                     {"sigma1", s.sigma1},
                     {"sigma2", s.sigma2},
                     {"sigma3", s.sigma3},
                     {"neighbors", std::move(neighbors)}});
  }
  Json queue = {{"count", items.size()}, {"items", std::move(items)}};
  WriteFileAtomic(run_dir / "review" / "queue.json", Canonical(queue) + "\n");
  return queue;
}

std::map<std::string, std::string> Pipeline::DoEvaluate() {
  const auto manifest = ReadManifest(cfg_.manifest_path);
  const fs::path base = cfg_.manifest_path.parent_path();

  std::map<std::string, fs::path> gt_paths;
  for (const auto& e : manifest) {
    if (e.gt_map_path) gt_paths[e.image_id] = ResolveAgainst(base, *e.gt_map_path);
  }
  const std::optional<fs::path> gt_manifest =
      eval_options_.gt_manifest ? eval_options_.gt_manifest : cfg_.gt_manifest_path;
  if (gt_manifest) {
    std::set<std::string> seen;
    for (const auto& row : ReadJsonLines(*gt_manifest)) {
      try {
        const std::string id = row.at("image_id").get<std::string>();
        if (!seen.insert(id).second) {
          Fail(ErrorCode::kCorruptManifest, "ground-truth manifest repeats " + id);
        }
        gt_paths[id] = ResolveAgainst(gt_manifest->parent_path(),
                                      row.at("gt_map_path").get<std::string>());
      } catch (const Json::exception& e) {
        Fail(ErrorCode::kCorruptManifest,
             gt_manifest->string() + ": " + e.what());
      }
    }
  }

  const auto sets = LoadErrorSets(cfg_.run_dir);
  const auto classes = cfg_.AuditedClasses();
  std::vector<PatchSet> patch_sets;
  std::set<std::string> needed;
  for (const auto& cls : classes) {
    patch_sets.push_back(LoadPatchSet(Path(PatchDir(cls)), cls, false));
    for (const auto& p : patch_sets.back().patches) needed.insert(p.image_id);
  }
  std::map<std::string, LabelMaps> maps;
  for (const auto& e : manifest) {
    if (!needed.count(e.image_id)) continue;
    LabelMaps lm;
    try {
      lm.pred = LoadClassMap(ResolveAgainst(base, e.pred_map_path));
      if (auto it = gt_paths.find(e.image_id); it != gt_paths.end()) {
        lm.gt = LoadClassMap(it->second);
        if (lm.gt->width != lm.pred.width || lm.gt->height != lm.pred.height) {
          Fail(ErrorCode::kImageLoad, "ground truth and prediction sizes differ");
        }
      }
    } catch (const Error& err) {
      Rethrow(err, "image " + e.image_id);
    }
    maps.emplace(e.image_id, std::move(lm));
  }

  const GridColumn column{cfg_.oracle.detector_id, cfg_.ssm_id};
  MetricGrid precision;
  std::vector<std::string> excluded;
  for (std::size_t i = 0; i < classes.size(); ++i) {
    const auto eval = EvaluatePrecisionErrors(patch_sets[i], ErrorsFor(sets, classes[i]), maps);
    excluded.insert(excluded.end(), eval.missing_ground_truth.begin(),
                    eval.missing_ground_truth.end());
    precision.Set({cfg_.dataset_id, classes[i].name}, column, MetricCell{eval.counts, {}, {}});
  }
  std::sort(excluded.begin(), excluded.end());

  Json systematic = nullptr;
  Json verdicts = nullptr;
  std::string csv = GridCsv(precision, "precision_errors");
  const fs::path vdir = cfg_.EffectiveVerdictsDir();
  bool have_verdicts = false;
  if (fs::is_directory(vdir)) {
    for (const auto& e : fs::directory_iterator(vdir)) {
      if (e.path().extension() == ".jsonl") have_verdicts = true;
    }
  }
  if (have_verdicts) {
    const VerdictAggregation agg = AggregateVerdictDir(vdir, cfg_.panel, cfg_.quorum);
    const auto scores = LoadScores(cfg_.run_dir);
    MetricGrid grid;
    for (const auto& cls : classes) {
      std::vector<SystematicityScore> mine;
      for (const auto& s : scores) {
        if (s.class_name == cls.name) mine.push_back(s);
      }
      const SystematicAssessment a = AssessSystematic(mine, agg);
      grid.Set({cfg_.dataset_id, cls.name}, column,
               MetricCell{a.counts, a.predicted_systematic, a.confirmed});
    }
    systematic = GridToJson(grid);
    verdicts = AggregationToJson(agg);
    csv += GridCsv(grid, "systematic_errors");
  }
  WriteJsonFile(Path("eval/metrics.json"),
                Json{{"precision_errors", GridToJson(precision)},
                     {"systematic", systematic},
                     {"verdicts", verdicts},
                     {"excluded_no_ground_truth", excluded}});
  WriteFileAtomic(Path("eval/metrics.csv"), csv);
  return HashOutputs({"eval/metrics.json", "eval/metrics.csv"});
}

std::map<std::string, std::string> Pipeline::DoReport() {
  const auto scores = LoadScores(cfg_.run_dir);
  const auto captions = LoadCaptions(cfg_.run_dir);
  const Json systematic = ReadJsonFile(Path("systematic.json"));

  std::map<std::string, std::string> class_of;
  for (const auto& s : scores) class_of[s.patch_id] = s.class_name;
  for (const auto& row : ReadJsonLines(Path("captions.jsonl"))) {
    class_of[row.at("patch_id").get<std::string>()] = row.at("class").get<std::string>();
  }
  auto crop_rel = [&](const std::string& id) {
    return "patches/" + class_of.at(id) + "/" + id + ".png";
  };
  auto caption_of = [&](const std::string& id) {
    auto it = captions.find(id);
    return it == captions.end() ? std::string() : it->second;
  };

  std::vector<const SystematicityScore*> found;
  for (const auto& s : scores) {
    if (s.omega == 1) found.push_back(&s);
  }
  std::sort(found.begin(), found.end(), [](const auto* a, const auto* b) {
    if (a->Margin() != b->Margin()) return a->Margin() > b->Margin();
    return a->patch_id < b->patch_id;
  });

  Json groups = Json::array();
  for (const auto* s : found) {
    Json neighbors = Json::array();
    for (std::size_t i = 0; i < s->neighbor_ids.size(); ++i) {
      const auto& id = s->neighbor_ids[i];
      neighbors.push_back({{"patch_id", id},
                           {"similarity", s->neighbor_similarities[i]},
                           {"caption", caption_of(id)},
                           {"crop", crop_rel(id)}});
    }
    groups.push_back({{"patch_id", s->patch_id},
                      {"class", s->class_name},
                      {"caption", s->caption},
                      {"sigma1", s->sigma1},
                      {"sigma2", s->sigma2},
                      {"sigma3", s->sigma3},
                      {"margin", s->Margin()},
                      {"crop", crop_rel(s->patch_id)},
                      {"neighbors", neighbors}});
  }
  const std::string summary =
      found.empty() ? "No interpretable systematic errors were found."
                    : std::to_string(found.size()) +
                          " interpretable systematic error" +
                          (found.size() == 1 ? " was" : "s were") + " found.";
  const Json report = {{"dataset_id", cfg_.dataset_id},
                       {"ssm_id", cfg_.ssm_id},
                       {"alpha", cfg_.scoring.alpha},
                       {"q", cfg_.scoring.q},
                       {"systematic_count", found.size()},
                       {"summary", summary},
                       {"classes", systematic.at("classes")},
                       {"groups", groups}};
  WriteJsonFile(Path("report/report.json"), report);

  auto img = [&](const std::string& id) {
    const auto bytes = ReadBinaryFile(Path(crop_rel(id)));
    return "<img src=\"data:image/png;base64," + Base64Encode(bytes) +
           "\" alt=\"" + HtmlEscape(id.substr(0, 12)) + "\">";
  };
  std::string html =
      "<!DOCTYPE html>\n<html><head><meta charset=\"utf-8\">"
      "<title>Systematic errors: " + HtmlEscape(cfg_.dataset_id) + "</title>"
      "<style>body{font-family:sans-serif;margin:2em}"
      ".row{display:flex;gap:1em;align-items:flex-start;margin-bottom:2em;"
      "border-bottom:1px solid #ccc;padding-bottom:1em}"
      ".cell{max-width:260px}.cell img{display:block;image-rendering:pixelated}"
      ".query{border-left:4px solid #c33;padding-left:.5em}"
      "small{color:#555}</style></head><body>\n";
  html += "<h1>Systematic errors in " + HtmlEscape(cfg_.dataset_id) + " / " +
          HtmlEscape(cfg_.ssm_id) + "</h1>\n";
  html += "<p>" + HtmlEscape(summary) + " alpha = " +
          HtmlEscape(FormatDouble(cfg_.scoring.alpha)) +
          ", q = " + std::to_string(cfg_.scoring.q) + ".</p>\n";
  for (const auto* s : found) {
    html += "<div class=\"row\"><div class=\"cell query\">" + img(s->patch_id) +
            "<p><b>" + HtmlEscape(s->class_name) + "</b>: " +
            HtmlEscape(s->caption) + "</p><small>sigma1 " + Fixed(s->sigma1, 4) +
            ", sigma2 " + Fixed(s->sigma2, 4) + ", sigma3 " +
            Fixed(s->sigma3, 4) + ", margin " + Fixed(s->Margin(), 4) +
            "<br>" + HtmlEscape(s->patch_id.substr(0, 16)) + "</small></div>";
    for (std::size_t i = 0; i < s->neighbor_ids.size(); ++i) {
      const auto& id = s->neighbor_ids[i];
      html += "<div class=\"cell\">" + img(id) + "<p>" +
              HtmlEscape(caption_of(id)) + "</p><small>cos " +
              Fixed(s->neighbor_similarities[i], 4) + "</small></div>";
    }
    html += "</div>\n";
  }
  html += "</body></html>\n";
  WriteFileAtomic(Path("report/index.html"), html);
  return HashOutputs({"report/report.json", "report/index.html"});
}

// -------------------------------------------------------------------- sweep

SweepResult Sweep(const RunConfig& base, const std::vector<int>& min_sizes,
                  const std::vector<int>& qs, const fs::path& out_dir) {
  if (min_sizes.empty() || qs.empty()) {
    Fail(ErrorCode::kInvalidArgument, "sweep needs at least one min size and one q");
  }
  for (int v : min_sizes) {
    if (v < 1) Fail(ErrorCode::kInvalidArgument, "min sizes must be positive");
  }
  for (int v : qs) {
    if (v < 1) Fail(ErrorCode::kInvalidArgument, "q values must be positive");
  }
  const fs::path out = fs::absolute(out_dir);
  const fs::path cache = base.EffectiveCacheDir();
  const fs::path verdicts = base.EffectiveVerdictsDir();

  SweepResult result;
  Json tables = Json::array();
  std::string csv;
  for (int a : min_sizes) {
    for (int q : qs) {
      RunConfig cfg = base;
      cfg.min_patch_size = a;
      cfg.scoring.q = q;
      const std::string name = "a" + std::to_string(a) + "_q" + std::to_string(q);
      cfg.run_dir = out / name;
      cfg.cache_dir = cache;
      cfg.verdicts_dir = verdicts;
      auto run = Pipeline::Open(cfg);
      try {
        run->RunAll();
      } catch (const Error& e) {
        Rethrow(e, "sweep run " + name);
      }
      const auto stats = run->oracle_stats();
      result.oracle_stats.transport_calls += stats.transport_calls;
      result.oracle_stats.cache_hits += stats.cache_hits;
      SweepResult::Table t{a, q, cfg.run_dir, ReadJsonFile(cfg.run_dir / "eval/metrics.json")};
      tables.push_back({{"name", name}, {"min_size", a}, {"q", q}, {"metrics", t.metrics}});
      csv += GridCsv(GridFromJson(t.metrics.at("precision_errors")),
                     name + "/precision_errors");
      if (!t.metrics.at("systematic").is_null()) {
        csv += GridCsv(GridFromJson(t.metrics.at("systematic")),
                       name + "/systematic_errors");
      }
      result.tables.push_back(std::move(t));
    }
  }
  WriteJsonFile(out / "tables.json", Json{{"tables", tables}});
  WriteFileAtomic(out / "tables.csv", csv);
  return result;
}

}  // namespace auditor
