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

#include "auditor/auditor.h"

#include <charconv>
#include <cstdlib>
#include <cstring>
#include <memory>
#include <string>
#include <vector>

#include "auditor/error.hpp"
#include "auditor/pipeline.hpp"

struct auditor_run {
  std::unique_ptr<auditor::Pipeline> pipeline;
  std::string run_dir;
};

namespace {

using auditor::ErrorCode;

thread_local std::string g_last_error;

auditor_status ToStatus(ErrorCode code) {
  return static_cast<auditor_status>(static_cast<int>(code));
}

template <typename Fn>
auditor_status Guard(Fn&& fn) {
  try {
    fn();
    g_last_error.clear();
    return AUDITOR_OK;
  } catch (const auditor::Error& e) {
    g_last_error = e.what();
    return ToStatus(e.code());
  } catch (const std::bad_alloc&) {
    g_last_error = "out of memory";
    return AUDITOR_INTERNAL;
  } catch (const std::exception& e) {
    g_last_error = std::string("Internal: ") + e.what();
    return AUDITOR_INTERNAL;
  }
}

char* CopyString(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (out == nullptr) throw std::bad_alloc();
  std::memcpy(out, s.data(), s.size() + 1);
  return out;
}

std::vector<std::string> SplitList(const char* s) {
  std::vector<std::string> out;
  if (s == nullptr) return out;
  std::string cur;
  for (const char* p = s;; ++p) {
    if (*p == ',' || *p == '\0') {
      std::size_t b = cur.find_first_not_of(" \t");
      std::size_t e = cur.find_last_not_of(" \t");
      if (b != std::string::npos) out.push_back(cur.substr(b, e - b + 1));
      cur.clear();
      if (*p == '\0') break;
    } else {
      cur += *p;
    }
  }
  return out;
}

std::vector<int> IntList(const char* s, const char* what) {
  std::vector<int> out;
  for (const auto& item : SplitList(s)) {
    int v = 0;
    auto [ptr, ec] = std::from_chars(item.data(), item.data() + item.size(), v);
    if (ec != std::errc() || ptr != item.data() + item.size()) {
      auditor::Fail(ErrorCode::kInvalidArgument,
                    std::string("bad integer '") + item + "' in " + what);
    }
    out.push_back(v);
  }
  if (out.empty()) {
    auditor::Fail(ErrorCode::kInvalidArgument, std::string("empty ") + what);
  }
  return out;
}

void RequireNonNull(const void* p, const char* what) {
  if (p == nullptr) {
    auditor::Fail(ErrorCode::kInvalidArgument, std::string(what) + " is null");
  }
}

}  // namespace

extern "C" {

const char* auditor_version(void) { return "0.1.0"; }

const char* auditor_last_error(void) { return g_last_error.c_str(); }

int auditor_exit_code(auditor_status status) {
  switch (status) {
    case AUDITOR_OK:
      return 0;
    case AUDITOR_CONFIG:
    case AUDITOR_CONFIG_MISMATCH:
      return 2;
    case AUDITOR_ORACLE_UNAVAILABLE:
    case AUDITOR_ORACLE_REJECTED:
    case AUDITOR_FIXTURE_MISS:
    case AUDITOR_BAD_RESPONSE:
      return 3;
    case AUDITOR_STAGE_DEPENDENCY_MISSING:
      return 4;
    default:
      return 1;
  }
}

void auditor_string_free(char* s) { std::free(s); }

auditor_status auditor_run_open(const char* config_path, const char* run_dir,
                                auditor_run** out) {
  return Guard([&] {
    RequireNonNull(config_path, "config_path");
    RequireNonNull(out, "out");
    *out = nullptr;
    auditor::RunConfig cfg = auditor::LoadRunConfig(config_path);
    if (run_dir != nullptr && *run_dir) cfg.run_dir = run_dir;
    auto run = std::make_unique<auditor_run>();
    run->pipeline = auditor::Pipeline::Open(std::move(cfg));
    run->run_dir = run->pipeline->config().run_dir.string();
    *out = run.release();
  });
}

auditor_status auditor_run_open_dir(const char* run_dir, const char* config_path,
                                    auditor_run** out) {
  return Guard([&] {
    RequireNonNull(run_dir, "run_dir");
    RequireNonNull(out, "out");
    *out = nullptr;
    auto run = std::make_unique<auditor_run>();
    if (config_path != nullptr && *config_path) {
      auditor::RunConfig cfg = auditor::LoadRunConfig(config_path);
      cfg.run_dir = run_dir;
      run->pipeline = auditor::Pipeline::Open(std::move(cfg));
    } else {
      run->pipeline = auditor::Pipeline::OpenDir(run_dir);
    }
    run->run_dir = run->pipeline->config().run_dir.string();
    *out = run.release();
  });
}

void auditor_run_close(auditor_run* run) { delete run; }

auditor_status auditor_run_all(auditor_run* run) {
  return Guard([&] {
    RequireNonNull(run, "run");
    run->pipeline->RunAll();
  });
}

auditor_status auditor_run_stage(auditor_run* run, const char* stage,
                                 int* skipped) {
  return Guard([&] {
    RequireNonNull(run, "run");
    RequireNonNull(stage, "stage");
    run->pipeline->RunStage(auditor::StageFromName(stage));
    if (skipped != nullptr) *skipped = run->pipeline->last_stage_skipped() ? 1 : 0;
  });
}

auditor_status auditor_run_evaluate(auditor_run* run, const char* gt_manifest) {
  return Guard([&] {
    RequireNonNull(run, "run");
    auditor::EvaluateOptions options;
    if (gt_manifest != nullptr && *gt_manifest) options.gt_manifest = gt_manifest;
    run->pipeline->Evaluate(options);
  });
}

auditor_status auditor_run_report(auditor_run* run) {
  return Guard([&] {
    RequireNonNull(run, "run");
    run->pipeline->RunStage(auditor::Stage::kReport);
  });
}

auditor_status auditor_run_oracle_calls(const auditor_run* run,
                                        uint64_t* transport_calls,
                                        uint64_t* cache_hits) {
  return Guard([&] {
    RequireNonNull(run, "run");
    const auto stats = run->pipeline->oracle_stats();
    if (transport_calls != nullptr) *transport_calls = stats.transport_calls;
    if (cache_hits != nullptr) *cache_hits = stats.cache_hits;
  });
}

const char* auditor_run_dir(const auditor_run* run) {
  return run == nullptr ? "" : run->run_dir.c_str();
}

auditor_status auditor_sweep(const char* config_path, const char* run_dir,
                             const char* min_sizes, const char* qs,
                             const char* out_dir, char** tables_json) {
  return Guard([&] {
    RequireNonNull(config_path, "config_path");
    auditor::RunConfig cfg = auditor::LoadRunConfig(config_path);
    if (run_dir != nullptr && *run_dir) cfg.run_dir = auditor::fs::absolute(run_dir);
    const auto sizes = IntList(min_sizes, "min sizes");
    const auto q_values = IntList(qs, "q values");
    auditor::fs::path out;
    if (out_dir != nullptr && *out_dir) {
      out = out_dir;
    } else {
      if (cfg.run_dir.empty()) {
        auditor::Fail(ErrorCode::kConfig, "sweep needs an output directory or a run_dir");
      }
      out = cfg.run_dir / "sweep";
    }
    auditor::Sweep(cfg, sizes, q_values, out);
    if (tables_json != nullptr) {
      *tables_json = CopyString(auditor::ReadFile(auditor::fs::absolute(out) / "tables.json"));
    }
  });
}

auditor_status auditor_aggregate_verdicts(const char* verdicts_dir,
                                          const char* panel, int quorum,
                                          char** result_json) {
  return Guard([&] {
    RequireNonNull(verdicts_dir, "verdicts_dir");
    RequireNonNull(result_json, "result_json");
    const auto agg =
        auditor::AggregateVerdictDir(verdicts_dir, SplitList(panel), quorum);
    *result_json = CopyString(auditor::Canonical(auditor::AggregationToJson(agg)));
  });
}

auditor_status auditor_review_queue(const char* run_dir, char** queue_json) {
  return Guard([&] {
    RequireNonNull(run_dir, "run_dir");
    const auditor::Json queue = auditor::BuildReviewQueue(run_dir);
    if (queue_json != nullptr) *queue_json = CopyString(auditor::Canonical(queue));
  });
}

auditor_status auditor_oracle_check(const char* endpoint, double timeout_seconds,
                                    char** report_json) {
  bool ok = false;
  auditor_status status = Guard([&] {
    RequireNonNull(endpoint, "endpoint");
    auditor::HttpTransport transport(endpoint, timeout_seconds > 0 ? timeout_seconds : 10.0, 1);
    const auditor::Json report = auditor::CheckProtocolConformance(transport);
    ok = report.at("ok").get<bool>();
    if (report_json != nullptr) *report_json = CopyString(report.dump(2));
  });
  if (status == AUDITOR_OK && !ok) {
    g_last_error = "oracle protocol conformance failed";
    return AUDITOR_BAD_RESPONSE;
  }
  return status;
}

}  // extern "C"
