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

// Command-line front end. Talks to the pipeline only through the C API.

#include <unistd.h>

#include <cinttypes>
#include <cstdio>
#include <filesystem>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "auditor/auditor.h"

namespace {

int Report(auditor_status status) {
  if (status != AUDITOR_OK) {
    std::fprintf(stderr, "auditor: %s\n", auditor_last_error());
  }
  return auditor_exit_code(status);
}

const char* OrNull(const std::string& s) { return s.empty() ? nullptr : s.c_str(); }

void PrintCalls(const auditor_run* run) {
  uint64_t calls = 0;
  uint64_t hits = 0;
  if (auditor_run_oracle_calls(run, &calls, &hits) == AUDITOR_OK) {
    std::printf("oracle: %" PRIu64 " transport calls, %" PRIu64 " cache hits\n",
                calls, hits);
  }
}

class RunHandle {
 public:
  ~RunHandle() { auditor_run_close(run_); }
  auditor_run** out() { return &run_; }
  auditor_run* get() const { return run_; }

 private:
  auditor_run* run_ = nullptr;
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Discovers systematic precision errors in segmentation predictions"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(auditor_version()));

  int exit_code = 0;

  // run
  std::string config;
  std::string run_dir;
  auto* run = app.add_subcommand("run", "Run every stage for a config");
  run->add_option("--config", config, "Run config (JSON)")->required();
  run->add_option("--run-dir", run_dir, "Override the config's run directory");
  run->callback([&] {
    RunHandle h;
    auditor_status st = auditor_run_open(config.c_str(), OrNull(run_dir), h.out());
    if (st == AUDITOR_OK) st = auditor_run_all(h.get());
    if (st == AUDITOR_OK) {
      std::printf("run complete: %s\n", auditor_run_dir(h.get()));
      PrintCalls(h.get());
    }
    exit_code = Report(st);
  });

  // stage
  std::string stage_name;
  auto* stage = app.add_subcommand("stage", "Run a single stage of an existing run");
  stage->add_option("name", stage_name,
                    "extract, detect, embed, caption, score, evaluate or report")
      ->required();
  stage->add_option("--run-dir", run_dir, "Run directory")->required();
  stage->add_option("--config", config, "Config that must match the run's");
  stage->callback([&] {
    RunHandle h;
    auditor_status st = auditor_run_open_dir(run_dir.c_str(), OrNull(config), h.out());
    int skipped = 0;
    if (st == AUDITOR_OK) st = auditor_run_stage(h.get(), stage_name.c_str(), &skipped);
    if (st == AUDITOR_OK) {
      std::printf("%s: %s\n", stage_name.c_str(), skipped ? "up to date" : "done");
      PrintCalls(h.get());
    }
    exit_code = Report(st);
  });

  // sweep
  std::string min_sizes = "40,60,80";
  std::string qs = "3,5,7";
  std::string out_dir;
  auto* sweep = app.add_subcommand("sweep", "Rerun over minimum patch sizes and q");
  sweep->add_option("--config", config, "Base run config")->required();
  sweep->add_option("--run-dir", run_dir, "Base run directory (cache, verdicts)");
  sweep->add_option("--min-sizes", min_sizes, "Comma-separated minimum patch sizes")
      ->capture_default_str();
  sweep->add_option("--qs", qs, "Comma-separated neighborhood sizes")
      ->capture_default_str();
  sweep->add_option("--out", out_dir, "Output directory (default <run_dir>/sweep)");
  sweep->callback([&] {
    char* tables = nullptr;
    auditor_status st = auditor_sweep(config.c_str(), OrNull(run_dir), min_sizes.c_str(),
                                      qs.c_str(), OrNull(out_dir), &tables);
    if (st == AUDITOR_OK) std::printf("sweep complete\n");
    auditor_string_free(tables);
    exit_code = Report(st);
  });

  // evaluate
  std::string gt_manifest;
  auto* evaluate = app.add_subcommand("evaluate", "Score a run against ground truth and verdicts");
  evaluate->add_option("--run-dir", run_dir, "Run directory")->required();
  evaluate->add_option("--gt-manifest", gt_manifest,
                       "JSON lines {image_id, gt_map_path}; overrides the config");
  evaluate->callback([&] {
    RunHandle h;
    auditor_status st = auditor_run_open_dir(run_dir.c_str(), nullptr, h.out());
    if (st == AUDITOR_OK) st = auditor_run_evaluate(h.get(), OrNull(gt_manifest));
    if (st == AUDITOR_OK) std::printf("metrics written to %s/eval\n", auditor_run_dir(h.get()));
    exit_code = Report(st);
  });

  // verdicts aggregate
  std::string panel;
  std::string verdicts_dir;
  int quorum = 0;
  auto* verdicts = app.add_subcommand("verdicts", "Human verdict tools");
  verdicts->require_subcommand(1);
  auto* aggregate = verdicts->add_subcommand("aggregate", "Majority-aggregate verdict files");
  aggregate->add_option("--panel", panel, "Comma-separated evaluator ids (default: all files)");
  aggregate->add_option("--run-dir", run_dir, "Run directory; reads <run-dir>/verdicts");
  aggregate->add_option("--verdicts-dir", verdicts_dir, "Verdict directory");
  aggregate->add_option("--quorum", quorum, "Panelists required per patch (0: all)");
  aggregate->callback([&] {
    std::string dir = verdicts_dir;
    if (dir.empty() && !run_dir.empty()) dir = (std::filesystem::path(run_dir) / "verdicts").string();
    if (dir.empty()) {
      std::fprintf(stderr, "auditor: give --run-dir or --verdicts-dir\n");
      exit_code = 2;
      return;
    }
    char* json = nullptr;
    auditor_status st = auditor_aggregate_verdicts(dir.c_str(), panel.c_str(), quorum, &json);
    if (st == AUDITOR_OK) std::printf("%s\n", json);
    auditor_string_free(json);
    exit_code = Report(st);
  });

  // report
  auto* report = app.add_subcommand("report", "Write report/report.json and report/index.html");
  report->add_option("--run-dir", run_dir, "Run directory")->required();
  report->callback([&] {
    RunHandle h;
    auditor_status st = auditor_run_open_dir(run_dir.c_str(), nullptr, h.out());
    if (st == AUDITOR_OK) st = auditor_run_report(h.get());
    if (st == AUDITOR_OK) std::printf("report written to %s/report\n", auditor_run_dir(h.get()));
    exit_code = Report(st);
  });

  // oracle check
  std::string endpoint;
  double timeout = 10.0;
  auto* oracle = app.add_subcommand("oracle", "Oracle service tools");
  oracle->require_subcommand(1);
  auto* check = oracle->add_subcommand("check", "Run the protocol conformance suite");
  check->add_option("--endpoint", endpoint, "Base URL, e.g. http://127.0.0.1:8000")->required();
  check->add_option("--timeout", timeout, "Seconds per request")->capture_default_str();
  check->callback([&] {
    char* json = nullptr;
    auditor_status st = auditor_oracle_check(endpoint.c_str(), timeout, &json);
    if (json != nullptr) std::printf("%s\n", json);
    auditor_string_free(json);
    exit_code = Report(st);
  });

  // review
  int port = 8080;
  auto* review = app.add_subcommand("review", "Launch the verdict review UI for a run");
  review->add_option("--run-dir", run_dir, "Run directory")->required();
  review->add_option("--port", port, "Port to serve on")->capture_default_str();
  review->callback([&] {
    char* json = nullptr;
    const auditor_status st = auditor_review_queue(run_dir.c_str(), &json);
    auditor_string_free(json);
    if (st != AUDITOR_OK) {
      exit_code = Report(st);
      return;
    }
    const std::string port_str = std::to_string(port);
    std::vector<char*> args = {const_cast<char*>("auditor-review-ui"),
                               const_cast<char*>("--run-dir"), run_dir.data(),
                               const_cast<char*>("--port"), const_cast<char*>(port_str.c_str()),
                               nullptr};
    ::execvp(args[0], args.data());
    std::printf("review queue written to %s/review/queue.json\n"
                "auditor-review-ui is not on PATH; start it with --run-dir %s --port %s "
                "to collect verdicts into %s/verdicts\n",
                run_dir.c_str(), run_dir.c_str(), port_str.c_str(), run_dir.c_str());
    exit_code = 0;
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }
  return exit_code;
}
