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

#include "auditor/evaluation.hpp"

#include <algorithm>
#include <cstdio>
#include <set>

#include "auditor/error.hpp"

namespace auditor {

BinaryMask MakeBinaryForClass(const ClassMap& map, int class_index,
                              const BoundingBox& bbox) {
  if (bbox.x0 < 0 || bbox.y0 < 0 || bbox.x1 > map.width ||
      bbox.y1 > map.height || bbox.x0 >= bbox.x1 || bbox.y0 >= bbox.y1) {
    Fail(ErrorCode::kInvalidArgument, "bounding box outside class map");
  }
  BinaryMask m;
  m.width = bbox.Width();
  m.height = bbox.Height();
  m.bits.reserve(static_cast<std::size_t>(m.width) * m.height);
  for (int y = bbox.y0; y < bbox.y1; ++y) {
    for (int x = bbox.x0; x < bbox.x1; ++x) {
      m.bits.push_back(map.At(x, y) == class_index ? 1 : 0);
    }
  }
  return m;
}

double Iou(const BinaryMask& a, const BinaryMask& b) {
  if (a.width != b.width || a.height != b.height ||
      a.bits.size() != b.bits.size()) {
    Fail(ErrorCode::kDimensionMismatch, "IoU of masks with different sizes");
  }
  std::int64_t inter = 0;
  std::int64_t uni = 0;
  for (std::size_t i = 0; i < a.bits.size(); ++i) {
    const bool x = a.bits[i] != 0;
    const bool y = b.bits[i] != 0;
    inter += (x && y) ? 1 : 0;
    uni += (x || y) ? 1 : 0;
  }
  if (uni == 0) return 0.0;
  return static_cast<double>(inter) / static_cast<double>(uni);
}

std::string_view OutcomeName(Outcome o) {
  switch (o) {
    case Outcome::kTruePositive: return "TP";
    case Outcome::kFalsePositive: return "FP";
    case Outcome::kTrueNegative: return "TN";
    case Outcome::kFalseNegative: return "FN";
  }
  return "?";
}

Outcome PositiveFromIou(double iou) {
  return iou > kPresenceIou ? Outcome::kFalsePositive : Outcome::kTruePositive;
}

Outcome NegativeFromIou(double iou) {
  return iou > kPresenceIou ? Outcome::kTrueNegative : Outcome::kFalseNegative;
}

namespace {

double PatchIou(const Patch& p, const ClassMap& pred, const ClassMap* gt) {
  if (gt == nullptr) {
    Fail(ErrorCode::kMissingGroundTruth, "no ground truth for image " + p.image_id);
  }
  if (gt->width != pred.width || gt->height != pred.height) {
    Fail(ErrorCode::kDimensionMismatch, "ground truth and prediction differ in size");
  }
  return Iou(MakeBinaryForClass(pred, p.cls.index, p.bbox),
             MakeBinaryForClass(*gt, p.cls.index, p.bbox));
}

}  // namespace

Outcome EvaluatePositive(const Patch& p, const ClassMap& pred,
                         const ClassMap* gt) {
  return PositiveFromIou(PatchIou(p, pred, gt));
}

Outcome EvaluateNegative(const Patch& p, const ClassMap& pred,
                         const ClassMap* gt) {
  return NegativeFromIou(PatchIou(p, pred, gt));
}

void ConfusionCounts::Add(Outcome o) {
  switch (o) {
    case Outcome::kTruePositive: ++tp; break;
    case Outcome::kFalsePositive: ++fp; break;
    case Outcome::kTrueNegative: ++tn; break;
    case Outcome::kFalseNegative: ++fn; break;
  }
}

ConfusionMetrics ComputeMetrics(const ConfusionCounts& c) {
  if (c.tp < 0 || c.fp < 0 || c.fn < 0 || c.tn < 0) {
    Fail(ErrorCode::kInvalidArgument, "negative confusion count");
  }
  const std::int64_t total = c.Total();
  if (total == 0) Fail(ErrorCode::kEmptyCounts, "no outcomes to score");
  ConfusionMetrics m;
  m.accuracy = static_cast<double>(c.tp + c.tn) / static_cast<double>(total);
  m.precision = c.tp + c.fp == 0
                    ? 0.0
                    : static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fp);
  m.recall = c.tp + c.fn == 0
                 ? 0.0
                 : static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fn);
  m.f1 = m.precision + m.recall == 0.0
             ? 0.0
             : 2.0 * m.precision * m.recall / (m.precision + m.recall);
  return m;
}

PrecisionEvaluation EvaluatePrecisionErrors(
    const PatchSet& patches, const ErrorPatchSet& errors,
    const std::map<std::string, LabelMaps>& maps_by_image) {
  PrecisionEvaluation out;
  for (const Patch& p : patches.patches) {
    auto it = maps_by_image.find(p.image_id);
    if (it == maps_by_image.end()) {
      Fail(ErrorCode::kInvalidArgument, "no label maps for image " + p.image_id);
    }
    if (!it->second.gt) {
      out.missing_ground_truth.push_back(p.patch_id);
      continue;
    }
    const ClassMap* gt = &*it->second.gt;
    out.counts.Add(errors.Contains(p.patch_id)
                       ? EvaluatePositive(p, it->second.pred, gt)
                       : EvaluateNegative(p, it->second.pred, gt));
  }
  return out;
}

// ------------------------------------------------------------ human verdicts

Json VerdictToJson(const VerdictRecord& v) {
  return Json{{"patch_id", v.patch_id},
              {"evaluator_id", v.evaluator_id},
              {"cond_concept_not_cj", v.cond_concept_not_cj},
              {"cond_neighbors_same_concept", v.cond_neighbors_same_concept},
              {"cond_caption_adequate", v.cond_caption_adequate},
              {"verdict", v.verdict},
              {"timestamp", v.timestamp}};
}

VerdictRecord VerdictFromJson(const Json& j) {
  VerdictRecord v;
  try {
    v.patch_id = j.at("patch_id").get<std::string>();
    v.evaluator_id = j.at("evaluator_id").get<std::string>();
    v.cond_concept_not_cj = j.at("cond_concept_not_cj").get<bool>();
    v.cond_neighbors_same_concept = j.at("cond_neighbors_same_concept").get<bool>();
    v.cond_caption_adequate = j.at("cond_caption_adequate").get<bool>();
    v.verdict = j.at("verdict").get<bool>();
    v.timestamp = j.value("timestamp", std::string());
  } catch (const Json::exception& e) {
    Fail(ErrorCode::kInvalidVerdict, e.what());
  }
  const bool all = v.cond_concept_not_cj && v.cond_neighbors_same_concept &&
                   v.cond_caption_adequate;
  if (v.verdict != all) {
    Fail(ErrorCode::kInvalidVerdict,
         "verdict for " + v.patch_id + " by " + v.evaluator_id +
             " is not the conjunction of its conditions");
  }
  return v;
}

std::vector<VerdictRecord> ReadVerdictDir(const std::filesystem::path& dir) {
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".jsonl") {
      files.push_back(entry.path());
    }
  }
  std::sort(files.begin(), files.end());
  std::vector<VerdictRecord> out;
  for (const auto& f : files) {
    const std::string evaluator = f.stem().string();
    for (const Json& row : ReadJsonLines(f)) {
      VerdictRecord v = VerdictFromJson(row);
      if (v.evaluator_id != evaluator) {
        Fail(ErrorCode::kInvalidVerdict, f.string() + " holds a record by '" +
                                             v.evaluator_id + "'");
      }
      out.push_back(std::move(v));
    }
  }
  return out;
}

VerdictAggregation AggregateVerdicts(const std::vector<VerdictRecord>& records,
                                     const std::vector<std::string>& panel,
                                     int quorum) {
  if (panel.empty()) Fail(ErrorCode::kInvalidArgument, "empty evaluator panel");
  const std::set<std::string> members(panel.begin(), panel.end());
  if (members.size() != panel.size()) {
    Fail(ErrorCode::kInvalidArgument, "panel lists an evaluator twice");
  }
  const int panel_size = static_cast<int>(panel.size());
  if (quorum <= 0) quorum = panel_size;
  if (quorum > panel_size) {
    Fail(ErrorCode::kInvalidArgument, "quorum exceeds panel size");
  }
  const int majority = (panel_size + 1) / 2;

  std::set<std::pair<std::string, std::string>> seen;
  std::map<std::string, std::pair<int, int>> tally;  // patch -> (judged, yes)
  for (const auto& r : records) {
    if (!members.count(r.evaluator_id)) continue;
    if (!seen.emplace(r.patch_id, r.evaluator_id).second) {
      Fail(ErrorCode::kDuplicateVerdict,
           r.evaluator_id + " judged " + r.patch_id + " more than once");
    }
    auto& [judged, yes] = tally[r.patch_id];
    ++judged;
    if (r.verdict) ++yes;
  }
  VerdictAggregation agg;
  agg.panel = panel;
  agg.quorum = quorum;
  for (const auto& [patch, t] : tally) {
    if (t.first < quorum) {
      agg.incomplete.push_back(patch);
    } else {
      agg.verdicts[patch] = t.second >= majority;
    }
  }
  return agg;
}

Json AggregationToJson(const VerdictAggregation& agg) {
  Json verdicts = Json::object();
  for (const auto& [patch, v] : agg.verdicts) verdicts[patch] = v;
  return Json{{"panel", agg.panel},
              {"quorum", agg.quorum},
              {"verdicts", std::move(verdicts)},
              {"incomplete", agg.incomplete}};
}

SystematicAssessment AssessSystematic(
    const std::vector<SystematicityScore>& scores,
    const VerdictAggregation& human) {
  SystematicAssessment out;
  std::vector<std::string> uncovered;
  for (const auto& s : scores) {
    auto it = human.verdicts.find(s.patch_id);
    if (s.omega == 1) {
      ++out.predicted_systematic;
      if (it == human.verdicts.end()) {
        uncovered.push_back(s.patch_id);
        continue;
      }
      if (it->second) {
        ++out.counts.tp;
        ++out.confirmed;
      } else {
        ++out.counts.fp;
      }
    } else if (it != human.verdicts.end()) {
      ++(it->second ? out.counts.fn : out.counts.tn);
    }
  }
  if (!uncovered.empty()) {
    std::string list;
    for (const auto& id : uncovered) list += (list.empty() ? "" : ", ") + id;
    Fail(ErrorCode::kUncoveredPrediction,
         std::to_string(uncovered.size()) +
             " predicted systematic patches lack an aggregated verdict: " + list);
  }
  if (out.predicted_systematic > 0) {
    out.prediction_only_accuracy = static_cast<double>(out.confirmed) /
                               static_cast<double>(out.predicted_systematic);
  }
  return out;
}

// -------------------------------------------------------------- metric grid

void MetricGrid::Set(const GridRow& row, const GridColumn& col,
                     MetricCell cell) {
  auto r = std::find(rows.begin(), rows.end(), row);
  std::size_t ri = static_cast<std::size_t>(r - rows.begin());
  if (r == rows.end()) {
    rows.push_back(row);
    cells.emplace_back(columns.size());
  }
  auto c = std::find(columns.begin(), columns.end(), col);
  std::size_t ci = static_cast<std::size_t>(c - columns.begin());
  if (c == columns.end()) {
    columns.push_back(col);
    for (auto& line : cells) line.resize(columns.size());
  }
  cells[ri][ci] = std::move(cell);
}

Json CellToJson(const MetricCell& cell) {
  const auto& c = cell.counts;
  Json j = {{"counts", {{"tp", c.tp}, {"fp", c.fp}, {"fn", c.fn}, {"tn", c.tn}}}};
  if (c.Total() > 0) {
    const ConfusionMetrics m = ComputeMetrics(c);
    j["accuracy"] = m.accuracy;
    j["precision"] = m.precision;
    j["recall"] = m.recall;
    j["f1"] = m.f1;
  } else {
    j["accuracy"] = nullptr;
    j["precision"] = nullptr;
    j["recall"] = nullptr;
    j["f1"] = nullptr;
  }
  if (cell.predicted_systematic) {
    const std::int64_t predicted = *cell.predicted_systematic;
    const std::int64_t confirmed = cell.confirmed.value_or(0);
    j["predicted_systematic"] = predicted;
    j["confirmed"] = confirmed;
    if (predicted > 0) {
      j["prediction_only_accuracy"] =
          static_cast<double>(confirmed) / static_cast<double>(predicted);
    } else {
      j["prediction_only_accuracy"] = nullptr;
      j["note"] = "no systematic errors predicted";
    }
  }
  return j;
}

Json GridToJson(const MetricGrid& grid) {
  Json rows = Json::array();
  for (const auto& r : grid.rows) {
    rows.push_back({{"dataset_id", r.dataset_id}, {"class", r.class_name}});
  }
  Json cols = Json::array();
  for (const auto& c : grid.columns) {
    cols.push_back({{"detector_id", c.detector_id}, {"ssm_id", c.ssm_id}});
  }
  Json cells = Json::array();
  for (const auto& line : grid.cells) {
    Json out_line = Json::array();
    for (const auto& cell : line) {
      out_line.push_back(cell ? CellToJson(*cell) : Json(nullptr));
    }
    cells.push_back(std::move(out_line));
  }
  return Json{{"rows", rows}, {"columns", cols}, {"cells", cells}};
}

MetricGrid GridFromJson(const Json& j) {
  MetricGrid g;
  try {
    for (const auto& r : j.at("rows")) {
      g.rows.push_back({r.at("dataset_id").get<std::string>(),
                        r.at("class").get<std::string>()});
    }
    for (const auto& c : j.at("columns")) {
      g.columns.push_back({c.at("detector_id").get<std::string>(),
                           c.at("ssm_id").get<std::string>()});
    }
    const Json& cells = j.at("cells");
    if (cells.size() != g.rows.size()) {
      Fail(ErrorCode::kIo, "metric grid has wrong row count");
    }
    for (const auto& line : cells) {
      if (line.size() != g.columns.size()) {
        Fail(ErrorCode::kIo, "metric grid has wrong column count");
      }
      std::vector<std::optional<MetricCell>> out_line;
      for (const auto& cell : line) {
        if (cell.is_null()) {
          out_line.emplace_back();
          continue;
        }
        MetricCell mc;
        const Json& counts = cell.at("counts");
        mc.counts = {counts.at("tp").get<std::int64_t>(),
                     counts.at("fp").get<std::int64_t>(),
                     counts.at("fn").get<std::int64_t>(),
                     counts.at("tn").get<std::int64_t>()};
        if (cell.contains("predicted_systematic")) {
          mc.predicted_systematic = cell.at("predicted_systematic").get<std::int64_t>();
          mc.confirmed = cell.at("confirmed").get<std::int64_t>();
        }
        out_line.push_back(mc);
      }
      g.cells.push_back(std::move(out_line));
    }
  } catch (const Json::exception& e) {
    Fail(ErrorCode::kIo, std::string("metric grid: ") + e.what());
  }
  return g;
}

MetricGrid MergeGrids(const std::vector<MetricGrid>& grids) {
  MetricGrid out;
  for (const auto& g : grids) {
    for (std::size_t r = 0; r < g.rows.size(); ++r) {
      for (std::size_t c = 0; c < g.columns.size(); ++c) {
        if (!g.cells[r][c]) continue;
        auto ri = std::find(out.rows.begin(), out.rows.end(), g.rows[r]);
        auto ci = std::find(out.columns.begin(), out.columns.end(), g.columns[c]);
        if (ri != out.rows.end() && ci != out.columns.end()) {
          const auto& existing =
              out.cells[static_cast<std::size_t>(ri - out.rows.begin())]
                       [static_cast<std::size_t>(ci - out.columns.begin())];
          if (existing && Canonical(CellToJson(*existing)) !=
                              Canonical(CellToJson(*g.cells[r][c]))) {
            Fail(ErrorCode::kInvalidArgument,
                 "conflicting cells for " + g.rows[r].dataset_id + "/" +
                     g.rows[r].class_name);
          }
        }
        out.Set(g.rows[r], g.columns[c], *g.cells[r][c]);
      }
    }
  }
  // Rows that never received a cell are still wanted in the table shape.
  for (const auto& g : grids) {
    for (const auto& r : g.rows) {
      if (std::find(out.rows.begin(), out.rows.end(), r) == out.rows.end()) {
        out.rows.push_back(r);
        out.cells.emplace_back(out.columns.size());
      }
    }
  }
  return out;
}

std::string GridCsv(const MetricGrid& grid, std::string_view table_name) {
  std::string out = "table,dataset,class";
  for (const auto& c : grid.columns) out += "," + c.detector_id + "/" + c.ssm_id;
  out += "\n";
  for (std::size_t r = 0; r < grid.rows.size(); ++r) {
    out += std::string(table_name) + "," + grid.rows[r].dataset_id + "," +
           grid.rows[r].class_name;
    for (std::size_t c = 0; c < grid.columns.size(); ++c) {
      out += ",";
      const auto& cell = grid.cells[r][c];
      if (!cell) continue;
      std::optional<double> value;
      if (cell->predicted_systematic) {
        if (*cell->predicted_systematic > 0) {
          value = static_cast<double>(cell->confirmed.value_or(0)) /
                  static_cast<double>(*cell->predicted_systematic);
        }
      } else if (cell->counts.Total() > 0) {
        value = ComputeMetrics(cell->counts).accuracy;
      }
      if (value) {
        char buf[32];
        std::snprintf(buf, sizeof(buf), "%.2f", *value * 100.0);
        out += buf;
      }
    }
    out += "\n";
  }
  return out;
}

}  // namespace auditor
