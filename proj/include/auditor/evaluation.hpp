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

#ifndef AUDITOR_EVALUATION_HPP_
#define AUDITOR_EVALUATION_HPP_

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "auditor/error_detection.hpp"
#include "auditor/patch_extraction.hpp"
#include "auditor/systematicity.hpp"

namespace auditor {

// IoU above which a class counts as present in a patch. Strict.
inline constexpr double kPresenceIou = 0.7;

struct BinaryMask {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> bits;  // 0 or 1, row-major
};

// Cells of `map` inside `bbox` equal to `class_index`.
BinaryMask MakeBinaryForClass(const ClassMap& map, int class_index,
                              const BoundingBox& bbox);

// |a & b| / |a | b|; 0 when the union is empty. kDimensionMismatch on size
// disagreement.
double Iou(const BinaryMask& a, const BinaryMask& b);

enum class Outcome { kTruePositive, kFalsePositive, kTrueNegative, kFalseNegative };

std::string_view OutcomeName(Outcome o);

Outcome PositiveFromIou(double iou);  // FP iff iou > 0.7
Outcome NegativeFromIou(double iou);  // TN iff iou > 0.7

// For a patch flagged as a precision error. `gt` null -> kMissingGroundTruth.
Outcome EvaluatePositive(const Patch& p, const ClassMap& pred, const ClassMap* gt);
// For a patch the detector confirmed.
Outcome EvaluateNegative(const Patch& p, const ClassMap& pred, const ClassMap* gt);

struct ConfusionCounts {
  std::int64_t tp = 0;
  std::int64_t fp = 0;
  std::int64_t fn = 0;
  std::int64_t tn = 0;

  std::int64_t Total() const { return tp + fp + fn + tn; }
  void Add(Outcome o);
  friend bool operator==(const ConfusionCounts&, const ConfusionCounts&) = default;
};

struct ConfusionMetrics {
  double accuracy = 0;
  double precision = 0;
  double recall = 0;
  double f1 = 0;
};

// Zero denominators give 0 for precision, recall and f1. kEmptyCounts when
// every count is zero.
ConfusionMetrics ComputeMetrics(const ConfusionCounts& c);

struct PrecisionEvaluation {
  ConfusionCounts counts;
  std::vector<std::string> missing_ground_truth;  // excluded from counts
};

struct LabelMaps {
  ClassMap pred;
  std::optional<ClassMap> gt;
};

// Positives (error set members) and negatives (the rest of the patch set)
// scored against ground truth; patches whose image has no ground truth are
// listed instead of counted.
PrecisionEvaluation EvaluatePrecisionErrors(
    const PatchSet& patches, const ErrorPatchSet& errors,
    const std::map<std::string, LabelMaps>& maps_by_image);

// ------------------------------------------------------------ human verdicts

struct VerdictRecord {
  std::string patch_id;
  std::string evaluator_id;
  bool cond_concept_not_cj = false;
  bool cond_neighbors_same_concept = false;
  bool cond_caption_adequate = false;
  bool verdict = false;
  std::string timestamp;
};

Json VerdictToJson(const VerdictRecord& v);
// kInvalidVerdict when verdict is not the AND of the three conditions.
VerdictRecord VerdictFromJson(const Json& j);

// Reads <dir>/<evaluator_id>.jsonl for every file present. Records must name
// the evaluator their file is named after.
std::vector<VerdictRecord> ReadVerdictDir(const std::filesystem::path& dir);

struct VerdictAggregation {
  std::vector<std::string> panel;
  int quorum = 0;
  std::map<std::string, bool> verdicts;   // patches meeting quorum
  std::vector<std::string> incomplete;    // judged, but below quorum
};

// Majority of the panel: true iff at least ceil(|panel| / 2) panelists who
// judged the patch said true. Patches judged by fewer than `quorum`
// panelists (0 = whole panel) are reported incomplete. Records from
// evaluators outside the panel are ignored. kDuplicateVerdict when one
// evaluator judged a patch twice.
VerdictAggregation AggregateVerdicts(const std::vector<VerdictRecord>& records,
                                     const std::vector<std::string>& panel,
                                     int quorum = 0);

Json AggregationToJson(const VerdictAggregation& agg);

struct SystematicAssessment {
  ConfusionCounts counts;  // positive = predicted systematic (omega = 1)
  std::int64_t predicted_systematic = 0;
  std::int64_t confirmed = 0;  // predicted and confirmed by the panel
  // confirmed / predicted: what a table scoring only predictions reports.
  std::optional<double> prediction_only_accuracy;
};

// tp: omega=1 & confirmed, fp: omega=1 & rejected, fn: omega=0 & confirmed,
// tn: omega=0 & rejected. omega=0 patches without a verdict are skipped;
// omega=1 patches without one raise kUncoveredPrediction.
SystematicAssessment AssessSystematic(
    const std::vector<SystematicityScore>& scores,
    const VerdictAggregation& human);

// -------------------------------------------------------------- metric grid

struct GridRow {
  std::string dataset_id;
  std::string class_name;
  friend auto operator<=>(const GridRow&, const GridRow&) = default;
};

struct GridColumn {
  std::string detector_id;
  std::string ssm_id;
  friend auto operator<=>(const GridColumn&, const GridColumn&) = default;
};

struct MetricCell {
  ConfusionCounts counts;
  // Set only in systematic-assessment grids.
  std::optional<std::int64_t> predicted_systematic;
  std::optional<std::int64_t> confirmed;
};

struct MetricGrid {
  std::vector<GridRow> rows;
  std::vector<GridColumn> columns;
  // cells[row][column]; nullopt where no run covered the combination.
  std::vector<std::vector<std::optional<MetricCell>>> cells;

  void Set(const GridRow& row, const GridColumn& col, MetricCell cell);
};

Json CellToJson(const MetricCell& cell);
Json GridToJson(const MetricGrid& grid);
MetricGrid GridFromJson(const Json& j);

// Union of rows and columns; a cell present in two inputs must agree.
MetricGrid MergeGrids(const std::vector<MetricGrid>& grids);

// Header "table,dataset,class,<detector>/<ssm>..."; cells are percentages
// with two decimals: accuracy for detection grids, the prediction-only score for
// systematic grids. Blank where undefined.
std::string GridCsv(const MetricGrid& grid, std::string_view table_name);

}  // namespace auditor

#endif  // AUDITOR_EVALUATION_HPP_
