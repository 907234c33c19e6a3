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

#ifndef AUDITOR_PATCH_EXTRACTION_HPP_
#define AUDITOR_PATCH_EXTRACTION_HPP_

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "auditor/image.hpp"
#include "auditor/json_util.hpp"

namespace auditor {

struct SemanticClass {
  int index = 0;
  std::string name;
  std::string prompt_name;  // falls back to `name` when empty

  const std::string& Prompt() const {
    return prompt_name.empty() ? name : prompt_name;
  }
  friend bool operator==(const SemanticClass&, const SemanticClass&) = default;
};

// Throws kConfig unless the name is usable as a directory component and the
// index addresses a real label.
void ValidateClass(const SemanticClass& cls);

// Half-open pixel box: [x0, x1) x [y0, y1).
struct BoundingBox {
  int x0 = 0;
  int y0 = 0;
  int x1 = 0;
  int y1 = 0;

  int Width() const { return x1 - x0; }
  int Height() const { return y1 - y0; }
  std::int64_t Area() const {
    return static_cast<std::int64_t>(Width()) * Height();
  }
  friend bool operator==(const BoundingBox&, const BoundingBox&) = default;
};

struct Region {
  BoundingBox bbox;
  std::int64_t area = 0;
  friend bool operator==(const Region&, const Region&) = default;
};

enum class Connectivity { kFour = 4, kEight = 8 };

Connectivity ConnectivityFromInt(int value);

// One entry per maximal connected component of cells equal to
// `class_index`, sorted by (y0, x0, x1, y1) and then by first cell in scan
// order. The ignore label never forms regions.
std::vector<Region> ConnectedRegions(const ClassMap& map, int class_index,
                                     Connectivity connectivity);

struct ManifestEntry {
  std::string image_id;
  std::string image_path;  // as written in the manifest
  std::string pred_map_path;
  std::optional<std::string> gt_map_path;
};

// JSON lines {image_id, image_path, pred_map_path, gt_map_path?}.
// Throws kCorruptManifest on malformed lines or repeated image ids.
std::vector<ManifestEntry> ReadManifest(const std::filesystem::path& path);

struct SegmentationRecord {
  std::string image_id;
  std::string image_path;
  RgbImage image;
  ClassMap pred_map;
  std::optional<ClassMap> gt_map;
};

// Relative paths resolve against `base_dir`. Throws kImageLoad on unreadable
// files or when map and image dimensions disagree.
SegmentationRecord LoadRecord(const ManifestEntry& entry,
                              const std::filesystem::path& base_dir,
                              bool load_gt);

struct Patch {
  std::string patch_id;
  std::string image_id;
  std::string image_path;
  SemanticClass cls;
  BoundingBox bbox;
  std::int64_t region_area = 0;
  std::string content_hash;
  RgbImage crop;  // empty when loaded as metadata only
};

// sha256("image_id|class_index|x0,y0,x1,y1"), lowercase hex.
std::string MakePatchId(const std::string& image_id, int class_index,
                        const BoundingBox& bbox);

// A region qualifies when both bbox sides are >= min_size. Regions that share
// a bounding box yield one patch (same id, same crop) with summed area.
std::vector<Patch> ExtractPatches(const SegmentationRecord& record,
                                  const SemanticClass& cls, int min_size,
                                  Connectivity connectivity);

struct PatchSet {
  SemanticClass cls;
  std::vector<Patch> patches;  // ascending patch_id, unique
  std::filesystem::path source_manifest;

  const Patch* Find(const std::string& patch_id) const;
};

// Throws kRejectedEmptyManifest for an empty manifest; load errors carry the
// offending image_id.
PatchSet BuildPatchSet(const std::vector<ManifestEntry>& manifest,
                       const std::filesystem::path& base_dir,
                       const SemanticClass& cls, int min_size,
                       Connectivity connectivity, std::size_t workers = 1);

Json PatchToJson(const Patch& patch);
Patch PatchFromJson(const Json& row);

// Writes <dir>/metadata.jsonl and <dir>/<patch_id>.png.
void WritePatchSet(const PatchSet& set, const std::filesystem::path& dir,
                   std::size_t workers = 1);

// Reads metadata.jsonl; crops are decoded from the PNGs when `with_crops`.
PatchSet LoadPatchSet(const std::filesystem::path& dir,
                      const SemanticClass& cls, bool with_crops);

RgbImage LoadCrop(const std::filesystem::path& dir, const std::string& patch_id);

}  // namespace auditor

#endif  // AUDITOR_PATCH_EXTRACTION_HPP_
