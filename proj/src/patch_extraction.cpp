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

#include "auditor/patch_extraction.hpp"

#include <algorithm>
#include <deque>
#include <map>
#include <set>
#include <tuple>

#include "auditor/error.hpp"
#include "auditor/fs_util.hpp"
#include "auditor/hashing.hpp"
#include "auditor/parallel.hpp"

namespace auditor {

void ValidateClass(const SemanticClass& cls) {
  if (cls.index < 0 || cls.index >= kIgnoreLabel) {
    Fail(ErrorCode::kConfig,
         "class index out of range: " + std::to_string(cls.index));
  }
  if (cls.name.empty() || cls.name == "." || cls.name == ".." ||
      cls.name.find_first_of("/\\") != std::string::npos) {
    Fail(ErrorCode::kConfig, "invalid class name '" + cls.name + "'");
  }
}

Connectivity ConnectivityFromInt(int value) {
  if (value == 4) return Connectivity::kFour;
  if (value == 8) return Connectivity::kEight;
  Fail(ErrorCode::kConfig, "connectivity must be 4 or 8, got " +
                               std::to_string(value));
}

std::vector<Region> ConnectedRegions(const ClassMap& map, int class_index,
                                     Connectivity connectivity) {
  struct Found {
    Region region;
    std::size_t seed;
  };
  std::vector<Found> found;
  if (class_index < 0 || class_index == kIgnoreLabel) return {};
  const auto target = static_cast<std::uint8_t>(class_index);
  const int w = map.width;
  const int h = map.height;
  std::vector<std::uint8_t> seen(map.data.size(), 0);
  std::deque<std::pair<int, int>> frontier;
  const bool diagonal = connectivity == Connectivity::kEight;

  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const std::size_t idx = static_cast<std::size_t>(y) * w + x;
      if (seen[idx] || map.data[idx] != target) continue;
      Region r{{x, y, x + 1, y + 1}, 0};
      seen[idx] = 1;
      frontier.emplace_back(x, y);
      while (!frontier.empty()) {
        auto [cx, cy] = frontier.front();
        frontier.pop_front();
        ++r.area;
        r.bbox.x0 = std::min(r.bbox.x0, cx);
        r.bbox.y0 = std::min(r.bbox.y0, cy);
        r.bbox.x1 = std::max(r.bbox.x1, cx + 1);
        r.bbox.y1 = std::max(r.bbox.y1, cy + 1);
        for (int dy = -1; dy <= 1; ++dy) {
          for (int dx = -1; dx <= 1; ++dx) {
            if (dx == 0 && dy == 0) continue;
            if (!diagonal && dx != 0 && dy != 0) continue;
            const int nx = cx + dx;
            const int ny = cy + dy;
            if (nx < 0 || ny < 0 || nx >= w || ny >= h) continue;
            const std::size_t n = static_cast<std::size_t>(ny) * w + nx;
            if (seen[n] || map.data[n] != target) continue;
            seen[n] = 1;
            frontier.emplace_back(nx, ny);
          }
        }
      }
      found.push_back({r, idx});
    }
  }
  std::sort(found.begin(), found.end(), [](const Found& a, const Found& b) {
    const auto& ab = a.region.bbox;
    const auto& bb = b.region.bbox;
    return std::tie(ab.y0, ab.x0, ab.x1, ab.y1, a.seed) <
           std::tie(bb.y0, bb.x0, bb.x1, bb.y1, b.seed);
  });
  std::vector<Region> out;
  out.reserve(found.size());
  for (const auto& f : found) out.push_back(f.region);
  return out;
}

std::vector<ManifestEntry> ReadManifest(const std::filesystem::path& path) {
  std::vector<Json> rows;
  try {
    rows = ReadJsonLines(path);
  } catch (const Error& e) {
    Fail(ErrorCode::kCorruptManifest, e.what());
  }
  std::vector<ManifestEntry> out;
  std::set<std::string> ids;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const Json& row = rows[i];
    const std::string where = path.string() + " entry " + std::to_string(i + 1);
    auto text = [&](const char* key) -> std::string {
      if (!row.is_object() || !row.contains(key) || !row[key].is_string() ||
          row[key].get<std::string>().empty()) {
        Fail(ErrorCode::kCorruptManifest,
             where + ": missing or empty '" + key + "'");
      }
      return row[key].get<std::string>();
    };
    ManifestEntry e;
    e.image_id = text("image_id");
    e.image_path = text("image_path");
    e.pred_map_path = text("pred_map_path");
    if (row.contains("gt_map_path") && !row["gt_map_path"].is_null()) {
      e.gt_map_path = text("gt_map_path");
    }
    if (!ids.insert(e.image_id).second) {
      Fail(ErrorCode::kCorruptManifest,
           where + ": duplicate image_id '" + e.image_id + "'");
    }
    out.push_back(std::move(e));
  }
  return out;
}

SegmentationRecord LoadRecord(const ManifestEntry& entry,
                              const std::filesystem::path& base_dir,
                              bool load_gt) {
  SegmentationRecord rec;
  rec.image_id = entry.image_id;
  rec.image_path = entry.image_path;
  rec.image = LoadRgbImage(ResolveAgainst(base_dir, entry.image_path));
  rec.pred_map = LoadClassMap(ResolveAgainst(base_dir, entry.pred_map_path));
  if (rec.pred_map.width != rec.image.width ||
      rec.pred_map.height != rec.image.height) {
    Fail(ErrorCode::kImageLoad, "predicted map size differs from image");
  }
  if (load_gt && entry.gt_map_path) {
    rec.gt_map = LoadClassMap(ResolveAgainst(base_dir, *entry.gt_map_path));
    if (rec.gt_map->width != rec.image.width ||
        rec.gt_map->height != rec.image.height) {
      Fail(ErrorCode::kImageLoad, "ground-truth map size differs from image");
    }
  }
  return rec;
}

std::string MakePatchId(const std::string& image_id, int class_index,
                        const BoundingBox& bbox) {
  return Sha256Hex(image_id + "|" + std::to_string(class_index) + "|" +
                   std::to_string(bbox.x0) + "," + std::to_string(bbox.y0) +
                   "," + std::to_string(bbox.x1) + "," +
                   std::to_string(bbox.y1));
}

std::vector<Patch> ExtractPatches(const SegmentationRecord& record,
                                  const SemanticClass& cls, int min_size,
                                  Connectivity connectivity) {
  std::vector<Patch> out;
  std::map<std::string, std::size_t> by_id;
  for (const Region& r :
       ConnectedRegions(record.pred_map, cls.index, connectivity)) {
    if (r.bbox.Width() < min_size || r.bbox.Height() < min_size) continue;
    std::string id = MakePatchId(record.image_id, cls.index, r.bbox);
    if (auto it = by_id.find(id); it != by_id.end()) {
      out[it->second].region_area += r.area;
      continue;
    }
    Patch p;
    p.patch_id = std::move(id);
    p.image_id = record.image_id;
    p.image_path = record.image_path;
    p.cls = cls;
    p.bbox = r.bbox;
    p.region_area = r.area;
    p.crop = Crop(record.image, r.bbox.x0, r.bbox.y0, r.bbox.x1, r.bbox.y1);
    p.content_hash = ContentHash(p.crop);
    by_id.emplace(p.patch_id, out.size());
    out.push_back(std::move(p));
  }
  return out;
}

const Patch* PatchSet::Find(const std::string& patch_id) const {
  auto it = std::lower_bound(
      patches.begin(), patches.end(), patch_id,
      [](const Patch& p, const std::string& id) { return p.patch_id < id; });
  if (it == patches.end() || it->patch_id != patch_id) return nullptr;
  return &*it;
}

PatchSet BuildPatchSet(const std::vector<ManifestEntry>& manifest,
                       const std::filesystem::path& base_dir,
                       const SemanticClass& cls, int min_size,
                       Connectivity connectivity, std::size_t workers) {
  if (manifest.empty()) {
    Fail(ErrorCode::kRejectedEmptyManifest, "manifest has no records");
  }
  std::vector<std::vector<Patch>> per_record(manifest.size());
  ParallelFor(manifest.size(), workers, [&](std::size_t i) {
    try {
      const SegmentationRecord rec = LoadRecord(manifest[i], base_dir, false);
      per_record[i] = ExtractPatches(rec, cls, min_size, connectivity);
    } catch (const Error& e) {
      Rethrow(e, "image_id '" + manifest[i].image_id + "'");
    }
  });
  PatchSet set;
  set.cls = cls;
  for (auto& patches : per_record) {
    for (auto& p : patches) set.patches.push_back(std::move(p));
  }
  std::sort(set.patches.begin(), set.patches.end(),
            [](const Patch& a, const Patch& b) { return a.patch_id < b.patch_id; });
  // Ids hash the image id, so a collision here means a corrupt manifest.
  for (std::size_t i = 1; i < set.patches.size(); ++i) {
    if (set.patches[i].patch_id == set.patches[i - 1].patch_id) {
      Fail(ErrorCode::kInternal, "duplicate patch id " + set.patches[i].patch_id);
    }
  }
  return set;
}

Json PatchToJson(const Patch& patch) {
  return Json{
      {"patch_id", patch.patch_id},
      {"image_id", patch.image_id},
      {"image_path", patch.image_path},
      {"class", patch.cls.name},
      {"class_index", patch.cls.index},
      {"bbox", Json::array({patch.bbox.x0, patch.bbox.y0, patch.bbox.x1,
                            patch.bbox.y1})},
      {"region_area", patch.region_area},
      {"content_hash", patch.content_hash},
      {"crop", patch.patch_id + ".png"},
  };
}

Patch PatchFromJson(const Json& row) {
  const std::string ctx = "patch metadata";
  Patch p;
  try {
    p.patch_id = RequireField(row, "patch_id", ctx).get<std::string>();
    p.image_id = RequireField(row, "image_id", ctx).get<std::string>();
    p.image_path = RequireField(row, "image_path", ctx).get<std::string>();
    p.cls.name = RequireField(row, "class", ctx).get<std::string>();
    p.cls.index = RequireField(row, "class_index", ctx).get<int>();
    const Json& b = RequireField(row, "bbox", ctx);
    if (!b.is_array() || b.size() != 4) {
      Fail(ErrorCode::kBadResponse, "bbox must have 4 entries");
    }
    p.bbox = {b[0].get<int>(), b[1].get<int>(), b[2].get<int>(),
              b[3].get<int>()};
    p.region_area = RequireField(row, "region_area", ctx).get<std::int64_t>();
    p.content_hash = RequireField(row, "content_hash", ctx).get<std::string>();
  } catch (const Json::exception& e) {
    Fail(ErrorCode::kIo, ctx + ": " + e.what());
  } catch (const Error& e) {
    Fail(ErrorCode::kIo, e.what());
  }
  return p;
}

void WritePatchSet(const PatchSet& set, const std::filesystem::path& dir,
                   std::size_t workers) {
  std::filesystem::create_directories(dir);
  ParallelFor(set.patches.size(), workers, [&](std::size_t i) {
    const Patch& p = set.patches[i];
    WriteFileAtomic(dir / (p.patch_id + ".png"), EncodePng(p.crop));
  });
  std::vector<Json> rows;
  rows.reserve(set.patches.size());
  for (const auto& p : set.patches) rows.push_back(PatchToJson(p));
  WriteFileAtomic(dir / "metadata.jsonl", JsonLines(rows));
}

RgbImage LoadCrop(const std::filesystem::path& dir,
                  const std::string& patch_id) {
  return LoadRgbImage(dir / (patch_id + ".png"));
}

PatchSet LoadPatchSet(const std::filesystem::path& dir,
                      const SemanticClass& cls, bool with_crops) {
  PatchSet set;
  set.cls = cls;
  for (const Json& row : ReadJsonLines(dir / "metadata.jsonl")) {
    Patch p = PatchFromJson(row);
    if (p.cls.index != cls.index || p.cls.name != cls.name) {
      Fail(ErrorCode::kIo, "patch " + p.patch_id + " belongs to class '" +
                               p.cls.name + "', expected '" + cls.name + "'");
    }
    p.cls = cls;
    if (with_crops) {
      p.crop = LoadCrop(dir, p.patch_id);
      if (p.crop.width != p.bbox.Width() || p.crop.height != p.bbox.Height() ||
          ContentHash(p.crop) != p.content_hash) {
        Fail(ErrorCode::kIo, "crop for " + p.patch_id + " does not match metadata");
      }
    }
    set.patches.push_back(std::move(p));
  }
  if (!std::is_sorted(set.patches.begin(), set.patches.end(),
                      [](const Patch& a, const Patch& b) {
                        return a.patch_id < b.patch_id;
                      })) {
    Fail(ErrorCode::kIo, "metadata.jsonl is not sorted by patch_id");
  }
  return set;
}

}  // namespace auditor
