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

#ifndef AUDITOR_EMBEDDING_INDEX_HPP_
#define AUDITOR_EMBEDDING_INDEX_HPP_

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "auditor/error_detection.hpp"
#include "auditor/oracle.hpp"

namespace auditor {

// dot / (|u| |v|), accumulated left to right in double and clamped to
// [-1, 1]. Throws kZeroVector when either side is all zeros and
// kDimensionMismatch on differing lengths.
double CosineRaw(std::span<const double> u, std::span<const double> v);

// As CosineRaw, additionally requiring equal space ids (kSpaceMismatch).
double Cosine(const EmbeddingVector& u, const EmbeddingVector& v);

// Unit rows stored as float32, one per patch id, ids ascending.
struct EmbeddingMatrix {
  std::vector<std::string> ids;
  std::size_t dim = 0;
  std::vector<float> data;
  std::string space_id;

  std::size_t rows() const { return ids.size(); }
  std::span<const float> Row(std::size_t i) const {
    return {data.data() + i * dim, dim};
  }
  std::optional<std::size_t> IndexOf(const std::string& id) const;
  // Row widened to double.
  EmbeddingVector RowVector(std::size_t i) const;
};

// Rows are reordered by id, so insertion order never matters. Throws
// kDimensionMismatch for ragged input and kInvalidArgument for duplicate ids.
EmbeddingMatrix MatrixFromRows(std::vector<std::string> ids,
                               const std::vector<EmbeddingVector>& rows,
                               std::string space_id);

// Joint-space image embeddings of every error patch. Crops are looked up in
// `patches`. Throws kEmptyErrorSet when there is nothing to index.
EmbeddingMatrix BuildIndex(const ErrorPatchSet& errors, const PatchSet& patches,
                           Oracle& oracle, std::size_t workers = 1);

struct NeighborList {
  std::string query_id;
  std::vector<std::string> neighbor_ids;
  std::vector<double> similarities;  // non-increasing
};

// Exact top-q by cosine over every other row; equal similarities are
// ordered by ascending id. Returns min(q, rows - 1) neighbors.
NeighborList Knn(const EmbeddingMatrix& index, const std::string& query_id,
                 int q);

// <dir>/<name>.f32le (little-endian float32, row-major) and
// <dir>/<name>.meta.json {ids, dim, space_id, count, sha256}.
void SaveMatrix(const EmbeddingMatrix& m, const std::filesystem::path& dir,
                const std::string& name);
EmbeddingMatrix LoadMatrix(const std::filesystem::path& dir,
                           const std::string& name);

}  // namespace auditor

#endif  // AUDITOR_EMBEDDING_INDEX_HPP_
