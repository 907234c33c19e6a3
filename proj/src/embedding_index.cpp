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

#include "auditor/embedding_index.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <numeric>

#include "auditor/error.hpp"
#include "auditor/fs_util.hpp"
#include "auditor/hashing.hpp"
#include "auditor/parallel.hpp"

namespace auditor {
namespace {

template <typename A, typename B>
double CosineImpl(std::span<const A> u, std::span<const B> v) {
  if (u.size() != v.size()) {
    Fail(ErrorCode::kDimensionMismatch,
         "cosine of vectors with dims " + std::to_string(u.size()) + " and " +
             std::to_string(v.size()));
  }
  double dot = 0.0;
  double nu = 0.0;
  double nv = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    const double a = static_cast<double>(u[i]);
    const double b = static_cast<double>(v[i]);
    dot += a * b;
    nu += a * a;
    nv += b * b;
  }
  if (nu == 0.0 || nv == 0.0) Fail(ErrorCode::kZeroVector, "cosine of a zero vector");
  const double c = dot / (std::sqrt(nu) * std::sqrt(nv));
  return std::clamp(c, -1.0, 1.0);
}

}  // namespace

double CosineRaw(std::span<const double> u, std::span<const double> v) {
  return CosineImpl(u, v);
}

double Cosine(const EmbeddingVector& u, const EmbeddingVector& v) {
  if (u.space_id != v.space_id) {
    Fail(ErrorCode::kSpaceMismatch,
         "cosine across spaces " + u.space_id + " and " + v.space_id);
  }
  return CosineRaw(u.values, v.values);
}

std::optional<std::size_t> EmbeddingMatrix::IndexOf(
    const std::string& id) const {
  auto it = std::lower_bound(ids.begin(), ids.end(), id);
  if (it == ids.end() || *it != id) return std::nullopt;
  return static_cast<std::size_t>(it - ids.begin());
}

EmbeddingVector EmbeddingMatrix::RowVector(std::size_t i) const {
  EmbeddingVector v;
  const auto row = Row(i);
  v.values.assign(row.begin(), row.end());
  v.space_id = space_id;
  v.normalized = true;
  return v;
}

EmbeddingMatrix MatrixFromRows(std::vector<std::string> ids,
                               const std::vector<EmbeddingVector>& rows,
                               std::string space_id) {
  if (ids.size() != rows.size()) {
    Fail(ErrorCode::kInvalidArgument, "id count differs from row count");
  }
  EmbeddingMatrix m;
  m.space_id = std::move(space_id);
  m.dim = rows.empty() ? 0 : rows.front().dim();
  std::vector<std::size_t> order(ids.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return ids[a] < ids[b]; });
  m.ids.reserve(ids.size());
  m.data.reserve(ids.size() * m.dim);
  for (std::size_t k = 0; k < order.size(); ++k) {
    const std::size_t i = order[k];
    if (k > 0 && ids[i] == m.ids.back()) {
      Fail(ErrorCode::kInvalidArgument, "duplicate id " + ids[i]);
    }
    if (rows[i].dim() != m.dim) {
      Fail(ErrorCode::kDimensionMismatch, "ragged embedding rows");
    }
    if (rows[i].space_id != m.space_id) {
      Fail(ErrorCode::kSpaceMismatch,
           "row in space " + rows[i].space_id + ", matrix is " + m.space_id);
    }
    m.ids.push_back(ids[i]);
    for (double x : rows[i].values) m.data.push_back(static_cast<float>(x));
  }
  return m;
}

EmbeddingMatrix BuildIndex(const ErrorPatchSet& errors, const PatchSet& patches,
                           Oracle& oracle, std::size_t workers) {
  if (errors.error_patch_ids.empty()) {
    Fail(ErrorCode::kEmptyErrorSet,
         "class '" + errors.cls.name + "' has no precision errors to index");
  }
  std::vector<EmbeddingVector> rows(errors.error_patch_ids.size());
  ParallelFor(rows.size(), workers, [&](std::size_t i) {
    const std::string& id = errors.error_patch_ids[i];
    const Patch* p = patches.Find(id);
    if (p == nullptr) {
      Fail(ErrorCode::kInvalidArgument, "error patch " + id + " not in patch set");
    }
    try {
      rows[i] = oracle.EmbedImage(*p);
    } catch (const Error& e) {
      Rethrow(e, "patch " + id);
    }
  });
  return MatrixFromRows(errors.error_patch_ids, rows,
                        std::string(kJointImageSpace));
}

NeighborList Knn(const EmbeddingMatrix& index, const std::string& query_id,
                 int q) {
  if (q < 1) Fail(ErrorCode::kInvalidArgument, "q must be positive");
  const auto qi = index.IndexOf(query_id);
  if (!qi) Fail(ErrorCode::kUnknownQueryId, "no row for " + query_id);
  const auto query = index.Row(*qi);

  struct Candidate {
    double sim;
    std::size_t row;
  };
  std::vector<Candidate> candidates;
  candidates.reserve(index.rows());
  for (std::size_t i = 0; i < index.rows(); ++i) {
    if (i == *qi) continue;
    candidates.push_back({CosineImpl(query, index.Row(i)), i});
  }
  const std::size_t take =
      std::min(static_cast<std::size_t>(q), candidates.size());
  // Rows are id-sorted, so row index order is id order.
  std::partial_sort(candidates.begin(), candidates.begin() + take,
                    candidates.end(), [](const Candidate& a, const Candidate& b) {
                      if (a.sim != b.sim) return a.sim > b.sim;
                      return a.row < b.row;
                    });
  NeighborList out;
  out.query_id = query_id;
  for (std::size_t k = 0; k < take; ++k) {
    out.neighbor_ids.push_back(index.ids[candidates[k].row]);
    out.similarities.push_back(candidates[k].sim);
  }
  return out;
}

void SaveMatrix(const EmbeddingMatrix& m, const std::filesystem::path& dir,
                const std::string& name) {
  std::vector<std::uint8_t> raw(m.data.size() * 4);
  for (std::size_t i = 0; i < m.data.size(); ++i) {
    const auto bits = std::bit_cast<std::uint32_t>(m.data[i]);
    raw[4 * i + 0] = static_cast<std::uint8_t>(bits);
    raw[4 * i + 1] = static_cast<std::uint8_t>(bits >> 8);
    raw[4 * i + 2] = static_cast<std::uint8_t>(bits >> 16);
    raw[4 * i + 3] = static_cast<std::uint8_t>(bits >> 24);
  }
  const Json meta = {{"ids", m.ids},
                     {"dim", m.dim},
                     {"space_id", m.space_id},
                     {"count", m.ids.size()},
                     {"sha256", Sha256Hex(raw)}};
  WriteFileAtomic(dir / (name + ".f32le"), raw);
  WriteFileAtomic(dir / (name + ".meta.json"), Canonical(meta) + "\n");
}

EmbeddingMatrix LoadMatrix(const std::filesystem::path& dir,
                           const std::string& name) {
  const Json meta = ReadJsonFile(dir / (name + ".meta.json"));
  const auto raw = ReadBinaryFile(dir / (name + ".f32le"));
  EmbeddingMatrix m;
  try {
    m.ids = meta.at("ids").get<std::vector<std::string>>();
    m.dim = meta.at("dim").get<std::size_t>();
    m.space_id = meta.at("space_id").get<std::string>();
    if (meta.at("count").get<std::size_t>() != m.ids.size()) {
      Fail(ErrorCode::kIo, name + ": count disagrees with ids");
    }
    if (meta.at("sha256").get<std::string>() != Sha256Hex(raw)) {
      Fail(ErrorCode::kIo, name + ": packed matrix hash mismatch");
    }
  } catch (const Json::exception& e) {
    Fail(ErrorCode::kIo, name + ".meta.json: " + e.what());
  }
  if (raw.size() != m.ids.size() * m.dim * 4) {
    Fail(ErrorCode::kIo, name + ": packed matrix has wrong size");
  }
  if (!std::is_sorted(m.ids.begin(), m.ids.end())) {
    Fail(ErrorCode::kIo, name + ": ids not sorted");
  }
  m.data.resize(raw.size() / 4);
  for (std::size_t i = 0; i < m.data.size(); ++i) {
    const std::uint32_t bits = static_cast<std::uint32_t>(raw[4 * i]) |
                               static_cast<std::uint32_t>(raw[4 * i + 1]) << 8 |
                               static_cast<std::uint32_t>(raw[4 * i + 2]) << 16 |
                               static_cast<std::uint32_t>(raw[4 * i + 3]) << 24;
    m.data[i] = std::bit_cast<float>(bits);
  }
  return m;
}

}  // namespace auditor
