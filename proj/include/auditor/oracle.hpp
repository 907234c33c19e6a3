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

// Uniform client for the foundation-model oracles: open-vocabulary detector,
// joint image/text embedder, captioner and sentence encoder. Responses come
// from an HTTP service or a fixture directory and are cached on disk by
// content address. Cache entries hold the response body exactly as the
// transport returned it; validation, normalization and threshold filtering
// happen on every read so warm and cold runs take the same code path.

#ifndef AUDITOR_ORACLE_HPP_
#define AUDITOR_ORACLE_HPP_

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <future>
#include <mutex>
#include <optional>
#include <semaphore>
#include <string>
#include <string_view>
#include <vector>

#include "auditor/json_util.hpp"
#include "auditor/patch_extraction.hpp"

namespace auditor {

inline constexpr std::string_view kJointImageSpace = "joint_image";
inline constexpr std::string_view kJointTextSpace = "joint_text";
inline constexpr std::string_view kSentenceSpace = "sentence";

struct DetectionBox {
  double x0 = 0, y0 = 0, x1 = 0, y1 = 0;
  double score = 0;
  std::string label;
};

struct DetectionResult {
  std::string patch_id;
  std::string query;
  std::vector<DetectionBox> boxes;  // descending score
  std::string detector_id;
};

Json DetectionResultToJson(const DetectionResult& result);

struct EmbeddingVector {
  std::vector<double> values;
  std::string space_id;
  bool normalized = false;

  std::size_t dim() const { return values.size(); }
};

// Divides by the Euclidean norm. Throws kZeroVector for an all-zero input
// and kInvalidArgument for non-finite entries.
std::vector<double> NormalizeL2(const std::vector<double>& values);

struct Caption {
  std::string patch_id;
  std::string text;
  std::string captioner_id;
};

enum class OracleMode { kHttp, kFixture };

struct OracleConfig {
  OracleMode mode = OracleMode::kFixture;
  std::string endpoint;                // http mode, e.g. http://127.0.0.1:8000
  std::filesystem::path fixture_dir;   // fixture mode
  double box_threshold = 0.35;
  double text_threshold = 0.25;
  double timeout_seconds = 30.0;
  int max_inflight = 4;
  int retries = 3;
  // Identity of the detector and of the remaining oracle models. Both are
  // part of every cache key so distinct backends never share entries.
  std::string detector_id = "default";
  std::string model_set = "default";
};

// Throws kConfig on out-of-range values.
void ValidateOracleConfig(const OracleConfig& cfg);

Json OracleConfigToJson(const OracleConfig& cfg);
OracleConfig OracleConfigFromJson(const Json& j,
                                  const std::filesystem::path& base_dir);

// sha256(kind + "\n" + content_hash + "\n" + params). `params` must already
// be canonical JSON.
std::string CacheKey(std::string_view kind, std::string_view content_hash,
                     std::string_view params);

// <root>/<kind>/<first two hex>/<key>.json, shared by caches and fixtures.
std::filesystem::path KeyPath(const std::filesystem::path& root,
                              std::string_view kind, std::string_view key);

struct OracleRequest {
  std::string kind;  // detect, embed_image, embed_text, caption, encode_sentence
  std::string content_hash;
  Json key_params;
  std::function<Json()> body;  // built lazily; only http needs it
};

class OracleTransport {
 public:
  virtual ~OracleTransport() = default;
  virtual Json Fetch(const OracleRequest& request) = 0;
  virtual Json Health() = 0;
};

// POST <endpoint>/v1/<kind>. 5xx and connection failures are retried and
// end in kOracleUnavailable; other 4xx answers raise kOracleRejected.
class HttpTransport : public OracleTransport {
 public:
  HttpTransport(std::string endpoint, double timeout_seconds, int retries);
  Json Fetch(const OracleRequest& request) override;
  Json Health() override;

 private:
  Json Post(const std::string& path, const Json& body);

  std::string endpoint_;
  double timeout_seconds_;
  int retries_;
};

// Reads KeyPath(fixture_dir, kind, key). A missing file is kFixtureMiss,
// never an empty answer.
class FixtureTransport : public OracleTransport {
 public:
  explicit FixtureTransport(std::filesystem::path dir);
  Json Fetch(const OracleRequest& request) override;
  Json Health() override;

  std::uint64_t accesses() const { return accesses_.load(); }

 private:
  std::filesystem::path dir_;
  std::atomic<std::uint64_t> accesses_{0};
};

class ResponseCache {
 public:
  explicit ResponseCache(std::filesystem::path root);
  std::optional<Json> Get(std::string_view kind, std::string_view key) const;
  void Put(std::string_view kind, std::string_view key, const Json& response);

 private:
  std::filesystem::path root_;
};

struct OracleStats {
  std::uint64_t transport_calls = 0;
  std::uint64_t cache_hits = 0;
};

class Oracle {
 public:
  Oracle(OracleConfig cfg, std::unique_ptr<OracleTransport> transport,
         std::optional<std::filesystem::path> cache_dir);

  // Transport chosen by cfg.mode.
  static std::unique_ptr<Oracle> Create(
      const OracleConfig& cfg, std::optional<std::filesystem::path> cache_dir);

  DetectionResult Detect(const Patch& patch, const SemanticClass& cls);
  EmbeddingVector EmbedImage(const Patch& patch);
  EmbeddingVector EmbedText(std::string_view text);
  Caption CaptionPatch(const Patch& patch);
  EmbeddingVector EncodeSentence(std::string_view text);

  const OracleConfig& config() const { return cfg_; }
  OracleStats stats() const;

 private:
  Json Fetch(OracleRequest request, const Json& cache_params);
  EmbeddingVector ParseVector(const Json& response, std::string_view space,
                              std::string_view context);
  void CheckDimension(std::string_view space, std::size_t dim,
                      std::string_view context);

  OracleConfig cfg_;
  std::unique_ptr<OracleTransport> transport_;
  std::optional<ResponseCache> cache_;
  std::counting_semaphore<> inflight_;
  std::atomic<std::uint64_t> transport_calls_{0};
  std::atomic<std::uint64_t> cache_hits_{0};
  std::mutex dims_mu_;
  std::map<std::string, std::size_t, std::less<>> dims_;
  std::mutex pending_mu_;
  std::map<std::string, std::shared_future<Json>> pending_;
};

// Calls every protocol endpoint twice with a synthetic image and fixed text,
// checking response schemas, dimension agreement with /v1/health, and that
// repeated requests give identical answers. Returns a JSON report with an
// "ok" flag and one entry per endpoint.
Json CheckProtocolConformance(OracleTransport& transport);

}  // namespace auditor

#endif  // AUDITOR_ORACLE_HPP_
