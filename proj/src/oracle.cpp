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

#include "auditor/oracle.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <set>
#include <thread>

#include "auditor/error.hpp"
#include "auditor/fs_util.hpp"
#include "auditor/hashing.hpp"
#include "httplib.h"

namespace auditor {
namespace {

std::string Trim(std::string_view s) {
  constexpr std::string_view kSpace = " \t\n\r\f\v";
  const auto b = s.find_first_not_of(kSpace);
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(kSpace);
  return std::string(s.substr(b, e - b + 1));
}

double FiniteNumber(const Json& v, std::string_view what) {
  if (!v.is_number()) {
    Fail(ErrorCode::kBadResponse, std::string(what) + " is not a number");
  }
  const double d = v.get<double>();
  if (!std::isfinite(d)) {
    Fail(ErrorCode::kBadResponse, std::string(what) + " is not finite");
  }
  return d;
}

std::string ImageBody(const Patch& patch) {
  if (patch.crop.pixels.empty()) {
    Fail(ErrorCode::kInvalidArgument,
         "patch " + patch.patch_id + " has no crop loaded");
  }
  return Base64Encode(EncodePng(patch.crop));
}

std::vector<double> ParseRawVector(const Json& response,
                                   std::string_view context) {
  const Json& v = RequireField(response, "vector", context);
  if (!v.is_array()) {
    Fail(ErrorCode::kBadResponse, std::string(context) + ": vector is not an array");
  }
  std::vector<double> out;
  out.reserve(v.size());
  for (const auto& x : v) out.push_back(FiniteNumber(x, "vector entry"));
  return out;
}

void RequireModelId(const Json& response, std::string_view context) {
  if (!RequireField(response, "model_id", context).is_string()) {
    Fail(ErrorCode::kBadResponse, std::string(context) + ": model_id is not a string");
  }
}

}  // namespace

Json DetectionResultToJson(const DetectionResult& result) {
  Json boxes = Json::array();
  for (const auto& b : result.boxes) {
    boxes.push_back({{"x0", b.x0}, {"y0", b.y0}, {"x1", b.x1}, {"y1", b.y1},
                     {"score", b.score}, {"label", b.label}});
  }
  return Json{{"patch_id", result.patch_id},
              {"query", result.query},
              {"boxes", std::move(boxes)},
              {"detector_id", result.detector_id}};
}

std::vector<double> NormalizeL2(const std::vector<double>& values) {
  double sum = 0.0;
  for (double v : values) {
    if (!std::isfinite(v)) {
      Fail(ErrorCode::kInvalidArgument, "non-finite embedding entry");
    }
    sum += v * v;
  }
  if (sum == 0.0) Fail(ErrorCode::kZeroVector, "cannot normalize a zero vector");
  const double norm = std::sqrt(sum);
  std::vector<double> out(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) out[i] = values[i] / norm;
  return out;
}

void ValidateOracleConfig(const OracleConfig& cfg) {
  auto unit = [](double v) { return v >= 0.0 && v <= 1.0; };
  if (!unit(cfg.box_threshold) || !unit(cfg.text_threshold)) {
    Fail(ErrorCode::kConfig, "detector thresholds must lie in [0, 1]");
  }
  if (cfg.max_inflight < 1) Fail(ErrorCode::kConfig, "max_inflight must be >= 1");
  if (cfg.retries < 0) Fail(ErrorCode::kConfig, "retries must be >= 0");
  if (!(cfg.timeout_seconds > 0)) Fail(ErrorCode::kConfig, "timeout must be > 0");
  if (cfg.mode == OracleMode::kHttp && cfg.endpoint.empty()) {
    Fail(ErrorCode::kConfig, "http oracle mode needs an endpoint");
  }
  if (cfg.mode == OracleMode::kFixture && cfg.fixture_dir.empty()) {
    Fail(ErrorCode::kConfig, "fixture oracle mode needs fixture_dir");
  }
  if (cfg.detector_id.empty() || cfg.model_set.empty()) {
    Fail(ErrorCode::kConfig, "detector_id and model_set must be nonempty");
  }
}

Json OracleConfigToJson(const OracleConfig& cfg) {
  return Json{{"mode", cfg.mode == OracleMode::kHttp ? "http" : "fixture"},
              {"endpoint", cfg.endpoint},
              {"fixture_dir", cfg.fixture_dir.string()},
              {"box_threshold", cfg.box_threshold},
              {"text_threshold", cfg.text_threshold},
              {"timeout", cfg.timeout_seconds},
              {"max_inflight", cfg.max_inflight},
              {"retries", cfg.retries},
              {"detector_id", cfg.detector_id},
              {"model_set", cfg.model_set}};
}

OracleConfig OracleConfigFromJson(const Json& j,
                                  const std::filesystem::path& base_dir) {
  static const std::set<std::string> kKnown = {
      "mode", "endpoint", "fixture_dir", "box_threshold", "text_threshold",
      "timeout", "max_inflight", "retries", "detector_id", "model_set"};
  if (!j.is_object()) Fail(ErrorCode::kConfig, "oracle config must be an object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (!kKnown.count(it.key())) {
      Fail(ErrorCode::kConfig, "unknown oracle config key '" + it.key() + "'");
    }
  }
  OracleConfig cfg;
  try {
    const std::string mode = j.value("mode", std::string("fixture"));
    if (mode == "http") {
      cfg.mode = OracleMode::kHttp;
    } else if (mode == "fixture") {
      cfg.mode = OracleMode::kFixture;
    } else {
      Fail(ErrorCode::kConfig, "oracle mode must be http or fixture");
    }
    cfg.endpoint = j.value("endpoint", std::string());
    const std::string fixture = j.value("fixture_dir", std::string());
    if (!fixture.empty()) cfg.fixture_dir = ResolveAgainst(base_dir, fixture);
    cfg.box_threshold = j.value("box_threshold", cfg.box_threshold);
    cfg.text_threshold = j.value("text_threshold", cfg.text_threshold);
    cfg.timeout_seconds = j.value("timeout", cfg.timeout_seconds);
    cfg.max_inflight = j.value("max_inflight", cfg.max_inflight);
    cfg.retries = j.value("retries", cfg.retries);
    cfg.detector_id = j.value("detector_id", cfg.detector_id);
    cfg.model_set = j.value("model_set", cfg.model_set);
  } catch (const Json::exception& e) {
    Fail(ErrorCode::kConfig, std::string("oracle config: ") + e.what());
  }
  ValidateOracleConfig(cfg);
  return cfg;
}

std::string CacheKey(std::string_view kind, std::string_view content_hash,
                     std::string_view params) {
  std::string material;
  material.reserve(kind.size() + content_hash.size() + params.size() + 2);
  material.append(kind).append("\n").append(content_hash).append("\n").append(
      params);
  return Sha256Hex(material);
}

std::filesystem::path KeyPath(const std::filesystem::path& root,
                              std::string_view kind, std::string_view key) {
  return root / std::string(kind) / std::string(key.substr(0, 2)) /
         (std::string(key) + ".json");
}

// ---------------------------------------------------------------- transports

HttpTransport::HttpTransport(std::string endpoint, double timeout_seconds,
                             int retries)
    : endpoint_(std::move(endpoint)),
      timeout_seconds_(timeout_seconds),
      retries_(retries) {}

Json HttpTransport::Post(const std::string& path, const Json& body) {
  const std::string payload = Canonical(body);
  const auto secs = static_cast<time_t>(timeout_seconds_);
  const auto usecs = static_cast<time_t>(
      (timeout_seconds_ - static_cast<double>(secs)) * 1e6);
  std::string last_problem;
  for (int attempt = 0; attempt <= retries_; ++attempt) {
    if (attempt > 0) {
      std::this_thread::sleep_for(
          std::chrono::milliseconds(50 << std::min(attempt - 1, 5)));
    }
    httplib::Client client(endpoint_);
    client.set_connection_timeout(secs, usecs);
    client.set_read_timeout(secs, usecs);
    client.set_write_timeout(secs, usecs);
    auto res = client.Post(path, payload, "application/json");
    if (!res) {
      last_problem = "request failed: " + httplib::to_string(res.error());
      continue;
    }
    if (res->status == 200) {
      try {
        return Json::parse(res->body);
      } catch (const Json::parse_error& e) {
        Fail(ErrorCode::kBadResponse, path + ": malformed JSON: " + e.what());
      }
    }
    if (res->status >= 500) {
      last_problem = "HTTP " + std::to_string(res->status);
      continue;
    }
    Fail(ErrorCode::kOracleRejected,
         path + ": HTTP " + std::to_string(res->status) + " " + res->body);
  }
  Fail(ErrorCode::kOracleUnavailable,
       endpoint_ + path + " after " + std::to_string(retries_ + 1) +
           " attempts: " + last_problem);
}

Json HttpTransport::Fetch(const OracleRequest& request) {
  return Post("/v1/" + request.kind, request.body());
}

Json HttpTransport::Health() { return Post("/v1/health", Json::object()); }

FixtureTransport::FixtureTransport(std::filesystem::path dir)
    : dir_(std::move(dir)) {}

Json FixtureTransport::Fetch(const OracleRequest& request) {
  accesses_.fetch_add(1);
  const std::string key = CacheKey(request.kind, request.content_hash,
                                   Canonical(request.key_params));
  const auto path = KeyPath(dir_, request.kind, key);
  if (!std::filesystem::exists(path)) {
    Fail(ErrorCode::kFixtureMiss, request.kind + " " + request.content_hash +
                                      " " + Canonical(request.key_params) +
                                      " (expected " + path.string() + ")");
  }
  try {
    return ReadJsonFile(path);
  } catch (const Error& e) {
    Fail(ErrorCode::kBadResponse, e.what());
  }
}

Json FixtureTransport::Health() {
  const auto path = dir_ / "health.json";
  if (!std::filesystem::exists(path)) {
    Fail(ErrorCode::kFixtureMiss, "no health.json in " + dir_.string());
  }
  return ReadJsonFile(path);
}

ResponseCache::ResponseCache(std::filesystem::path root)
    : root_(std::move(root)) {}

std::optional<Json> ResponseCache::Get(std::string_view kind,
                                       std::string_view key) const {
  const auto path = KeyPath(root_, kind, key);
  std::error_code ec;
  if (!std::filesystem::exists(path, ec)) return std::nullopt;
  try {
    return ReadJsonFile(path);
  } catch (const Error&) {
    return std::nullopt;  // unreadable entry: refetch and overwrite
  }
}

void ResponseCache::Put(std::string_view kind, std::string_view key,
                        const Json& response) {
  WriteFileAtomic(KeyPath(root_, kind, key), Canonical(response) + "\n");
}

// -------------------------------------------------------------------- client

Oracle::Oracle(OracleConfig cfg, std::unique_ptr<OracleTransport> transport,
               std::optional<std::filesystem::path> cache_dir)
    : cfg_(std::move(cfg)),
      transport_(std::move(transport)),
      inflight_(std::max(1, cfg_.max_inflight)) {
  if (cache_dir) cache_.emplace(*cache_dir);
}

std::unique_ptr<Oracle> Oracle::Create(
    const OracleConfig& cfg, std::optional<std::filesystem::path> cache_dir) {
  ValidateOracleConfig(cfg);
  std::unique_ptr<OracleTransport> transport;
  if (cfg.mode == OracleMode::kHttp) {
    transport = std::make_unique<HttpTransport>(cfg.endpoint,
                                                cfg.timeout_seconds, cfg.retries);
  } else {
    transport = std::make_unique<FixtureTransport>(cfg.fixture_dir);
  }
  return std::make_unique<Oracle>(cfg, std::move(transport),
                                  std::move(cache_dir));
}

OracleStats Oracle::stats() const {
  return {transport_calls_.load(), cache_hits_.load()};
}

Json Oracle::Fetch(OracleRequest request, const Json& cache_params) {
  const std::string key = CacheKey(request.kind, request.content_hash,
                                   Canonical(cache_params));
  if (cache_) {
    if (auto hit = cache_->Get(request.kind, key)) {
      cache_hits_.fetch_add(1);
      return *hit;
    }
  }
  // Concurrent requests for one key share a single transport call.
  std::promise<Json> promise;
  {
    std::unique_lock<std::mutex> lock(pending_mu_);
    auto it = pending_.find(key);
    if (it != pending_.end()) {
      std::shared_future<Json> shared = it->second;
      lock.unlock();
      cache_hits_.fetch_add(1);
      return shared.get();
    }
    pending_.emplace(key, promise.get_future().share());
  }
  auto finish = [&] {
    std::lock_guard<std::mutex> lock(pending_mu_);
    pending_.erase(key);
  };
  try {
    // The previous leader may have filled the cache after our first look.
    std::optional<Json> hit = cache_ ? cache_->Get(request.kind, key) : std::nullopt;
    Json response;
    if (hit) {
      cache_hits_.fetch_add(1);
      response = *hit;
    } else {
      Json raw;
      inflight_.acquire();
      try {
        transport_calls_.fetch_add(1);
        raw = transport_->Fetch(request);
      } catch (...) {
        inflight_.release();
        throw;
      }
      inflight_.release();
      // Re-parse the canonical form so a fresh answer is bit-for-bit what a
      // later cache read returns.
      response = ParseJson(Canonical(raw), request.kind + " response");
      if (cache_) cache_->Put(request.kind, key, response);
    }
    promise.set_value(response);
    finish();
    return response;
  } catch (...) {
    promise.set_exception(std::current_exception());
    finish();
    throw;
  }
}

void Oracle::CheckDimension(std::string_view space, std::size_t dim,
                            std::string_view context) {
  const std::string group =
      space == kSentenceSpace ? std::string(kSentenceSpace) : "joint";
  std::lock_guard<std::mutex> lock(dims_mu_);
  auto [it, inserted] = dims_.emplace(group, dim);
  if (!inserted && it->second != dim) {
    Fail(ErrorCode::kDimensionMismatch,
         std::string(context) + ": " + std::string(space) + " vector has dim " +
             std::to_string(dim) + " but this run recorded " +
             std::to_string(it->second));
  }
}

EmbeddingVector Oracle::ParseVector(const Json& response,
                                    std::string_view space,
                                    std::string_view context) {
  RequireModelId(response, context);
  std::vector<double> raw = ParseRawVector(response, context);
  if (raw.empty()) {
    Fail(ErrorCode::kDimensionMismatch, std::string(context) + ": empty vector");
  }
  CheckDimension(space, raw.size(), context);
  EmbeddingVector out;
  try {
    out.values = NormalizeL2(raw);
  } catch (const Error&) {
    Fail(ErrorCode::kZeroVector,
         std::string(context) + ": degenerate (zero) embedding");
  }
  out.space_id = std::string(space);
  out.normalized = true;
  return out;
}

DetectionResult Oracle::Detect(const Patch& patch, const SemanticClass& cls) {
  const std::string& query = cls.Prompt();
  const Json cache_params = {{"box_threshold", cfg_.box_threshold},
                             {"detector_id", cfg_.detector_id},
                             {"query", query},
                             {"text_threshold", cfg_.text_threshold}};
  OracleRequest req;
  req.kind = "detect";
  req.content_hash = patch.content_hash;
  // Fixtures hold unthresholded proposals so one fixture serves any
  // threshold; the filter below applies the configured cut.
  req.key_params = cfg_.mode == OracleMode::kFixture
                       ? Json{{"detector_id", cfg_.detector_id}, {"query", query}}
                       : cache_params;
  req.body = [&] {
    return Json{{"image", ImageBody(patch)},
                {"query", query},
                {"box_threshold", cfg_.box_threshold},
                {"text_threshold", cfg_.text_threshold}};
  };
  const Json response = Fetch(std::move(req), cache_params);
  const std::string ctx = "detect " + patch.patch_id;
  RequireModelId(response, ctx);
  const Json& boxes = RequireField(response, "boxes", ctx);
  if (!boxes.is_array()) Fail(ErrorCode::kBadResponse, ctx + ": boxes is not an array");

  DetectionResult result;
  result.patch_id = patch.patch_id;
  result.query = query;
  result.detector_id = cfg_.detector_id;
  const double w = patch.bbox.Width();
  const double h = patch.bbox.Height();
  for (const Json& b : boxes) {
    DetectionBox box;
    box.x0 = std::clamp(FiniteNumber(RequireField(b, "x0", ctx), "x0"), 0.0, w);
    box.y0 = std::clamp(FiniteNumber(RequireField(b, "y0", ctx), "y0"), 0.0, h);
    box.x1 = std::clamp(FiniteNumber(RequireField(b, "x1", ctx), "x1"), 0.0, w);
    box.y1 = std::clamp(FiniteNumber(RequireField(b, "y1", ctx), "y1"), 0.0, h);
    box.score = FiniteNumber(RequireField(b, "score", ctx), "score");
    const Json& label = RequireField(b, "label", ctx);
    if (!label.is_string()) Fail(ErrorCode::kBadResponse, ctx + ": label is not a string");
    box.label = label.get<std::string>();
    if (box.score < 0.0 || box.score > 1.0) {
      Fail(ErrorCode::kBadResponse, ctx + ": score outside [0, 1]");
    }
    if (box.x1 < box.x0 || box.y1 < box.y0) {
      Fail(ErrorCode::kBadResponse, ctx + ": inverted box");
    }
    if (box.score > cfg_.box_threshold) result.boxes.push_back(std::move(box));
  }
  std::sort(result.boxes.begin(), result.boxes.end(),
            [](const DetectionBox& a, const DetectionBox& b) {
              if (a.score != b.score) return a.score > b.score;
              return std::tie(a.x0, a.y0, a.x1, a.y1, a.label) <
                     std::tie(b.x0, b.y0, b.x1, b.y1, b.label);
            });
  return result;
}

EmbeddingVector Oracle::EmbedImage(const Patch& patch) {
  const Json params = {{"model_set", cfg_.model_set}};
  OracleRequest req{"embed_image", patch.content_hash, params,
                    [&] { return Json{{"image", ImageBody(patch)}}; }};
  const Json response = Fetch(std::move(req), params);
  return ParseVector(response, kJointImageSpace,
                     "embed_image " + patch.patch_id);
}

EmbeddingVector Oracle::EmbedText(std::string_view text) {
  const Json params = {{"model_set", cfg_.model_set}};
  const std::string owned(text);
  OracleRequest req{"embed_text", Sha256Hex(owned), params,
                    [&] { return Json{{"text", owned}}; }};
  const Json response = Fetch(std::move(req), params);
  return ParseVector(response, kJointTextSpace, "embed_text");
}

EmbeddingVector Oracle::EncodeSentence(std::string_view text) {
  const Json params = {{"model_set", cfg_.model_set}};
  const std::string owned(text);
  OracleRequest req{"encode_sentence", Sha256Hex(owned), params,
                    [&] { return Json{{"text", owned}}; }};
  const Json response = Fetch(std::move(req), params);
  return ParseVector(response, kSentenceSpace, "encode_sentence");
}

Caption Oracle::CaptionPatch(const Patch& patch) {
  const Json params = {{"model_set", cfg_.model_set}};
  OracleRequest req{"caption", patch.content_hash, params,
                    [&] { return Json{{"image", ImageBody(patch)}}; }};
  const Json response = Fetch(std::move(req), params);
  const std::string ctx = "caption " + patch.patch_id;
  RequireModelId(response, ctx);
  const Json& text = RequireField(response, "caption", ctx);
  if (!text.is_string()) Fail(ErrorCode::kBadResponse, ctx + ": caption is not a string");
  Caption out;
  out.patch_id = patch.patch_id;
  out.text = Trim(text.get<std::string>());
  out.captioner_id = response["model_id"].get<std::string>();
  if (out.text.empty()) Fail(ErrorCode::kBadResponse, ctx + ": empty caption");
  return out;
}

// --------------------------------------------------------------- conformance

Json CheckProtocolConformance(OracleTransport& transport) {
  Json report = {{"ok", true}, {"endpoints", Json::object()}};
  auto record = [&](const std::string& name, std::vector<std::string> errors) {
    report["endpoints"][name] = {{"ok", errors.empty()}, {"errors", errors}};
    if (!errors.empty()) report["ok"] = false;
  };

  std::int64_t joint_dim = -1;
  std::int64_t sentence_dim = -1;
  {
    std::vector<std::string> errors;
    try {
      const Json h = transport.Health();
      if (h.value("status", std::string()) != "ok") errors.push_back("status is not \"ok\"");
      const Json& spaces = RequireField(h, "spaces", "health");
      const Json& jd = RequireField(spaces, "joint_dim", "health.spaces");
      const Json& sd = RequireField(spaces, "sentence_dim", "health.spaces");
      if (!jd.is_number_integer() || jd.get<std::int64_t>() <= 0 ||
          !sd.is_number_integer() || sd.get<std::int64_t>() <= 0) {
        errors.push_back("dims must be positive integers");
      } else {
        joint_dim = jd.get<std::int64_t>();
        sentence_dim = sd.get<std::int64_t>();
      }
    } catch (const Error& e) {
      errors.push_back(e.what());
    }
    record("health", std::move(errors));
  }

  RgbImage probe;
  probe.width = 64;
  probe.height = 64;
  probe.pixels.resize(64 * 64 * 3);
  for (int y = 0; y < 64; ++y) {
    for (int x = 0; x < 64; ++x) {
      auto* px = probe.pixels.data() + (y * 64 + x) * 3;
      px[0] = static_cast<std::uint8_t>(x * 4);
      px[1] = static_cast<std::uint8_t>(y * 4);
      px[2] = static_cast<std::uint8_t>((x + y) * 2);
    }
  }
  const std::string image = Base64Encode(EncodePng(probe));
  const std::string text = "a photo of a person standing on a sidewalk";

  auto check = [&](const std::string& kind, const Json& body,
                   const std::function<void(const Json&)>& schema) {
    std::vector<std::string> errors;
    try {
      OracleRequest req{kind, "", Json::object(), [&] { return body; }};
      const Json first = transport.Fetch(req);
      const Json second = transport.Fetch(req);
      schema(first);
      RequireModelId(first, kind);
      if (Canonical(first) != Canonical(second)) {
        errors.push_back("repeated request returned a different response");
      }
    } catch (const Error& e) {
      errors.push_back(e.what());
    }
    record(kind, std::move(errors));
  };
  auto vector_schema = [&](std::int64_t expected) {
    return [expected](const Json& r) {
      const auto v = ParseRawVector(r, "vector response");
      if (expected > 0 && static_cast<std::int64_t>(v.size()) != expected) {
        Fail(ErrorCode::kDimensionMismatch,
             "dim " + std::to_string(v.size()) + " != health " +
                 std::to_string(expected));
      }
    };
  };

  check("detect",
        {{"image", image}, {"query", "person"}, {"box_threshold", 0.35},
         {"text_threshold", 0.25}},
        [](const Json& r) {
          const Json& boxes = RequireField(r, "boxes", "detect");
          if (!boxes.is_array()) Fail(ErrorCode::kBadResponse, "boxes is not an array");
          for (const auto& b : boxes) {
            for (const char* k : {"x0", "y0", "x1", "y1", "score"}) {
              FiniteNumber(RequireField(b, k, "detect box"), k);
            }
            if (!RequireField(b, "label", "detect box").is_string()) {
              Fail(ErrorCode::kBadResponse, "label is not a string");
            }
          }
        });
  check("embed_image", {{"image", image}}, vector_schema(joint_dim));
  check("embed_text", {{"text", text}}, vector_schema(joint_dim));
  check("encode_sentence", {{"text", text}}, vector_schema(sentence_dim));
  check("caption", {{"image", image}}, [](const Json& r) {
    const Json& c = RequireField(r, "caption", "caption");
    if (!c.is_string() || Trim(c.get<std::string>()).empty()) {
      Fail(ErrorCode::kBadResponse, "caption must be a nonempty string");
    }
  });
  return report;
}

}  // namespace auditor
