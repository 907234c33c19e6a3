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

#include <gtest/gtest.h>

#include <atomic>
#include <chrono>
#include <thread>

#include "auditor/hashing.hpp"
#include "auditor/oracle.hpp"
#include "httplib.h"
#include "test_util.hpp"

namespace auditor {
namespace {

using testing::CodeOf;

// In-process stand-in for the model sidecar. Answers are a pure function of
// the request body unless a test changes the knobs.
class StubSidecar {
 public:
  std::atomic<int> failures_before_success{0};
  std::atomic<int> forced_status{0};
  std::atomic<bool> drift{false};
  std::atomic<int> joint_dim{8};
  std::atomic<int> requests{0};

  StubSidecar() {
    server_.Post(R"(/v1/(\w+))", [this](const httplib::Request& req, httplib::Response& res) {
      ++requests;
      if (forced_status > 0) {
        res.status = forced_status;
        res.set_content("{\"error\":\"forced\"}", "application/json");
        return;
      }
      if (failures_before_success > 0) {
        --failures_before_success;
        res.status = 503;
        return;
      }
      res.set_content(Canonical(Answer(req.matches[1], Json::parse(req.body))),
                      "application/json");
    });
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }

  ~StubSidecar() {
    server_.stop();
    thread_.join();
  }

  std::string endpoint() const { return "http://127.0.0.1:" + std::to_string(port_); }

 private:
  Json Vector(const Json& body, int dim) {
    const std::string h = Sha256Hex(Canonical(body) + (drift ? std::to_string(requests.load()) : ""));
    std::vector<double> v;
    for (int i = 0; i < dim; ++i) v.push_back((static_cast<int>(h[i % h.size()]) % 17) / 8.0 - 1.0);
    return v;
  }

  Json Answer(const std::string& kind, const Json& body) {
    if (kind == "health") {
      return {{"status", "ok"}, {"spaces", {{"joint_dim", joint_dim.load()}, {"sentence_dim", 6}}}};
    }
    if (kind == "detect") {
      return {{"model_id", "stub-det"},
              {"boxes", Json::array({{{"x0", 1}, {"y0", 2}, {"x1", 10}, {"y1", 12},
                                      {"score", 0.6}, {"label", body.at("query")}}})}};
    }
    if (kind == "embed_image" || kind == "embed_text") {
      return {{"model_id", "stub-clip"}, {"vector", Vector(body, 8)}};
    }
    if (kind == "encode_sentence") return {{"model_id", "stub-st"}, {"vector", Vector(body, 6)}};
    if (kind == "caption") return {{"model_id", "stub-cap"}, {"caption", "a small object"}};
    return Json::object();
  }

  httplib::Server server_;
  int port_ = 0;
  std::thread thread_;
};

OracleRequest TextRequest(const std::string& kind) {
  return {kind, Sha256Hex(std::string_view("hi")), Json::object(),
          [] { return Json{{"text", "hi"}}; }};
}

TEST(HttpTransportTest, RetriesServiceUnavailable) {
  StubSidecar stub;
  stub.failures_before_success = 2;
  HttpTransport t(stub.endpoint(), 5.0, 3);
  const Json r = t.Fetch(TextRequest("embed_text"));
  EXPECT_EQ(r.at("vector").size(), 8u);
  EXPECT_EQ(stub.requests.load(), 3);
}

TEST(HttpTransportTest, GivesUpAfterRetries) {
  StubSidecar stub;
  stub.forced_status = 503;
  HttpTransport t(stub.endpoint(), 5.0, 2);
  EXPECT_EQ(CodeOf([&] { t.Fetch(TextRequest("embed_text")); }),
            ErrorCode::kOracleUnavailable);
  EXPECT_EQ(stub.requests.load(), 3);
}

TEST(HttpTransportTest, ClientErrorIsRejectedWithoutRetry) {
  StubSidecar stub;
  stub.forced_status = 400;
  HttpTransport t(stub.endpoint(), 5.0, 3);
  EXPECT_EQ(CodeOf([&] { t.Fetch(TextRequest("embed_text")); }),
            ErrorCode::kOracleRejected);
  EXPECT_EQ(stub.requests.load(), 1);
}

TEST(HttpTransportTest, UnreachableEndpointIsUnavailable) {
  int port = 0;
  {
    httplib::Server probe;
    port = probe.bind_to_any_port("127.0.0.1");
  }
  HttpTransport t("http://127.0.0.1:" + std::to_string(port), 0.5, 1);
  EXPECT_EQ(CodeOf([&] { t.Fetch(TextRequest("embed_text")); }),
            ErrorCode::kOracleUnavailable);
}

TEST(HttpTransportTest, OracleSendsDocumentedBodies) {
  StubSidecar stub;
  OracleConfig cfg;
  cfg.mode = OracleMode::kHttp;
  cfg.endpoint = stub.endpoint();
  auto oracle = Oracle::Create(cfg, std::nullopt);
  Patch p;
  p.patch_id = "p";
  p.bbox = {0, 0, 16, 16};
  p.crop = testing::MakeImage(16, 16, 3);
  p.content_hash = ContentHash(p.crop);
  const auto d = oracle->Detect(p, {1, "person", ""});
  ASSERT_EQ(d.boxes.size(), 1u);
  EXPECT_EQ(d.boxes[0].label, "person");
  EXPECT_EQ(oracle->EmbedImage(p).dim(), 8u);
  EXPECT_EQ(oracle->EncodeSentence("x").dim(), 6u);
  EXPECT_EQ(oracle->CaptionPatch(p).text, "a small object");
}

TEST(ConformanceTest, WellBehavedSidecarPasses) {
  StubSidecar stub;
  HttpTransport t(stub.endpoint(), 5.0, 0);
  const Json report = CheckProtocolConformance(t);
  EXPECT_TRUE(report.at("ok").get<bool>()) << report.dump(2);
  for (const char* k : {"health", "detect", "embed_image", "embed_text", "encode_sentence", "caption"}) {
    EXPECT_TRUE(report.at("endpoints").at(k).at("ok").get<bool>()) << k;
  }
}

TEST(ConformanceTest, NondeterministicAnswersFail) {
  StubSidecar stub;
  stub.drift = true;
  HttpTransport t(stub.endpoint(), 5.0, 0);
  const Json report = CheckProtocolConformance(t);
  EXPECT_FALSE(report.at("ok").get<bool>());
  EXPECT_FALSE(report.at("endpoints").at("embed_text").at("ok").get<bool>());
}

TEST(ConformanceTest, DimensionDisagreementFails) {
  StubSidecar stub;
  stub.joint_dim = 9;
  HttpTransport t(stub.endpoint(), 5.0, 0);
  const Json report = CheckProtocolConformance(t);
  EXPECT_FALSE(report.at("endpoints").at("embed_image").at("ok").get<bool>());
  EXPECT_TRUE(report.at("endpoints").at("encode_sentence").at("ok").get<bool>());
}

TEST(ConformanceTest, CliExitCodes) {
  StubSidecar stub;
  auto ok = testing::RunCli("oracle check --endpoint " + stub.endpoint());
  EXPECT_EQ(ok.exit_code, 0) << ok.output;
  stub.drift = true;
  auto bad = testing::RunCli("oracle check --endpoint " + stub.endpoint());
  EXPECT_EQ(bad.exit_code, 3) << bad.output;
}

}  // namespace
}  // namespace auditor
