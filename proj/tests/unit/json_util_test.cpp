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

#include "auditor/json_util.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <fstream>
#include <random>

#include "auditor/error.hpp"
#include "test_util.hpp"

namespace auditor {
namespace {

using testing::CodeOf;

TEST(FormatDoubleTest, MatchesPythonRepr) {
  EXPECT_EQ(FormatDouble(0.1), "0.1");
  EXPECT_EQ(FormatDouble(1.0), "1.0");
  EXPECT_EQ(FormatDouble(-0.0), "-0.0");
  EXPECT_EQ(FormatDouble(1e-5), "1e-05");
  EXPECT_EQ(FormatDouble(0.0001), "0.0001");
  EXPECT_EQ(FormatDouble(1e16), "1e+16");
  EXPECT_EQ(FormatDouble(1234567890123456.0), "1234567890123456.0");
  EXPECT_EQ(FormatDouble(0.7999999999999999), "0.7999999999999999");
  EXPECT_EQ(FormatDouble(2.5e-300), "2.5e-300");
}

TEST(FormatDoubleTest, RoundTrips) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int i = 0; i < 2000; ++i) {
    const double v = u(rng) * std::pow(10.0, static_cast<int>(rng() % 40) - 20);
    EXPECT_EQ(std::stod(FormatDouble(v)), v);
  }
}

TEST(FormatDoubleTest, RejectsNonFinite) {
  EXPECT_EQ(CodeOf([] { FormatDouble(std::nan("")); }), ErrorCode::kInvalidArgument);
  EXPECT_EQ(CodeOf([] { FormatDouble(std::numeric_limits<double>::infinity()); }),
            ErrorCode::kInvalidArgument);
}

TEST(CanonicalTest, SortsKeysAndCompacts) {
  Json j = {{"b", 1}, {"a", {{"d", 0.5}, {"c", Json::array({1, "x", nullptr, true})}}}};
  EXPECT_EQ(Canonical(j), R"({"a":{"c":[1,"x",null,true],"d":0.5},"b":1})");
}

TEST(CanonicalTest, KeepsUnicodeUnescaped) {
  EXPECT_EQ(Canonical(Json("café")), "\"café\"");
}

TEST(ParseJsonTest, MalformedIsIo) {
  EXPECT_EQ(CodeOf([] { ParseJson("{", "x"); }), ErrorCode::kIo);
}

TEST(JsonLinesTest, RoundTrip) {
  testing::TempDir dir;
  const std::vector<Json> rows = {{{"a", 1}}, {{"b", 2.0}}};
  std::ofstream(dir.path() / "x.jsonl") << JsonLines(rows) << "\n";
  const auto back = ReadJsonLines(dir.path() / "x.jsonl");
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(Canonical(back[1]), "{\"b\":2.0}");
}

TEST(RequireFieldTest, MissingIsBadResponse) {
  EXPECT_EQ(CodeOf([] { RequireField(Json::object(), "k", "ctx"); }),
            ErrorCode::kBadResponse);
}

}  // namespace
}  // namespace auditor
