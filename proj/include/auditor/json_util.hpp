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

// Canonical JSON: compact separators, keys sorted, floats in shortest
// round-trip form laid out like Python's float repr. Two writers that follow
// these rules emit byte-identical documents, which is what golden artifact
// comparisons rely on.

#ifndef AUDITOR_JSON_UTIL_HPP_
#define AUDITOR_JSON_UTIL_HPP_

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

namespace auditor {

using Json = nlohmann::json;

// Shortest round-trip decimal for a finite double ("0.1", "1.0", "1e-05").
// Throws InvalidArgument on NaN or infinity.
std::string FormatDouble(double value);

std::string Canonical(const Json& value);

// Throws kIo naming `what` on malformed input.
Json ParseJson(std::string_view text, std::string_view what);

Json ReadJsonFile(const std::filesystem::path& path);

// One document per non-empty line.
std::vector<Json> ReadJsonLines(const std::filesystem::path& path);

std::string JsonLines(const std::vector<Json>& rows);

// Throws BadResponse when `key` is absent.
const Json& RequireField(const Json& obj, std::string_view key,
                         std::string_view context);

}  // namespace auditor

#endif  // AUDITOR_JSON_UTIL_HPP_
