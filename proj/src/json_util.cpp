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

#include <charconv>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "auditor/error.hpp"

namespace auditor {
namespace {

void AppendCanonical(const Json& value, std::string& out) {
  switch (value.type()) {
    case Json::value_t::null:
      out += "null";
      break;
    case Json::value_t::boolean:
      out += value.get<bool>() ? "true" : "false";
      break;
    case Json::value_t::number_integer:
      out += std::to_string(value.get<std::int64_t>());
      break;
    case Json::value_t::number_unsigned:
      out += std::to_string(value.get<std::uint64_t>());
      break;
    case Json::value_t::number_float:
      out += FormatDouble(value.get<double>());
      break;
    case Json::value_t::string:
      out += value.dump(-1, ' ', false);
      break;
    case Json::value_t::array: {
      out += '[';
      bool first = true;
      for (const auto& item : value) {
        if (!first) out += ',';
        first = false;
        AppendCanonical(item, out);
      }
      out += ']';
      break;
    }
    case Json::value_t::object: {
      // nlohmann::json objects are std::map backed, so iteration is sorted.
      out += '{';
      bool first = true;
      for (auto it = value.begin(); it != value.end(); ++it) {
        if (!first) out += ',';
        first = false;
        out += Json(it.key()).dump(-1, ' ', false);
        out += ':';
        AppendCanonical(it.value(), out);
      }
      out += '}';
      break;
    }
    case Json::value_t::binary:
    case Json::value_t::discarded:
      Fail(ErrorCode::kInvalidArgument, "cannot serialize binary JSON value");
  }
}

}  // namespace

std::string FormatDouble(double value) {
  if (!std::isfinite(value)) {
    Fail(ErrorCode::kInvalidArgument, "non-finite number in JSON output");
  }
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), value,
                           std::chars_format::scientific);
  std::string sci(buf, res.ptr);
  // sci looks like "-d.ddde+XX".
  bool negative = false;
  std::size_t pos = 0;
  if (sci[0] == '-') {
    negative = true;
    pos = 1;
  }
  const std::size_t e = sci.find('e');
  std::string digits;
  for (std::size_t i = pos; i < e; ++i) {
    if (sci[i] != '.') digits += sci[i];
  }
  const int exponent = std::atoi(sci.c_str() + e + 1);

  std::string out = negative ? "-" : "";
  if (exponent >= -4 && exponent < 16) {
    if (exponent < 0) {
      out += "0.";
      out.append(static_cast<std::size_t>(-exponent - 1), '0');
      out += digits;
    } else {
      const auto int_len = static_cast<std::size_t>(exponent) + 1;
      if (digits.size() <= int_len) {
        out += digits;
        out.append(int_len - digits.size(), '0');
        out += ".0";
      } else {
        out += digits.substr(0, int_len);
        out += '.';
        out += digits.substr(int_len);
      }
    }
  } else {
    out += digits[0];
    if (digits.size() > 1) {
      out += '.';
      out += digits.substr(1);
    }
    out += 'e';
    out += exponent < 0 ? '-' : '+';
    const int mag = exponent < 0 ? -exponent : exponent;
    if (mag < 10) out += '0';
    out += std::to_string(mag);
  }
  return out;
}

std::string Canonical(const Json& value) {
  std::string out;
  AppendCanonical(value, out);
  return out;
}

Json ParseJson(std::string_view text, std::string_view what) {
  try {
    return Json::parse(text);
  } catch (const Json::parse_error& e) {
    Fail(ErrorCode::kIo, "malformed JSON in " + std::string(what) + ": " +
                             e.what());
  }
}

Json ReadJsonFile(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) Fail(ErrorCode::kIo, "cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ParseJson(ss.str(), path.string());
}

std::vector<Json> ReadJsonLines(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) Fail(ErrorCode::kIo, "cannot open " + path.string());
  std::vector<Json> rows;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    rows.push_back(
        ParseJson(line, path.string() + ":" + std::to_string(line_no)));
  }
  return rows;
}

std::string JsonLines(const std::vector<Json>& rows) {
  std::string out;
  for (const auto& row : rows) {
    out += Canonical(row);
    out += '\n';
  }
  return out;
}

const Json& RequireField(const Json& obj, std::string_view key,
                         std::string_view context) {
  if (!obj.is_object()) {
    Fail(ErrorCode::kBadResponse,
         std::string(context) + ": expected a JSON object");
  }
  auto it = obj.find(std::string(key));
  if (it == obj.end()) {
    Fail(ErrorCode::kBadResponse, std::string(context) + ": missing field '" +
                                      std::string(key) + "'");
  }
  return *it;
}

}  // namespace auditor
