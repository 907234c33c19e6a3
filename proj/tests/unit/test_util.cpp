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

#include "test_util.hpp"

#include <sys/wait.h>
#include <unistd.h>

#include <array>
#include <atomic>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace auditor::testing {

std::filesystem::path FixtureDir() { return AUDITOR_FIXTURE_DIR; }

TempDir::TempDir() {
  static std::atomic<int> counter{0};
  path_ = std::filesystem::temp_directory_path() /
          ("auditor_test_" + std::to_string(::getpid()) + "_" +
           std::to_string(counter++));
  std::filesystem::remove_all(path_);
  std::filesystem::create_directories(path_);
}

TempDir::~TempDir() {
  std::error_code ec;
  std::filesystem::remove_all(path_, ec);
}

CommandResult RunCli(const std::string& args) {
  const std::string cmd = std::string("'") + AUDITOR_CLI_PATH + "' " + args + " 2>&1";
  CommandResult result;
  FILE* pipe = ::popen(cmd.c_str(), "r");
  if (pipe == nullptr) return result;
  std::array<char, 4096> buf;
  std::size_t n;
  while ((n = std::fread(buf.data(), 1, buf.size(), pipe)) > 0) {
    result.output.append(buf.data(), n);
  }
  const int status = ::pclose(pipe);
  result.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return result;
}

ErrorCode CodeOf(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  return ErrorCode::kOk;
}

ClassMap MakeMap(int width, int height, std::uint8_t fill) {
  ClassMap m;
  m.width = width;
  m.height = height;
  m.data.assign(static_cast<std::size_t>(width) * height, fill);
  return m;
}

RgbImage MakeImage(int width, int height, std::uint8_t seed) {
  RgbImage img;
  img.width = width;
  img.height = height;
  img.pixels.resize(static_cast<std::size_t>(width) * height * 3);
  for (std::size_t i = 0; i < img.pixels.size(); ++i) {
    img.pixels[i] = static_cast<std::uint8_t>(i * 7 + seed);
  }
  return img;
}

::testing::AssertionResult FilesEqual(const std::filesystem::path& a,
                                      const std::filesystem::path& b) {
  std::ifstream fa(a, std::ios::binary);
  std::ifstream fb(b, std::ios::binary);
  if (!fa) return ::testing::AssertionFailure() << "cannot open " << a;
  if (!fb) return ::testing::AssertionFailure() << "cannot open " << b;
  std::string la;
  std::string lb;
  int line = 0;
  while (true) {
    ++line;
    const bool ea = !std::getline(fa, la);
    const bool eb = !std::getline(fb, lb);
    if (ea && eb) break;
    if (ea != eb || la != lb) {
      return ::testing::AssertionFailure()
             << a << " and " << b << " differ at line " << line << ":\n  "
             << la.substr(0, 300) << "\n  " << lb.substr(0, 300);
    }
  }
  std::stringstream sa;
  std::stringstream sb;
  std::ifstream(a, std::ios::binary) >> sa.rdbuf();
  std::ifstream(b, std::ios::binary) >> sb.rdbuf();
  if (sa.str() != sb.str()) {
    return ::testing::AssertionFailure() << a << " and " << b << " differ in line endings";
  }
  return ::testing::AssertionSuccess();
}

}  // namespace auditor::testing
