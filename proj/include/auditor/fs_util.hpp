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

#ifndef AUDITOR_FS_UTIL_HPP_
#define AUDITOR_FS_UTIL_HPP_

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace auditor {

namespace fs = std::filesystem;

std::string ReadFile(const fs::path& path);
std::vector<std::uint8_t> ReadBinaryFile(const fs::path& path);

// Writes to a sibling temp file and renames it over `path`, creating parent
// directories as needed. Readers never observe a partial file.
void WriteFileAtomic(const fs::path& path, std::string_view contents);
void WriteFileAtomic(const fs::path& path, std::span<const std::uint8_t> bytes);

std::string FileSha256(const fs::path& path);

// Resolves `p` against `base` unless it is already absolute.
fs::path ResolveAgainst(const fs::path& base, const fs::path& p);

// Exclusive advisory lock on `<dir>/.lock`; released on destruction or when
// the process dies.
class DirectoryLock {
 public:
  explicit DirectoryLock(const fs::path& dir);
  ~DirectoryLock();
  DirectoryLock(const DirectoryLock&) = delete;
  DirectoryLock& operator=(const DirectoryLock&) = delete;

 private:
  int fd_ = -1;
};

}  // namespace auditor

#endif  // AUDITOR_FS_UTIL_HPP_
