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

#include "auditor/fs_util.hpp"

#include <fcntl.h>
#include <sys/file.h>
#include <unistd.h>

#include <atomic>
#include <fstream>
#include <sstream>
#include <thread>

#include "auditor/error.hpp"
#include "auditor/hashing.hpp"

namespace auditor {
namespace {

std::atomic<std::uint64_t> g_temp_counter{0};

fs::path TempSibling(const fs::path& path) {
  std::ostringstream name;
  name << '.' << path.filename().string() << ".tmp." << ::getpid() << '.'
       << std::hash<std::thread::id>{}(std::this_thread::get_id()) << '.'
       << g_temp_counter.fetch_add(1);
  return path.parent_path() / name.str();
}

}  // namespace

std::string ReadFile(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) Fail(ErrorCode::kIo, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<std::uint8_t> ReadBinaryFile(const fs::path& path) {
  const std::string s = ReadFile(path);
  return {s.begin(), s.end()};
}

void WriteFileAtomic(const fs::path& path, std::string_view contents) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  const fs::path tmp = TempSibling(path);
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) Fail(ErrorCode::kIo, "cannot write " + tmp.string());
    out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    out.flush();
    if (!out) Fail(ErrorCode::kIo, "short write to " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) {
    fs::remove(tmp);
    Fail(ErrorCode::kIo, "rename to " + path.string() + ": " + ec.message());
  }
}

void WriteFileAtomic(const fs::path& path,
                     std::span<const std::uint8_t> bytes) {
  WriteFileAtomic(path,
                  std::string_view(reinterpret_cast<const char*>(bytes.data()),
                                   bytes.size()));
}

std::string FileSha256(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) Fail(ErrorCode::kIo, "cannot open " + path.string());
  Sha256Stream hash;
  char buf[1 << 16];
  while (in) {
    in.read(buf, sizeof(buf));
    const auto n = static_cast<std::size_t>(in.gcount());
    if (n > 0) hash.Update(std::string_view(buf, n));
  }
  return hash.FinishHex();
}

fs::path ResolveAgainst(const fs::path& base, const fs::path& p) {
  if (p.empty() || p.is_absolute()) return p;
  return (base / p).lexically_normal();
}

DirectoryLock::DirectoryLock(const fs::path& dir) {
  fs::create_directories(dir);
  const fs::path lock_path = dir / ".lock";
  fd_ = ::open(lock_path.c_str(), O_RDWR | O_CREAT | O_CLOEXEC, 0644);
  if (fd_ < 0) Fail(ErrorCode::kIo, "cannot open " + lock_path.string());
  if (::flock(fd_, LOCK_EX | LOCK_NB) != 0) {
    ::close(fd_);
    fd_ = -1;
    Fail(ErrorCode::kRunLocked,
         "another pipeline process holds " + lock_path.string());
  }
}

DirectoryLock::~DirectoryLock() {
  if (fd_ >= 0) {
    ::flock(fd_, LOCK_UN);
    ::close(fd_);
  }
}

}  // namespace auditor
