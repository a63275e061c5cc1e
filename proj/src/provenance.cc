// Copyright 2026 The SerialAnon Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "serialanon/provenance.h"

#include <cstdio>
#include <cstdlib>

#include "serialanon/io.h"

namespace serialanon {

std::uint64_t Fnv1a(std::string_view data, std::uint64_t seed) {
  std::uint64_t h = seed;
  for (unsigned char c : data) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string HexDigest(std::uint64_t hash) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(hash));
  return buf;
}

std::string FileDigest(const std::string& path) {
  const std::string contents = ReadFile(path);
  std::uint64_t h = Fnv1a("");
  std::size_t pos = 0;
  while (pos < contents.size()) {
    std::size_t end = contents.find('\n', pos);
    if (end == std::string::npos) end = contents.size();
    const std::string_view line(contents.data() + pos, end - pos);
    if (line.empty() || line[0] != '#') {
      h = Fnv1a(line, h);
      h = Fnv1a("\n", h);
    }
    pos = end + 1;
  }
  return HexDigest(h);
}

Provenance::Provenance() { fields_["tool_version"] = std::string(kToolVersion); }

Provenance& Provenance::Set(const std::string& key, const std::string& value) {
  fields_[key] = value;
  return *this;
}

Provenance& Provenance::Set(const std::string& key, double value) {
  char buf[32];
  for (int precision = 15; precision <= 17; ++precision) {
    std::snprintf(buf, sizeof buf, "%.*g", precision, value);
    if (std::strtod(buf, nullptr) == value) break;
  }
  fields_[key] = buf;
  return *this;
}

Provenance& Provenance::Set(const std::string& key, std::int64_t value) {
  fields_[key] = std::to_string(value);
  return *this;
}

Provenance& Provenance::Input(const std::string& name, const std::string& path) {
  fields_["input." + name] = FileDigest(path);
  return *this;
}

std::vector<std::string> Provenance::Lines() const {
  std::vector<std::string> out;
  for (const auto& [k, v] : fields_) out.push_back(k + "=" + v);
  return out;
}

std::string Provenance::Digest() const {
  std::uint64_t h = Fnv1a("");
  for (const auto& [k, v] : fields_) {
    h = Fnv1a(k, h);
    h = Fnv1a("=", h);
    h = Fnv1a(v, h);
    h = Fnv1a("\n", h);
  }
  return HexDigest(h);
}

}  // namespace serialanon
