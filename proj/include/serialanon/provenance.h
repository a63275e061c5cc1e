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

// Content hashes and the provenance fields stamped on every output file.

#ifndef SERIALANON_PROVENANCE_H_
#define SERIALANON_PROVENANCE_H_

#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace serialanon {

inline constexpr std::string_view kToolVersion = "0.3.0";

// 64-bit FNV-1a; `seed` chains successive calls.
std::uint64_t Fnv1a(std::string_view data, std::uint64_t seed = 0xcbf29ce484222325ULL);
std::string HexDigest(std::uint64_t hash);
// Hash of a file's bytes, ignoring its '#' provenance lines so that
// restamping an unchanged table does not change downstream hashes.
std::string FileDigest(const std::string& path);

class Provenance {
 public:
  Provenance();

  Provenance& Set(const std::string& key, const std::string& value);
  Provenance& Set(const std::string& key, double value);
  Provenance& Set(const std::string& key, std::int64_t value);
  // Records `input.<name>` = digest of the file at `path`.
  Provenance& Input(const std::string& name, const std::string& path);

  const std::map<std::string, std::string>& fields() const { return fields_; }
  // "key=value" lines for CSV comment headers.
  std::vector<std::string> Lines() const;
  // Digest over all fields, used as a resumability stamp.
  std::string Digest() const;

 private:
  std::map<std::string, std::string> fields_;
};

}  // namespace serialanon

#endif  // SERIALANON_PROVENANCE_H_
