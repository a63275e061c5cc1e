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

// Internal JSON helpers shared by the readers and writers.

#ifndef SERIALANON_SRC_JSON_UTIL_H_
#define SERIALANON_SRC_JSON_UTIL_H_

#include <istream>
#include <string>
#include <vector>

#include "json.hpp"
#include "serialanon/model.h"

namespace serialanon::internal {

using ordered_json = nlohmann::ordered_json;

// Sparse {label: p} object; zero entries are omitted.
inline ordered_json DistToJson(const SensDist& d, const SensitiveDomain& domain) {
  ordered_json j = ordered_json::object();
  for (std::size_t i = 0; i < d.size(); ++i) {
    const int s = static_cast<int>(i);
    if (d[s] > 0.0) j[domain.label(s)] = d[s];
  }
  return j;
}

inline SensDist DistFromJson(const nlohmann::json& j, const SensitiveDomain& domain,
                             const std::string& where) {
  if (!j.is_object()) throw Error(where + ": distribution must be an object");
  std::vector<double> p(domain.size(), 0.0);
  for (const auto& [label, value] : j.items()) {
    auto idx = domain.find(label);
    if (!idx) throw Error(where + ": unknown label '" + label + "'");
    if (!value.is_number()) throw Error(where + ": probability must be a number");
    p[static_cast<std::size_t>(*idx)] = value.get<double>();
  }
  try {
    return SensDist::FromProbabilities(std::move(p));
  } catch (const Error& e) {
    throw Error(where + ": " + e.what());
  }
}

inline nlohmann::json ParseJson(std::istream& in, const std::string& what) {
  try {
    nlohmann::json j;
    in >> j;
    return j;
  } catch (const nlohmann::json::exception& e) {
    throw Error(what + ": " + e.what());
  }
}

}  // namespace serialanon::internal

#endif  // SERIALANON_SRC_JSON_UTIL_H_
