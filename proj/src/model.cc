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

#include "serialanon/model.h"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <unordered_set>

namespace serialanon {

SensitiveDomain::SensitiveDomain(std::vector<std::string> labels)
    : labels_(std::move(labels)) {
  for (std::size_t i = 0; i < labels_.size(); ++i) {
    if (labels_[i].empty()) throw Error("sensitive domain: empty label");
    if (!index_.emplace(labels_[i], static_cast<int>(i)).second) {
      throw Error("sensitive domain: duplicate label '" + labels_[i] + "'");
    }
  }
}

const std::string& SensitiveDomain::label(int index) const {
  if (index < 0 || static_cast<std::size_t>(index) >= labels_.size()) {
    throw Error("sensitive domain: index " + std::to_string(index) +
                " out of range");
  }
  return labels_[static_cast<std::size_t>(index)];
}

std::optional<int> SensitiveDomain::find(std::string_view label) const {
  auto it = index_.find(std::string(label));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

int SensitiveDomain::index(std::string_view label) const {
  auto found = find(label);
  if (!found) {
    throw Error("sensitive domain: unknown label '" + std::string(label) + "'");
  }
  return *found;
}

SensDist SensDist::FromProbabilities(std::vector<double> p) {
  if (p.empty()) throw Error("distribution is empty");
  double sum = 0.0;
  for (double v : p) {
    if (!(v >= -kProbabilityTolerance && v <= 1.0 + kProbabilityTolerance)) {
      throw Error("probability " + std::to_string(v) + " outside [0,1]");
    }
    sum += v;
  }
  if (std::abs(sum - 1.0) > kProbabilityTolerance) {
    throw Error("probabilities sum to " + std::to_string(sum) + ", not 1");
  }
  for (double& v : p) v = std::clamp(v, 0.0, 1.0);
  return SensDist(std::move(p));
}

SensDist SensDist::Uniform(std::size_t n) {
  if (n == 0) throw Error("distribution is empty");
  return SensDist(std::vector<double>(n, 1.0 / static_cast<double>(n)));
}

SensDist SensDist::PointMass(std::size_t n, int index) {
  if (index < 0 || static_cast<std::size_t>(index) >= n) {
    throw Error("point mass index out of range");
  }
  std::vector<double> p(n, 0.0);
  p[static_cast<std::size_t>(index)] = 1.0;
  return SensDist(std::move(p));
}

SensDist Normalize(std::span<const double> raw) {
  double sum = 0.0;
  for (double v : raw) {
    if (v < 0.0 || std::isnan(v)) throw Error("degenerate distribution");
    sum += v;
  }
  if (!(sum > 0.0) || std::isinf(sum)) throw Error("degenerate distribution");
  std::vector<double> p(raw.begin(), raw.end());
  for (double& v : p) v /= sum;
  return SensDist(std::move(p));
}

QISchema::QISchema(std::vector<QIAttribute> attributes)
    : attributes_(std::move(attributes)) {
  std::unordered_set<std::string> names;
  for (const auto& a : attributes_) {
    if (a.name.empty()) throw Error("QI schema: empty attribute name");
    if (!names.insert(a.name).second) {
      throw Error("QI schema: duplicate attribute '" + a.name + "'");
    }
    if (a.domain.lo > a.domain.hi) {
      throw Error("QI schema: empty domain for '" + a.name + "'");
    }
  }
}

QISchema QISchema::Default() {
  return QISchema({{"age", {45, 74}}, {"gender", {1, 2}}, {"weight", {60, 89}}});
}

bool QISchema::contains(std::span<const int> qi) const {
  if (qi.size() != attributes_.size()) return false;
  for (std::size_t i = 0; i < qi.size(); ++i) {
    if (!attributes_[i].domain.contains(qi[i])) return false;
  }
  return true;
}

void QISchema::CheckContains(std::span<const int> qi) const {
  if (qi.size() != attributes_.size()) {
    throw Error("QI vector has " + std::to_string(qi.size()) +
                " components, schema has " + std::to_string(attributes_.size()));
  }
  for (std::size_t i = 0; i < qi.size(); ++i) {
    const auto& a = attributes_[i];
    if (!a.domain.contains(qi[i])) {
      throw Error("QI value " + std::to_string(qi[i]) + " for '" + a.name +
                  "' outside [" + std::to_string(a.domain.lo) + "," +
                  std::to_string(a.domain.hi) + "]");
    }
  }
}

bool operator==(const QISchema& a, const QISchema& b) {
  if (a.arity() != b.arity()) return false;
  for (std::size_t i = 0; i < a.arity(); ++i) {
    if (a.attributes_[i].name != b.attributes_[i].name ||
        a.attributes_[i].domain != b.attributes_[i].domain) {
      return false;
    }
  }
  return true;
}

std::size_t GeneralizedView::released_tuples() const {
  std::size_t n = 0;
  for (const auto& g : groups) n += g.tuples.size();
  return n;
}

double Semiperimeter(const QIGroup& group, const QISchema& schema) {
  double total = 0.0;
  for (std::size_t a = 0; a < schema.arity() && a < group.ranges.size(); ++a) {
    const int span = schema.attribute(a).domain.width();
    if (span == 0) continue;
    total += static_cast<double>(group.ranges[a].width()) / span;
  }
  return total;
}

void CheckView(const View& view, const QISchema& schema, std::size_t domain_size) {
  std::unordered_set<RespondentId, RespondentIdHash> seen;
  for (const auto& r : view.records) {
    schema.CheckContains(r.qi);
    if (r.sensitive < 0 || static_cast<std::size_t>(r.sensitive) >= domain_size) {
      throw Error("release " + std::to_string(view.release) + ": tuple " +
                  std::to_string(r.tuple_id) + " has invalid sensitive index");
    }
    if (!seen.insert(r.respondent).second) {
      throw Error("release " + std::to_string(view.release) + ": respondent " +
                  std::to_string(r.respondent.value) + " appears twice");
    }
  }
}

void CheckGeneralizedView(const GeneralizedView& generalized, const View* original) {
  std::unordered_map<int, const Record*> by_tuple;
  if (original != nullptr) {
    for (const auto& r : original->records) by_tuple[r.tuple_id] = &r;
  }
  std::unordered_set<int> used;
  for (const auto& g : generalized.groups) {
    const std::string where = "release " + std::to_string(generalized.release) +
                              " group " + std::to_string(g.group_id);
    if (!g.respondents.empty() && g.respondents.size() != g.tuples.size()) {
      throw Error(where + ": " + std::to_string(g.tuples.size()) + " tuples but " +
                  std::to_string(g.respondents.size()) + " respondents");
    }
    for (const auto& t : g.tuples) {
      if (!used.insert(t.tuple_id).second) {
        throw Error(where + ": tuple " + std::to_string(t.tuple_id) +
                    " released twice");
      }
      if (original == nullptr) continue;
      auto it = by_tuple.find(t.tuple_id);
      if (it == by_tuple.end()) {
        throw Error(where + ": unknown tuple " + std::to_string(t.tuple_id));
      }
      const auto& qi = it->second->qi;
      for (std::size_t a = 0; a < qi.size(); ++a) {
        if (a >= g.ranges.size() || !g.ranges[a].contains(qi[a])) {
          throw Error(where + ": ranges do not cover tuple " +
                      std::to_string(t.tuple_id));
        }
      }
    }
  }
  if (original != nullptr) {
    const auto expected =
        static_cast<int>(original->records.size() - generalized.released_tuples());
    if (expected != generalized.suppressed) {
      throw Error("release " + std::to_string(generalized.release) +
                  ": suppressed count " + std::to_string(generalized.suppressed) +
                  " != " + std::to_string(expected));
    }
  }
}

}  // namespace serialanon
