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

#ifndef SERIALANON_MODEL_H_
#define SERIALANON_MODEL_H_

#include <compare>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace serialanon {

// All user-facing failures (bad input files, violated preconditions) are
// reported with this exception type.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Absolute tolerance on Σp = 1 for every distribution built in-process.
inline constexpr double kProbabilityTolerance = 1e-9;
// Tolerance for comparing values produced by different implementations.
inline constexpr double kCrossCheckTolerance = 1e-6;

struct RespondentId {
  std::int64_t value = 0;

  friend auto operator<=>(const RespondentId&, const RespondentId&) = default;
};

struct RespondentIdHash {
  std::size_t operator()(const RespondentId& id) const noexcept {
    return std::hash<std::int64_t>{}(id.value);
  }
};

// Ordered set of sensitive-value labels. Every SensDist in an experiment is
// aligned to one instance of this.
class SensitiveDomain {
 public:
  SensitiveDomain() = default;
  explicit SensitiveDomain(std::vector<std::string> labels);

  std::size_t size() const { return labels_.size(); }
  bool empty() const { return labels_.empty(); }
  const std::string& label(int index) const;
  int index(std::string_view label) const;
  std::optional<int> find(std::string_view label) const;
  const std::vector<std::string>& labels() const { return labels_; }

  friend bool operator==(const SensitiveDomain& a, const SensitiveDomain& b) {
    return a.labels_ == b.labels_;
  }

 private:
  std::vector<std::string> labels_;
  std::unordered_map<std::string, int> index_;
};

// Probability distribution over a SensitiveDomain. Construction validates the
// simplex constraint, so any live instance is a proper distribution.
class SensDist {
 public:
  SensDist() = default;

  // Throws Error unless every entry is in [0,1] and the sum is 1 within
  // kProbabilityTolerance.
  static SensDist FromProbabilities(std::vector<double> p);
  static SensDist Uniform(std::size_t n);
  static SensDist PointMass(std::size_t n, int index);

  std::size_t size() const { return p_.size(); }
  bool empty() const { return p_.empty(); }
  double operator[](int i) const { return p_[static_cast<std::size_t>(i)]; }
  std::span<const double> probabilities() const { return p_; }

  friend bool operator==(const SensDist&, const SensDist&) = default;

 private:
  explicit SensDist(std::vector<double> p) : p_(std::move(p)) {}
  friend SensDist Normalize(std::span<const double> raw);

  std::vector<double> p_;
};

// raw / Σraw. Throws Error("degenerate distribution") for negative entries or
// an all-zero vector.
SensDist Normalize(std::span<const double> raw);

struct Interval {
  int lo = 0;
  int hi = 0;

  bool contains(int v) const { return lo <= v && v <= hi; }
  int width() const { return hi - lo; }
  friend bool operator==(const Interval&, const Interval&) = default;
};

struct QIAttribute {
  std::string name;
  Interval domain;
};

class QISchema {
 public:
  QISchema() = default;
  explicit QISchema(std::vector<QIAttribute> attributes);

  // age [45,74], gender [1,2], weight [60,89].
  static QISchema Default();

  std::size_t arity() const { return attributes_.size(); }
  const QIAttribute& attribute(std::size_t i) const { return attributes_[i]; }
  const std::vector<QIAttribute>& attributes() const { return attributes_; }
  bool contains(std::span<const int> qi) const;
  // Throws Error naming the first offending attribute.
  void CheckContains(std::span<const int> qi) const;

  friend bool operator==(const QISchema& a, const QISchema& b);

 private:
  std::vector<QIAttribute> attributes_;
};

struct Record {
  int tuple_id = 0;
  RespondentId respondent;
  std::vector<int> qi;
  int sensitive = 0;
};

struct View {
  int release = 0;
  std::vector<Record> records;
};

struct GroupTuple {
  int tuple_id = 0;
  int sensitive = 0;
};

struct QIGroup {
  int group_id = 0;
  std::vector<Interval> ranges;
  std::vector<GroupTuple> tuples;
  std::vector<RespondentId> respondents;

  std::size_t size() const { return tuples.size(); }
};

struct GeneralizedView {
  int release = 0;
  std::vector<QIGroup> groups;
  int suppressed = 0;

  std::size_t released_tuples() const;
};

// Σ_a width_a / domain-width_a. Degenerate (single-value) attribute domains
// contribute 0.
double Semiperimeter(const QIGroup& group, const QISchema& schema);

// Validates a view against its schema and domain: arity, QI ranges,
// sensitive index and one record per respondent.
void CheckView(const View& view, const QISchema& schema, std::size_t domain_size);

// Validates group-level invariants: |tuples| = |respondents| and, when a
// matching original view is given, containment of every member's QI vector.
void CheckGeneralizedView(const GeneralizedView& generalized, const View* original);

}  // namespace serialanon

#endif  // SERIALANON_MODEL_H_
