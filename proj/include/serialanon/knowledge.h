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

// Background knowledge: per-class sensitive-value priors (BKsv) and
// order-n sequential conditionals (BKseq), plus the frequency-count miner
// that extracts the latter from a history of original views.

#ifndef SERIALANON_KNOWLEDGE_H_
#define SERIALANON_KNOWLEDGE_H_

#include <cstdint>
#include <iosfwd>
#include <map>
#include <memory>
#include <span>
#include <unordered_map>
#include <utility>
#include <vector>

#include "serialanon/model.h"

namespace serialanon {

// Sensitive-value sequence, oldest first.
using Context = std::vector<int>;

class BKsvTable {
 public:
  struct Entry {
    std::vector<Interval> box;
    SensDist dist;
  };

  BKsvTable() = default;
  // The boxes must partition the schema's grid exactly.
  BKsvTable(QISchema schema, std::vector<Entry> entries);

  static BKsvTable Uniform(const QISchema& schema, std::size_t domain_size);

  int ClassOf(std::span<const int> qi) const;
  const SensDist& Lookup(std::span<const int> qi) const;

  const QISchema& schema() const { return schema_; }
  const std::vector<Entry>& entries() const { return entries_; }
  std::size_t domain_size() const;

 private:
  QISchema schema_;
  std::vector<Entry> entries_;
};

// Splits attribute a into buckets[a] near-equal integer sub-intervals and
// returns the cartesian product of boxes in row-major order.
std::vector<std::vector<Interval>> ClassBoxes(const QISchema& schema,
                                              std::span<const int> buckets);
// Three buckets for wide attributes, one per value for two-valued ones;
// the default schema yields the 18 age × gender × weight classes.
std::vector<std::vector<Interval>> DefaultClassBoxes(const QISchema& schema);

// Order-n table of next-value distributions keyed by the most recent values.
// An entry for context c means p(next | last |c| values = c); shorter
// contexts are marginals over everything before them.
class BKseqTable {
 public:
  struct Conditional {
    Context context;
    SensDist dist;
    // Relative frequency of the context; used when marginalizing.
    double weight = 1.0;
  };

  BKseqTable() = default;
  BKseqTable(int order, SensDist fallback, std::vector<Conditional> conditionals);

  int order() const { return order_; }
  std::size_t domain_size() const { return fallback_.size(); }
  const SensDist& fallback() const { return fallback_; }
  const std::vector<Conditional>& conditionals() const { return conditionals_; }

  const SensDist* Find(std::span<const int> context) const;
  // Distribution for the value following `history`: the longest stored
  // suffix of length <= order, else the fallback.
  const SensDist& Predict(std::span<const int> history) const;

  // Table of order <= `order`. Contexts already present are kept; missing
  // suffixes are frequency-weighted averages over the shortest longer
  // contexts that end with them.
  BKseqTable Truncate(int order) const;

 private:
  std::uint64_t Key(std::span<const int> context) const;

  int order_ = 0;
  SensDist fallback_;
  std::vector<Conditional> conditionals_;
  std::unordered_map<std::uint64_t, std::size_t> index_;
};

// Occurrence counts of respondent value-sequence suffixes over a history of
// original views. Each time a respondent appears, every suffix of their
// sequence so far (up to max_length when bounded) is counted once.
class SequenceCounter {
 public:
  explicit SequenceCounter(int max_length = 0);

  // The first view may carry any release index; later ones must be
  // consecutive.
  void Add(const View& view);

  std::int64_t Count(std::span<const int> sequence) const;
  int last_release() const { return last_release_; }
  int max_length() const { return max_length_; }
  const std::map<Context, std::int64_t>& counts() const { return counts_; }

  friend bool operator==(const SequenceCounter& a, const SequenceCounter& b) {
    return a.max_length_ == b.max_length_ && a.last_release_ == b.last_release_ &&
           a.counts_ == b.counts_ && a.tails_ == b.tails_;
  }

 private:
  int max_length_;
  int last_release_ = 0;
  std::map<Context, std::int64_t> counts_;
  std::unordered_map<RespondentId, Context, RespondentIdHash> tails_;
};

SequenceCounter SpmCount(std::span<const View> history, int max_length = 0);

// count(<seq,s>) / count(seq), or 0 when seq was never seen.
double SpmConditional(const SequenceCounter& counter, std::span<const int> sequence,
                      int value);

// Conditionals for every context of length 1..order with at least one
// observed continuation, normalized over observed continuations. The
// fallback is the unconditional value frequency (uniform if the counter is
// empty).
BKseqTable BuildBKseq(const SequenceCounter& counter, int order,
                      std::size_t domain_size);
// Mines a table from a history of original views (the data itself or an
// external corpus).
BKseqTable BuildBKseqFromHistory(std::span<const View> history, int order,
                                 std::size_t domain_size);

struct RefreshResult {
  BKseqTable table;
  SequenceCounter counter;
};
// Folds one more original view into the counter and rebuilds the table.
RefreshResult IncrementalRefresh(const BKseqTable& table, SequenceCounter counter,
                                 const View& view);

// Sequential knowledge available after each release: a fixed table, or one
// re-mined from the original views released so far.
class BKseqSchedule {
 public:
  static BKseqSchedule Fixed(BKseqTable table);
  static BKseqSchedule Incremental(std::span<const View> history, int order,
                                   std::size_t domain_size);

  const BKseqTable& AfterRelease(int release) const;

 private:
  std::shared_ptr<const BKseqTable> fixed_;
  std::map<int, std::shared_ptr<const BKseqTable>> by_release_;
};

BKseqTable ReadBKseqJson(std::istream& in, SensitiveDomain* domain_out = nullptr);
void WriteBKseqJson(std::ostream& out, const BKseqTable& table,
                    const SensitiveDomain& domain);

BKsvTable ReadBKsvJson(std::istream& in, const QISchema& schema,
                       SensitiveDomain* domain_out = nullptr);
void WriteBKsvJson(std::ostream& out, const BKsvTable& table,
                   const SensitiveDomain& domain);

}  // namespace serialanon

#endif  // SERIALANON_KNOWLEDGE_H_
