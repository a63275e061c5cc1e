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

#include "serialanon/knowledge.h"

#include <algorithm>
#include <istream>
#include <ostream>
#include <set>
#include <string>

#include "json.hpp"
#include "json_util.h"

namespace serialanon {
namespace {

using internal::DistFromJson;
using internal::DistToJson;
using internal::ParseJson;
using internal::ordered_json;

std::string ContextString(const Context& context, const SensitiveDomain* domain) {
  std::string s = "<";
  for (std::size_t i = 0; i < context.size(); ++i) {
    if (i) s += ",";
    s += domain ? domain->label(context[i]) : std::to_string(context[i]);
  }
  return s + ">";
}

std::int64_t BoxVolume(const std::vector<Interval>& box) {
  std::int64_t v = 1;
  for (const auto& i : box) v *= static_cast<std::int64_t>(i.width()) + 1;
  return v;
}

bool BoxesOverlap(const std::vector<Interval>& a, const std::vector<Interval>& b) {
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].hi < b[i].lo || b[i].hi < a[i].lo) return false;
  }
  return true;
}

}  // namespace

// ---------------------------------------------------------------------------
// BKsv

BKsvTable::BKsvTable(QISchema schema, std::vector<Entry> entries)
    : schema_(std::move(schema)), entries_(std::move(entries)) {
  if (entries_.empty()) throw Error("BKsv: no classes");
  std::int64_t covered = 0;
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    const auto& box = entries_[i].box;
    if (box.size() != schema_.arity()) throw Error("BKsv: class box arity mismatch");
    for (std::size_t a = 0; a < box.size(); ++a) {
      const auto& dom = schema_.attribute(a).domain;
      if (box[a].lo > box[a].hi || box[a].lo < dom.lo || box[a].hi > dom.hi) {
        throw Error("BKsv: class " + std::to_string(i) + " range for '" +
                    schema_.attribute(a).name + "' outside the schema");
      }
    }
    if (entries_[i].dist.size() != entries_[0].dist.size()) {
      throw Error("BKsv: class distributions of different lengths");
    }
    for (std::size_t j = 0; j < i; ++j) {
      if (BoxesOverlap(box, entries_[j].box)) {
        throw Error("BKsv: classes " + std::to_string(j) + " and " +
                    std::to_string(i) + " overlap");
      }
    }
    covered += BoxVolume(box);
  }
  std::vector<Interval> whole;
  for (const auto& a : schema_.attributes()) whole.push_back(a.domain);
  if (covered != BoxVolume(whole)) {
    throw Error("BKsv: classes do not cover every QI vector");
  }
}

BKsvTable BKsvTable::Uniform(const QISchema& schema, std::size_t domain_size) {
  std::vector<Interval> whole;
  for (const auto& a : schema.attributes()) whole.push_back(a.domain);
  return BKsvTable(schema, {Entry{whole, SensDist::Uniform(domain_size)}});
}

std::size_t BKsvTable::domain_size() const {
  return entries_.empty() ? 0 : entries_.front().dist.size();
}

int BKsvTable::ClassOf(std::span<const int> qi) const {
  schema_.CheckContains(qi);
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    const auto& box = entries_[i].box;
    bool inside = true;
    for (std::size_t a = 0; a < box.size() && inside; ++a) {
      inside = box[a].contains(qi[a]);
    }
    if (inside) return static_cast<int>(i);
  }
  throw Error("BKsv: QI vector not covered by any class");
}

const SensDist& BKsvTable::Lookup(std::span<const int> qi) const {
  return entries_[static_cast<std::size_t>(ClassOf(qi))].dist;
}

std::vector<std::vector<Interval>> ClassBoxes(const QISchema& schema,
                                              std::span<const int> buckets) {
  if (buckets.size() != schema.arity()) throw Error("bucket count arity mismatch");
  std::vector<std::vector<Interval>> per_attr;
  for (std::size_t a = 0; a < schema.arity(); ++a) {
    const auto& dom = schema.attribute(a).domain;
    const int values = dom.width() + 1;
    const int n = buckets[a];
    if (n < 1 || n > values) throw Error("invalid bucket count");
    std::vector<Interval> parts;
    int lo = dom.lo;
    for (int b = 0; b < n; ++b) {
      const int size = values / n + (b < values % n ? 1 : 0);
      parts.push_back({lo, lo + size - 1});
      lo += size;
    }
    per_attr.push_back(std::move(parts));
  }
  std::vector<std::vector<Interval>> boxes = {{}};
  for (const auto& parts : per_attr) {
    std::vector<std::vector<Interval>> next;
    for (const auto& prefix : boxes) {
      for (const auto& part : parts) {
        auto box = prefix;
        box.push_back(part);
        next.push_back(std::move(box));
      }
    }
    boxes = std::move(next);
  }
  return boxes;
}

std::vector<std::vector<Interval>> DefaultClassBoxes(const QISchema& schema) {
  std::vector<int> buckets;
  for (const auto& a : schema.attributes()) {
    const int values = a.domain.width() + 1;
    buckets.push_back(values <= 2 ? values : 3);
  }
  return ClassBoxes(schema, buckets);
}

// ---------------------------------------------------------------------------
// BKseq

BKseqTable::BKseqTable(int order, SensDist fallback,
                       std::vector<Conditional> conditionals)
    : order_(order), fallback_(std::move(fallback)),
      conditionals_(std::move(conditionals)) {
  if (order_ < 0) throw Error("BKseq: negative order");
  if (fallback_.empty()) throw Error("BKseq: missing fallback distribution");
  const std::size_t d = fallback_.size();
  // Key() packs contexts base (d+1) into 64 bits.
  double capacity = 1.0;
  for (int i = 0; i < order_; ++i) capacity *= static_cast<double>(d + 1);
  if (capacity > 1.8e19) throw Error("BKseq: order too large for the domain");
  std::sort(conditionals_.begin(), conditionals_.end(),
            [](const Conditional& a, const Conditional& b) {
              if (a.context.size() != b.context.size()) {
                return a.context.size() < b.context.size();
              }
              return a.context < b.context;
            });
  for (std::size_t i = 0; i < conditionals_.size(); ++i) {
    const auto& c = conditionals_[i];
    if (c.context.empty() || static_cast<int>(c.context.size()) > order_) {
      throw Error("BKseq: context " + ContextString(c.context, nullptr) +
                  " length outside 1.." + std::to_string(order_));
    }
    for (int v : c.context) {
      if (v < 0 || static_cast<std::size_t>(v) >= d) {
        throw Error("BKseq: context value out of range");
      }
    }
    if (c.dist.size() != d) {
      throw Error("BKseq: context " + ContextString(c.context, nullptr) +
                  " distribution has wrong length");
    }
    if (!(c.weight >= 0.0)) throw Error("BKseq: negative context weight");
    if (!index_.emplace(Key(c.context), i).second) {
      throw Error("BKseq: duplicate context " + ContextString(c.context, nullptr));
    }
  }
}

std::uint64_t BKseqTable::Key(std::span<const int> context) const {
  const std::uint64_t base = fallback_.size() + 1;
  std::uint64_t key = 0;
  for (int v : context) key = key * base + static_cast<std::uint64_t>(v) + 1;
  return key;
}

const SensDist* BKseqTable::Find(std::span<const int> context) const {
  if (context.empty() || static_cast<int>(context.size()) > order_) return nullptr;
  auto it = index_.find(Key(context));
  return it == index_.end() ? nullptr : &conditionals_[it->second].dist;
}

const SensDist& BKseqTable::Predict(std::span<const int> history) const {
  const std::size_t longest = std::min<std::size_t>(history.size(), order_);
  for (std::size_t len = longest; len >= 1; --len) {
    if (const SensDist* d = Find(history.last(len))) return *d;
  }
  return fallback_;
}

BKseqTable BKseqTable::Truncate(int order) const {
  if (order < 0) throw Error("BKseq: negative order");
  if (order >= order_) return *this;
  std::vector<Conditional> kept;
  std::set<Context> present;
  for (const auto& c : conditionals_) {
    if (static_cast<int>(c.context.size()) <= order) {
      kept.push_back(c);
      present.insert(c.context);
    }
  }
  // Conditionals are sorted by length, so for each missing suffix the first
  // longer length that has matches is the shortest one.
  std::map<Context, std::pair<std::vector<double>, double>> derived;
  for (int len = order; len >= 1; --len) {
    std::map<Context, std::size_t> best_length;
    for (const auto& c : conditionals_) {
      if (static_cast<int>(c.context.size()) <= len) continue;
      Context suffix(c.context.end() - len, c.context.end());
      if (present.contains(suffix)) continue;
      auto [it, inserted] = best_length.emplace(suffix, c.context.size());
      if (!inserted && c.context.size() != it->second) continue;
      auto& [mass, weight] = derived[suffix];
      if (mass.empty()) mass.assign(domain_size(), 0.0);
      for (std::size_t s = 0; s < mass.size(); ++s) {
        mass[s] += c.weight * c.dist[static_cast<int>(s)];
      }
      weight += c.weight;
    }
  }
  for (auto& [context, acc] : derived) {
    auto& [mass, weight] = acc;
    if (weight > 0.0) {
      kept.push_back({context, Normalize(mass), weight});
    }
  }
  return BKseqTable(order, fallback_, std::move(kept));
}

// ---------------------------------------------------------------------------
// Sequence counting

SequenceCounter::SequenceCounter(int max_length) : max_length_(max_length) {
  if (max_length_ < 0) throw Error("sequence counter: negative max length");
}

void SequenceCounter::Add(const View& view) {
  if (last_release_ != 0 && view.release != last_release_ + 1) {
    throw Error("sequence counter: expected release " +
                std::to_string(last_release_ + 1) + ", got " +
                std::to_string(view.release));
  }
  last_release_ = view.release;
  for (const auto& r : view.records) {
    Context& tail = tails_[r.respondent];
    tail.push_back(r.sensitive);
    if (max_length_ > 0 && static_cast<int>(tail.size()) > max_length_) {
      tail.erase(tail.begin());
    }
    for (std::size_t len = 1; len <= tail.size(); ++len) {
      ++counts_[Context(tail.end() - static_cast<std::ptrdiff_t>(len), tail.end())];
    }
  }
}

std::int64_t SequenceCounter::Count(std::span<const int> sequence) const {
  auto it = counts_.find(Context(sequence.begin(), sequence.end()));
  return it == counts_.end() ? 0 : it->second;
}

SequenceCounter SpmCount(std::span<const View> history, int max_length) {
  SequenceCounter counter(max_length);
  for (const auto& v : history) counter.Add(v);
  return counter;
}

double SpmConditional(const SequenceCounter& counter, std::span<const int> sequence,
                      int value) {
  const std::int64_t base = counter.Count(sequence);
  if (base == 0) return 0.0;
  Context extended(sequence.begin(), sequence.end());
  extended.push_back(value);
  return static_cast<double>(counter.Count(extended)) / static_cast<double>(base);
}

BKseqTable BuildBKseq(const SequenceCounter& counter, int order,
                      std::size_t domain_size) {
  if (order < 0) throw Error("BKseq: negative order");
  if (counter.max_length() != 0 && counter.max_length() < order + 1) {
    throw Error("BKseq: counter keeps sequences of length " +
                std::to_string(counter.max_length()) + ", order " +
                std::to_string(order) + " needs " + std::to_string(order + 1));
  }
  std::vector<double> unconditional(domain_size, 0.0);
  // Accumulate continuation counts keyed by their context.
  std::map<Context, std::vector<double>> continuations;
  for (const auto& [seq, count] : counter.counts()) {
    if (seq.back() < 0 || static_cast<std::size_t>(seq.back()) >= domain_size) {
      throw Error("BKseq: counted value outside the domain");
    }
    if (seq.size() == 1) unconditional[static_cast<std::size_t>(seq[0])] += count;
    if (seq.size() >= 2 && static_cast<int>(seq.size()) <= order + 1) {
      auto& cont = continuations[Context(seq.begin(), seq.end() - 1)];
      if (cont.empty()) cont.assign(domain_size, 0.0);
      cont[static_cast<std::size_t>(seq.back())] += count;
    }
  }
  std::vector<BKseqTable::Conditional> conditionals;
  for (auto& [context, cont] : continuations) {
    conditionals.push_back({context, Normalize(cont),
                            static_cast<double>(counter.Count(context))});
  }
  const bool any = std::any_of(unconditional.begin(), unconditional.end(),
                               [](double v) { return v > 0; });
  SensDist fallback = any ? Normalize(unconditional) : SensDist::Uniform(domain_size);
  return BKseqTable(order, std::move(fallback), std::move(conditionals));
}

BKseqTable BuildBKseqFromHistory(std::span<const View> history, int order,
                                 std::size_t domain_size) {
  if (history.empty()) throw Error("BKseq: cannot mine an empty history");
  return BuildBKseq(SpmCount(history, order + 1), order, domain_size);
}

RefreshResult IncrementalRefresh(const BKseqTable& table, SequenceCounter counter,
                                 const View& view) {
  counter.Add(view);
  BKseqTable rebuilt = BuildBKseq(counter, table.order(), table.domain_size());
  return {std::move(rebuilt), std::move(counter)};
}

BKseqSchedule BKseqSchedule::Fixed(BKseqTable table) {
  BKseqSchedule s;
  s.fixed_ = std::make_shared<const BKseqTable>(std::move(table));
  return s;
}

BKseqSchedule BKseqSchedule::Incremental(std::span<const View> history, int order,
                                         std::size_t domain_size) {
  BKseqSchedule s;
  SequenceCounter counter(order + 1);
  BKseqTable table(order, SensDist::Uniform(domain_size), {});
  for (const auto& v : history) {
    auto refreshed = IncrementalRefresh(table, std::move(counter), v);
    table = std::move(refreshed.table);
    counter = std::move(refreshed.counter);
    s.by_release_[v.release] = std::make_shared<const BKseqTable>(table);
  }
  return s;
}

const BKseqTable& BKseqSchedule::AfterRelease(int release) const {
  if (fixed_) return *fixed_;
  auto it = by_release_.upper_bound(release);
  if (it == by_release_.begin()) {
    throw Error("BKseq schedule: no knowledge available at release " +
                std::to_string(release));
  }
  return *std::prev(it)->second;
}

// ---------------------------------------------------------------------------
// JSON

BKseqTable ReadBKseqJson(std::istream& in, SensitiveDomain* domain_out) {
  const nlohmann::json j = ParseJson(in, "BKseq JSON");
  try {
    SensitiveDomain domain(j.at("domain").get<std::vector<std::string>>());
    const int order = j.at("order").get<int>();
    std::vector<BKseqTable::Conditional> conditionals;
    for (const auto& c : j.at("conditionals")) {
      Context context;
      for (const auto& label : c.at("context")) {
        context.push_back(domain.index(label.get<std::string>()));
      }
      const std::string where = "BKseq context " + ContextString(context, &domain);
      SensDist dist = DistFromJson(c.at("dist"), domain, where);
      const double weight = c.contains("weight") ? c.at("weight").get<double>() : 1.0;
      conditionals.push_back({std::move(context), std::move(dist), weight});
    }
    SensDist fallback = j.contains("fallback")
                            ? DistFromJson(j.at("fallback"), domain, "BKseq fallback")
                            : SensDist::Uniform(domain.size());
    BKseqTable table(order, std::move(fallback), std::move(conditionals));
    if (domain_out) *domain_out = std::move(domain);
    return table;
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("BKseq JSON: ") + e.what());
  }
}

void WriteBKseqJson(std::ostream& out, const BKseqTable& table,
                    const SensitiveDomain& domain) {
  if (domain.size() != table.domain_size()) throw Error("BKseq: domain size mismatch");
  ordered_json j;
  j["order"] = table.order();
  j["domain"] = domain.labels();
  j["conditionals"] = ordered_json::array();
  for (const auto& c : table.conditionals()) {
    ordered_json entry;
    std::vector<std::string> labels;
    for (int v : c.context) labels.push_back(domain.label(v));
    entry["context"] = labels;
    entry["dist"] = DistToJson(c.dist, domain);
    entry["weight"] = c.weight;
    j["conditionals"].push_back(std::move(entry));
  }
  j["fallback"] = DistToJson(table.fallback(), domain);
  out << j.dump(1) << '\n';
}

BKsvTable ReadBKsvJson(std::istream& in, const QISchema& schema,
                       SensitiveDomain* domain_out) {
  const nlohmann::json j = ParseJson(in, "BKsv JSON");
  try {
    SensitiveDomain domain(j.at("domain").get<std::vector<std::string>>());
    std::vector<BKsvTable::Entry> entries;
    int index = 0;
    for (const auto& c : j.at("classes")) {
      std::vector<Interval> box;
      for (const auto& a : schema.attributes()) {
        const auto& v = c.at(a.name);
        if (v.is_array()) {
          box.push_back({v.at(0).get<int>(), v.at(1).get<int>()});
        } else {
          box.push_back({v.get<int>(), v.get<int>()});
        }
      }
      entries.push_back({std::move(box),
                         DistFromJson(c.at("dist"), domain,
                                      "BKsv class " + std::to_string(index++))});
    }
    BKsvTable table(schema, std::move(entries));
    if (domain_out) *domain_out = std::move(domain);
    return table;
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("BKsv JSON: ") + e.what());
  }
}

void WriteBKsvJson(std::ostream& out, const BKsvTable& table,
                   const SensitiveDomain& domain) {
  ordered_json j;
  j["domain"] = domain.labels();
  j["classes"] = ordered_json::array();
  for (const auto& e : table.entries()) {
    ordered_json c;
    for (std::size_t a = 0; a < table.schema().arity(); ++a) {
      const auto& name = table.schema().attribute(a).name;
      if (e.box[a].lo == e.box[a].hi) {
        c[name] = e.box[a].lo;
      } else {
        c[name] = {e.box[a].lo, e.box[a].hi};
      }
    }
    c["dist"] = DistToJson(e.dist, domain);
    j["classes"].push_back(std::move(c));
  }
  out << j.dump(1) << '\n';
}

}  // namespace serialanon
