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

#include "serialanon/anonymizer.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace serialanon {
namespace {

// Slack for threshold comparisons so that a constraint meant to hold with
// equality is not lost to rounding.
constexpr double kThresholdSlack = 1e-12;

double EntropyOfMass(std::span<const double> mass, double total) {
  double h = 0.0;
  for (double m : mass) {
    if (m <= 0.0) continue;
    const double p = m / total;
    h -= p * std::log2(p);
  }
  return h;
}

// Running statistics of a candidate group so each greedy step is O(|D|).
class GroupStats {
 public:
  explicit GroupStats(std::size_t domain_size)
      : counts_(domain_size, 0), mixture_(domain_size, 0.0) {}

  void Add(int sensitive, const SensDist* knowledge, double knowledge_entropy) {
    if (counts_[static_cast<std::size_t>(sensitive)]++ == 0) ++distinct_;
    ++size_;
    if (knowledge != nullptr) {
      const auto p = knowledge->probabilities();
      for (std::size_t s = 0; s < mixture_.size(); ++s) mixture_[s] += p[s];
      entropy_sum_ += knowledge_entropy;
    }
  }

  int size() const { return size_; }
  int distinct() const { return distinct_; }

  double TCloseness(const SensDist& global) const {
    double tv = 0.0;
    for (std::size_t s = 0; s < counts_.size(); ++s) {
      tv += std::abs(static_cast<double>(counts_[s]) / size_ - global[static_cast<int>(s)]);
    }
    return 0.5 * tv;
  }

  double Js(bool normalized) const {
    if (size_ < 2) return 0.0;
    const double raw =
        std::max(0.0, EntropyOfMass(mixture_, size_) - entropy_sum_ / size_);
    return normalized ? raw / std::log2(static_cast<double>(size_)) : raw;
  }

 private:
  std::vector<int> counts_;
  std::vector<double> mixture_;
  double entropy_sum_ = 0.0;
  int size_ = 0;
  int distinct_ = 0;
};

bool Satisfied(const GroupStats& stats, const PrivacyParams& params,
               const SensDist& global) {
  if (stats.size() < params.k) return false;
  switch (params.method) {
    case Method::kLDiversity:
      return stats.distinct() >= params.l;
    case Method::kTCloseness:
      return stats.TCloseness(global) <= params.t + kThresholdSlack;
    case Method::kJsReduce:
      return stats.TCloseness(global) <= params.t + kThresholdSlack &&
             stats.Js(params.normalize_js) <= params.j + kThresholdSlack;
  }
  return false;
}

struct Candidate {
  std::uint64_t hilbert;
  const Record* record;
  const SensDist* knowledge;
  double entropy;
};

QIGroup MakeGroup(int id, std::span<const Candidate> members) {
  QIGroup g;
  g.group_id = id;
  const std::size_t arity = members.front().record->qi.size();
  g.ranges.resize(arity, Interval{std::numeric_limits<int>::max(),
                                  std::numeric_limits<int>::min()});
  for (const auto& c : members) {
    const Record& r = *c.record;
    for (std::size_t a = 0; a < arity; ++a) {
      g.ranges[a].lo = std::min(g.ranges[a].lo, r.qi[a]);
      g.ranges[a].hi = std::max(g.ranges[a].hi, r.qi[a]);
    }
    g.tuples.push_back({r.tuple_id, r.sensitive});
    g.respondents.push_back(r.respondent);
  }
  std::sort(g.respondents.begin(), g.respondents.end());
  return g;
}

}  // namespace

std::string_view MethodName(Method method) {
  switch (method) {
    case Method::kJsReduce:
      return "jsreduce";
    case Method::kLDiversity:
      return "ldiv";
    case Method::kTCloseness:
      return "tclos";
  }
  return "unknown";
}

std::optional<Method> ParseMethod(std::string_view name) {
  if (name == "jsreduce") return Method::kJsReduce;
  if (name == "ldiv") return Method::kLDiversity;
  if (name == "tclos") return Method::kTCloseness;
  return std::nullopt;
}

PrivacyParams PrivacyParams::Defaults(Method method) {
  PrivacyParams p;
  p.method = method;
  switch (method) {
    case Method::kJsReduce:
      p.t = 0.5;
      p.j = 0.6;
      break;
    case Method::kLDiversity:
      p.l = 2;
      break;
    case Method::kTCloseness:
      p.t = 0.8;
      break;
  }
  return p;
}

void PrivacyParams::Validate() const {
  if (k < 1) throw Error("privacy parameters: k must be >= 1");
  if (l < 1) throw Error("privacy parameters: l must be >= 1");
  if (!(t >= 0.0 && t <= 1.0)) throw Error("privacy parameters: t must be in [0,1]");
  if (!(j >= 0.0)) throw Error("privacy parameters: j must be >= 0");
  if (normalize_js && j > 1.0 && !std::isinf(j)) {
    throw Error("privacy parameters: normalized j must be in [0,1]");
  }
}

double Entropy(std::span<const double> p) {
  double h = 0.0;
  for (double v : p) {
    if (v > 0.0) h -= v * std::log2(v);
  }
  return h;
}

double JsDivergence(std::span<const SensDist> dists, std::span<const double> weights,
                    bool normalized) {
  if (dists.size() < 2) return 0.0;
  const std::size_t d = dists.front().size();
  std::vector<double> w(weights.begin(), weights.end());
  if (w.empty()) w.assign(dists.size(), 1.0 / static_cast<double>(dists.size()));
  if (w.size() != dists.size()) throw Error("JS divergence: weight count mismatch");
  std::vector<double> mixture(d, 0.0);
  double weighted_entropy = 0.0;
  for (std::size_t i = 0; i < dists.size(); ++i) {
    if (dists[i].size() != d) throw Error("JS divergence: distribution length mismatch");
    const auto p = dists[i].probabilities();
    for (std::size_t s = 0; s < d; ++s) mixture[s] += w[i] * p[s];
    weighted_entropy += w[i] * Entropy(p);
  }
  const double js = std::max(0.0, Entropy(mixture) - weighted_entropy);
  return normalized ? js / std::log2(static_cast<double>(dists.size())) : js;
}

double TCloseness(const QIGroup& group, const SensDist& global) {
  if (group.tuples.empty()) throw Error("t-closeness of an empty group");
  std::vector<double> freq(global.size(), 0.0);
  for (const auto& t : group.tuples) freq[static_cast<std::size_t>(t.sensitive)] += 1.0;
  double tv = 0.0;
  for (std::size_t s = 0; s < freq.size(); ++s) {
    tv += std::abs(freq[s] / static_cast<double>(group.tuples.size()) -
                   global[static_cast<int>(s)]);
  }
  return 0.5 * tv;
}

SensDist ValueDistribution(const View& view, std::size_t domain_size) {
  std::vector<double> counts(domain_size, 0.0);
  for (const auto& r : view.records) counts[static_cast<std::size_t>(r.sensitive)] += 1.0;
  if (view.records.empty()) return SensDist::Uniform(domain_size);
  return Normalize(counts);
}

bool SatisfiesConstraints(const QIGroup& group, const KnowledgeMap& knowledge,
                          const PrivacyParams& params, const SensDist& global) {
  GroupStats stats(global.size());
  const bool needs_knowledge = params.method == Method::kJsReduce;
  for (std::size_t i = 0; i < group.tuples.size(); ++i) {
    const SensDist* k = nullptr;
    double h = 0.0;
    if (needs_knowledge) {
      auto it = knowledge.find(group.respondents.at(i));
      if (it == knowledge.end()) throw Error("no knowledge for group respondent");
      k = &it->second;
      h = Entropy(k->probabilities());
    }
    stats.Add(group.tuples[i].sensitive, k, h);
  }
  return Satisfied(stats, params, global);
}

GeneralizedView Generalize(const View& view, const KnowledgeMap& knowledge,
                           const PrivacyParams& params, const SensDist& global,
                           const QISchema& schema) {
  params.Validate();
  const bool needs_knowledge = params.method == Method::kJsReduce;
  std::vector<Candidate> order;
  order.reserve(view.records.size());
  for (const auto& r : view.records) {
    Candidate c{HilbertIndex(r.qi, schema, params.hilbert_bits), &r, nullptr, 0.0};
    if (needs_knowledge) {
      auto it = knowledge.find(r.respondent);
      if (it == knowledge.end()) {
        throw Error("release " + std::to_string(view.release) +
                    ": no knowledge for respondent " +
                    std::to_string(r.respondent.value));
      }
      c.knowledge = &it->second;
      c.entropy = Entropy(it->second.probabilities());
    }
    order.push_back(c);
  }
  std::sort(order.begin(), order.end(), [](const Candidate& a, const Candidate& b) {
    if (a.hilbert != b.hilbert) return a.hilbert < b.hilbert;
    return a.record->tuple_id < b.record->tuple_id;
  });

  GeneralizedView out;
  out.release = view.release;
  std::vector<std::pair<std::size_t, std::size_t>> closed;  // [begin, end)
  std::size_t begin = 0;
  GroupStats stats(global.size());
  for (std::size_t i = 0; i < order.size(); ++i) {
    stats.Add(order[i].record->sensitive, order[i].knowledge, order[i].entropy);
    if (Satisfied(stats, params, global)) {
      closed.emplace_back(begin, i + 1);
      begin = i + 1;
      stats = GroupStats(global.size());
    }
  }
  if (begin < order.size() && params.merge_remainder && !closed.empty()) {
    GroupStats merged(global.size());
    for (std::size_t i = closed.back().first; i < order.size(); ++i) {
      merged.Add(order[i].record->sensitive, order[i].knowledge, order[i].entropy);
    }
    if (Satisfied(merged, params, global)) {
      closed.back().second = order.size();
      begin = order.size();
    }
  }
  out.suppressed = static_cast<int>(order.size() - begin);
  int id = 0;
  for (const auto& [b, e] : closed) {
    out.groups.push_back(
        MakeGroup(++id, std::span<const Candidate>(order.data() + b, e - b)));
  }
  return out;
}

std::vector<GeneralizedView> JsReduceHistory(std::span<const View> history,
                                             const KnowledgeMap& priors,
                                             const BKseqSchedule& bkseq,
                                             const PrivacyParams& params,
                                             const QISchema& schema,
                                             std::size_t domain_size,
                                             const PosteriorOptions& posterior) {
  KnowledgeTracker tracker(priors, bkseq, domain_size, posterior);
  std::vector<GeneralizedView> out;
  out.reserve(history.size());
  for (const auto& view : history) {
    KnowledgeMap current;
    current.reserve(view.records.size());
    for (const auto& r : view.records) current.emplace(r.respondent, tracker.Current(r.respondent));
    GeneralizedView g =
        Generalize(view, current, params, ValueDistribution(view, domain_size), schema);
    tracker.Observe(g);
    out.push_back(std::move(g));
  }
  return out;
}

std::vector<GeneralizedView> BaselineHistory(std::span<const View> history,
                                             const PrivacyParams& params,
                                             const QISchema& schema,
                                             std::size_t domain_size) {
  if (params.method == Method::kJsReduce) {
    throw Error("baseline anonymization needs method ldiv or tclos");
  }
  std::vector<GeneralizedView> out;
  out.reserve(history.size());
  const KnowledgeMap none;
  for (const auto& view : history) {
    out.push_back(
        Generalize(view, none, params, ValueDistribution(view, domain_size), schema));
  }
  return out;
}

}  // namespace serialanon
