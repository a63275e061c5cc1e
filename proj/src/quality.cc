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

#include "serialanon/quality.h"

#include <algorithm>
#include <cmath>
#include <ostream>

#include "json_util.h"
#include "serialanon/random.h"

namespace serialanon {
namespace {

const SensDist& PosteriorFor(const PosteriorMap& posteriors, const ReleaseTruth& truth,
                             int release, int tuple_id) {
  auto t = truth.find(tuple_id);
  if (t == truth.end()) {
    throw Error("release " + std::to_string(release) + ": no truth for tuple " +
                std::to_string(tuple_id));
  }
  auto p = posteriors.find(t->second);
  if (p == posteriors.end()) {
    throw Error("release " + std::to_string(release) + ": no posterior for respondent " +
                std::to_string(t->second.value));
  }
  return p->second;
}

double Median(std::vector<double> v) {
  if (v.empty()) return 0.0;
  const std::size_t mid = v.size() / 2;
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid), v.end());
  const double hi = v[mid];
  if (v.size() % 2 == 1) return hi;
  const double lo = *std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid));
  return 0.5 * (lo + hi);
}

// Dense d-dimensional array over the QI grid with an inclusive prefix-sum
// table for O(2^d) box sums.
class GridSums {
 public:
  explicit GridSums(const QISchema& schema) : schema_(schema) {
    std::size_t n = 1;
    for (const auto& a : schema.attributes()) {
      extent_.push_back(a.domain.width() + 1);
      n *= static_cast<std::size_t>(a.domain.width() + 2);
    }
    sums_.assign(n, 0.0);
  }

  // Adds `value` to every cell of the box, spread evenly.
  void AddBox(std::span<const Interval> box, double value) {
    const std::size_t d = extent_.size();
    double cells = 1.0;
    std::vector<int> lo(d), hi(d);
    for (std::size_t a = 0; a < d; ++a) {
      lo[a] = box[a].lo - schema_.attribute(a).domain.lo;
      hi[a] = box[a].hi - schema_.attribute(a).domain.lo;
      cells *= hi[a] - lo[a] + 1;
    }
    const double share = value / cells;
    std::vector<int> cur = lo;
    for (;;) {
      sums_[Offset(cur, 1)] += share;
      std::size_t a = d;
      for (; a > 0; --a) {
        if (++cur[a - 1] <= hi[a - 1]) break;
        cur[a - 1] = lo[a - 1];
      }
      if (a == 0) break;
    }
  }

  void AddPoint(std::span<const int> qi, double value) {
    std::vector<int> cur(qi.size());
    for (std::size_t a = 0; a < qi.size(); ++a) cur[a] = qi[a] - schema_.attribute(a).domain.lo;
    sums_[Offset(cur, 1)] += value;
  }

  void Finalize() {
    const std::size_t d = extent_.size();
    std::size_t stride = 1;
    for (std::size_t a = d; a-- > 0;) {
      const std::size_t len = static_cast<std::size_t>(extent_[a] + 1);
      for (std::size_t i = 0; i < sums_.size(); ++i) {
        if ((i / stride) % len != 0) sums_[i] += sums_[i - stride];
      }
      stride *= len;
    }
  }

  // Sum over the inclusive box given in domain coordinates.
  double BoxSum(std::span<const Interval> box) const {
    const std::size_t d = extent_.size();
    double total = 0.0;
    std::vector<int> corner(d);
    for (std::uint32_t mask = 0; mask < (1u << d); ++mask) {
      int sign = 1;
      for (std::size_t a = 0; a < d; ++a) {
        const int base = schema_.attribute(a).domain.lo;
        if (mask & (1u << a)) {
          corner[a] = box[a].lo - base;  // prefix index lo-1, shifted by 1
          sign = -sign;
        } else {
          corner[a] = box[a].hi - base + 1;
        }
      }
      total += sign * sums_[Offset(corner, 0)];
    }
    return total;
  }

 private:
  std::size_t Offset(std::span<const int> cell, int shift) const {
    std::size_t off = 0;
    for (std::size_t a = 0; a < extent_.size(); ++a) {
      off = off * static_cast<std::size_t>(extent_[a] + 1) + static_cast<std::size_t>(cell[a] + shift);
    }
    return off;
  }

  const QISchema& schema_;
  std::vector<int> extent_;
  std::vector<double> sums_;
};

void CheckSelectivity(double f) {
  if (!(f > 0.0 && f <= 1.0)) throw Error("query selectivity must be in (0,1]");
}

}  // namespace

GainResult AdversaryGain(const GeneralizedView& release, const PosteriorMap& posteriors,
                         const ReleaseTruth& truth, HomogeneousPolicy policy) {
  GainResult r;
  double sum = 0.0;
  for (const auto& g : release.groups) {
    std::unordered_map<int, int> multiplicity;
    for (const auto& t : g.tuples) ++multiplicity[t.sensitive];
    const double size = static_cast<double>(g.size());
    for (const auto& t : g.tuples) {
      const int m = multiplicity[t.sensitive];
      if (m == static_cast<int>(g.size())) {
        if (policy == HomogeneousPolicy::kExclude) {
          ++r.excluded;
        } else {
          ++r.counted;
        }
        continue;
      }
      const double base = m / size;
      const double p = PosteriorFor(posteriors, truth, release.release, t.tuple_id)[t.sensitive];
      sum += (p - base) / (1.0 - base);
      ++r.counted;
    }
  }
  if (r.counted > 0) r.raw = sum / r.counted;
  r.gain = std::max(0.0, r.raw);
  return r;
}

double AdversaryConfidence(const GeneralizedView& release, const PosteriorMap& posteriors,
                           const ReleaseTruth& truth) {
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& g : release.groups) {
    for (const auto& t : g.tuples) {
      sum += PosteriorFor(posteriors, truth, release.release, t.tuple_id)[t.sensitive];
      ++n;
    }
  }
  return n == 0 ? 0.0 : sum / static_cast<double>(n);
}

double Gcp(const GeneralizedView& release, const QISchema& schema) {
  const std::size_t n = release.released_tuples();
  if (n == 0 || schema.arity() == 0) return 0.0;
  double total = 0.0;
  for (const auto& g : release.groups) total += Semiperimeter(g, schema) * g.size();
  return total / (static_cast<double>(schema.arity()) * n);
}

double AverageSemiperimeter(const GeneralizedView& release, const QISchema& schema) {
  const std::size_t n = release.released_tuples();
  if (n == 0) return 0.0;
  double total = 0.0;
  for (const auto& g : release.groups) total += Semiperimeter(g, schema) * g.size();
  return total / static_cast<double>(n);
}

namespace {

struct QuerySample {
  double relative;
  double absolute;
};

std::map<double, std::vector<QuerySample>> SampleQueries(const GeneralizedView& release,
                                                         const View& original,
                                                         const QISchema& schema,
                                                         const QueryOptions& options) {
  if (options.queries < 1) throw Error("query count must be >= 1");
  GridSums truth(schema);
  for (const auto& r : original.records) truth.AddPoint(r.qi, 1.0);
  truth.Finalize();
  GridSums estimate(schema);
  for (const auto& g : release.groups) estimate.AddBox(g.ranges, static_cast<double>(g.size()));
  estimate.Finalize();

  const std::size_t d = schema.arity();
  std::map<double, std::vector<QuerySample>> out;
  for (std::size_t si = 0; si < options.selectivities.size(); ++si) {
    const double f = options.selectivities[si];
    CheckSelectivity(f);
    const double side = std::pow(f, 1.0 / static_cast<double>(d));
    std::vector<int> length(d);
    for (std::size_t a = 0; a < d; ++a) {
      const int w = schema.attribute(a).domain.width() + 1;
      length[a] = std::clamp(static_cast<int>(std::lround(side * w)), 1, w);
    }
    auto& samples = out[f];
    samples.reserve(static_cast<std::size_t>(options.queries));
    std::vector<Interval> box(d);
    const std::uint64_t stream_base =
        (static_cast<std::uint64_t>(release.release) << 40) ^ (static_cast<std::uint64_t>(si) << 32);
    for (int q = 0; q < options.queries; ++q) {
      Rng rng(SubstreamSeed(options.seed, stream_base + static_cast<std::uint64_t>(q)));
      for (std::size_t a = 0; a < d; ++a) {
        const Interval dom = schema.attribute(a).domain;
        const int lo = UniformInt(rng, dom.lo, dom.hi - length[a] + 1);
        box[a] = {lo, lo + length[a] - 1};
      }
      const double t = truth.BoxSum(box);
      const double e = estimate.BoxSum(box);
      const double err = std::abs(e - t);
      samples.push_back({err / std::max(t, 1.0), err});
    }
  }
  return out;
}

}  // namespace

std::map<double, QueryErrorStats> QueryError(const GeneralizedView& release,
                                             const View& original, const QISchema& schema,
                                             const QueryOptions& options) {
  std::map<double, QueryErrorStats> out;
  for (auto& [f, samples] : SampleQueries(release, original, schema, options)) {
    std::vector<double> rel, abs;
    for (const auto& s : samples) {
      rel.push_back(s.relative);
      abs.push_back(s.absolute);
    }
    out[f] = {Median(std::move(rel)), Median(std::move(abs))};
  }
  return out;
}

MetricsReport Evaluate(std::span<const GeneralizedView> released,
                       std::span<const View> originals, const TruthTable& truth,
                       const PosteriorTable* posteriors, const QISchema& schema,
                       const EvaluateOptions& options) {
  std::map<int, const View*> by_release;
  for (const auto& v : originals) by_release[v.release] = &v;
  MetricsReport report;
  std::map<double, std::vector<double>> rel, abs;
  for (const auto& view : released) {
    ReleaseMetrics m;
    m.release = view.release;
    m.avg_semiperimeter = AverageSemiperimeter(view, schema);
    m.gcp = Gcp(view, schema);
    m.released = static_cast<int>(view.released_tuples());
    m.suppressed = view.suppressed;
    auto orig = by_release.find(view.release);
    if (orig != by_release.end()) {
      m.suppressed = static_cast<int>(orig->second->records.size()) - m.released;
    }
    if (posteriors != nullptr) {
      auto t = truth.find(view.release);
      auto p = posteriors->find(view.release);
      if (t == truth.end()) throw Error("no truth for release " + std::to_string(view.release));
      if (p == posteriors->end()) {
        throw Error("no posteriors for release " + std::to_string(view.release));
      }
      const GainResult g = AdversaryGain(view, p->second, t->second, options.homogeneous);
      m.gain = g.gain;
      m.raw_gain = g.raw;
      m.confidence = AdversaryConfidence(view, p->second, t->second);
    }
    if (options.run_queries) {
      if (orig == by_release.end()) {
        throw Error("no original view for release " + std::to_string(view.release));
      }
      for (auto& [f, samples] : SampleQueries(view, *orig->second, schema, options.queries)) {
        for (const auto& s : samples) {
          rel[f].push_back(s.relative);
          abs[f].push_back(s.absolute);
        }
      }
    }
    report.per_release.push_back(m);
  }
  for (auto& [f, v] : rel) {
    report.query_error[f] = {Median(std::move(v)), Median(std::move(abs[f]))};
  }
  return report;
}

void WriteMetricsJson(std::ostream& out, const MetricsReport& report,
                      const std::map<std::string, std::string>& provenance) {
  using internal::ordered_json;
  ordered_json j;
  j["provenance"] = ordered_json::object();
  for (const auto& [k, v] : provenance) j["provenance"][k] = v;
  j["per_release"] = ordered_json::array();
  for (const auto& m : report.per_release) {
    ordered_json r;
    r["release"] = m.release;
    r["gain"] = m.gain ? ordered_json(*m.gain) : ordered_json(nullptr);
    r["raw_gain"] = m.raw_gain ? ordered_json(*m.raw_gain) : ordered_json(nullptr);
    r["confidence"] = m.confidence ? ordered_json(*m.confidence) : ordered_json(nullptr);
    r["avg_semiperimeter"] = m.avg_semiperimeter;
    r["gcp"] = m.gcp;
    r["released"] = m.released;
    r["suppressed"] = m.suppressed;
    j["per_release"].push_back(std::move(r));
  }
  j["query_error"] = ordered_json::array();
  for (const auto& [f, s] : report.query_error) {
    j["query_error"].push_back({{"selectivity", f},
                                {"median_relative", s.median_relative},
                                {"median_absolute", s.median_absolute}});
  }
  out << j.dump(1) << '\n';
}

void WritePlotCsv(std::ostream& out, const MetricsReport& report, const std::string& method,
                  bool header) {
  if (header) out << "release,method,gain,confidence\n";
  char buf[64];
  for (const auto& m : report.per_release) {
    out << m.release << ',' << method << ',';
    if (m.gain) {
      std::snprintf(buf, sizeof buf, "%.10g", *m.gain);
      out << buf;
    }
    out << ',';
    if (m.confidence) {
      std::snprintf(buf, sizeof buf, "%.10g", *m.confidence);
      out << buf;
    }
    out << '\n';
  }
}

}  // namespace serialanon
