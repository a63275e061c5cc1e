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

// Privacy (adversary gain and confidence) and utility (semiperimeter, GCP,
// range-count query error) metrics over a release history.

#ifndef SERIALANON_QUALITY_H_
#define SERIALANON_QUALITY_H_

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "serialanon/adversary.h"
#include "serialanon/io.h"
#include "serialanon/model.h"

namespace serialanon {

using PosteriorMap = std::unordered_map<RespondentId, SensDist, RespondentIdHash>;

enum class HomogeneousPolicy {
  kExclude,      // tuples whose value fills their group are left out of N
  kCountAsZero,  // they contribute 0 gain
};

struct GainResult {
  double gain = 0.0;  // clamped at 0
  double raw = 0.0;   // unclamped mean
  int counted = 0;    // tuples in the average
  int excluded = 0;   // homogeneous tuples skipped
};

// `truth` maps the tuple ids used in `release` to respondents.
GainResult AdversaryGain(const GeneralizedView& release, const PosteriorMap& posteriors,
                         const ReleaseTruth& truth,
                         HomogeneousPolicy policy = HomogeneousPolicy::kExclude);

double AdversaryConfidence(const GeneralizedView& release, const PosteriorMap& posteriors,
                           const ReleaseTruth& truth);

// Mean NCP over released tuples divided by the QI arity.
double Gcp(const GeneralizedView& release, const QISchema& schema);
// Tuple-weighted mean semiperimeter.
double AverageSemiperimeter(const GeneralizedView& release, const QISchema& schema);

struct QueryErrorStats {
  double median_relative = 0.0;
  double median_absolute = 0.0;
};

struct QueryOptions {
  std::vector<double> selectivities{0.01, 0.05, 0.10};
  int queries = 10000;
  std::uint64_t seed = 7;
};

// Random axis-aligned COUNT queries whose box covers the target fraction of
// the QI grid. Estimates assume each tuple is spread uniformly over its
// group's box.
std::map<double, QueryErrorStats> QueryError(const GeneralizedView& release,
                                             const View& original, const QISchema& schema,
                                             const QueryOptions& options = {});

struct ReleaseMetrics {
  int release = 0;
  std::optional<double> gain;
  std::optional<double> raw_gain;
  std::optional<double> confidence;
  double avg_semiperimeter = 0.0;
  double gcp = 0.0;
  int released = 0;
  int suppressed = 0;
};

struct MetricsReport {
  std::vector<ReleaseMetrics> per_release;
  // Medians over all releases' queries, keyed by selectivity.
  std::map<double, QueryErrorStats> query_error;
};

struct EvaluateOptions {
  HomogeneousPolicy homogeneous = HomogeneousPolicy::kExclude;
  QueryOptions queries;
  bool run_queries = true;
};

// `released` uses published tuple numbering matching `truth`; `originals`
// supplies true counts (by release index). `posteriors` may be null for a
// utility-only report.
MetricsReport Evaluate(std::span<const GeneralizedView> released,
                       std::span<const View> originals, const TruthTable& truth,
                       const PosteriorTable* posteriors, const QISchema& schema,
                       const EvaluateOptions& options = {});

void WriteMetricsJson(std::ostream& out, const MetricsReport& report,
                      const std::map<std::string, std::string>& provenance = {});
// release,method,gain,confidence
void WritePlotCsv(std::ostream& out, const MetricsReport& report, const std::string& method,
                  bool header = true);

}  // namespace serialanon

#endif  // SERIALANON_QUALITY_H_
