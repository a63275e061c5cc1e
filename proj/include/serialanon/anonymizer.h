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

// Defender side: divergence and closeness measures, the Hilbert-order greedy
// partitioner, the JS-reduce release loop and the l-diversity / t-closeness
// baselines that share the same partitioner.

#ifndef SERIALANON_ANONYMIZER_H_
#define SERIALANON_ANONYMIZER_H_

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "serialanon/adversary.h"
#include "serialanon/hilbert.h"
#include "serialanon/knowledge.h"
#include "serialanon/model.h"

namespace serialanon {

enum class Method { kJsReduce, kLDiversity, kTCloseness };

std::string_view MethodName(Method method);
std::optional<Method> ParseMethod(std::string_view name);

struct PrivacyParams {
  Method method = Method::kJsReduce;
  int k = 2;
  double t = 0.5;
  double j = 0.6;
  int l = 2;
  // Compare j against JS / log2(|group|) rather than raw bits.
  bool normalize_js = true;
  // Fold an unclosable remainder into the last group when the merged group
  // still satisfies every constraint; otherwise it is suppressed.
  bool merge_remainder = true;
  int hilbert_bits = kDefaultHilbertBits;

  // Default parameters per method: ldiv l=2, tclos t=0.8, jsreduce t=0.5 j=0.6.
  static PrivacyParams Defaults(Method method);
  // Throws Error on out-of-range values.
  void Validate() const;
};

// Shannon entropy in bits, 0 log 0 = 0.
double Entropy(std::span<const double> p);

// H(Σ π_i p_i) - Σ π_i H(p_i). Equal weights when `weights` is empty. With
// `normalized` the result is divided by log2(|dists|), landing in [0,1].
double JsDivergence(std::span<const SensDist> dists, std::span<const double> weights = {},
                    bool normalized = false);

// Total variation between the group's value frequencies and `global`.
double TCloseness(const QIGroup& group, const SensDist& global);

SensDist ValueDistribution(const View& view, std::size_t domain_size);

// One release: Hilbert order (ties by tuple id), greedy accumulation, close
// a group the first time every active constraint holds, suppress the rest.
// `knowledge` is only consulted by JS-reduce.
GeneralizedView Generalize(const View& view, const KnowledgeMap& knowledge,
                           const PrivacyParams& params, const SensDist& global,
                           const QISchema& schema);

// Constraint check used both inside Generalize and for post-hoc audits.
bool SatisfiesConstraints(const QIGroup& group, const KnowledgeMap& knowledge,
                          const PrivacyParams& params, const SensDist& global);

// JS-reduce over a history: revised knowledge starts at the BKsv priors and
// is carried forward by simulating the adversary on each generalized view.
std::vector<GeneralizedView> JsReduceHistory(std::span<const View> history,
                                             const KnowledgeMap& priors,
                                             const BKseqSchedule& bkseq,
                                             const PrivacyParams& params,
                                             const QISchema& schema,
                                             std::size_t domain_size,
                                             const PosteriorOptions& posterior = {});

// Knowledge-free baselines (l-diversity, t-closeness), one release at a time.
std::vector<GeneralizedView> BaselineHistory(std::span<const View> history,
                                             const PrivacyParams& params,
                                             const QISchema& schema,
                                             std::size_t domain_size);

}  // namespace serialanon

#endif  // SERIALANON_ANONYMIZER_H_
