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

// The adversary's inference loop over a release history: posterior
// knowledge per QI-group from possible configurations, then revision of each
// respondent's prior for the next release through sequential knowledge.

#ifndef SERIALANON_ADVERSARY_H_
#define SERIALANON_ADVERSARY_H_

#include <cstdint>
#include <iosfwd>
#include <map>
#include <span>
#include <unordered_map>
#include <vector>

#include "serialanon/io.h"
#include "serialanon/knowledge.h"
#include "serialanon/model.h"

namespace serialanon {

using KnowledgeMap = std::unordered_map<RespondentId, SensDist, RespondentIdHash>;

// Priors for every registered respondent from their QI class.
KnowledgeMap PriorsFromBKsv(const BKsvTable& bksv, const RespondentRegistry& registry);

// Confidence of one possible configuration: Σ_t knowledge[respondent of t][t.s].
// assignment[i] indexes group.respondents for the i-th tuple.
double ConfigurationConfidence(const QIGroup& group, std::span<const int> assignment,
                               const KnowledgeMap& knowledge);

enum class PosteriorMethod {
  kAuto,        // enumerate up to exact_limit tuples, sample above
  kEnumerate,   // all |Q|! configurations
  kSample,      // uniform random configurations weighted by confidence
  kClosedForm,  // exact marginal of the additive confidence, O(|Q|^2)
};

struct PosteriorOptions {
  PosteriorMethod method = PosteriorMethod::kAuto;
  int exact_limit = 8;
  int sample_budget = 100000;
  std::uint64_t seed = 0x5eed;
};

struct GroupPosterior {
  // Parallel to group.respondents.
  std::vector<SensDist> posteriors;
  // True when every configuration had zero confidence; posteriors then are
  // the group's value frequencies.
  bool degenerate = false;
};

GroupPosterior ComputePosterior(const QIGroup& group, const KnowledgeMap& knowledge,
                                std::size_t domain_size,
                                const PosteriorOptions& options = {});

struct RespondentKnowledge {
  RespondentId id;
  std::map<int, SensDist> per_release;  // posterior at each release seen
  SensDist current;                     // prior for the next appearance
};

// Σ_λ p(s | λ) P(λ) with P(λ) the product of the per-release posteriors.
// Only the last `order` positions matter, so the sum runs over their
// supports (mass > 1e-12).
SensDist ReviseKnowledge(const RespondentKnowledge& knowledge, const BKseqTable& bkseq);

struct RespondentSnapshot {
  RespondentId id;
  SensDist posterior;
  SensDist revised;
};

struct ReleaseSnapshot {
  int release = 0;
  std::vector<RespondentSnapshot> respondents;  // sorted by id
  int degenerate_groups = 0;
};

// Incremental form of the attack loop, shared with the JS-reduce defense
// (which simulates the adversary to anticipate its knowledge).
class KnowledgeTracker {
 public:
  KnowledgeTracker(KnowledgeMap priors, BKseqSchedule bkseq, std::size_t domain_size,
                   PosteriorOptions options = {});

  // Revised knowledge if the respondent has been observed, else the prior.
  const SensDist& Current(RespondentId id) const;
  bool Seen(RespondentId id) const { return state_.contains(id); }

  // Posterior per group, then revision for every respondent released.
  // Group respondent sets must be populated.
  ReleaseSnapshot Observe(const GeneralizedView& release);

  const std::unordered_map<RespondentId, RespondentKnowledge, RespondentIdHash>&
  state() const {
    return state_;
  }

 private:
  KnowledgeMap priors_;
  BKseqSchedule bkseq_;
  std::size_t domain_size_;
  PosteriorOptions options_;
  std::unordered_map<RespondentId, RespondentKnowledge, RespondentIdHash> state_;
};

struct AttackResult {
  std::vector<ReleaseSnapshot> releases;
  std::unordered_map<RespondentId, RespondentKnowledge, RespondentIdHash> state;
};

AttackResult AttackHistory(std::span<const GeneralizedView> released,
                           const KnowledgeMap& priors, const BKseqSchedule& bkseq,
                           std::size_t domain_size,
                           const PosteriorOptions& options = {});

// {"releases": [{release, respondents: [{id, posterior, revised}]}]}
void WriteAttackJson(std::ostream& out, const AttackResult& result,
                     const SensitiveDomain& domain,
                     const std::map<std::string, std::string>& provenance = {});
// release -> respondent -> posterior
using PosteriorTable =
    std::map<int, std::unordered_map<RespondentId, SensDist, RespondentIdHash>>;
PosteriorTable ReadAttackPosteriors(std::istream& in, const SensitiveDomain& domain);
PosteriorTable PosteriorsOf(const AttackResult& result);

}  // namespace serialanon

#endif  // SERIALANON_ADVERSARY_H_
