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

#include "serialanon/adversary.h"

#include <algorithm>
#include <numeric>
#include <ostream>
#include <string>

#include "json_util.h"
#include "serialanon/random.h"

namespace serialanon {
namespace {

constexpr double kSupportFloor = 1e-12;

std::string GroupName(int release, const QIGroup& group) {
  return "release " + std::to_string(release) + " group " +
         std::to_string(group.group_id);
}

// weights[r * g + t] = knowledge of respondent r on the value of tuple t.
std::vector<double> AssociationWeights(const QIGroup& group,
                                       std::span<const SensDist* const> knowledge) {
  const std::size_t g = group.tuples.size();
  std::vector<double> w(g * g);
  for (std::size_t r = 0; r < g; ++r) {
    for (std::size_t t = 0; t < g; ++t) {
      w[r * g + t] = (*knowledge[r])[group.tuples[t].sensitive];
    }
  }
  return w;
}

// Probability that respondent r is paired with tuple t, flattened r * g + t.
// Returns an empty vector when every configuration has zero confidence.
std::vector<double> PairingByEnumeration(std::span<const double> w, std::size_t g) {
  std::vector<int> perm(g);  // tuple t -> respondent perm[t]
  std::iota(perm.begin(), perm.end(), 0);
  std::vector<double> acc(g * g, 0.0);
  double total = 0.0;
  do {
    double d = 0.0;
    for (std::size_t t = 0; t < g; ++t) d += w[static_cast<std::size_t>(perm[t]) * g + t];
    total += d;
    for (std::size_t t = 0; t < g; ++t) acc[static_cast<std::size_t>(perm[t]) * g + t] += d;
  } while (std::next_permutation(perm.begin(), perm.end()));
  if (!(total > 0.0)) return {};
  for (double& a : acc) a /= total;
  return acc;
}

std::vector<double> PairingBySampling(std::span<const double> w, std::size_t g,
                                      int budget, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<int> perm(g);
  std::iota(perm.begin(), perm.end(), 0);
  std::vector<double> acc(g * g, 0.0);
  double total = 0.0;
  for (int i = 0; i < budget; ++i) {
    for (std::size_t k = g; k > 1; --k) {
      std::swap(perm[k - 1], perm[UniformBelow(rng, k)]);
    }
    double d = 0.0;
    for (std::size_t t = 0; t < g; ++t) d += w[static_cast<std::size_t>(perm[t]) * g + t];
    total += d;
    for (std::size_t t = 0; t < g; ++t) acc[static_cast<std::size_t>(perm[t]) * g + t] += d;
  }
  if (!(total > 0.0)) return {};
  for (double& a : acc) a /= total;
  return acc;
}

// With additive confidence, summing d over the (g-1)! configurations that
// pair r with t gives (g-1)! w[r][t] + (g-2)! (S - R_r - C_t + w[r][t]),
// and the sum over all configurations is (g-1)! S.
std::vector<double> PairingClosedForm(std::span<const double> w, std::size_t g) {
  std::vector<double> row(g, 0.0), col(g, 0.0);
  double total = 0.0;
  for (std::size_t r = 0; r < g; ++r) {
    for (std::size_t t = 0; t < g; ++t) {
      row[r] += w[r * g + t];
      col[t] += w[r * g + t];
      total += w[r * g + t];
    }
  }
  if (!(total > 0.0)) return {};
  std::vector<double> p(g * g);
  if (g == 1) {
    p[0] = 1.0;
    return p;
  }
  const double rest = 1.0 / static_cast<double>(g - 1);
  for (std::size_t r = 0; r < g; ++r) {
    for (std::size_t t = 0; t < g; ++t) {
      const double wrt = w[r * g + t];
      const double others = std::max(0.0, total - row[r] - col[t] + wrt);
      p[r * g + t] = (wrt + others * rest) / total;
    }
  }
  return p;
}

std::uint64_t GroupSeed(const PosteriorOptions& options, const QIGroup& group) {
  std::uint64_t h = SplitMix64(options.seed);
  h = SplitMix64(h ^ static_cast<std::uint64_t>(group.group_id));
  for (const auto& r : group.respondents) {
    h = SplitMix64(h ^ static_cast<std::uint64_t>(r.value));
  }
  return h;
}

GroupPosterior PosteriorFromKnowledge(const QIGroup& group,
                                      std::span<const SensDist* const> knowledge,
                                      std::size_t domain_size,
                                      const PosteriorOptions& options) {
  const std::size_t g = group.tuples.size();
  GroupPosterior out;
  if (g == 0) return out;
  const std::vector<double> w = AssociationWeights(group, knowledge);

  PosteriorMethod method = options.method;
  if (method == PosteriorMethod::kAuto) {
    method = static_cast<int>(g) <= options.exact_limit ? PosteriorMethod::kEnumerate
                                                        : PosteriorMethod::kSample;
  }
  std::vector<double> pairing;
  switch (method) {
    case PosteriorMethod::kEnumerate:
      if (g > 12) throw Error("refusing to enumerate " + std::to_string(g) + "! configurations");
      pairing = PairingByEnumeration(w, g);
      break;
    case PosteriorMethod::kSample:
      pairing = PairingBySampling(w, g, options.sample_budget, GroupSeed(options, group));
      break;
    case PosteriorMethod::kClosedForm:
    case PosteriorMethod::kAuto:
      pairing = PairingClosedForm(w, g);
      break;
  }

  out.posteriors.reserve(g);
  if (pairing.empty()) {
    out.degenerate = true;
    std::vector<double> freq(domain_size, 0.0);
    for (const auto& t : group.tuples) freq[static_cast<std::size_t>(t.sensitive)] += 1.0;
    const SensDist f = Normalize(freq);
    out.posteriors.assign(g, f);
    return out;
  }
  for (std::size_t r = 0; r < g; ++r) {
    std::vector<double> p(domain_size, 0.0);
    for (std::size_t t = 0; t < g; ++t) {
      p[static_cast<std::size_t>(group.tuples[t].sensitive)] += pairing[r * g + t];
    }
    out.posteriors.push_back(Normalize(p));
  }
  return out;
}

const SensDist& KnowledgeOf(const KnowledgeMap& knowledge, RespondentId id) {
  auto it = knowledge.find(id);
  if (it == knowledge.end()) {
    throw Error("no knowledge for respondent " + std::to_string(id.value));
  }
  return it->second;
}

}  // namespace

KnowledgeMap PriorsFromBKsv(const BKsvTable& bksv, const RespondentRegistry& registry) {
  KnowledgeMap priors;
  priors.reserve(registry.size());
  for (const auto& [id, qi] : registry) priors.emplace(id, bksv.Lookup(qi));
  return priors;
}

double ConfigurationConfidence(const QIGroup& group, std::span<const int> assignment,
                               const KnowledgeMap& knowledge) {
  if (assignment.size() != group.tuples.size() ||
      group.respondents.size() != group.tuples.size()) {
    throw Error("configuration does not match group size");
  }
  std::vector<bool> used(assignment.size(), false);
  double d = 0.0;
  for (std::size_t t = 0; t < assignment.size(); ++t) {
    const int r = assignment[t];
    if (r < 0 || static_cast<std::size_t>(r) >= used.size() || used[static_cast<std::size_t>(r)]) {
      throw Error("configuration is not a bijection");
    }
    used[static_cast<std::size_t>(r)] = true;
    d += KnowledgeOf(knowledge, group.respondents[static_cast<std::size_t>(r)])
        [group.tuples[t].sensitive];
  }
  return d;
}

GroupPosterior ComputePosterior(const QIGroup& group, const KnowledgeMap& knowledge,
                                std::size_t domain_size,
                                const PosteriorOptions& options) {
  if (group.respondents.size() != group.tuples.size()) {
    throw Error("group " + std::to_string(group.group_id) + ": " +
                std::to_string(group.tuples.size()) + " tuples but " +
                std::to_string(group.respondents.size()) + " respondents");
  }
  std::vector<const SensDist*> k;
  k.reserve(group.respondents.size());
  for (const auto& r : group.respondents) k.push_back(&KnowledgeOf(knowledge, r));
  return PosteriorFromKnowledge(group, k, domain_size, options);
}

SensDist ReviseKnowledge(const RespondentKnowledge& knowledge, const BKseqTable& bkseq) {
  if (knowledge.per_release.empty()) throw Error("revision needs at least one posterior");
  const std::size_t d = bkseq.domain_size();
  const std::size_t length =
      std::min<std::size_t>(knowledge.per_release.size(), bkseq.order());
  if (length == 0) return bkseq.fallback();

  // Supports of the last `length` posteriors, oldest first.
  std::vector<std::vector<std::pair<int, double>>> supports;
  auto it = knowledge.per_release.end();
  std::advance(it, -static_cast<std::ptrdiff_t>(length));
  for (; it != knowledge.per_release.end(); ++it) {
    if (it->second.size() != d) throw Error("posterior/BKseq domain mismatch");
    std::vector<std::pair<int, double>> support;
    for (std::size_t s = 0; s < d; ++s) {
      const double p = it->second[static_cast<int>(s)];
      if (p > kSupportFloor) support.emplace_back(static_cast<int>(s), p);
    }
    supports.push_back(std::move(support));
  }

  std::vector<double> acc(d, 0.0);
  std::vector<std::size_t> pos(length, 0);
  Context context(length);
  while (true) {
    double weight = 1.0;
    for (std::size_t i = 0; i < length; ++i) {
      context[i] = supports[i][pos[i]].first;
      weight *= supports[i][pos[i]].second;
    }
    const auto next = bkseq.Predict(context).probabilities();
    for (std::size_t s = 0; s < d; ++s) acc[s] += weight * next[s];
    std::size_t i = length;
    while (i > 0 && ++pos[i - 1] == supports[i - 1].size()) {
      pos[i - 1] = 0;
      --i;
    }
    if (i == 0) break;
  }
  return Normalize(acc);
}

KnowledgeTracker::KnowledgeTracker(KnowledgeMap priors, BKseqSchedule bkseq,
                                   std::size_t domain_size, PosteriorOptions options)
    : priors_(std::move(priors)), bkseq_(std::move(bkseq)),
      domain_size_(domain_size), options_(options) {}

const SensDist& KnowledgeTracker::Current(RespondentId id) const {
  auto it = state_.find(id);
  if (it != state_.end()) return it->second.current;
  return KnowledgeOf(priors_, id);
}

ReleaseSnapshot KnowledgeTracker::Observe(const GeneralizedView& release) {
  ReleaseSnapshot snapshot;
  snapshot.release = release.release;
  std::vector<std::pair<RespondentId, SensDist>> posteriors;
  for (const auto& g : release.groups) {
    if (g.respondents.size() != g.tuples.size()) {
      throw Error(GroupName(release.release, g) + ": membership lists " +
                  std::to_string(g.respondents.size()) + " respondents for " +
                  std::to_string(g.tuples.size()) + " tuples");
    }
    std::vector<const SensDist*> k;
    k.reserve(g.respondents.size());
    for (const auto& r : g.respondents) {
      try {
        k.push_back(&Current(r));
      } catch (const Error& e) {
        throw Error(GroupName(release.release, g) + ": " + e.what());
      }
    }
    GroupPosterior gp = PosteriorFromKnowledge(g, k, domain_size_, options_);
    if (gp.degenerate) ++snapshot.degenerate_groups;
    for (std::size_t i = 0; i < g.respondents.size(); ++i) {
      posteriors.emplace_back(g.respondents[i], std::move(gp.posteriors[i]));
    }
  }

  const BKseqTable& table = bkseq_.AfterRelease(release.release);
  std::sort(posteriors.begin(), posteriors.end(),
            [](const auto& a, const auto& b) { return a.first < b.first; });
  snapshot.respondents.reserve(posteriors.size());
  for (auto& [id, posterior] : posteriors) {
    auto [it, inserted] = state_.try_emplace(id);
    RespondentKnowledge& rk = it->second;
    if (inserted) rk.id = id;
    if (!rk.per_release.emplace(release.release, posterior).second) {
      throw Error("respondent " + std::to_string(id.value) +
                  " released twice in release " + std::to_string(release.release));
    }
    rk.current = ReviseKnowledge(rk, table);
    snapshot.respondents.push_back({id, std::move(posterior), rk.current});
  }
  return snapshot;
}

AttackResult AttackHistory(std::span<const GeneralizedView> released,
                           const KnowledgeMap& priors, const BKseqSchedule& bkseq,
                           std::size_t domain_size, const PosteriorOptions& options) {
  KnowledgeTracker tracker(priors, bkseq, domain_size, options);
  AttackResult result;
  int previous = 0;
  for (const auto& view : released) {
    if (view.release <= previous) throw Error("released views out of order");
    previous = view.release;
    result.releases.push_back(tracker.Observe(view));
  }
  result.state = tracker.state();
  return result;
}

void WriteAttackJson(std::ostream& out, const AttackResult& result,
                     const SensitiveDomain& domain,
                     const std::map<std::string, std::string>& provenance) {
  using internal::DistToJson;
  using internal::ordered_json;
  // Streamed by release to keep memory flat on paper-scale histories.
  ordered_json prov(provenance);
  out << "{\n\"provenance\": " << prov.dump() << ",\n\"domain\": "
      << ordered_json(domain.labels()).dump() << ",\n\"releases\": [\n";
  for (std::size_t i = 0; i < result.releases.size(); ++i) {
    const auto& rel = result.releases[i];
    out << "{\"release\": " << rel.release
        << ", \"degenerate_groups\": " << rel.degenerate_groups
        << ", \"respondents\": [\n";
    for (std::size_t k = 0; k < rel.respondents.size(); ++k) {
      const auto& r = rel.respondents[k];
      ordered_json j;
      j["id"] = r.id.value;
      j["posterior"] = DistToJson(r.posterior, domain);
      j["revised"] = DistToJson(r.revised, domain);
      out << j.dump() << (k + 1 < rel.respondents.size() ? ",\n" : "\n");
    }
    out << "]}" << (i + 1 < result.releases.size() ? ",\n" : "\n");
  }
  out << "]\n}\n";
}

PosteriorTable ReadAttackPosteriors(std::istream& in, const SensitiveDomain& domain) {
  const nlohmann::json j = internal::ParseJson(in, "attack JSON");
  PosteriorTable table;
  try {
    for (const auto& rel : j.at("releases")) {
      const int release = rel.at("release").get<int>();
      auto& rows = table[release];
      for (const auto& r : rel.at("respondents")) {
        const RespondentId id{r.at("id").get<std::int64_t>()};
        rows.emplace(id, internal::DistFromJson(r.at("posterior"), domain,
                                                "attack JSON respondent " +
                                                    std::to_string(id.value)));
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("attack JSON: ") + e.what());
  }
  return table;
}

PosteriorTable PosteriorsOf(const AttackResult& result) {
  PosteriorTable table;
  for (const auto& rel : result.releases) {
    auto& rows = table[rel.release];
    for (const auto& r : rel.respondents) rows.emplace(r.id, r.posterior);
  }
  return table;
}

}  // namespace serialanon
