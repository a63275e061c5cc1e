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

#include <gtest/gtest.h>

#include <algorithm>
#include <map>
#include <numeric>
#include <sstream>

#include "serialanon/random.h"
#include "test_fixtures.h"

namespace serialanon {
namespace {

using testing::Rid;
using testing::WorkedExample;

// Posterior of the respondent `who` in `gp`, which is parallel to
// group.respondents.
const SensDist& PosteriorOf(const QIGroup& group, const GroupPosterior& gp, RespondentId who) {
  const auto it = std::find(group.respondents.begin(), group.respondents.end(), who);
  EXPECT_NE(it, group.respondents.end());
  return gp.posteriors[static_cast<std::size_t>(it - group.respondents.begin())];
}

KnowledgeMap RevisedAtSecondRelease(const WorkedExample& ex) {
  KnowledgeMap k = ex.priors;
  k[Rid(WorkedExample::kAlice)] = ex.Dist({{"BCM-pos", 0.31}, {"PNE-pos", 0.05}});
  k[Rid(WorkedExample::kCarol)] = ex.Dist({{"BCM-pos", 0.02}, {"PNE-pos", 0.31}});
  return k;
}

// ---------------------------------------------------------------------------
// Configuration confidence

TEST(ConfigurationConfidenceTest, SumsPerTupleKnowledge) {
  const WorkedExample ex;
  const QIGroup& g3 = ex.released[1].groups[0];
  const KnowledgeMap k = RevisedAtSecondRelease(ex);
  // Tuples are (BCM-pos, PNE-pos); respondents sorted (Alice, Carol).
  const std::vector<int> straight{0, 1};
  const std::vector<int> swapped{1, 0};
  EXPECT_NEAR(ConfigurationConfidence(g3, straight, k), 0.62, 1e-12);
  EXPECT_NEAR(ConfigurationConfidence(g3, swapped, k), 0.07, 1e-12);
}

TEST(ConfigurationConfidenceTest, ZeroKnowledgeOnGroupValues) {
  const WorkedExample ex;
  const QIGroup& g3 = ex.released[1].groups[0];
  KnowledgeMap k;
  k[Rid(WorkedExample::kAlice)] = SensDist::PointMass(ex.domain.size(), ex.v("other"));
  k[Rid(WorkedExample::kCarol)] = SensDist::PointMass(ex.domain.size(), ex.v("other"));
  const std::vector<int> a{0, 1};
  EXPECT_EQ(ConfigurationConfidence(g3, a, k), 0.0);
}

TEST(ConfigurationConfidenceTest, RejectsNonBijection) {
  const WorkedExample ex;
  const std::vector<int> twice{0, 0};
  EXPECT_THROW(ConfigurationConfidence(ex.released[1].groups[0], twice, ex.priors), Error);
}

// ---------------------------------------------------------------------------
// Posterior

TEST(ComputePosteriorTest, ExampleGroupAtSecondRelease) {
  const WorkedExample ex;
  const QIGroup& g3 = ex.released[1].groups[0];
  const GroupPosterior gp = ComputePosterior(g3, RevisedAtSecondRelease(ex), ex.domain.size());
  const SensDist& alice = PosteriorOf(g3, gp, Rid(WorkedExample::kAlice));
  const SensDist& carol = PosteriorOf(g3, gp, Rid(WorkedExample::kCarol));
  EXPECT_NEAR(alice[ex.v("BCM-pos")], 0.62 / 0.69, 1e-12);
  EXPECT_NEAR(alice[ex.v("BCM-pos")], 0.9, 0.005);
  EXPECT_NEAR(alice[ex.v("PNE-pos")], 0.1, 0.005);
  EXPECT_NEAR(carol[ex.v("BCM-pos")], 0.1, 0.005);
  EXPECT_NEAR(carol[ex.v("PNE-pos")], 0.9, 0.005);
  EXPECT_FALSE(gp.degenerate);
}

QIGroup RandomGroup(Rng& rng, int size, int domain, int id) {
  QIGroup g;
  g.group_id = id;
  for (int i = 0; i < size; ++i) {
    g.tuples.push_back({i + 1, static_cast<int>(UniformBelow(rng, domain))});
    g.respondents.push_back(Rid(100 * id + i));
  }
  return g;
}

KnowledgeMap RandomKnowledge(Rng& rng, const QIGroup& g, int domain) {
  KnowledgeMap k;
  for (const auto& r : g.respondents) {
    std::vector<double> raw(domain);
    for (auto& x : raw) x = Uniform01(rng) * Uniform01(rng);
    raw[0] += 1e-3;
    k[r] = Normalize(raw);
  }
  return k;
}

// Brute force: all |Q|! bijections, each weighted by its summed confidence.
std::vector<SensDist> OraclePosterior(const QIGroup& g, const KnowledgeMap& k, int domain) {
  const std::size_t n = g.tuples.size();
  std::vector<int> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  std::vector<std::vector<double>> mass(n, std::vector<double>(domain, 0.0));
  double total = 0.0;
  do {
    double d = 0.0;
    for (std::size_t t = 0; t < n; ++t) {
      d += k.at(g.respondents[perm[t]])[g.tuples[t].sensitive];
    }
    total += d;
    for (std::size_t t = 0; t < n; ++t) mass[perm[t]][g.tuples[t].sensitive] += d;
  } while (std::next_permutation(perm.begin(), perm.end()));
  std::vector<SensDist> out;
  for (auto& m : mass) {
    for (auto& x : m) x /= total;
    out.push_back(SensDist::FromProbabilities(m));
  }
  return out;
}

TEST(ComputePosteriorTest, EnumerationAndClosedFormMatchOracle) {
  Rng rng(21);
  for (int trial = 0; trial < 60; ++trial) {
    const int size = 1 + trial % 7;
    const QIGroup g = RandomGroup(rng, size, 5, trial + 1);
    const KnowledgeMap k = RandomKnowledge(rng, g, 5);
    const auto oracle = OraclePosterior(g, k, 5);
    PosteriorOptions enumerate{PosteriorMethod::kEnumerate};
    PosteriorOptions closed{PosteriorMethod::kClosedForm};
    const GroupPosterior e = ComputePosterior(g, k, 5, enumerate);
    const GroupPosterior c = ComputePosterior(g, k, 5, closed);
    for (int r = 0; r < size; ++r) {
      for (int s = 0; s < 5; ++s) {
        EXPECT_NEAR(e.posteriors[r][s], oracle[r][s], 1e-12);
        EXPECT_NEAR(c.posteriors[r][s], oracle[r][s], 1e-12);
      }
    }
  }
}

TEST(ComputePosteriorTest, SampledMatchesExactOnFourTupleGroups) {
  Rng rng(4);
  for (int trial = 0; trial < 10; ++trial) {
    const QIGroup g = RandomGroup(rng, 4, 4, trial + 1);
    const KnowledgeMap k = RandomKnowledge(rng, g, 4);
    const auto exact = ComputePosterior(g, k, 4, {PosteriorMethod::kEnumerate});
    const auto sampled = ComputePosterior(g, k, 4, {PosteriorMethod::kSample, 8, 100000});
    for (int r = 0; r < 4; ++r) {
      for (int s = 0; s < 4; ++s) {
        EXPECT_NEAR(sampled.posteriors[r][s], exact.posteriors[r][s], 0.01);
      }
    }
  }
}

TEST(ComputePosteriorTest, UniformKnowledgeGivesGroupFrequencies) {
  Rng rng(8);
  const QIGroup g = RandomGroup(rng, 6, 3, 1);
  KnowledgeMap k;
  for (const auto& r : g.respondents) k[r] = SensDist::Uniform(3);
  std::vector<double> freq(3, 0.0);
  for (const auto& t : g.tuples) freq[t.sensitive] += 1.0 / 6;
  for (auto method : {PosteriorMethod::kEnumerate, PosteriorMethod::kClosedForm}) {
    const GroupPosterior gp = ComputePosterior(g, k, 3, {method});
    for (const auto& p : gp.posteriors) {
      for (int s = 0; s < 3; ++s) EXPECT_NEAR(p[s], freq[s], 1e-12);
    }
  }
}

TEST(ComputePosteriorTest, AllZeroConfidenceIsDegenerate) {
  QIGroup g;
  g.group_id = 9;
  g.tuples = {{1, 0}, {2, 0}, {3, 1}};
  g.respondents = {Rid(1), Rid(2), Rid(3)};
  KnowledgeMap k;
  for (const auto& r : g.respondents) k[r] = SensDist::PointMass(3, 2);
  for (auto method :
       {PosteriorMethod::kEnumerate, PosteriorMethod::kSample, PosteriorMethod::kClosedForm}) {
    const GroupPosterior gp = ComputePosterior(g, k, 3, {method, 8, 1000});
    EXPECT_TRUE(gp.degenerate);
    for (const auto& p : gp.posteriors) {
      EXPECT_NEAR(p[0], 2.0 / 3, 1e-12);
      EXPECT_NEAR(p[1], 1.0 / 3, 1e-12);
    }
  }
}

TEST(ComputePosteriorTest, AutoSwitchesToSamplingAboveLimit) {
  Rng rng(12);
  const QIGroup g = RandomGroup(rng, 5, 3, 1);
  const KnowledgeMap k = RandomKnowledge(rng, g, 3);
  const auto exact = ComputePosterior(g, k, 3, {PosteriorMethod::kEnumerate});
  const auto auto_small = ComputePosterior(g, k, 3, {PosteriorMethod::kAuto, 5, 100});
  const auto auto_large = ComputePosterior(g, k, 3, {PosteriorMethod::kAuto, 4, 100});
  EXPECT_EQ(auto_small.posteriors, exact.posteriors);
  EXPECT_NE(auto_large.posteriors, exact.posteriors);
}

TEST(ComputePosteriorTest, MissingKnowledgeOrMembershipIsAnError) {
  const WorkedExample ex;
  QIGroup g = ex.released[1].groups[0];
  KnowledgeMap partial;
  partial[Rid(WorkedExample::kAlice)] = SensDist::Uniform(ex.domain.size());
  EXPECT_THROW(ComputePosterior(g, partial, ex.domain.size()), Error);
  g.respondents.pop_back();
  EXPECT_THROW(ComputePosterior(g, ex.priors, ex.domain.size()), Error);
}

// ---------------------------------------------------------------------------
// Revision

TEST(ReviseKnowledgeTest, AliceAndCarolAfterFirstRelease) {
  const WorkedExample ex;
  RespondentKnowledge alice;
  alice.per_release[1] = ex.Dist({{"MAM-pos", 0.5}, {"CX-neg", 0.5}});
  const SensDist a = ReviseKnowledge(alice, ex.bkseq);
  EXPECT_NEAR(a[ex.v("BCM-pos")], 0.5 * 0.6 + 0.5 * 0.02, 1e-12);
  EXPECT_NEAR(a[ex.v("BCM-pos")], 0.31, 1e-12);
  EXPECT_NEAR(a[ex.v("PNE-pos")], 0.05, 1e-12);

  RespondentKnowledge carol;
  carol.per_release[1] = ex.Dist({{"CX-pos", 0.5}, {"BS-neg", 0.5}});
  const SensDist c = ReviseKnowledge(carol, ex.bkseq);
  EXPECT_NEAR(c[ex.v("PNE-pos")], 0.31, 1e-12);
  EXPECT_NEAR(c[ex.v("BCM-pos")], 0.02, 1e-12);
}

TEST(ReviseKnowledgeTest, DeterministicHistoryReturnsConditional) {
  const WorkedExample ex;
  RespondentKnowledge k;
  k.per_release[1] = SensDist::PointMass(ex.domain.size(), ex.v("CX-pos"));
  EXPECT_EQ(ReviseKnowledge(k, ex.bkseq), *ex.bkseq.Find(Context{ex.v("CX-pos")}));
}

TEST(ReviseKnowledgeTest, RequiresAPosterior) {
  const WorkedExample ex;
  EXPECT_THROW(ReviseKnowledge(RespondentKnowledge{}, ex.bkseq), Error);
}

// 3 releases over {0,1,2}: every sequence is enumerated with its product
// probability and the order-2 conditional of its last two values.
TEST(ReviseKnowledgeTest, MatchesSequenceEnumerationOracle) {
  Rng rng(31);
  auto random_dist = [&] {
    std::vector<double> raw{Uniform01(rng), Uniform01(rng), Uniform01(rng) + 1e-3};
    return Normalize(raw);
  };
  for (int trial = 0; trial < 100; ++trial) {
    std::map<Context, SensDist> cond;
    std::vector<BKseqTable::Conditional> cs;
    for (int a = 0; a < 3; ++a) {
      for (int b = 0; b < 3; ++b) {
        cond[{a, b}] = random_dist();
        cs.push_back({{a, b}, cond[{a, b}], 1.0});
      }
    }
    const BKseqTable table(2, SensDist::Uniform(3), cs);
    RespondentKnowledge k;
    std::vector<SensDist> pk;
    for (int r = 1; r <= 3; ++r) {
      pk.push_back(random_dist());
      k.per_release[r] = pk.back();
    }
    std::vector<double> expected(3, 0.0);
    for (int s1 = 0; s1 < 3; ++s1) {
      for (int s2 = 0; s2 < 3; ++s2) {
        for (int s3 = 0; s3 < 3; ++s3) {
          const double p = pk[0][s1] * pk[1][s2] * pk[2][s3];
          for (int s = 0; s < 3; ++s) expected[s] += p * cond[{s2, s3}][s];
        }
      }
    }
    const SensDist got = ReviseKnowledge(k, table);
    for (int s = 0; s < 3; ++s) EXPECT_NEAR(got[s], expected[s], 1e-9);
  }
}

TEST(ReviseKnowledgeTest, LinearInLastPosterior) {
  Rng rng(77);
  const WorkedExample ex;
  const std::size_t d = ex.domain.size();
  auto random_dist = [&] {
    std::vector<double> raw(d);
    for (auto& x : raw) x = Uniform01(rng);
    return Normalize(raw);
  };
  for (int trial = 0; trial < 20; ++trial) {
    const SensDist p = random_dist(), q = random_dist();
    const double alpha = Uniform01(rng);
    std::vector<double> mix(d);
    for (std::size_t s = 0; s < d; ++s) {
      mix[s] = alpha * p[static_cast<int>(s)] + (1 - alpha) * q[static_cast<int>(s)];
    }
    RespondentKnowledge kp, kq, km;
    kp.per_release[1] = p;
    kq.per_release[1] = q;
    km.per_release[1] = SensDist::FromProbabilities(mix);
    const SensDist rp = ReviseKnowledge(kp, ex.bkseq);
    const SensDist rq = ReviseKnowledge(kq, ex.bkseq);
    const SensDist rm = ReviseKnowledge(km, ex.bkseq);
    for (std::size_t s = 0; s < d; ++s) {
      const int i = static_cast<int>(s);
      EXPECT_NEAR(rm[i], alpha * rp[i] + (1 - alpha) * rq[i], 1e-12);
    }
  }
}

// ---------------------------------------------------------------------------
// Attack loop

TEST(AttackHistoryTest, ReproducesWorkedExample) {
  const WorkedExample ex;
  const AttackResult result = AttackHistory(ex.released, ex.priors,
                                            BKseqSchedule::Fixed(ex.bkseq), ex.domain.size());
  ASSERT_EQ(result.releases.size(), 2u);
  const auto& first = result.releases[0];
  ASSERT_EQ(first.respondents.size(), 4u);
  const std::map<int, std::pair<const char*, const char*>> week1{
      {WorkedExample::kAlice, {"MAM-pos", "CX-neg"}},
      {WorkedExample::kBetty, {"MAM-pos", "CX-neg"}},
      {WorkedExample::kCarol, {"CX-pos", "BS-neg"}},
      {WorkedExample::kDoris, {"CX-pos", "BS-neg"}}};
  for (const auto& r : first.respondents) {
    const auto& [x, y] = week1.at(static_cast<int>(r.id.value));
    EXPECT_NEAR(r.posterior[ex.v(x)], 0.5, 0.005);
    EXPECT_NEAR(r.posterior[ex.v(y)], 0.5, 0.005);
  }
  const auto& alice = result.state.at(Rid(WorkedExample::kAlice));
  const auto& carol = result.state.at(Rid(WorkedExample::kCarol));
  // Revised knowledge entering the second release.
  for (const auto& r : first.respondents) {
    if (r.id == Rid(WorkedExample::kAlice)) {
      EXPECT_NEAR(r.revised[ex.v("BCM-pos")], 0.31, 0.005);
      EXPECT_NEAR(r.revised[ex.v("PNE-pos")], 0.05, 0.005);
    }
    if (r.id == Rid(WorkedExample::kCarol)) {
      EXPECT_NEAR(r.revised[ex.v("BCM-pos")], 0.02, 0.005);
      EXPECT_NEAR(r.revised[ex.v("PNE-pos")], 0.31, 0.005);
    }
  }
  EXPECT_NEAR(alice.per_release.at(2)[ex.v("BCM-pos")], 0.9, 0.005);
  EXPECT_NEAR(alice.per_release.at(2)[ex.v("PNE-pos")], 0.1, 0.005);
  EXPECT_NEAR(carol.per_release.at(2)[ex.v("BCM-pos")], 0.1, 0.005);
  EXPECT_NEAR(carol.per_release.at(2)[ex.v("PNE-pos")], 0.9, 0.005);
  EXPECT_EQ(alice.per_release.size(), 2u);
  EXPECT_EQ(result.state.at(Rid(WorkedExample::kBetty)).per_release.size(), 1u);
}

TEST(AttackHistoryTest, SingleReleaseUniformPriorsGiveFrequencies) {
  const WorkedExample ex;
  KnowledgeMap uniform;
  for (const auto& [id, _] : ex.priors) uniform[id] = SensDist::Uniform(ex.domain.size());
  const std::vector<GeneralizedView> one{ex.released[1]};
  const AttackResult result =
      AttackHistory(one, uniform, BKseqSchedule::Fixed(ex.bkseq), ex.domain.size());
  for (const auto& r : result.releases[0].respondents) {
    if (r.id == Rid(WorkedExample::kElisa)) {
      EXPECT_NEAR(r.posterior[ex.v("MAM-neg")], 1.0 / 3, 1e-12);
      EXPECT_NEAR(r.posterior[ex.v("CX-pos")], 1.0 / 3, 1e-12);
    }
    if (r.id == Rid(WorkedExample::kAlice)) {
      EXPECT_NEAR(r.posterior[ex.v("BCM-pos")], 0.5, 1e-12);
    }
  }
}

TEST(AttackHistoryTest, OrderZeroKnowledgeForgetsEarlierReleases) {
  const WorkedExample ex;
  const BKseqSchedule zero = BKseqSchedule::Fixed(ex.bkseq.Truncate(0));
  const AttackResult base = AttackHistory(ex.released, ex.priors, zero, ex.domain.size());

  // Swap the first release's values between its two groups.
  std::vector<GeneralizedView> permuted = ex.released;
  std::swap(permuted[0].groups[0].tuples, permuted[0].groups[1].tuples);
  const AttackResult other = AttackHistory(permuted, ex.priors, zero, ex.domain.size());
  ASSERT_EQ(base.releases[1].respondents.size(), other.releases[1].respondents.size());
  for (std::size_t i = 0; i < base.releases[1].respondents.size(); ++i) {
    EXPECT_EQ(base.releases[1].respondents[i].posterior,
              other.releases[1].respondents[i].posterior);
  }
}

TEST(AttackHistoryTest, MembershipMismatchNamesGroup) {
  const WorkedExample ex;
  std::vector<GeneralizedView> broken = ex.released;
  broken[1].groups[1].respondents.pop_back();
  try {
    AttackHistory(broken, ex.priors, BKseqSchedule::Fixed(ex.bkseq), ex.domain.size());
    FAIL() << "expected an error";
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("group 4"), std::string::npos) << e.what();
  }
}

TEST(AttackHistoryTest, RejectsOutOfOrderReleases) {
  const WorkedExample ex;
  const std::vector<GeneralizedView> reversed{ex.released[1], ex.released[0]};
  EXPECT_THROW(AttackHistory(reversed, ex.priors, BKseqSchedule::Fixed(ex.bkseq),
                             ex.domain.size()),
               Error);
}

TEST(AttackJsonTest, PosteriorsRoundTrip) {
  const WorkedExample ex;
  const AttackResult result = AttackHistory(ex.released, ex.priors,
                                            BKseqSchedule::Fixed(ex.bkseq), ex.domain.size());
  std::ostringstream out;
  WriteAttackJson(out, result, ex.domain, {{"seed", "1"}});
  std::istringstream in(out.str());
  const PosteriorTable back = ReadAttackPosteriors(in, ex.domain);
  const PosteriorTable direct = PosteriorsOf(result);
  ASSERT_EQ(back.size(), direct.size());
  for (const auto& [release, rows] : direct) {
    for (const auto& [id, dist] : rows) {
      const SensDist& got = back.at(release).at(id);
      for (std::size_t s = 0; s < ex.domain.size(); ++s) {
        EXPECT_NEAR(got[static_cast<int>(s)], dist[static_cast<int>(s)], 1e-15);
      }
    }
  }
}

}  // namespace
}  // namespace serialanon
