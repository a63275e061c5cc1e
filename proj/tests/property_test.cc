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

// Randomized invariants that span several modules.

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <random>
#include <vector>

#include "serialanon/adversary.h"
#include "serialanon/anonymizer.h"
#include "serialanon/datagen.h"
#include "serialanon/knowledge.h"
#include "serialanon/model.h"
#include "serialanon/pipeline.h"
#include "serialanon/quality.h"

namespace serialanon {
namespace {

void ExpectDistribution(const SensDist& d, std::size_t size) {
  ASSERT_EQ(d.size(), size);
  double sum = 0.0;
  for (double p : d.probabilities()) {
    EXPECT_GE(p, 0.0);
    EXPECT_LE(p, 1.0);
    sum += p;
  }
  EXPECT_NEAR(sum, 1.0, kProbabilityTolerance);
}

SensDist RandomDist(std::mt19937& rng, std::size_t d, double zero_share = 0.3) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> raw(d);
  for (double& x : raw) x = u(rng) < zero_share ? 0.0 : u(rng);
  raw[rng() % d] += 0.05;
  return Normalize(raw);
}

TEST(NormalizeProperty, SumsToOneAndPreservesRatios) {
  std::mt19937 rng(1);
  std::uniform_real_distribution<double> u(0.0, 1e6);
  for (int trial = 0; trial < 500; ++trial) {
    std::vector<double> raw(1 + rng() % 20);
    for (double& x : raw) x = u(rng);
    const SensDist d = Normalize(raw);
    ExpectDistribution(d, raw.size());
    std::vector<double> scaled = raw;
    for (double& x : scaled) x *= 3.5;
    const SensDist e = Normalize(scaled);
    for (std::size_t i = 0; i < raw.size(); ++i) {
      EXPECT_NEAR(d[static_cast<int>(i)], e[static_cast<int>(i)], 1e-12);
      if (raw[0] > 0) {
        EXPECT_NEAR(d[static_cast<int>(i)] / d[0], raw[i] / raw[0],
                    1e-9 * (1 + raw[i] / raw[0]));
      }
    }
  }
}

TEST(SensDistProperty, RejectsOffSimplexVectors) {
  EXPECT_THROW(SensDist::FromProbabilities({0.5, 0.6}), Error);
  EXPECT_THROW(SensDist::FromProbabilities({1.2, -0.2}), Error);
  EXPECT_NO_THROW(SensDist::FromProbabilities({0.5, 0.5 + 1e-12}));
}

struct RandomGroup {
  QIGroup group;
  KnowledgeMap knowledge;
};

RandomGroup MakeGroup(std::mt19937& rng, int n, std::size_t d) {
  RandomGroup r;
  r.group.group_id = 1;
  r.group.ranges = {{50, 55}, {1, 2}, {60, 70}};
  for (int i = 0; i < n; ++i) {
    r.group.tuples.push_back({i + 1, static_cast<int>(rng() % d)});
    r.group.respondents.push_back(RespondentId{10 * (i + 1)});
    r.knowledge.emplace(RespondentId{10 * (i + 1)}, RandomDist(rng, d));
  }
  return r;
}

// Every configuration places each tuple on exactly one respondent, so the
// posterior mass on a value summed over respondents is its multiplicity.
TEST(PosteriorProperty, MarginalsSumToMultiplicities) {
  std::mt19937 rng(2);
  const std::size_t d = 5;
  for (PosteriorMethod method : {PosteriorMethod::kEnumerate, PosteriorMethod::kClosedForm,
                                 PosteriorMethod::kSample}) {
    for (int trial = 0; trial < 40; ++trial) {
      const RandomGroup g = MakeGroup(rng, 2 + trial % 5, d);
      PosteriorOptions opt;
      opt.method = method;
      opt.sample_budget = 20000;
      const GroupPosterior post = ComputePosterior(g.group, g.knowledge, d, opt);
      ASSERT_EQ(post.posteriors.size(), g.group.size());
      std::vector<double> mult(d, 0.0), mass(d, 0.0);
      for (const auto& t : g.group.tuples) mult[static_cast<std::size_t>(t.sensitive)] += 1;
      for (const auto& p : post.posteriors) {
        ExpectDistribution(p, d);
        for (std::size_t s = 0; s < d; ++s) mass[s] += p[static_cast<int>(s)];
      }
      for (std::size_t s = 0; s < d; ++s) {
        EXPECT_NEAR(mass[s], mult[s], 1e-9)
            << "value " << s;
        if (mult[s] == 0) {
          for (const auto& p : post.posteriors) EXPECT_EQ(p[static_cast<int>(s)], 0.0);
        }
      }
    }
  }
}

TEST(PosteriorProperty, ExactMethodsIgnoreTupleOrder) {
  std::mt19937 rng(3);
  const std::size_t d = 4;
  for (int trial = 0; trial < 30; ++trial) {
    RandomGroup g = MakeGroup(rng, 2 + trial % 5, d);
    PosteriorOptions opt;
    opt.method = PosteriorMethod::kEnumerate;
    const GroupPosterior a = ComputePosterior(g.group, g.knowledge, d, opt);
    std::shuffle(g.group.tuples.begin(), g.group.tuples.end(), rng);
    const GroupPosterior b = ComputePosterior(g.group, g.knowledge, d, opt);
    opt.method = PosteriorMethod::kClosedForm;
    const GroupPosterior c = ComputePosterior(g.group, g.knowledge, d, opt);
    for (std::size_t i = 0; i < a.posteriors.size(); ++i) {
      for (std::size_t s = 0; s < d; ++s) {
        EXPECT_NEAR(a.posteriors[i][static_cast<int>(s)], b.posteriors[i][static_cast<int>(s)],
                    1e-12);
        EXPECT_NEAR(a.posteriors[i][static_cast<int>(s)], c.posteriors[i][static_cast<int>(s)],
                    1e-9);
      }
    }
  }
}

TEST(RevisionProperty, RevisedKnowledgeIsADistribution) {
  std::mt19937 rng(4);
  const std::size_t d = 4;
  for (int order = 1; order <= 3; ++order) {
    std::vector<BKseqTable::Conditional> conds;
    std::vector<int> ctx(static_cast<std::size_t>(order), 0);
    const int total = static_cast<int>(std::pow(d, order));
    for (int code = 0; code < total; ++code) {
      int c = code;
      for (int i = order - 1; i >= 0; --i) {
        ctx[static_cast<std::size_t>(i)] = c % static_cast<int>(d);
        c /= static_cast<int>(d);
      }
      if (rng() % 3 == 0) continue;
      conds.push_back({ctx, RandomDist(rng, d), 1.0});
    }
    const BKseqTable table(order, SensDist::Uniform(d), conds);
    for (int trial = 0; trial < 30; ++trial) {
      RespondentKnowledge k;
      k.id = RespondentId{1};
      const int seen = 1 + trial % 4;
      for (int r = 1; r <= seen; ++r) k.per_release[r] = RandomDist(rng, d);
      ExpectDistribution(ReviseKnowledge(k, table), d);
    }
    for (int lower = 0; lower < order; ++lower) {
      const BKseqTable t = table.Truncate(lower);
      EXPECT_LE(t.order(), lower);
      for (const auto& c : t.conditionals()) {
        EXPECT_LE(static_cast<int>(c.context.size()), lower);
        ExpectDistribution(c.dist, d);
      }
    }
  }
}

// A small generated history through every method and several defender and
// adversary knowledge variants.
TEST(EndToEndProperty, ReleasesAndAttacksStayWellFormed) {
  GeneratorConfig cfg = GeneratorConfig::DeskScale();
  cfg.weeks = 5;
  cfg.tuples_per_week = 150;
  cfg.arrival_rate = 90;
  for (std::uint64_t seed : {1u, 2u}) {
    cfg.seed = seed;
    const GeneratedData data = Generate(cfg);
    const std::size_t d = data.domain.size();
    for (const auto& view : data.history) CheckView(view, cfg.schema, d);
    for (Method m : {Method::kJsReduce, Method::kLDiversity, Method::kTCloseness}) {
      const PrivacyParams params = PrivacyParams::Defaults(m);
      for (const char* defender : {"exact", "spm-internal"}) {
        const BKseqSchedule def = BuildSchedule(KnowledgeSource::Parse(defender), data, cfg);
        const auto released = AnonymizeHistory(data, cfg.schema, params, def);
        ASSERT_EQ(released.size(), data.history.size());
        for (std::size_t h = 0; h < released.size(); ++h) {
          const GeneralizedView& g = released[h].view;
          CheckGeneralizedView(g, nullptr);
          EXPECT_EQ(static_cast<int>(g.released_tuples()) + g.suppressed,
                    static_cast<int>(data.history[h].records.size()));
          const SensDist global = ValueDistribution(data.history[h], d);
          if (m != Method::kJsReduce) {
            for (const auto& grp : g.groups) {
              EXPECT_TRUE(SatisfiesConstraints(grp, {}, params, global));
            }
          }
        }
        for (const char* adv : {"exact", "nstep:1"}) {
          EvaluateOptions eo;
          eo.run_queries = false;
          const AttackEvaluation ae = AttackAndEvaluate(
              released, data, cfg.schema, BuildSchedule(KnowledgeSource::Parse(adv), data, cfg),
              {}, eo);
          for (const auto& snap : ae.attack.releases) {
            for (const auto& r : snap.respondents) {
              ExpectDistribution(r.posterior, d);
              ExpectDistribution(r.revised, d);
            }
          }
          for (const auto& metric : ae.metrics.per_release) {
            EXPECT_GE(*metric.gain, 0.0);
            EXPECT_LE(*metric.gain, 1.0);
            EXPECT_GE(*metric.confidence, 0.0);
            EXPECT_LE(*metric.confidence, 1.0 + 1e-12);
            EXPECT_GE(metric.gcp, 0.0);
            EXPECT_LE(metric.gcp, 1.0);
          }
          if (m == Method::kJsReduce) break;
        }
        if (m != Method::kJsReduce) break;
      }
    }
  }
}

}  // namespace
}  // namespace serialanon
