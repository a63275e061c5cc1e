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

#include <gtest/gtest.h>

#include <cmath>
#include <map>
#include <sstream>

#include "serialanon/random.h"
#include "test_fixtures.h"

namespace serialanon {
namespace {

using testing::Rid;
using testing::WorkedExample;

// ---------------------------------------------------------------------------
// BKsv

TEST(BKsvTest, LooksUpPublishedPriorForAlice) {
  const WorkedExample ex;
  const BKsvTable table(ex.schema, {{{{45, 74}, {1, 2}, {12000, 12099}},
                                     ex.priors.at(Rid(WorkedExample::kAlice))}});
  const std::vector<int> alice{51, 2, 12030};
  const SensDist& d = table.Lookup(alice);
  EXPECT_DOUBLE_EQ(d[ex.v("MAM-pos")], 0.002);
  EXPECT_DOUBLE_EQ(d[ex.v("CX-neg")], 0.05);
  EXPECT_DOUBLE_EQ(d[ex.v("CX-pos")], 0.0003);
  EXPECT_DOUBLE_EQ(d[ex.v("BS-neg")], 0.2);
  EXPECT_DOUBLE_EQ(d[ex.v("BCM-pos")], 0.001);
}

TEST(BKsvTest, SameClassSameDistribution) {
  const QISchema schema = QISchema::Default();
  const auto boxes = DefaultClassBoxes(schema);
  ASSERT_EQ(boxes.size(), 18u);
  std::vector<BKsvTable::Entry> entries;
  for (std::size_t i = 0; i < boxes.size(); ++i) {
    std::vector<double> p(3, 0.0);
    p[i % 3] = 1.0;
    entries.push_back({boxes[i], SensDist::FromProbabilities(p)});
  }
  const BKsvTable table(schema, entries);
  const std::vector<int> a{45, 1, 60};
  const std::vector<int> b{54, 1, 69};
  const std::vector<int> c{55, 1, 60};
  EXPECT_EQ(table.ClassOf(a), table.ClassOf(b));
  EXPECT_EQ(table.Lookup(a), table.Lookup(b));
  EXPECT_NE(table.ClassOf(a), table.ClassOf(c));
}

TEST(BKsvTest, DefaultClassesAreTenValueBuckets) {
  const auto boxes = DefaultClassBoxes(QISchema::Default());
  ASSERT_EQ(boxes.size(), 18u);
  // Row-major over age, gender, weight.
  EXPECT_EQ(boxes[0][0], (Interval{45, 54}));
  EXPECT_EQ(boxes[0][1], (Interval{1, 1}));
  EXPECT_EQ(boxes[0][2], (Interval{60, 69}));
  EXPECT_EQ(boxes[1][2], (Interval{70, 79}));
  EXPECT_EQ(boxes[3][1], (Interval{2, 2}));
  EXPECT_EQ(boxes[17][0], (Interval{65, 74}));
  EXPECT_EQ(boxes[17][2], (Interval{80, 89}));
}

TEST(BKsvTest, UniformTable) {
  const BKsvTable table = BKsvTable::Uniform(QISchema::Default(), 4);
  const std::vector<int> qi{60, 2, 75};
  EXPECT_EQ(table.Lookup(qi), SensDist::Uniform(4));
}

TEST(BKsvTest, RejectsOutOfSchemaLookupAndBadPartitions) {
  const QISchema schema = QISchema::Default();
  const BKsvTable table = BKsvTable::Uniform(schema, 2);
  const std::vector<int> outside{80, 1, 70};
  EXPECT_THROW(table.Lookup(outside), Error);

  auto boxes = DefaultClassBoxes(schema);
  std::vector<BKsvTable::Entry> gap;
  for (std::size_t i = 1; i < boxes.size(); ++i) gap.push_back({boxes[i], SensDist::Uniform(2)});
  EXPECT_THROW(BKsvTable(schema, gap), Error);
  std::vector<BKsvTable::Entry> overlap;
  for (const auto& b : boxes) overlap.push_back({b, SensDist::Uniform(2)});
  overlap.push_back({boxes[0], SensDist::Uniform(2)});
  EXPECT_THROW(BKsvTable(schema, overlap), Error);
}

TEST(BKsvTest, JsonRoundTrip) {
  const QISchema schema = QISchema::Default();
  const SensitiveDomain domain({"x", "y", "z"});
  std::vector<BKsvTable::Entry> entries;
  int i = 0;
  for (const auto& b : DefaultClassBoxes(schema)) {
    const double a = 0.1 + 0.03 * i++;
    entries.push_back({b, SensDist::FromProbabilities({a, 0.5 - a / 3, 0.5 - 2 * a / 3})});
  }
  const BKsvTable table(schema, entries);
  std::ostringstream out;
  WriteBKsvJson(out, table, domain);
  std::istringstream in(out.str());
  SensitiveDomain back_domain;
  const BKsvTable back = ReadBKsvJson(in, schema, &back_domain);
  EXPECT_EQ(back_domain, domain);
  ASSERT_EQ(back.entries().size(), entries.size());
  for (std::size_t e = 0; e < entries.size(); ++e) {
    EXPECT_EQ(back.entries()[e].box, entries[e].box);
    for (int s = 0; s < 3; ++s) {
      EXPECT_NEAR(back.entries()[e].dist[s], entries[e].dist[s],
                  1e-12 * std::abs(entries[e].dist[s]));
    }
  }
}

// ---------------------------------------------------------------------------
// Sequence counting

View ViewOf(int release, const std::vector<std::pair<int, int>>& who_value) {
  View v{release, {}};
  int tuple = 0;
  for (const auto& [who, value] : who_value) {
    v.records.push_back({++tuple, Rid(who), {50, 1, 70}, value});
  }
  return v;
}

constexpr int kA = 0, kB = 1, kC = 2;

TEST(SpmCountTest, EmptyHistory) {
  const SequenceCounter c = SpmCount({});
  EXPECT_TRUE(c.counts().empty());
}

TEST(SpmCountTest, SingleRespondentTwoViews) {
  const std::vector<View> h{ViewOf(1, {{1, kA}}), ViewOf(2, {{1, kB}})};
  const SequenceCounter c = SpmCount(h);
  EXPECT_EQ(c.Count(Context{kA}), 1);
  EXPECT_EQ(c.Count(Context{kB}), 1);
  EXPECT_EQ(c.Count(Context{kA, kB}), 1);
  EXPECT_EQ(c.Count(Context{kB, kA}), 0);
  EXPECT_EQ(c.counts().size(), 3u);
}

TEST(SpmCountTest, CountsAreLinearInRespondents) {
  const std::vector<View> h{ViewOf(1, {{1, kA}, {2, kA}}), ViewOf(2, {{1, kB}, {2, kB}})};
  const SequenceCounter c = SpmCount(h);
  EXPECT_EQ(c.Count(Context{kA, kB}), 2);
  EXPECT_EQ(c.Count(Context{kA}), 2);
}

TEST(SpmCountTest, BoundedLengthKeepsRecentSuffixes) {
  const std::vector<View> h{ViewOf(1, {{1, kA}}), ViewOf(2, {{1, kB}}), ViewOf(3, {{1, kC}})};
  const SequenceCounter c = SpmCount(h, 2);
  EXPECT_EQ(c.Count(Context{kB, kC}), 1);
  EXPECT_EQ(c.Count(Context{kA, kB, kC}), 0);
  EXPECT_EQ(SpmCount(h).Count(Context{kA, kB, kC}), 1);
}

TEST(SpmConditionalTest, UnseenSequenceIsZero) {
  const SequenceCounter c = SpmCount(std::vector<View>{ViewOf(1, {{1, kA}})});
  EXPECT_EQ(SpmConditional(c, Context{kC}, kA), 0.0);
}

TEST(SpmConditionalTest, DirectDivision) {
  // count(<a>) = 4, count(<a,b>) = 3.
  std::vector<View> h{ViewOf(1, {{1, kA}, {2, kA}, {3, kA}, {4, kA}}),
                      ViewOf(2, {{1, kB}, {2, kB}, {3, kB}, {4, kC}})};
  h[1].records.pop_back();
  const SequenceCounter c = SpmCount(h);
  ASSERT_EQ(c.Count(Context{kA}), 4);
  ASSERT_EQ(c.Count(Context{kA, kB}), 3);
  EXPECT_DOUBLE_EQ(SpmConditional(c, Context{kA}, kB), 0.75);
}

TEST(SpmConditionalTest, DeterministicSuccessor) {
  // Respondent p records a at release p, b at release p + 1, then leaves.
  std::vector<View> h;
  for (int r = 1; r <= 5; ++r) {
    std::vector<std::pair<int, int>> rows;
    if (r <= 4) rows.push_back({r, kA});
    if (r >= 2) rows.push_back({r - 1, kB});
    h.push_back(ViewOf(r, rows));
  }
  const SequenceCounter c = SpmCount(h);
  ASSERT_EQ(c.Count(Context{kA}), 4);
  EXPECT_DOUBLE_EQ(SpmConditional(c, Context{kA}, kB), 1.0);
  EXPECT_DOUBLE_EQ(SpmConditional(c, Context{kA}, kA), 0.0);
}

TEST(SequenceCounterTest, RejectsOutOfOrderViews) {
  SequenceCounter c;
  c.Add(ViewOf(3, {{1, kA}}));
  EXPECT_THROW(c.Add(ViewOf(5, {{1, kA}})), Error);
  EXPECT_NO_THROW(c.Add(ViewOf(4, {{1, kA}})));
}

// ---------------------------------------------------------------------------
// BKseq

TEST(BKseqTest, DomainConfigFromJson) {
  const WorkedExample ex;
  std::ostringstream out;
  WriteBKseqJson(out, ex.bkseq, ex.domain);
  std::istringstream in(out.str());
  const BKseqTable t = ReadBKseqJson(in);
  const std::vector<int> mam{ex.v("MAM-pos")};
  const std::vector<int> cxn{ex.v("CX-neg")};
  EXPECT_DOUBLE_EQ(t.Predict(mam)[ex.v("BCM-pos")], 0.6);
  EXPECT_DOUBLE_EQ(t.Predict(cxn)[ex.v("BCM-pos")], 0.02);
}

TEST(BKseqTest, InvalidConfigNamesContext) {
  std::istringstream in(R"({"order":1,"domain":["a","b"],
    "conditionals":[{"context":["a"],"dist":{"a":0.7,"b":0.7}}]})");
  try {
    ReadBKseqJson(in);
    FAIL() << "expected an error";
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("<a>"), std::string::npos) << e.what();
  }
  std::istringstream too_long(R"({"order":1,"domain":["a","b"],
    "conditionals":[{"context":["a","b"],"dist":{"a":1}}]})");
  EXPECT_THROW(ReadBKseqJson(too_long), Error);
}

TEST(BKseqTest, PredictUsesLongestStoredSuffix) {
  const BKseqTable t(2, SensDist::Uniform(3),
                     {{{kA}, SensDist::PointMass(3, kA), 1.0},
                      {{kB, kA}, SensDist::PointMass(3, kC), 1.0}});
  const std::vector<int> h1{kC, kA};
  const std::vector<int> h2{kB, kA};
  const std::vector<int> h3{kB};
  EXPECT_EQ(t.Predict(h1), SensDist::PointMass(3, kA));
  EXPECT_EQ(t.Predict(h2), SensDist::PointMass(3, kC));
  EXPECT_EQ(t.Predict(h3), SensDist::Uniform(3));
  EXPECT_EQ(t.Predict({}), SensDist::Uniform(3));
}

TEST(BKseqTest, JsonRoundTripTo12Digits) {
  std::vector<BKseqTable::Conditional> cs;
  Rng rng(5);
  for (int a = 0; a < 3; ++a) {
    for (int b = 0; b < 3; ++b) {
      std::vector<double> raw{Uniform01(rng) + 0.01, Uniform01(rng) + 0.01, Uniform01(rng)};
      cs.push_back({{a, b}, Normalize(raw), 1.0 + Uniform01(rng)});
    }
  }
  const BKseqTable t(2, Normalize(std::vector<double>{1, 2, 3}), cs);
  const SensitiveDomain domain({"a", "b", "c"});
  std::ostringstream out;
  WriteBKseqJson(out, t, domain);
  std::istringstream in(out.str());
  const BKseqTable back = ReadBKseqJson(in);
  EXPECT_EQ(back.order(), 2);
  ASSERT_EQ(back.conditionals().size(), t.conditionals().size());
  for (std::size_t i = 0; i < cs.size(); ++i) {
    const auto& x = back.conditionals()[i];
    const auto& y = t.conditionals()[i];
    EXPECT_EQ(x.context, y.context);
    EXPECT_NEAR(x.weight, y.weight, 1e-12 * y.weight);
    for (int s = 0; s < 3; ++s) EXPECT_NEAR(x.dist[s], y.dist[s], 1e-12);
  }
  for (int s = 0; s < 3; ++s) EXPECT_NEAR(back.fallback()[s], t.fallback()[s], 1e-12);
}

// Order-3 table over {a,b,c} whose context weights are the joint
// probabilities of a second-order chain, truncated to order 1 and 2 and
// checked against direct summation.
TEST(BKseqTest, TruncationMatchesBruteForceMarginal) {
  Rng rng(17);
  auto random_dist = [&] {
    std::vector<double> raw{Uniform01(rng) + 0.05, Uniform01(rng) + 0.05, Uniform01(rng) + 0.05};
    return Normalize(raw);
  };
  const SensDist start = random_dist();
  std::map<Context, SensDist> step;  // second-order generator for weights
  for (int a = 0; a < 3; ++a) step[{a}] = random_dist();
  for (int a = 0; a < 3; ++a)
    for (int b = 0; b < 3; ++b) step[{a, b}] = random_dist();

  std::map<Context, double> joint;
  std::map<Context, SensDist> next;
  std::vector<BKseqTable::Conditional> cs;
  for (int a = 0; a < 3; ++a) {
    for (int b = 0; b < 3; ++b) {
      for (int c = 0; c < 3; ++c) {
        const Context ctx{a, b, c};
        joint[ctx] = start[a] * step[{a}][b] * step[{a, b}][c];
        next[ctx] = random_dist();
        cs.push_back({ctx, next[ctx], joint[ctx]});
      }
    }
  }
  const BKseqTable full(3, SensDist::Uniform(3), cs);

  const BKseqTable one = full.Truncate(1);
  EXPECT_EQ(one.order(), 1);
  for (int x = 0; x < 3; ++x) {
    std::vector<double> mass(3, 0.0);
    double w = 0.0;
    for (int a = 0; a < 3; ++a) {
      for (int b = 0; b < 3; ++b) {
        const Context ctx{a, b, x};
        for (int s = 0; s < 3; ++s) mass[s] += joint[ctx] * next[ctx][s];
        w += joint[ctx];
      }
    }
    const SensDist* got = one.Find(Context{x});
    ASSERT_NE(got, nullptr);
    for (int s = 0; s < 3; ++s) EXPECT_NEAR((*got)[s], mass[s] / w, 1e-12);
  }

  const BKseqTable two = full.Truncate(2);
  for (int b = 0; b < 3; ++b) {
    for (int x = 0; x < 3; ++x) {
      std::vector<double> mass(3, 0.0);
      double w = 0.0;
      for (int a = 0; a < 3; ++a) {
        const Context ctx{a, b, x};
        for (int s = 0; s < 3; ++s) mass[s] += joint[ctx] * next[ctx][s];
        w += joint[ctx];
      }
      const SensDist* got = two.Find(Context{b, x});
      ASSERT_NE(got, nullptr);
      for (int s = 0; s < 3; ++s) EXPECT_NEAR((*got)[s], mass[s] / w, 1e-12);
    }
  }
}

TEST(BKseqTest, TruncatingFirstOrderConfigIsIdentity) {
  const WorkedExample ex;
  const BKseqTable t = ex.bkseq.Truncate(1);
  ASSERT_EQ(t.conditionals().size(), ex.bkseq.conditionals().size());
  for (std::size_t i = 0; i < t.conditionals().size(); ++i) {
    EXPECT_EQ(t.conditionals()[i].context, ex.bkseq.conditionals()[i].context);
    EXPECT_EQ(t.conditionals()[i].dist, ex.bkseq.conditionals()[i].dist);
  }
  EXPECT_EQ(t.fallback(), ex.bkseq.fallback());
}

TEST(BKseqTest, TruncateToZeroKeepsOnlyFallback) {
  const WorkedExample ex;
  const BKseqTable t = ex.bkseq.Truncate(0);
  EXPECT_EQ(t.order(), 0);
  EXPECT_TRUE(t.conditionals().empty());
  const std::vector<int> h{ex.v("MAM-pos")};
  EXPECT_EQ(t.Predict(h), ex.bkseq.fallback());
}

// Simulates a first-order chain for 1000 respondents over 51 releases
// (50k transitions) and mines it back.
TEST(BuildBKseqTest, SpmRecoversMarkovChain) {
  const std::vector<std::vector<double>> matrix{
      {0.7, 0.2, 0.1}, {0.1, 0.6, 0.3}, {0.25, 0.25, 0.5}};
  Rng rng(99);
  std::vector<View> h;
  std::vector<int> state(1000);
  for (auto& s : state) s = static_cast<int>(UniformBelow(rng, 3));
  for (int r = 1; r <= 51; ++r) {
    View v{r, {}};
    for (int p = 0; p < 1000; ++p) {
      if (r > 1) state[p] = Categorical(rng, matrix[state[p]]);
      v.records.push_back({p + 1, Rid(p + 1), {50, 1, 70}, state[p]});
    }
    h.push_back(std::move(v));
  }
  const BKseqTable t = BuildBKseqFromHistory(h, 1, 3);
  for (int a = 0; a < 3; ++a) {
    const SensDist* d = t.Find(Context{a});
    ASSERT_NE(d, nullptr);
    for (int b = 0; b < 3; ++b) EXPECT_NEAR((*d)[b], matrix[a][b], 0.05);
  }
}

TEST(BuildBKseqTest, ZeroSupportFallsBackToFrequency) {
  const std::vector<View> h{ViewOf(1, {{1, kA}, {2, kA}, {3, kB}}), ViewOf(2, {{1, kB}})};
  const BKseqTable t = BuildBKseqFromHistory(h, 1, 3);
  const std::vector<int> unseen{kC};
  // 4 recorded values: a twice, b twice.
  EXPECT_EQ(t.Predict(unseen), Normalize(std::vector<double>{2, 2, 0}));
  EXPECT_EQ(t.Find(Context{kC}), nullptr);
}

// ---------------------------------------------------------------------------
// Incremental refresh

std::vector<View> RandomHistory(std::uint64_t seed, int releases, int people, int values) {
  Rng rng(seed);
  std::vector<View> h;
  for (int r = 1; r <= releases; ++r) {
    View v{r, {}};
    int tuple = 0;
    for (int p = 1; p <= people; ++p) {
      if (Uniform01(rng) < 0.3) continue;
      v.records.push_back({++tuple, Rid(p), {50, 1, 70},
                           static_cast<int>(UniformBelow(rng, values))});
    }
    h.push_back(std::move(v));
  }
  return h;
}

TEST(IncrementalRefreshTest, EqualsBatchAfterEachView) {
  const auto h = RandomHistory(3, 3, 40, 3);
  SequenceCounter counter;
  BKseqTable table(2, SensDist::Uniform(3), {});
  for (std::size_t i = 0; i < h.size(); ++i) {
    auto r = IncrementalRefresh(table, std::move(counter), h[i]);
    table = r.table;
    counter = r.counter;
    const std::span<const View> prefix(h.data(), i + 1);
    EXPECT_EQ(counter, SpmCount(prefix));
    const BKseqTable batch = BuildBKseq(SpmCount(prefix), 2, 3);
    ASSERT_EQ(table.conditionals().size(), batch.conditionals().size());
    for (std::size_t c = 0; c < batch.conditionals().size(); ++c) {
      EXPECT_EQ(table.conditionals()[c].context, batch.conditionals()[c].context);
      EXPECT_EQ(table.conditionals()[c].dist, batch.conditionals()[c].dist);
    }
  }
}

TEST(IncrementalRefreshTest, NewRespondentsAddOnlySingletons) {
  const std::vector<View> h{ViewOf(1, {{1, kA}, {2, kB}})};
  SequenceCounter counter = SpmCount(h);
  const auto before = counter.counts();
  const BKseqTable table = BuildBKseq(counter, 1, 3);
  const auto r = IncrementalRefresh(table, counter, ViewOf(2, {{3, kC}, {4, kA}}));
  for (const auto& [seq, n] : r.counter.counts()) {
    const auto it = before.find(seq);
    const std::int64_t old = it == before.end() ? 0 : it->second;
    if (n != old) EXPECT_EQ(seq.size(), 1u);
  }
  EXPECT_EQ(r.counter.Count(Context{kA}), 2);
  EXPECT_EQ(r.counter.Count(Context{kC}), 1);
}

TEST(IncrementalRefreshTest, EmptyViewChangesNothing) {
  const std::vector<View> h{ViewOf(1, {{1, kA}}), ViewOf(2, {{1, kB}})};
  const SequenceCounter counter = SpmCount(h);
  const BKseqTable table = BuildBKseq(counter, 1, 3);
  const auto r = IncrementalRefresh(table, counter, View{3, {}});
  EXPECT_EQ(r.counter.counts(), counter.counts());
  ASSERT_EQ(r.table.conditionals().size(), table.conditionals().size());
  EXPECT_EQ(r.table.fallback(), table.fallback());
}

TEST(IncrementalRefreshTest, RejectsOutOfOrderView) {
  const std::vector<View> h{ViewOf(1, {{1, kA}})};
  const SequenceCounter counter = SpmCount(h);
  const BKseqTable table = BuildBKseq(counter, 1, 3);
  EXPECT_THROW(IncrementalRefresh(table, counter, ViewOf(3, {{1, kB}})), Error);
}

TEST(BKseqScheduleTest, IncrementalMatchesBatchPrefixes) {
  const auto h = RandomHistory(8, 5, 30, 3);
  const BKseqSchedule s = BKseqSchedule::Incremental(h, 1, 3);
  for (int r = 1; r <= 5; ++r) {
    const BKseqTable batch =
        BuildBKseqFromHistory(std::span<const View>(h.data(), static_cast<std::size_t>(r)), 1, 3);
    const BKseqTable& got = s.AfterRelease(r);
    ASSERT_EQ(got.conditionals().size(), batch.conditionals().size());
    for (std::size_t c = 0; c < batch.conditionals().size(); ++c) {
      EXPECT_EQ(got.conditionals()[c].dist, batch.conditionals()[c].dist);
    }
    EXPECT_EQ(got.fallback(), batch.fallback());
  }
  EXPECT_THROW(s.AfterRelease(0), Error);
}

}  // namespace
}  // namespace serialanon
