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

// Synthetic longitudinal medical dataset: a cohort of patients with static
// QI attributes whose disease stage evolves weekly under class-specific
// transition rules, with deceased / discharged as absorbing exits.

#ifndef SERIALANON_DATAGEN_H_
#define SERIALANON_DATAGEN_H_

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "serialanon/io.h"
#include "serialanon/knowledge.h"
#include "serialanon/model.h"

namespace serialanon {

struct DiseaseSpec {
  std::string name;
  int stages = 1;
};

// Next-value distribution for patients whose most recent values end with
// `context`. The longest matching rule wins.
struct TransitionRule {
  Context context;
  SensDist dist;
};

struct PatientClass {
  std::vector<Interval> box;
  double weight = 1.0;  // share of arrivals
  SensDist entry;       // distribution of the first recorded value
  std::vector<TransitionRule> transitions;
};

struct GeneratorConfig {
  int weeks = 24;
  int tuples_per_week = 5000;
  // Upper bound on new patients per week; exceeding it is an error.
  int arrival_rate = 1500;
  std::uint64_t seed = 42;
  QISchema schema = QISchema::Default();
  std::vector<DiseaseSpec> diseases;
  std::vector<std::string> terminals{"deceased", "discharged"};
  // Longest rule context.
  int order = 1;
  std::vector<PatientClass> classes;

  // Stage labels "<disease>-<k>" in declaration order, then terminals.
  SensitiveDomain Domain() const;
  // Throws Error naming the offending class or rule.
  void Validate() const;

  // Hand-authored defaults (18 classes, 19 values, third-order stage
  // dwelling); not clinical data.
  static GeneratorConfig PaperScale();
  static GeneratorConfig DeskScale();
};

GeneratorConfig ReadGeneratorConfig(std::istream& in);
void WriteGeneratorConfig(std::ostream& out, const GeneratorConfig& config);

struct ExactKnowledge {
  BKsvTable bksv;    // per-class entry distribution
  BKseqTable bkseq;  // population-level conditionals of order config.order
};

// Expected-count derivation: each class's rule chain is propagated over
// patient ages, ages are weighted by the expected number of patients that
// reach them within the horizon, and classes by their arrival share.
ExactKnowledge DeriveExactKnowledge(const GeneratorConfig& config);

// Expected number of distinct patients over the horizon under the same
// expected-value recursion.
double ExpectedRespondents(const GeneratorConfig& config);

struct GeneratedData {
  SensitiveDomain domain;
  std::vector<View> history;
  RespondentRegistry registry;
  ExactKnowledge knowledge;
};

GeneratedData Generate(const GeneratorConfig& config);

}  // namespace serialanon

#endif  // SERIALANON_DATAGEN_H_
