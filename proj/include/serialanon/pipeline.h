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

// Experiment orchestration: knowledge variants, the in-memory
// anonymize / attack / evaluate chain, the file layout shared with the CLI
// subcommands, and the resumable plan runner.

#ifndef SERIALANON_PIPELINE_H_
#define SERIALANON_PIPELINE_H_

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "serialanon/adversary.h"
#include "serialanon/anonymizer.h"
#include "serialanon/datagen.h"
#include "serialanon/io.h"
#include "serialanon/provenance.h"
#include "serialanon/quality.h"

namespace serialanon {

// Which sequential knowledge a party holds.
struct KnowledgeSource {
  enum class Kind { kExact, kNStep, kSpmInternal, kSpmExternal };

  Kind kind = Kind::kExact;
  int steps = 0;  // nstep
  // spm-external from a freshly generated corpus ...
  int corpus_tuples = 0;
  std::uint64_t corpus_seed = 0;  // 0: derived from the data seed
  // ... or from an existing original-views file and its truth sidecar.
  std::string corpus_views;
  std::string corpus_truth;

  // "exact", "nstep:N", "spm-internal", "spm-external:TUPLES[:SEED]".
  static KnowledgeSource Parse(const std::string& text);
  std::string Name() const;
};

// "auto", "enumerate", "sample" or "closed-form".
PosteriorMethod ParsePosteriorMethod(const std::string& name);

// Sequential knowledge for a party given the generated dataset.
BKseqSchedule BuildSchedule(const KnowledgeSource& source, const GeneratedData& data,
                            const GeneratorConfig& config);

// One anonymized history in published form.
std::vector<ReleasedView> AnonymizeHistory(const GeneratedData& data, const QISchema& schema,
                                           const PrivacyParams& params,
                                           const BKseqSchedule& defender,
                                           const PosteriorOptions& posterior = {});

struct AttackEvaluation {
  AttackResult attack;
  MetricsReport metrics;
};

AttackEvaluation AttackAndEvaluate(std::span<const ReleasedView> released,
                                   const GeneratedData& data, const QISchema& schema,
                                   const BKseqSchedule& adversary,
                                   const PosteriorOptions& posterior = {},
                                   const EvaluateOptions& evaluate = {});

// Messages for parameters outside the experiment ranges l in [2,8];
// t-closeness t in [0.5,1]; JS-reduce t in [0.5,0.8], j in [0.2,0.8].
std::vector<std::string> ParameterWarnings(const PrivacyParams& params);

// Output of the generate step. Empty paths are skipped.
struct DataFiles {
  std::string views, truth, respondents, domain, bksv, bkseq, config;

  static DataFiles In(const std::string& dir);
};
void WriteGeneratedData(const GeneratedData& data, const GeneratorConfig& config,
                        const DataFiles& files, const Provenance& provenance);

struct MethodGrid {
  Method method = Method::kJsReduce;
  std::vector<int> k{2};
  std::vector<int> l{2};
  std::vector<double> t;
  std::vector<double> j;
  bool normalize_js = true;
  bool merge_remainder = true;

  // Cartesian product of the lists; parameters a method ignores are not
  // expanded.
  std::vector<PrivacyParams> Expand() const;
};

struct ExperimentPlan {
  GeneratorConfig generator;
  std::vector<std::uint64_t> seeds{1};
  std::string output_dir = "runs";
  std::vector<KnowledgeSource> defender{KnowledgeSource{}};
  std::vector<KnowledgeSource> adversary{KnowledgeSource{}};
  std::vector<MethodGrid> methods;
  PosteriorOptions posterior;
  EvaluateOptions evaluate;

  // Relative paths resolve against the plan file's directory.
  static ExperimentPlan Load(const std::string& path);
  static ExperimentPlan FromJson(const std::string& text, const std::string& base_dir);
  std::vector<std::string> Warnings() const;
};

struct PipelineOptions {
  int jobs = 1;
  std::ostream* log = nullptr;
};

struct PipelineResult {
  int cells = 0;
  int ran = 0;
  int skipped = 0;
  int failed = 0;
  std::vector<std::string> failures;

  // 0 success, 2 when some cells failed.
  int ExitCode() const { return failed > 0 ? 2 : 0; }
};

// Layout under output_dir:
//   seed-<s>/data/...                          generated dataset
//   seed-<s>/<method cell>/released.csv        anonymized history
//   seed-<s>/<method cell>/adv-<variant>/...   attack.json, metrics.json
//   summary.csv, plot.csv
// Stages whose stamp matches their inputs are skipped.
PipelineResult RunPipeline(const ExperimentPlan& plan, const PipelineOptions& options = {});

// Seeds from SERIALANON_SEED ("7" or "1,2,3"), if set.
std::optional<std::vector<std::uint64_t>> SeedOverrideFromEnv();

}  // namespace serialanon

#endif  // SERIALANON_PIPELINE_H_
