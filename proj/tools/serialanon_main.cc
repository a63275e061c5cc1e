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

// serialanon: command-line front end.
//
//   serialanon generate     synthetic views, truth, exact BKsv / BKseq
//   serialanon extract-bk   mine a BKseq table from original views
//   serialanon anonymize    JS-reduce or a baseline over a view history
//   serialanon attack       adversary posteriors for a released history
//   serialanon evaluate     gain, confidence, GCP and query error
//   serialanon pipeline     run an experiment plan
//
// Every flag can also be given in a TOML/INI file passed as --options, with
// one [section] per subcommand. Exit status: 0 success, 2 partial pipeline
// failure, 1 anything else.

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "serialanon/adversary.h"
#include "serialanon/anonymizer.h"
#include "serialanon/datagen.h"
#include "serialanon/io.h"
#include "serialanon/knowledge.h"
#include "serialanon/model.h"
#include "serialanon/pipeline.h"
#include "serialanon/provenance.h"
#include "serialanon/quality.h"

namespace serialanon {
namespace {

std::ifstream OpenInput(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open '" + path + "'");
  return in;
}

template <typename F>
std::string Render(F&& write) {
  std::ostringstream out;
  write(out);
  return out.str();
}

// "gen.csv" -> "gen_truth.csv".
std::string TruthPathFor(const std::string& path) {
  const auto dot = path.rfind('.');
  const auto slash = path.find_last_of('/');
  if (dot == std::string::npos || (slash != std::string::npos && dot < slash)) {
    return path + "_truth";
  }
  return path.substr(0, dot) + "_truth" + path.substr(dot);
}

QISchema LoadSchema(const std::string& generator_config) {
  if (generator_config.empty()) return QISchema::Default();
  auto in = OpenInput(generator_config);
  return ReadGeneratorConfig(in).schema;
}

struct DomainSources {
  std::string domain, bksv, bkseq, views;
};

SensitiveDomain LoadDomain(const DomainSources& s, const QISchema& schema) {
  SensitiveDomain domain;
  if (!s.domain.empty()) {
    auto in = OpenInput(s.domain);
    return ReadDomainJson(in);
  }
  if (!s.bksv.empty()) {
    auto in = OpenInput(s.bksv);
    ReadBKsvJson(in, schema, &domain);
    return domain;
  }
  if (!s.bkseq.empty()) {
    auto in = OpenInput(s.bkseq);
    ReadBKseqJson(in, &domain);
    return domain;
  }
  if (!s.views.empty()) {
    auto in = OpenInput(s.views);
    return InferDomain(in);
  }
  throw Error("no sensitive domain: pass --domain");
}

std::vector<View> LoadOriginals(const std::string& views, const std::string& truth,
                                const QISchema& schema, const SensitiveDomain& domain) {
  auto v = OpenInput(views);
  auto t = OpenInput(truth);
  return ReadOriginalViews(v, t, schema, domain);
}

BKseqTable LoadBKseq(const std::string& path, const SensitiveDomain& domain) {
  auto in = OpenInput(path);
  SensitiveDomain file_domain;
  BKseqTable table = ReadBKseqJson(in, &file_domain);
  if (!(file_domain == domain)) throw Error(path + ": domain does not match");
  return table;
}

BKsvTable LoadBKsv(const std::string& path, const QISchema& schema,
                   const SensitiveDomain& domain) {
  auto in = OpenInput(path);
  SensitiveDomain file_domain;
  BKsvTable table = ReadBKsvJson(in, schema, &file_domain);
  if (!(file_domain == domain)) throw Error(path + ": domain does not match");
  return table;
}

struct PosteriorFlags {
  std::string method = "auto";
  PosteriorOptions options;

  void Register(CLI::App* app) {
    app->add_option("--posterior", method, "auto, enumerate, sample or closed-form")
        ->capture_default_str();
    app->add_option("--exact-limit", options.exact_limit,
                    "largest group enumerated exactly under auto")
        ->capture_default_str();
    app->add_option("--budget", options.sample_budget, "sampled configurations per group")
        ->capture_default_str();
    app->add_option("--posterior-seed", options.seed)->capture_default_str();
  }
  PosteriorOptions Resolve() const {
    PosteriorOptions o = options;
    o.method = ParsePosteriorMethod(method);
    if (o.exact_limit < 1) throw Error("--exact-limit must be >= 1");
    if (o.sample_budget < 1) throw Error("--budget must be >= 1");
    return o;
  }
  void Stamp(Provenance& p) const {
    p.Set("posterior.method", method);
    p.Set("posterior.exact_limit", static_cast<std::int64_t>(options.exact_limit));
    p.Set("posterior.sample_budget", static_cast<std::int64_t>(options.sample_budget));
    p.Set("posterior.seed", static_cast<std::int64_t>(options.seed));
  }
};

void Warn(const std::vector<std::string>& warnings) {
  for (const auto& w : warnings) std::cerr << "warning: " << w << '\n';
}

// --------------------------------------------------------------------------

struct GenerateArgs {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out_dir;
  DataFiles files;
};

int RunGenerate(const GenerateArgs& a) {
  GeneratorConfig cfg = GeneratorConfig::PaperScale();
  if (!a.config.empty()) {
    auto in = OpenInput(a.config);
    cfg = ReadGeneratorConfig(in);
  }
  if (a.seed) cfg.seed = *a.seed;
  DataFiles files = a.out_dir.empty() ? DataFiles{} : DataFiles::In(a.out_dir);
  auto pick = [](const std::string& flag, std::string& dst) {
    if (!flag.empty()) dst = flag;
  };
  pick(a.files.views, files.views);
  pick(a.files.truth, files.truth);
  pick(a.files.respondents, files.respondents);
  pick(a.files.domain, files.domain);
  pick(a.files.bksv, files.bksv);
  pick(a.files.bkseq, files.bkseq);
  pick(a.files.config, files.config);
  if (files.views.empty() && files.truth.empty() && files.bksv.empty() && files.bkseq.empty()) {
    throw Error("generate: nothing to write (use --out-dir or --out-views etc.)");
  }
  if (!a.out_dir.empty()) std::filesystem::create_directories(a.out_dir);
  const GeneratedData data = Generate(cfg);
  Provenance prov;
  prov.Set("seed", static_cast<std::int64_t>(cfg.seed));
  prov.Set("generator", HexDigest(Fnv1a(Render([&](std::ostream& o) {
             WriteGeneratorConfig(o, cfg);
           }))));
  if (!a.config.empty()) prov.Input("config", a.config);
  WriteGeneratedData(data, cfg, files, prov);
  std::size_t tuples = 0;
  for (const auto& v : data.history) tuples += v.records.size();
  std::cerr << "generated " << data.history.size() << " views, " << tuples << " tuples, "
            << data.registry.size() << " respondents\n";
  return 0;
}

struct ExtractArgs {
  std::string source, truth, domain, schema, out;
  int order = 1;
};

int RunExtract(const ExtractArgs& a) {
  const QISchema schema = LoadSchema(a.schema);
  const SensitiveDomain domain = LoadDomain({a.domain, "", "", a.source}, schema);
  const auto history = LoadOriginals(a.source, a.truth, schema, domain);
  const BKseqTable table = BuildBKseqFromHistory(history, a.order, domain.size());
  WriteFile(a.out, Render([&](std::ostream& o) { WriteBKseqJson(o, table, domain); }));
  std::cerr << "extracted " << table.conditionals().size() << " contexts of order <= "
            << a.order << '\n';
  return 0;
}

struct AnonymizeArgs {
  std::string method = "jsreduce";
  std::string views, truth, respondents, bksv, bkseq, domain, schema;
  std::optional<int> k, l;
  std::optional<double> t, j;
  bool js_raw = false;
  bool no_merge = false;
  std::string out, out_truth, report;
  PosteriorFlags posterior;
};

int RunAnonymize(const AnonymizeArgs& a) {
  const auto method = ParseMethod(a.method);
  if (!method) throw Error("unknown method '" + a.method + "' (jsreduce, ldiv, tclos)");
  PrivacyParams params = PrivacyParams::Defaults(*method);
  if (a.k) params.k = *a.k;
  if (a.l) params.l = *a.l;
  if (a.t) params.t = *a.t;
  if (a.j) params.j = *a.j;
  params.normalize_js = !a.js_raw;
  params.merge_remainder = !a.no_merge;
  params.Validate();
  Warn(ParameterWarnings(params));

  const QISchema schema = LoadSchema(a.schema);
  const SensitiveDomain domain = LoadDomain({a.domain, a.bksv, a.bkseq, a.views}, schema);
  const auto history = LoadOriginals(a.views, a.truth, schema, domain);
  const PosteriorOptions posterior = a.posterior.Resolve();

  std::vector<GeneralizedView> generalized;
  if (params.method == Method::kJsReduce) {
    if (a.bksv.empty() || a.bkseq.empty()) throw Error("jsreduce needs --bksv and --bkseq");
    RespondentRegistry registry;
    if (!a.respondents.empty()) {
      auto in = OpenInput(a.respondents);
      registry = ReadRespondents(in, schema);
    } else {
      registry = RegistryOf(history);
    }
    const KnowledgeMap priors = PriorsFromBKsv(LoadBKsv(a.bksv, schema, domain), registry);
    generalized =
        JsReduceHistory(history, priors, BKseqSchedule::Fixed(LoadBKseq(a.bkseq, domain)),
                        params, schema, domain.size(), posterior);
  } else {
    generalized = BaselineHistory(history, params, schema, domain.size());
  }
  std::vector<ReleasedView> released;
  for (std::size_t i = 0; i < generalized.size(); ++i) {
    released.push_back(Release(generalized[i], history[i]));
  }

  Provenance prov;
  prov.Set("method", a.method);
  prov.Set("k", static_cast<std::int64_t>(params.k));
  if (params.method == Method::kLDiversity) prov.Set("l", static_cast<std::int64_t>(params.l));
  if (params.method != Method::kLDiversity) prov.Set("t", params.t);
  if (params.method == Method::kJsReduce) {
    prov.Set("j", params.j);
    prov.Set("js_normalized", std::string(params.normalize_js ? "true" : "false"));
    prov.Input("bksv", a.bksv);
    prov.Input("bkseq", a.bkseq);
    a.posterior.Stamp(prov);
  }
  prov.Set("merge_remainder", std::string(params.merge_remainder ? "true" : "false"));
  prov.Input("views", a.views);
  const auto header = prov.Lines();
  WriteFile(a.out, Render([&](std::ostream& o) {
              WriteGeneralizedViews(o, released, schema, domain, header);
            }));
  const std::string truth_path = a.out_truth.empty() ? TruthPathFor(a.out) : a.out_truth;
  WriteFile(truth_path,
            Render([&](std::ostream& o) { WriteTruth(o, TruthOf(released), header); }));

  nlohmann::ordered_json report;
  report["provenance"] = prov.fields();
  report["releases"] = nlohmann::ordered_json::array();
  int suppressed = 0;
  for (const auto& r : released) {
    suppressed += r.view.suppressed;
    report["releases"].push_back({{"release", r.view.release},
                                  {"groups", r.view.groups.size()},
                                  {"released", r.view.released_tuples()},
                                  {"suppressed", r.view.suppressed}});
  }
  if (!a.report.empty()) WriteFile(a.report, report.dump(1) + "\n");
  std::cerr << "anonymized " << released.size() << " releases, " << suppressed
            << " tuples suppressed\n";
  return 0;
}

struct AttackArgs {
  std::string released, truth, respondents, bksv, bkseq, domain, schema, out;
  PosteriorFlags posterior;
};

int RunAttack(const AttackArgs& a) {
  const QISchema schema = LoadSchema(a.schema);
  const SensitiveDomain domain = LoadDomain({a.domain, a.bksv, a.bkseq, ""}, schema);
  auto gin = OpenInput(a.released);
  auto views = ReadGeneralizedViews(gin, schema, domain);
  auto tin = OpenInput(a.truth);
  AttachMembership(views, ReadTruth(tin));
  auto rin = OpenInput(a.respondents);
  const RespondentRegistry registry = ReadRespondents(rin, schema);
  const KnowledgeMap priors = PriorsFromBKsv(LoadBKsv(a.bksv, schema, domain), registry);
  const AttackResult result =
      AttackHistory(views, priors, BKseqSchedule::Fixed(LoadBKseq(a.bkseq, domain)),
                    domain.size(), a.posterior.Resolve());
  Provenance prov;
  prov.Input("released", a.released);
  prov.Input("bksv", a.bksv);
  prov.Input("bkseq", a.bkseq);
  a.posterior.Stamp(prov);
  WriteFile(a.out, Render([&](std::ostream& o) {
              WriteAttackJson(o, result, domain, prov.fields());
            }));
  int degenerate = 0;
  for (const auto& r : result.releases) degenerate += r.degenerate_groups;
  std::cerr << "attacked " << result.releases.size() << " releases";
  if (degenerate > 0) std::cerr << " (" << degenerate << " zero-confidence groups)";
  std::cerr << '\n';
  return 0;
}

struct EvaluateArgs {
  std::string released, released_truth, views, truth, attack, domain, schema, out, plot;
  std::string method = "method";
  int queries = 10000;
  std::vector<double> selectivity{0.01, 0.05, 0.10};
  std::uint64_t query_seed = 7;
  std::string homogeneous = "exclude";
};

int RunEvaluate(const EvaluateArgs& a) {
  const QISchema schema = LoadSchema(a.schema);
  const SensitiveDomain domain = LoadDomain({a.domain, "", "", a.views}, schema);
  const auto originals = LoadOriginals(a.views, a.truth, schema, domain);
  auto gin = OpenInput(a.released);
  auto views = ReadGeneralizedViews(gin, schema, domain);
  auto tin = OpenInput(a.released_truth.empty() ? TruthPathFor(a.released) : a.released_truth);
  const TruthTable truth = ReadTruth(tin);
  AttachMembership(views, truth);

  EvaluateOptions options;
  if (a.homogeneous == "exclude") {
    options.homogeneous = HomogeneousPolicy::kExclude;
  } else if (a.homogeneous == "zero") {
    options.homogeneous = HomogeneousPolicy::kCountAsZero;
  } else {
    throw Error("--homogeneous must be 'exclude' or 'zero'");
  }
  options.queries.queries = a.queries;
  options.queries.selectivities = a.selectivity;
  options.queries.seed = a.query_seed;
  options.run_queries = a.queries > 0;

  std::optional<PosteriorTable> posteriors;
  if (!a.attack.empty()) {
    auto in = OpenInput(a.attack);
    posteriors = ReadAttackPosteriors(in, domain);
  }
  const MetricsReport report = Evaluate(views, originals, truth,
                                        posteriors ? &*posteriors : nullptr, schema, options);
  Provenance prov;
  prov.Input("released", a.released);
  prov.Input("views", a.views);
  if (!a.attack.empty()) prov.Input("attack", a.attack);
  prov.Set("queries", static_cast<std::int64_t>(a.queries));
  prov.Set("query_seed", static_cast<std::int64_t>(a.query_seed));
  prov.Set("homogeneous", a.homogeneous);
  WriteFile(a.out, Render([&](std::ostream& o) { WriteMetricsJson(o, report, prov.fields()); }));
  if (!a.plot.empty()) {
    WriteFile(a.plot, Render([&](std::ostream& o) {
                for (const auto& line : prov.Lines()) o << "# " << line << '\n';
                WritePlotCsv(o, report, a.method);
              }));
  }
  return 0;
}

struct PipelineArgs {
  std::string plan;
  int jobs = 1;
  std::string output;
};

int RunPipelineCommand(const PipelineArgs& a) {
  ExperimentPlan plan = ExperimentPlan::Load(a.plan);
  if (auto seeds = SeedOverrideFromEnv()) plan.seeds = *seeds;
  if (!a.output.empty()) plan.output_dir = a.output;
  if (a.jobs < 1) throw Error("--jobs must be >= 1");
  PipelineOptions options;
  options.jobs = a.jobs;
  options.log = &std::cerr;
  const PipelineResult result = RunPipeline(plan, options);
  return result.ExitCode();
}

int RunDefaultConfig(const std::string& scale, const std::string& out) {
  GeneratorConfig cfg;
  if (scale == "paper") {
    cfg = GeneratorConfig::PaperScale();
  } else if (scale == "desk") {
    cfg = GeneratorConfig::DeskScale();
  } else {
    throw Error("default-config: scale must be 'paper' or 'desk'");
  }
  const std::string text = Render([&](std::ostream& o) { WriteGeneratorConfig(o, cfg); });
  if (out.empty()) {
    std::cout << text;
  } else {
    WriteFile(out, text);
  }
  return 0;
}

}  // namespace
}  // namespace serialanon

int main(int argc, char** argv) {
  using namespace serialanon;
  CLI::App app{"Serial-release anonymization under sequential background knowledge"};
  app.set_version_flag("--version", std::string(kToolVersion));
  app.set_config("--options", "", "TOML/INI file with flag values");
  app.require_subcommand(1);

  GenerateArgs gen;
  auto* g = app.add_subcommand("generate", "Generate a synthetic view history");
  g->add_option("--config", gen.config, "generator config JSON (default: paper scale)");
  g->add_option("--seed", gen.seed, "overrides the config seed");
  g->add_option("--out-dir", gen.out_dir, "write every output under this directory");
  g->add_option("--out-views", gen.files.views);
  g->add_option("--out-truth", gen.files.truth);
  g->add_option("--out-respondents", gen.files.respondents);
  g->add_option("--out-domain", gen.files.domain);
  g->add_option("--out-bksv", gen.files.bksv);
  g->add_option("--out-bkseq", gen.files.bkseq);
  g->add_option("--out-config", gen.files.config, "resolved generator config");

  ExtractArgs ext;
  auto* e = app.add_subcommand("extract-bk", "Mine sequential knowledge from original views");
  e->add_option("--source", ext.source, "original views CSV")->required();
  e->add_option("--truth", ext.truth, "truth sidecar of --source")->required();
  e->add_option("--order", ext.order)->capture_default_str()->check(CLI::NonNegativeNumber);
  e->add_option("--domain", ext.domain, "domain JSON (default: inferred)");
  e->add_option("--schema", ext.schema, "generator config to take the QI schema from");
  e->add_option("--out", ext.out)->required();

  AnonymizeArgs anon;
  auto* an = app.add_subcommand("anonymize", "Generalize a view history");
  an->add_option("--method", anon.method, "jsreduce, ldiv or tclos")->capture_default_str();
  an->add_option("--views", anon.views)->required();
  an->add_option("--truth", anon.truth)->required();
  an->add_option("--respondents", anon.respondents);
  an->add_option("--bksv", anon.bksv);
  an->add_option("--bkseq", anon.bkseq);
  an->add_option("--domain", anon.domain);
  an->add_option("--schema", anon.schema);
  an->add_option("-k", anon.k);
  an->add_option("-l", anon.l);
  an->add_option("-t", anon.t);
  an->add_option("-j", anon.j);
  an->add_flag("--js-raw", anon.js_raw, "compare j against unnormalized JS");
  an->add_flag("--no-merge", anon.no_merge, "suppress remainders instead of merging");
  an->add_option("--out", anon.out)->required();
  an->add_option("--out-truth", anon.out_truth, "released truth (default: <out>_truth)");
  an->add_option("--report", anon.report, "suppression report JSON");
  anon.posterior.Register(an);

  AttackArgs atk;
  auto* at = app.add_subcommand("attack", "Run the adversary over a released history");
  at->add_option("--released", atk.released)->required();
  at->add_option("--truth", atk.truth, "released truth sidecar")->required();
  at->add_option("--respondents", atk.respondents)->required();
  at->add_option("--bksv", atk.bksv)->required();
  at->add_option("--bkseq", atk.bkseq)->required();
  at->add_option("--domain", atk.domain);
  at->add_option("--schema", atk.schema);
  at->add_option("--out", atk.out)->required();
  atk.posterior.Register(at);

  EvaluateArgs ev;
  auto* ea = app.add_subcommand("evaluate", "Privacy and utility metrics");
  ea->add_option("--released", ev.released)->required();
  ea->add_option("--released-truth", ev.released_truth, "default: <released>_truth");
  ea->add_option("--views", ev.views, "original views")->required();
  ea->add_option("--truth", ev.truth, "truth sidecar of --views")->required();
  ea->add_option("--attack", ev.attack, "attack JSON; omit for utility only");
  ea->add_option("--domain", ev.domain);
  ea->add_option("--schema", ev.schema);
  ea->add_option("--out", ev.out)->required();
  ea->add_option("--plot", ev.plot, "plot CSV (release,method,gain,confidence)");
  ea->add_option("--method", ev.method, "label for the plot CSV")->capture_default_str();
  ea->add_option("--queries", ev.queries)->capture_default_str()->check(CLI::NonNegativeNumber);
  ea->add_option("--selectivity", ev.selectivity)
      ->delimiter(',')
      ->capture_default_str()
      ->check(CLI::Range(0.0, 1.0));
  ea->add_option("--query-seed", ev.query_seed)->capture_default_str();
  ea->add_option("--homogeneous", ev.homogeneous, "exclude or zero")->capture_default_str();

  PipelineArgs pipe;
  auto* p = app.add_subcommand("pipeline", "Run an experiment plan");
  p->add_option("--plan", pipe.plan)->required();
  p->add_option("--jobs", pipe.jobs)->capture_default_str();
  p->add_option("--output", pipe.output, "overrides the plan's output directory");

  std::string scale = "paper", scale_out;
  auto* dc = app.add_subcommand("default-config", "Print a built-in generator config");
  dc->add_option("scale", scale, "paper or desk")->capture_default_str();
  dc->add_option("--out", scale_out);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& err) {
    return app.exit(err) == 0 ? 0 : 1;
  }

  try {
    if (g->parsed()) return RunGenerate(gen);
    if (e->parsed()) return RunExtract(ext);
    if (an->parsed()) return RunAnonymize(anon);
    if (at->parsed()) return RunAttack(atk);
    if (ea->parsed()) return RunEvaluate(ev);
    if (p->parsed()) return RunPipelineCommand(pipe);
    if (dc->parsed()) return RunDefaultConfig(scale, scale_out);
  } catch (const std::exception& err) {
    std::cerr << "error: " << err.what() << '\n';
    return 1;
  }
  return 1;
}
