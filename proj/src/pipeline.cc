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

#include "serialanon/pipeline.h"

#include <atomic>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <memory>
#include <mutex>
#include <sstream>
#include <thread>

#include "json_util.h"
#include "serialanon/random.h"

namespace serialanon {
namespace fs = std::filesystem;
namespace {

using internal::ordered_json;

std::string FormatNumber(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

std::string ToString(const std::function<void(std::ostream&)>& write) {
  std::ostringstream out;
  write(out);
  return out.str();
}

// Writes only when the contents differ, so reruns leave files untouched.
void WriteIfChanged(const std::string& path, const std::string& contents) {
  if (fs::exists(path)) {
    try {
      if (ReadFile(path) == contents) return;
    } catch (const Error&) {
    }
  }
  WriteFile(path, contents);
}

std::string JoinPath(const std::string& a, const std::string& b) {
  return (fs::path(a) / b).string();
}

std::string ResolvePath(const std::string& base_dir, const std::string& p) {
  if (p.empty() || fs::path(p).is_absolute() || base_dir.empty()) return p;
  return (fs::path(base_dir) / p).string();
}

std::string ParamsName(const PrivacyParams& p) {
  std::string name(MethodName(p.method));
  name += "_k" + std::to_string(p.k);
  switch (p.method) {
    case Method::kLDiversity:
      name += "_l" + std::to_string(p.l);
      break;
    case Method::kTCloseness:
      name += "_t" + FormatNumber(p.t);
      break;
    case Method::kJsReduce:
      name += "_t" + FormatNumber(p.t) + "_j" + FormatNumber(p.j);
      if (!p.normalize_js) name += "raw";
      break;
  }
  if (!p.merge_remainder) name += "_nomerge";
  return name;
}

void AddParams(Provenance& prov, const PrivacyParams& p) {
  prov.Set("method", std::string(MethodName(p.method)));
  prov.Set("k", static_cast<std::int64_t>(p.k));
  if (p.method == Method::kLDiversity) prov.Set("l", static_cast<std::int64_t>(p.l));
  if (p.method != Method::kLDiversity) prov.Set("t", p.t);
  if (p.method == Method::kJsReduce) {
    prov.Set("j", p.j);
    prov.Set("js_normalized", std::string(p.normalize_js ? "true" : "false"));
  }
  prov.Set("merge_remainder", std::string(p.merge_remainder ? "true" : "false"));
  prov.Set("hilbert_bits", static_cast<std::int64_t>(p.hilbert_bits));
}

void AddPosterior(Provenance& prov, const PosteriorOptions& o) {
  static const char* kNames[] = {"auto", "enumerate", "sample", "closed-form"};
  prov.Set("posterior.method", std::string(kNames[static_cast<int>(o.method)]));
  prov.Set("posterior.exact_limit", static_cast<std::int64_t>(o.exact_limit));
  prov.Set("posterior.sample_budget", static_cast<std::int64_t>(o.sample_budget));
  prov.Set("posterior.seed", static_cast<std::int64_t>(o.seed));
}

void AddEvaluate(Provenance& prov, const EvaluateOptions& o) {
  prov.Set("queries", static_cast<std::int64_t>(o.queries.queries));
  std::string sel;
  for (double f : o.queries.selectivities) sel += (sel.empty() ? "" : ";") + FormatNumber(f);
  prov.Set("selectivities", sel);
  prov.Set("query_seed", static_cast<std::int64_t>(o.queries.seed));
  prov.Set("homogeneous",
           std::string(o.homogeneous == HomogeneousPolicy::kExclude ? "exclude" : "zero"));
}

std::vector<double> NumberList(const nlohmann::json& j) {
  if (j.is_array()) return j.get<std::vector<double>>();
  return {j.get<double>()};
}

std::vector<int> IntList(const nlohmann::json& j) {
  if (j.is_array()) return j.get<std::vector<int>>();
  return {j.get<int>()};
}

KnowledgeSource SourceFromJson(const nlohmann::json& j, const std::string& base_dir) {
  if (j.is_string()) return KnowledgeSource::Parse(j.get<std::string>());
  KnowledgeSource s = KnowledgeSource::Parse(j.at("kind").get<std::string>());
  s.steps = j.value("steps", s.steps);
  s.corpus_tuples = j.value("tuples", s.corpus_tuples);
  s.corpus_seed = j.value("seed", s.corpus_seed);
  if (j.contains("views")) {
    s.corpus_views = ResolvePath(base_dir, j.at("views").get<std::string>());
    s.corpus_truth = ResolvePath(base_dir, j.at("truth").get<std::string>());
  }
  if (s.kind == KnowledgeSource::Kind::kNStep && s.steps < 1) {
    throw Error("knowledge source nstep needs steps >= 1");
  }
  return s;
}

class Logger {
 public:
  explicit Logger(std::ostream* out) : out_(out) {}
  void operator()(const std::string& line) {
    if (!out_) return;
    std::lock_guard<std::mutex> lock(mu_);
    *out_ << line << '\n' << std::flush;
  }

 private:
  std::ostream* out_;
  std::mutex mu_;
};

bool StampMatches(const std::string& dir, const std::string& digest,
                  const std::vector<std::string>& outputs) {
  const std::string stamp = JoinPath(dir, ".stamp");
  if (!fs::exists(stamp)) return false;
  for (const auto& o : outputs) {
    if (!fs::exists(JoinPath(dir, o))) return false;
  }
  try {
    return ReadFile(stamp) == digest + "\n";
  } catch (const Error&) {
    return false;
  }
}

void WriteStamp(const std::string& dir, const std::string& digest) {
  WriteFile(JoinPath(dir, ".stamp"), digest + "\n");
}

}  // namespace

PosteriorMethod ParsePosteriorMethod(const std::string& s) {
  if (s == "auto") return PosteriorMethod::kAuto;
  if (s == "enumerate" || s == "exact") return PosteriorMethod::kEnumerate;
  if (s == "sample" || s == "sampled") return PosteriorMethod::kSample;
  if (s == "closed-form") return PosteriorMethod::kClosedForm;
  throw Error("unknown posterior method '" + s + "'");
}


// ---------------------------------------------------------------------------
// Knowledge sources

KnowledgeSource KnowledgeSource::Parse(const std::string& text) {
  KnowledgeSource s;
  std::vector<std::string> parts;
  std::stringstream ss(text);
  std::string part;
  while (std::getline(ss, part, ':')) parts.push_back(part);
  if (parts.empty()) throw Error("empty knowledge source");
  const std::string& kind = parts[0];
  auto number = [&](std::size_t i) -> long long {
    try {
      return std::stoll(parts.at(i));
    } catch (const std::exception&) {
      throw Error("knowledge source '" + text + "': expected a number");
    }
  };
  if (kind == "exact" && parts.size() == 1) {
    s.kind = Kind::kExact;
  } else if (kind == "nstep" && parts.size() <= 2) {
    s.kind = Kind::kNStep;
    s.steps = parts.size() == 2 ? static_cast<int>(number(1)) : 1;
    if (s.steps < 1) throw Error("knowledge source '" + text + "': steps must be >= 1");
  } else if (kind == "spm-internal" && parts.size() == 1) {
    s.kind = Kind::kSpmInternal;
  } else if (kind == "spm-external" && parts.size() <= 3) {
    s.kind = Kind::kSpmExternal;
    if (parts.size() >= 2) s.corpus_tuples = static_cast<int>(number(1));
    if (parts.size() == 3) s.corpus_seed = static_cast<std::uint64_t>(number(2));
  } else {
    throw Error("unknown knowledge source '" + text +
                "' (expected exact, nstep:N, spm-internal, spm-external:TUPLES[:SEED])");
  }
  return s;
}

std::string KnowledgeSource::Name() const {
  switch (kind) {
    case Kind::kExact:
      return "exact";
    case Kind::kNStep:
      return "nstep" + std::to_string(steps);
    case Kind::kSpmInternal:
      return "spm-internal";
    case Kind::kSpmExternal:
      if (!corpus_views.empty()) {
        return "spm-external-" + HexDigest(Fnv1a(corpus_views)).substr(0, 8);
      }
      return "spm-external" + (corpus_tuples > 0 ? "-" + std::to_string(corpus_tuples) : "") +
             (corpus_seed != 0 ? "-s" + std::to_string(corpus_seed) : "");
  }
  return "unknown";
}

BKseqSchedule BuildSchedule(const KnowledgeSource& source, const GeneratedData& data,
                            const GeneratorConfig& config) {
  const std::size_t d = data.domain.size();
  switch (source.kind) {
    case KnowledgeSource::Kind::kExact:
      return BKseqSchedule::Fixed(data.knowledge.bkseq);
    case KnowledgeSource::Kind::kNStep:
      return BKseqSchedule::Fixed(data.knowledge.bkseq.Truncate(source.steps));
    case KnowledgeSource::Kind::kSpmInternal:
      return BKseqSchedule::Incremental(data.history, config.order, d);
    case KnowledgeSource::Kind::kSpmExternal: {
      if (!source.corpus_views.empty()) {
        std::ifstream views(source.corpus_views), truth(source.corpus_truth);
        if (!views) throw Error("cannot open corpus '" + source.corpus_views + "'");
        if (!truth) throw Error("cannot open corpus truth '" + source.corpus_truth + "'");
        const auto corpus = ReadOriginalViews(views, truth, config.schema, data.domain);
        return BKseqSchedule::Fixed(BuildBKseqFromHistory(corpus, config.order, d));
      }
      GeneratorConfig corpus_config = config;
      corpus_config.seed =
          source.corpus_seed != 0 ? source.corpus_seed : SubstreamSeed(config.seed, 0x5e0);
      if (source.corpus_tuples > 0) {
        const double scale =
            static_cast<double>(source.corpus_tuples) / config.tuples_per_week;
        corpus_config.tuples_per_week = source.corpus_tuples;
        corpus_config.arrival_rate =
            static_cast<int>(std::ceil(config.arrival_rate * scale));
      }
      const GeneratedData corpus = Generate(corpus_config);
      return BKseqSchedule::Fixed(BuildBKseqFromHistory(corpus.history, config.order, d));
    }
  }
  throw Error("unknown knowledge source");
}

// ---------------------------------------------------------------------------
// In-memory chain

std::vector<ReleasedView> AnonymizeHistory(const GeneratedData& data, const QISchema& schema,
                                           const PrivacyParams& params,
                                           const BKseqSchedule& defender,
                                           const PosteriorOptions& posterior) {
  const std::size_t d = data.domain.size();
  std::vector<GeneralizedView> generalized;
  if (params.method == Method::kJsReduce) {
    const KnowledgeMap priors = PriorsFromBKsv(data.knowledge.bksv, data.registry);
    generalized = JsReduceHistory(data.history, priors, defender, params, schema, d, posterior);
  } else {
    generalized = BaselineHistory(data.history, params, schema, d);
  }
  std::vector<ReleasedView> out;
  out.reserve(generalized.size());
  for (std::size_t i = 0; i < generalized.size(); ++i) {
    out.push_back(Release(generalized[i], data.history[i]));
  }
  return out;
}

AttackEvaluation AttackAndEvaluate(std::span<const ReleasedView> released,
                                   const GeneratedData& data, const QISchema& schema,
                                   const BKseqSchedule& adversary,
                                   const PosteriorOptions& posterior,
                                   const EvaluateOptions& evaluate) {
  std::vector<GeneralizedView> views;
  views.reserve(released.size());
  for (const auto& r : released) views.push_back(r.view);
  const KnowledgeMap priors = PriorsFromBKsv(data.knowledge.bksv, data.registry);
  AttackEvaluation out;
  out.attack = AttackHistory(views, priors, adversary, data.domain.size(), posterior);
  const PosteriorTable posteriors = PosteriorsOf(out.attack);
  out.metrics =
      Evaluate(views, data.history, TruthOf(released), &posteriors, schema, evaluate);
  return out;
}

std::vector<std::string> ParameterWarnings(const PrivacyParams& p) {
  std::vector<std::string> w;
  const std::string name(MethodName(p.method));
  auto outside = [&](const char* param, double v, double lo, double hi) {
    if (v < lo || v > hi) {
      w.push_back(name + ": " + param + "=" + FormatNumber(v) + " outside the usual range [" +
                  FormatNumber(lo) + ", " + FormatNumber(hi) + "]");
    }
  };
  switch (p.method) {
    case Method::kLDiversity:
      outside("l", p.l, 2, 8);
      break;
    case Method::kTCloseness:
      outside("t", p.t, 0.5, 1.0);
      break;
    case Method::kJsReduce:
      outside("t", p.t, 0.5, 0.8);
      outside("j", p.j, 0.2, 0.8);
      break;
  }
  return w;
}

// ---------------------------------------------------------------------------
// Files

DataFiles DataFiles::In(const std::string& dir) {
  DataFiles f;
  f.views = JoinPath(dir, "views.csv");
  f.truth = JoinPath(dir, "truth.csv");
  f.respondents = JoinPath(dir, "respondents.csv");
  f.domain = JoinPath(dir, "domain.json");
  f.bksv = JoinPath(dir, "exact_bksv.json");
  f.bkseq = JoinPath(dir, "exact_bkseq.json");
  f.config = JoinPath(dir, "generator.json");
  return f;
}

void WriteGeneratedData(const GeneratedData& data, const GeneratorConfig& config,
                        const DataFiles& files, const Provenance& provenance) {
  const auto header = provenance.Lines();
  if (!files.views.empty() || !files.truth.empty()) {
    std::ostringstream views, truth;
    WriteOriginalViews(views, truth, data.history, config.schema, data.domain, header);
    if (!files.views.empty()) WriteFile(files.views, views.str());
    if (!files.truth.empty()) WriteFile(files.truth, truth.str());
  }
  if (!files.respondents.empty()) {
    WriteFile(files.respondents, ToString([&](std::ostream& o) {
                WriteRespondents(o, data.registry, config.schema, header);
              }));
  }
  if (!files.domain.empty()) {
    WriteFile(files.domain, ToString([&](std::ostream& o) { WriteDomainJson(o, data.domain); }));
  }
  if (!files.bksv.empty()) {
    WriteFile(files.bksv, ToString([&](std::ostream& o) {
                WriteBKsvJson(o, data.knowledge.bksv, data.domain);
              }));
  }
  if (!files.bkseq.empty()) {
    WriteFile(files.bkseq, ToString([&](std::ostream& o) {
                WriteBKseqJson(o, data.knowledge.bkseq, data.domain);
              }));
  }
  if (!files.config.empty()) {
    WriteFile(files.config, ToString([&](std::ostream& o) { WriteGeneratorConfig(o, config); }));
  }
}

// ---------------------------------------------------------------------------
// Plans

std::vector<PrivacyParams> MethodGrid::Expand() const {
  const PrivacyParams defaults = PrivacyParams::Defaults(method);
  const std::vector<double> ts = t.empty() ? std::vector<double>{defaults.t} : t;
  const std::vector<double> js = j.empty() ? std::vector<double>{defaults.j} : j;
  const std::vector<double> none{0.0};
  const std::vector<int> no_l{defaults.l};
  std::vector<PrivacyParams> out;
  for (int kk : k) {
    for (int ll : method == Method::kLDiversity ? l : no_l) {
      for (double tt : method == Method::kLDiversity ? none : ts) {
        for (double jj : method == Method::kJsReduce ? js : none) {
          PrivacyParams p = defaults;
          p.k = kk;
          p.l = ll;
          if (method != Method::kLDiversity) p.t = tt;
          if (method == Method::kJsReduce) p.j = jj;
          p.normalize_js = normalize_js;
          p.merge_remainder = merge_remainder;
          p.Validate();
          out.push_back(p);
        }
      }
    }
  }
  return out;
}

ExperimentPlan ExperimentPlan::Load(const std::string& path) {
  return FromJson(ReadFile(path), fs::path(path).parent_path().string());
}

ExperimentPlan ExperimentPlan::FromJson(const std::string& text, const std::string& base_dir) {
  std::istringstream in(text);
  const nlohmann::json j = internal::ParseJson(in, "experiment plan");
  ExperimentPlan plan;
  try {
    const auto& gen = j.at("generator");
    if (gen.is_string()) {
      const std::string ref = gen.get<std::string>();
      if (ref == "paper-scale") {
        plan.generator = GeneratorConfig::PaperScale();
      } else if (ref == "desk-scale") {
        plan.generator = GeneratorConfig::DeskScale();
      } else {
        const std::string path = ResolvePath(base_dir, ref);
        if (!fs::exists(path)) throw Error("experiment plan: generator config '" + path + "' not found");
        std::istringstream cfg(ReadFile(path));
        plan.generator = ReadGeneratorConfig(cfg);
      }
    } else {
      std::istringstream cfg(gen.dump());
      plan.generator = ReadGeneratorConfig(cfg);
    }
    if (j.contains("seeds")) plan.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
    if (plan.seeds.empty()) throw Error("experiment plan: no seeds");
    plan.output_dir = ResolvePath(base_dir, j.value("output", plan.output_dir));
    for (const char* side : {"defender", "adversary"}) {
      if (!j.contains(side)) continue;
      auto& dst = std::string(side) == "defender" ? plan.defender : plan.adversary;
      dst.clear();
      for (const auto& s : j.at(side)) dst.push_back(SourceFromJson(s, base_dir));
      if (dst.empty()) throw Error(std::string("experiment plan: empty ") + side + " list");
      for (const auto& s : dst) {
        if (!s.corpus_views.empty() &&
            (!fs::exists(s.corpus_views) || !fs::exists(s.corpus_truth))) {
          throw Error("experiment plan: corpus '" + s.corpus_views + "' not found");
        }
      }
    }
    for (const auto& m : j.at("methods")) {
      MethodGrid g;
      const std::string name = m.at("method").get<std::string>();
      const auto method = ParseMethod(name);
      if (!method) throw Error("experiment plan: unknown method '" + name + "'");
      g.method = *method;
      if (m.contains("k")) g.k = IntList(m.at("k"));
      if (m.contains("l")) g.l = IntList(m.at("l"));
      if (m.contains("t")) g.t = NumberList(m.at("t"));
      if (m.contains("j")) g.j = NumberList(m.at("j"));
      g.normalize_js = !m.value("js_raw", false);
      g.merge_remainder = m.value("merge_remainder", true);
      g.Expand();  // validates
      plan.methods.push_back(std::move(g));
    }
    if (plan.methods.empty()) throw Error("experiment plan: no methods");
    if (j.contains("posterior")) {
      const auto& p = j.at("posterior");
      plan.posterior.method = ParsePosteriorMethod(p.value("method", std::string("auto")));
      plan.posterior.exact_limit = p.value("exact_limit", plan.posterior.exact_limit);
      plan.posterior.sample_budget = p.value("sample_budget", plan.posterior.sample_budget);
      plan.posterior.seed = p.value("seed", plan.posterior.seed);
    }
    if (j.contains("evaluate")) {
      const auto& e = j.at("evaluate");
      plan.evaluate.queries.queries = e.value("queries", plan.evaluate.queries.queries);
      if (e.contains("selectivities")) {
        plan.evaluate.queries.selectivities = NumberList(e.at("selectivities"));
      }
      plan.evaluate.queries.seed = e.value("seed", plan.evaluate.queries.seed);
      const std::string h = e.value("homogeneous", std::string("exclude"));
      if (h == "exclude") {
        plan.evaluate.homogeneous = HomogeneousPolicy::kExclude;
      } else if (h == "zero") {
        plan.evaluate.homogeneous = HomogeneousPolicy::kCountAsZero;
      } else {
        throw Error("experiment plan: homogeneous must be 'exclude' or 'zero'");
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("experiment plan: ") + e.what());
  }
  return plan;
}

std::vector<std::string> ExperimentPlan::Warnings() const {
  std::vector<std::string> out;
  for (const auto& g : methods) {
    for (const auto& p : g.Expand()) {
      for (auto& w : ParameterWarnings(p)) out.push_back(std::move(w));
    }
  }
  return out;
}

std::optional<std::vector<std::uint64_t>> SeedOverrideFromEnv() {
  const char* env = std::getenv("SERIALANON_SEED");
  if (env == nullptr || *env == '\0') return std::nullopt;
  std::vector<std::uint64_t> seeds;
  std::stringstream ss(env);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    try {
      std::size_t used = 0;
      seeds.push_back(std::stoull(tok, &used));
      if (used != tok.size()) throw std::invalid_argument(tok);
    } catch (const std::exception&) {
      throw Error("SERIALANON_SEED: '" + std::string(env) + "' is not a seed list");
    }
  }
  return seeds;
}

// ---------------------------------------------------------------------------
// Runner

namespace {

struct CellJob {
  std::string dir;
  std::string name;
  KnowledgeSource adversary;
  std::string stamp;
  bool done = false;
};

struct GroupJob {
  std::size_t seed_index = 0;
  std::uint64_t seed = 0;
  std::string dir;
  std::string name;
  PrivacyParams params;
  std::optional<KnowledgeSource> defender;
  std::string stamp;
  bool done = false;
  std::vector<CellJob> cells;
};

struct SeedData {
  std::uint64_t seed = 0;
  GeneratorConfig config;
  std::string dir;
  std::string stamp;
  bool done = false;
  std::shared_ptr<const GeneratedData> data;
};

const std::vector<std::string> kDataOutputs{"views.csv",   "truth.csv",        "respondents.csv",
                                            "domain.json", "exact_bksv.json",  "exact_bkseq.json",
                                            "generator.json"};
const std::vector<std::string> kAnonOutputs{"released.csv", "released_truth.csv",
                                            "suppression.json"};
const std::vector<std::string> kCellOutputs{"attack.json", "metrics.json", "plot.csv"};

std::string SourceDigest(const KnowledgeSource& s) {
  std::string d = s.Name();
  if (!s.corpus_views.empty()) d += ":" + FileDigest(s.corpus_views) + ":" + FileDigest(s.corpus_truth);
  return d;
}

void RunGroup(const ExperimentPlan& plan, const SeedData& seed, GroupJob& group,
              PipelineResult& result, std::mutex& mu, Logger& log) {
  const GeneratedData& data = *seed.data;
  const QISchema& schema = seed.config.schema;
  std::vector<ReleasedView> released;
  const std::string data_dir = JoinPath(seed.dir, "data");
  if (group.done) {
    std::ifstream gen(JoinPath(group.dir, "released.csv"));
    std::ifstream truth(JoinPath(group.dir, "released_truth.csv"));
    auto views = ReadGeneralizedViews(gen, schema, data.domain);
    const TruthTable tt = ReadTruth(truth);
    AttachMembership(views, tt);
    for (std::size_t i = 0; i < views.size(); ++i) {
      released.push_back({views[i], tt.at(views[i].release)});
    }
  } else {
    log("[run] " + group.dir);
    const BKseqSchedule defender =
        group.defender ? BuildSchedule(*group.defender, data, seed.config)
                       : BKseqSchedule::Fixed(data.knowledge.bkseq);
    released = AnonymizeHistory(data, schema, group.params, defender, plan.posterior);
    Provenance prov;
    prov.Set("seed", static_cast<std::int64_t>(group.seed));
    AddParams(prov, group.params);
    if (group.defender) prov.Set("defender", group.defender->Name());
    AddPosterior(prov, plan.posterior);
    prov.Input("views", JoinPath(data_dir, "views.csv"));
    const auto header = prov.Lines();
    WriteFile(JoinPath(group.dir, "released.csv"), ToString([&](std::ostream& o) {
                WriteGeneralizedViews(o, released, schema, data.domain, header);
              }));
    WriteFile(JoinPath(group.dir, "released_truth.csv"), ToString([&](std::ostream& o) {
                WriteTruth(o, TruthOf(released), header);
              }));
    ordered_json sup;
    sup["provenance"] = prov.fields();
    sup["releases"] = ordered_json::array();
    for (const auto& r : released) {
      sup["releases"].push_back({{"release", r.view.release},
                                 {"released", r.view.released_tuples()},
                                 {"suppressed", r.view.suppressed}});
    }
    WriteFile(JoinPath(group.dir, "suppression.json"), sup.dump(1) + "\n");
    WriteStamp(group.dir, group.stamp);
  }

  for (auto& cell : group.cells) {
    if (cell.done) continue;
    try {
      log("[run] " + cell.dir);
      const BKseqSchedule adversary = BuildSchedule(cell.adversary, data, seed.config);
      const AttackEvaluation ae =
          AttackAndEvaluate(released, data, schema, adversary, plan.posterior, plan.evaluate);
      Provenance prov;
      prov.Set("seed", static_cast<std::int64_t>(group.seed));
      AddParams(prov, group.params);
      if (group.defender) prov.Set("defender", group.defender->Name());
      prov.Set("adversary", cell.adversary.Name());
      AddPosterior(prov, plan.posterior);
      AddEvaluate(prov, plan.evaluate);
      prov.Input("released", JoinPath(group.dir, "released.csv"));
      prov.Input("views", JoinPath(data_dir, "views.csv"));
      WriteFile(JoinPath(cell.dir, "attack.json"), ToString([&](std::ostream& o) {
                  WriteAttackJson(o, ae.attack, data.domain, prov.fields());
                }));
      WriteFile(JoinPath(cell.dir, "metrics.json"), ToString([&](std::ostream& o) {
                  WriteMetricsJson(o, ae.metrics, prov.fields());
                }));
      WriteFile(JoinPath(cell.dir, "plot.csv"), ToString([&](std::ostream& o) {
                  for (const auto& line : prov.Lines()) o << "# " << line << '\n';
                  WritePlotCsv(o, ae.metrics, group.name);
                }));
      WriteStamp(cell.dir, cell.stamp);
      std::lock_guard<std::mutex> lock(mu);
      ++result.ran;
    } catch (const std::exception& e) {
      log("[fail] " + cell.dir + ": " + e.what());
      std::lock_guard<std::mutex> lock(mu);
      ++result.failed;
      result.failures.push_back(cell.dir + ": " + e.what());
    }
  }
}

void WriteSummary(const ExperimentPlan& plan, const std::vector<GroupJob>& groups) {
  std::ostringstream summary, plot;
  summary << "seed,cell,adversary,release,gain,raw_gain,confidence,avg_semiperimeter,gcp,"
             "released,suppressed\n";
  plot << "seed,release,method,adversary,gain,confidence\n";
  auto field = [](const nlohmann::json& j, const char* key) {
    return j.at(key).is_null() ? std::string() : FormatNumber(j.at(key).get<double>());
  };
  for (const auto& g : groups) {
    for (const auto& c : g.cells) {
      const std::string path = JoinPath(c.dir, "metrics.json");
      if (!fs::exists(path)) continue;
      std::istringstream in(ReadFile(path));
      const nlohmann::json m = internal::ParseJson(in, path);
      for (const auto& r : m.at("per_release")) {
        const std::string release = std::to_string(r.at("release").get<int>());
        summary << g.seed << ',' << g.name << ',' << c.name << ',' << release << ','
                << field(r, "gain") << ',' << field(r, "raw_gain") << ','
                << field(r, "confidence") << ',' << field(r, "avg_semiperimeter") << ','
                << field(r, "gcp") << ',' << r.at("released").get<int>() << ','
                << r.at("suppressed").get<int>() << '\n';
        plot << g.seed << ',' << release << ',' << g.name << ',' << c.name << ','
             << field(r, "gain") << ',' << field(r, "confidence") << '\n';
      }
    }
  }
  WriteIfChanged(JoinPath(plan.output_dir, "summary.csv"), summary.str());
  WriteIfChanged(JoinPath(plan.output_dir, "plot.csv"), plot.str());
}

}  // namespace

PipelineResult RunPipeline(const ExperimentPlan& plan, const PipelineOptions& options) {
  Logger log(options.log);
  for (const auto& w : plan.Warnings()) log("[warn] " + w);

  std::string config_text =
      ToString([&](std::ostream& o) { WriteGeneratorConfig(o, plan.generator); });

  std::vector<SeedData> seeds;
  std::vector<GroupJob> groups;
  PipelineResult result;
  for (std::size_t si = 0; si < plan.seeds.size(); ++si) {
    SeedData sd;
    sd.seed = plan.seeds[si];
    sd.config = plan.generator;
    sd.config.seed = sd.seed;
    sd.dir = JoinPath(plan.output_dir, "seed-" + std::to_string(sd.seed));
    Provenance dp;
    dp.Set("seed", static_cast<std::int64_t>(sd.seed));
    dp.Set("generator", HexDigest(Fnv1a(config_text)));
    sd.stamp = dp.Digest();
    sd.done = StampMatches(JoinPath(sd.dir, "data"), sd.stamp, kDataOutputs);

    for (const auto& grid : plan.methods) {
      for (const auto& params : grid.Expand()) {
        std::vector<std::optional<KnowledgeSource>> defenders;
        if (params.method == Method::kJsReduce) {
          for (const auto& d : plan.defender) defenders.emplace_back(d);
        } else {
          defenders.emplace_back(std::nullopt);
        }
        for (const auto& defender : defenders) {
          GroupJob g;
          g.seed_index = si;
          g.seed = sd.seed;
          g.params = params;
          g.defender = defender;
          g.name = ParamsName(params) + (defender ? "_def-" + defender->Name() : "");
          g.dir = JoinPath(sd.dir, g.name);
          Provenance ap;
          ap.Set("data", sd.stamp);
          AddParams(ap, params);
          if (defender) ap.Set("defender", SourceDigest(*defender));
          AddPosterior(ap, plan.posterior);
          g.stamp = ap.Digest();
          g.done = sd.done && StampMatches(g.dir, g.stamp, kAnonOutputs);
          for (const auto& adv : plan.adversary) {
            CellJob c;
            c.adversary = adv;
            c.name = adv.Name();
            c.dir = JoinPath(g.dir, "adv-" + c.name);
            Provenance cp;
            cp.Set("anonymized", g.stamp);
            cp.Set("adversary", SourceDigest(adv));
            AddPosterior(cp, plan.posterior);
            AddEvaluate(cp, plan.evaluate);
            c.stamp = cp.Digest();
            c.done = g.done && StampMatches(c.dir, c.stamp, kCellOutputs);
            ++result.cells;
            if (c.done) ++result.skipped;
            g.cells.push_back(std::move(c));
          }
          groups.push_back(std::move(g));
        }
      }
    }
    seeds.push_back(std::move(sd));
  }

  std::mutex mu;
  // Data for every seed that still has work.
  for (auto& sd : seeds) {
    bool needed = !sd.done;
    for (const auto& g : groups) {
      if (g.seed == sd.seed) {
        for (const auto& c : g.cells) needed = needed || !c.done;
      }
    }
    if (!needed) continue;
    try {
      auto data = std::make_shared<GeneratedData>(Generate(sd.config));
      if (!sd.done) {
        log("[run] " + JoinPath(sd.dir, "data"));
        Provenance prov;
        prov.Set("seed", static_cast<std::int64_t>(sd.seed));
        prov.Set("generator", HexDigest(Fnv1a(config_text)));
        WriteGeneratedData(*data, sd.config, DataFiles::In(JoinPath(sd.dir, "data")), prov);
        WriteStamp(JoinPath(sd.dir, "data"), sd.stamp);
      }
      sd.data = std::move(data);
    } catch (const std::exception& e) {
      log("[fail] " + sd.dir + ": " + e.what());
      for (auto& g : groups) {
        if (g.seed != sd.seed) continue;
        for (auto& c : g.cells) {
          if (c.done) continue;
          ++result.failed;
          result.failures.push_back(c.dir + ": " + e.what());
          c.done = true;
        }
      }
    }
  }

  std::vector<GroupJob*> pending;
  for (auto& g : groups) {
    bool work = false;
    for (const auto& c : g.cells) work = work || !c.done;
    if (work && seeds[g.seed_index].data) pending.push_back(&g);
  }

  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < pending.size(); i = next++) {
      GroupJob& g = *pending[i];
      try {
        RunGroup(plan, seeds[g.seed_index], g, result, mu, log);
      } catch (const std::exception& e) {
        log("[fail] " + g.dir + ": " + e.what());
        std::lock_guard<std::mutex> lock(mu);
        for (const auto& c : g.cells) {
          if (c.done) continue;
          ++result.failed;
          result.failures.push_back(c.dir + ": " + e.what());
        }
      }
    }
  };
  const int jobs = std::max(1, std::min<int>(options.jobs, static_cast<int>(pending.size())));
  std::vector<std::thread> threads;
  for (int t = 1; t < jobs; ++t) threads.emplace_back(worker);
  worker();
  for (auto& t : threads) t.join();

  fs::create_directories(plan.output_dir);
  WriteSummary(plan, groups);
  const std::string failures = JoinPath(plan.output_dir, "failures.txt");
  if (result.failed > 0) {
    std::sort(result.failures.begin(), result.failures.end());
    std::string text;
    for (const auto& f : result.failures) text += f + "\n";
    WriteFile(failures, text);
  } else if (fs::exists(failures)) {
    fs::remove(failures);
  }
  log("[done] cells=" + std::to_string(result.cells) + " ran=" + std::to_string(result.ran) +
      " skipped=" + std::to_string(result.skipped) + " failed=" + std::to_string(result.failed));
  return result;
}

}  // namespace serialanon
