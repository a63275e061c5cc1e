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

#include "serialanon/datagen.h"

#include <algorithm>
#include <array>
#include <cmath>
#include <istream>
#include <map>
#include <ostream>
#include <set>

#include "json_util.h"
#include "serialanon/random.h"

namespace serialanon {
namespace {

using internal::DistFromJson;
using internal::DistToJson;
using internal::ordered_json;
using internal::ParseJson;

struct ClassRules {
  std::map<Context, SensDist> rules;
  int order = 1;

  const SensDist& Next(std::span<const int> tail) const {
    const std::size_t longest = std::min<std::size_t>(tail.size(), order);
    for (std::size_t len = longest; len >= 1; --len) {
      auto it = rules.find(Context(tail.end() - static_cast<std::ptrdiff_t>(len), tail.end()));
      if (it != rules.end()) return it->second;
    }
    throw Error("generator: no transition rule for the current value");
  }
};

std::vector<ClassRules> CompileRules(const GeneratorConfig& config) {
  std::vector<ClassRules> out;
  for (const auto& c : config.classes) {
    ClassRules r;
    r.order = config.order;
    for (const auto& t : c.transitions) r.rules.emplace(t.context, t.dist);
    out.push_back(std::move(r));
  }
  return out;
}

std::vector<bool> TerminalMask(const GeneratorConfig& config, const SensitiveDomain& domain) {
  std::vector<bool> terminal(domain.size(), false);
  for (const auto& t : config.terminals) terminal[static_cast<std::size_t>(domain.index(t))] = true;
  return terminal;
}

std::string ContextLabel(const Context& c, const SensitiveDomain& domain) {
  std::string s = "<";
  for (std::size_t i = 0; i < c.size(); ++i) {
    if (i) s += ",";
    s += domain.label(c[i]);
  }
  return s + ">";
}

// Expected cohort sizes by entry week: the first week is a full cohort and
// every later week replaces the expected departures.
std::vector<double> CohortSizes(const GeneratorConfig& config,
                                const std::vector<double>& survival) {
  std::vector<double> cohorts(static_cast<std::size_t>(config.weeks), 0.0);
  for (int w = 0; w < config.weeks; ++w) {
    double active = 0.0;
    for (int e = 0; e < w; ++e) active += cohorts[e] * survival[static_cast<std::size_t>(w - e)];
    cohorts[static_cast<std::size_t>(w)] = std::max(0.0, config.tuples_per_week - active);
  }
  return cohorts;
}

// Probability mass of patient states (last `order` values) at each age.
using StateMass = std::map<Context, double>;

template <typename Visit>
void PropagateClass(const PatientClass& cls, const ClassRules& rules,
                    const std::vector<bool>& terminal, int weeks, Visit visit) {
  StateMass mass;
  for (std::size_t s = 0; s < cls.entry.size(); ++s) {
    const double p = cls.entry[static_cast<int>(s)];
    if (p > 0.0) mass[Context{static_cast<int>(s)}] += p;
  }
  for (int age = 0; age < weeks && !mass.empty(); ++age) {
    StateMass next;
    for (const auto& [state, m] : mass) {
      const bool exits = terminal[static_cast<std::size_t>(state.back())];
      const SensDist* dist = exits ? nullptr : &rules.Next(state);
      visit(age, state, m, dist);
      if (exits) continue;
      for (std::size_t s = 0; s < dist->size(); ++s) {
        const double p = (*dist)[static_cast<int>(s)];
        if (p <= 0.0) continue;
        Context tail = state;
        tail.push_back(static_cast<int>(s));
        if (static_cast<int>(tail.size()) > rules.order) tail.erase(tail.begin());
        next[tail] += m * p;
      }
    }
    mass = std::move(next);
  }
}

std::vector<double> ClassShares(const GeneratorConfig& config) {
  std::vector<double> w;
  for (const auto& c : config.classes) w.push_back(c.weight);
  double total = 0.0;
  for (double v : w) total += v;
  for (double& v : w) v /= total;
  return w;
}

// survival[a] = probability that a patient is still recorded at age a.
std::vector<double> MixedSurvival(const GeneratorConfig& config,
                                  const std::vector<ClassRules>& rules,
                                  const std::vector<bool>& terminal) {
  const auto shares = ClassShares(config);
  std::vector<double> survival(static_cast<std::size_t>(config.weeks), 0.0);
  for (std::size_t k = 0; k < config.classes.size(); ++k) {
    PropagateClass(config.classes[k], rules[k], terminal, config.weeks,
                   [&](int age, const Context&, double m, const SensDist*) {
                     survival[static_cast<std::size_t>(age)] += shares[k] * m;
                   });
  }
  return survival;
}

// ---------------------------------------------------------------------------
// Default configuration

struct DwellLevel {
  double progress;
};

constexpr std::array<DwellLevel, 3> kDwell{{{0.05}, {0.35}, {0.85}}};
constexpr double kDischargeHazard = 0.01;
constexpr double kDeathHazard = 0.005;
constexpr std::array<double, 4> kEntryStageMix{0.4, 0.3, 0.2, 0.1};

GeneratorConfig BuildDefault(int weeks, int tuples_per_week, int arrival_rate) {
  GeneratorConfig cfg;
  cfg.weeks = weeks;
  cfg.tuples_per_week = tuples_per_week;
  cfg.arrival_rate = arrival_rate;
  cfg.diseases = {{"liver", 5}, {"hiv", 4}, {"alzheimer", 3}, {"sepsis", 5}};
  cfg.order = 3;
  const SensitiveDomain domain = cfg.Domain();
  const int d = static_cast<int>(domain.size());
  const int deceased = domain.index("deceased");
  const int discharged = domain.index("discharged");

  const auto boxes = DefaultClassBoxes(cfg.schema);
  for (std::size_t k = 0; k < boxes.size(); ++k) {
    const int age = static_cast<int>(k / 6);
    const int gender = static_cast<int>((k / 3) % 2);
    const int weight = static_cast<int>(k % 3);

    PatientClass cls;
    cls.box = boxes[k];
    cls.weight = 1.0 + 0.15 * age - 0.1 * weight + 0.05 * gender;

    const std::array<double, 4> prevalence{
        0.8 + 0.7 * weight, 1.7 - 0.6 * age + 0.2 * gender, 0.3 + 1.0 * age,
        0.9 + 0.2 * (1 - gender)};
    std::vector<double> entry(static_cast<std::size_t>(d), 0.0);
    int base = 0;
    for (std::size_t dis = 0; dis < cfg.diseases.size(); ++dis) {
      const int n = cfg.diseases[dis].stages;
      const int entry_stages = std::min<int>(n, kEntryStageMix.size());
      double norm = 0.0;
      for (int i = 0; i < entry_stages; ++i) norm += kEntryStageMix[static_cast<std::size_t>(i)];
      for (int i = 0; i < entry_stages; ++i) {
        entry[static_cast<std::size_t>(base + i)] =
            prevalence[dis] * kEntryStageMix[static_cast<std::size_t>(i)] / norm;
      }
      const double speed = 1.0 + 0.2 * age + 0.1 * weight;
      for (int i = 0; i < n; ++i) {
        const int value = base + i;
        const double discharge = kDischargeHazard * (n - i) / n;
        const double death = kDeathHazard * (i + 1) / n;
        for (std::size_t level = 0; level < kDwell.size(); ++level) {
          std::vector<double> p(static_cast<std::size_t>(d), 0.0);
          const double progress = std::min(0.9 - discharge - death, kDwell[level].progress * speed);
          p[static_cast<std::size_t>(discharged)] = discharge;
          p[static_cast<std::size_t>(deceased)] = death;
          if (i + 1 < n) {
            p[static_cast<std::size_t>(value + 1)] = progress;
          } else {
            p[static_cast<std::size_t>(deceased)] += progress;
          }
          p[static_cast<std::size_t>(value)] = 1.0 - discharge - death - progress;
          cls.transitions.push_back({Context(level + 1, value), Normalize(p)});
        }
      }
      base += n;
    }
    cls.entry = Normalize(entry);
    cfg.classes.push_back(std::move(cls));
  }
  return cfg;
}

}  // namespace

// ---------------------------------------------------------------------------
// GeneratorConfig

SensitiveDomain GeneratorConfig::Domain() const {
  std::vector<std::string> labels;
  for (const auto& dis : diseases) {
    for (int i = 1; i <= dis.stages; ++i) labels.push_back(dis.name + "-" + std::to_string(i));
  }
  for (const auto& t : terminals) labels.push_back(t);
  return SensitiveDomain(std::move(labels));
}

void GeneratorConfig::Validate() const {
  if (weeks < 1) throw Error("generator config: weeks must be >= 1");
  if (tuples_per_week < 1) throw Error("generator config: tuples_per_week must be >= 1");
  if (arrival_rate < 0) throw Error("generator config: arrival_rate must be >= 0");
  if (order < 1) throw Error("generator config: order must be >= 1");
  if (diseases.empty()) throw Error("generator config: no diseases");
  for (const auto& dis : diseases) {
    if (dis.stages < 1) throw Error("generator config: disease '" + dis.name + "' needs >= 1 stage");
  }
  const SensitiveDomain domain = Domain();
  const std::size_t d = domain.size();
  const auto terminal = TerminalMask(*this, domain);
  if (classes.empty()) throw Error("generator config: no patient classes");
  std::vector<BKsvTable::Entry> boxes;
  for (std::size_t k = 0; k < classes.size(); ++k) {
    const auto& c = classes[k];
    const std::string where = "generator config: class " + std::to_string(k);
    if (!(c.weight > 0.0)) throw Error(where + ": weight must be positive");
    if (c.entry.size() != d) throw Error(where + ": entry distribution has wrong length");
    std::set<Context> seen;
    for (const auto& t : c.transitions) {
      const std::string rule = where + " rule " + ContextLabel(t.context, domain);
      if (t.context.empty() || static_cast<int>(t.context.size()) > order) {
        throw Error(rule + ": context length outside 1.." + std::to_string(order));
      }
      if (t.dist.size() != d) throw Error(rule + ": distribution has wrong length");
      for (std::size_t i = 0; i < t.context.size(); ++i) {
        const int v = t.context[i];
        if (v < 0 || static_cast<std::size_t>(v) >= d) throw Error(rule + ": value out of range");
        if (!terminal[static_cast<std::size_t>(v)]) continue;
        if (i + 1 != t.context.size() || t.dist[v] != 1.0) {
          throw Error(rule + ": terminal values are absorbing");
        }
      }
      if (!seen.insert(t.context).second) throw Error(rule + ": duplicate rule");
    }
    for (std::size_t v = 0; v < d; ++v) {
      if (!terminal[v] && !seen.contains(Context{static_cast<int>(v)})) {
        throw Error(where + ": missing first-order rule for " +
                    domain.label(static_cast<int>(v)));
      }
    }
    boxes.push_back({c.box, c.entry});
  }
  // Throws unless the boxes partition the QI grid.
  BKsvTable check(schema, std::move(boxes));
}

GeneratorConfig GeneratorConfig::PaperScale() { return BuildDefault(24, 5000, 1500); }
GeneratorConfig GeneratorConfig::DeskScale() { return BuildDefault(12, 500, 150); }

GeneratorConfig ReadGeneratorConfig(std::istream& in) {
  const nlohmann::json j = ParseJson(in, "generator config");
  GeneratorConfig cfg;
  try {
    cfg.weeks = j.value("weeks", cfg.weeks);
    cfg.tuples_per_week = j.value("tuples_per_week", cfg.tuples_per_week);
    cfg.arrival_rate = j.value("arrival_rate", cfg.arrival_rate);
    cfg.seed = j.value("seed", cfg.seed);
    cfg.order = j.value("order", cfg.order);
    if (j.contains("schema")) {
      std::vector<QIAttribute> attrs;
      for (const auto& a : j.at("schema")) {
        attrs.push_back({a.at("name").get<std::string>(), {a.at("lo").get<int>(), a.at("hi").get<int>()}});
      }
      cfg.schema = QISchema(std::move(attrs));
    }
    for (const auto& dis : j.at("diseases")) {
      cfg.diseases.push_back({dis.at("name").get<std::string>(), dis.at("stages").get<int>()});
    }
    if (j.contains("terminals")) cfg.terminals = j.at("terminals").get<std::vector<std::string>>();
    const SensitiveDomain domain = cfg.Domain();
    int index = 0;
    for (const auto& c : j.at("classes")) {
      const std::string where = "generator config: class " + std::to_string(index++);
      PatientClass cls;
      const auto& box = c.at("box");
      for (const auto& a : cfg.schema.attributes()) {
        const auto& v = box.at(a.name);
        if (v.is_array()) {
          cls.box.push_back({v.at(0).get<int>(), v.at(1).get<int>()});
        } else {
          cls.box.push_back({v.get<int>(), v.get<int>()});
        }
      }
      cls.weight = c.value("share", 1.0);
      cls.entry = DistFromJson(c.at("entry"), domain, where + " entry");
      for (const auto& t : c.at("transitions")) {
        Context context;
        for (const auto& label : t.at("context")) {
          auto v = domain.find(label.get<std::string>());
          if (!v) throw Error(where + ": unknown label '" + label.get<std::string>() + "'");
          context.push_back(*v);
        }
        const std::string rule = where + " rule " + ContextLabel(context, domain);
        cls.transitions.push_back({context, DistFromJson(t.at("dist"), domain, rule)});
      }
      cfg.classes.push_back(std::move(cls));
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("generator config: ") + e.what());
  }
  cfg.Validate();
  return cfg;
}

void WriteGeneratorConfig(std::ostream& out, const GeneratorConfig& config) {
  const SensitiveDomain domain = config.Domain();
  ordered_json j;
  j["note"] = "Hand-authored illustrative transition values; not clinical data.";
  j["weeks"] = config.weeks;
  j["tuples_per_week"] = config.tuples_per_week;
  j["arrival_rate"] = config.arrival_rate;
  j["seed"] = config.seed;
  j["order"] = config.order;
  j["schema"] = ordered_json::array();
  for (const auto& a : config.schema.attributes()) {
    j["schema"].push_back({{"name", a.name}, {"lo", a.domain.lo}, {"hi", a.domain.hi}});
  }
  j["diseases"] = ordered_json::array();
  for (const auto& dis : config.diseases) {
    j["diseases"].push_back({{"name", dis.name}, {"stages", dis.stages}});
  }
  j["terminals"] = config.terminals;
  j["classes"] = ordered_json::array();
  for (const auto& c : config.classes) {
    ordered_json cls;
    ordered_json box;
    for (std::size_t a = 0; a < config.schema.arity(); ++a) {
      const auto& name = config.schema.attribute(a).name;
      if (c.box[a].lo == c.box[a].hi) {
        box[name] = c.box[a].lo;
      } else {
        box[name] = {c.box[a].lo, c.box[a].hi};
      }
    }
    cls["box"] = std::move(box);
    cls["share"] = c.weight;
    cls["entry"] = DistToJson(c.entry, domain);
    cls["transitions"] = ordered_json::array();
    for (const auto& t : c.transitions) {
      ordered_json labels = ordered_json::array();
      for (int v : t.context) labels.push_back(domain.label(v));
      cls["transitions"].push_back({{"context", labels}, {"dist", DistToJson(t.dist, domain)}});
    }
    j["classes"].push_back(std::move(cls));
  }
  out << j.dump(1) << '\n';
}

// ---------------------------------------------------------------------------
// Exact knowledge

double ExpectedRespondents(const GeneratorConfig& config) {
  config.Validate();
  const SensitiveDomain domain = config.Domain();
  const auto rules = CompileRules(config);
  const auto survival = MixedSurvival(config, rules, TerminalMask(config, domain));
  double total = 0.0;
  for (double c : CohortSizes(config, survival)) total += c;
  return total;
}

ExactKnowledge DeriveExactKnowledge(const GeneratorConfig& config) {
  config.Validate();
  const SensitiveDomain domain = config.Domain();
  const std::size_t d = domain.size();
  const auto terminal = TerminalMask(config, domain);
  const auto rules = CompileRules(config);
  const auto shares = ClassShares(config);
  const auto cohorts = CohortSizes(config, MixedSurvival(config, rules, terminal));

  // A record at age a (0-based) exists for cohorts entering in the first
  // weeks - a weeks, and has a successor inside the horizon for one fewer.
  std::vector<double> recorded(static_cast<std::size_t>(config.weeks), 0.0);
  std::vector<double> continued(static_cast<std::size_t>(config.weeks), 0.0);
  for (int a = 0; a < config.weeks; ++a) {
    for (int e = 0; e < config.weeks - a; ++e) recorded[static_cast<std::size_t>(a)] += cohorts[e];
    for (int e = 0; e + 1 < config.weeks - a; ++e) continued[static_cast<std::size_t>(a)] += cohorts[e];
  }

  std::map<Context, std::vector<double>> continuation;
  std::vector<double> frequency(d, 0.0);
  for (std::size_t k = 0; k < config.classes.size(); ++k) {
    PropagateClass(config.classes[k], rules[k], terminal, config.weeks,
                   [&](int age, const Context& state, double m, const SensDist* next) {
                     const double share = shares[k] * m;
                     frequency[static_cast<std::size_t>(state.back())] +=
                         share * recorded[static_cast<std::size_t>(age)];
                     const double w = share * continued[static_cast<std::size_t>(age)];
                     if (next == nullptr || w <= 0.0) return;
                     for (std::size_t len = 1; len <= state.size(); ++len) {
                       auto& acc = continuation[Context(state.end() - static_cast<std::ptrdiff_t>(len),
                                                        state.end())];
                       if (acc.empty()) acc.assign(d, 0.0);
                       for (std::size_t s = 0; s < d; ++s) acc[s] += w * (*next)[static_cast<int>(s)];
                     }
                   });
  }
  std::vector<BKseqTable::Conditional> conditionals;
  for (auto& [context, mass] : continuation) {
    double total = 0.0;
    for (double v : mass) total += v;
    if (total <= 0.0) continue;
    for (double& v : mass) {
      if (v < 1e-15 * total) v = 0.0;
    }
    conditionals.push_back({context, Normalize(mass), total});
  }

  std::vector<BKsvTable::Entry> entries;
  for (const auto& c : config.classes) entries.push_back({c.box, c.entry});
  return {BKsvTable(config.schema, std::move(entries)),
          BKseqTable(config.order, Normalize(frequency), std::move(conditionals))};
}

// ---------------------------------------------------------------------------
// Generation

GeneratedData Generate(const GeneratorConfig& config) {
  config.Validate();
  GeneratedData out;
  out.domain = config.Domain();
  const auto terminal = TerminalMask(config, out.domain);
  const auto rules = CompileRules(config);
  const auto shares = ClassShares(config);

  struct Patient {
    RespondentId id;
    int cls = 0;
    std::vector<int> qi;
    Context tail;
  };
  Rng rng(config.seed);
  std::vector<Patient> active;
  std::int64_t next_id = 1;

  for (int week = 1; week <= config.weeks; ++week) {
    View view;
    view.release = week;
    for (auto& p : active) {
      const SensDist& next = rules[static_cast<std::size_t>(p.cls)].Next(p.tail);
      p.tail.push_back(Categorical(rng, next.probabilities()));
      if (static_cast<int>(p.tail.size()) > config.order) p.tail.erase(p.tail.begin());
    }
    const int arrivals = config.tuples_per_week - static_cast<int>(active.size());
    if (week > 1 && arrivals > config.arrival_rate) {
      throw Error("generator: week " + std::to_string(week) + " needs " +
                  std::to_string(arrivals) + " new patients but arrival_rate is " +
                  std::to_string(config.arrival_rate) +
                  "; raise arrival_rate or lower tuples_per_week");
    }
    for (int i = 0; i < arrivals; ++i) {
      Patient p;
      p.id = RespondentId{next_id++};
      p.cls = Categorical(rng, shares);
      for (const auto& range : config.classes[static_cast<std::size_t>(p.cls)].box) {
        p.qi.push_back(UniformInt(rng, range.lo, range.hi));
      }
      p.tail.push_back(Categorical(
          rng, config.classes[static_cast<std::size_t>(p.cls)].entry.probabilities()));
      active.push_back(std::move(p));
    }
    view.records.reserve(active.size());
    for (const auto& p : active) view.records.push_back({0, p.id, p.qi, p.tail.back()});
    for (std::size_t i = view.records.size(); i > 1; --i) {
      std::swap(view.records[i - 1], view.records[UniformBelow(rng, i)]);
    }
    for (std::size_t i = 0; i < view.records.size(); ++i) {
      view.records[i].tuple_id = static_cast<int>(i) + 1;
    }
    std::erase_if(active, [&](const Patient& p) {
      return terminal[static_cast<std::size_t>(p.tail.back())];
    });
    out.history.push_back(std::move(view));
  }
  out.registry = RegistryOf(out.history);
  out.knowledge = DeriveExactKnowledge(config);
  return out;
}

}  // namespace serialanon
