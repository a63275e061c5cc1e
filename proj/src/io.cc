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

#include "serialanon/io.h"

#include <algorithm>
#include <charconv>
#include <filesystem>
#include <fstream>
#include <istream>
#include <ostream>
#include <set>
#include <sstream>

#include "json.hpp"

namespace serialanon {
namespace {

std::vector<std::string> Split(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream in(line);
  while (std::getline(in, field, ',')) out.push_back(field);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

std::string Join(const std::vector<std::string>& parts) {
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (i) out += ',';
    out += parts[i];
  }
  return out;
}

// Iterates data rows, skipping comments and blank lines, checking the header.
class CsvReader {
 public:
  CsvReader(std::istream& in, std::vector<std::string> expected_header,
            std::string what)
      : in_(in), what_(std::move(what)) {
    std::vector<std::string> header;
    if (!Next(header)) throw Error(what_ + ": missing header");
    if (header != expected_header) {
      throw Error(what_ + ": expected header '" + Join(expected_header) +
                  "', got '" + Join(header) + "'");
    }
    width_ = expected_header.size();
  }

  bool Next(std::vector<std::string>& fields) {
    std::string line;
    while (std::getline(in_, line)) {
      ++line_no_;
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (line.empty() || line[0] == '#') continue;
      fields = Split(line);
      if (width_ != 0 && fields.size() != width_) {
        throw Error(Where() + ": expected " + std::to_string(width_) +
                    " fields, got " + std::to_string(fields.size()));
      }
      return true;
    }
    return false;
  }

  std::string Where() const { return what_ + " line " + std::to_string(line_no_); }

  std::int64_t Int(const std::string& field) const {
    std::int64_t v = 0;
    auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), v);
    if (ec != std::errc() || ptr != field.data() + field.size()) {
      throw Error(Where() + ": not an integer: '" + field + "'");
    }
    return v;
  }

 private:
  std::istream& in_;
  std::string what_;
  std::size_t width_ = 0;
  int line_no_ = 0;
};

void WriteHeader(std::ostream& out, const std::vector<std::string>& header) {
  for (const auto& line : header) out << "# " << line << '\n';
}

std::vector<std::string> OriginalColumns(const QISchema& schema) {
  std::vector<std::string> cols = {"view", "tuple"};
  for (const auto& a : schema.attributes()) cols.push_back(a.name);
  cols.emplace_back("ex_res");
  return cols;
}

std::vector<std::string> GeneralizedColumns(const QISchema& schema) {
  std::vector<std::string> cols = {"view", "group"};
  for (const auto& a : schema.attributes()) {
    cols.push_back(a.name + "_lo");
    cols.push_back(a.name + "_hi");
  }
  cols.emplace_back("ex_res");
  return cols;
}

const std::vector<std::string> kTruthColumns = {"view", "tuple", "respondent"};

void CheckLabelsCsvSafe(const SensitiveDomain& domain) {
  for (const auto& l : domain.labels()) {
    if (l.find_first_of(",\n\r") != std::string::npos || l[0] == '#') {
      throw Error("label '" + l + "' cannot be written to CSV");
    }
  }
}

}  // namespace

ReleasedView Release(const GeneralizedView& generalized, const View& original) {
  std::unordered_map<int, RespondentId> owner;
  for (const auto& r : original.records) owner[r.tuple_id] = r.respondent;

  ReleasedView out;
  out.view.release = generalized.release;
  out.view.suppressed = generalized.suppressed;
  int position = 0;
  for (const auto& g : generalized.groups) {
    QIGroup published;
    published.group_id = g.group_id;
    published.ranges = g.ranges;
    std::vector<GroupTuple> tuples = g.tuples;
    std::sort(tuples.begin(), tuples.end(), [](const auto& a, const auto& b) {
      return std::tie(a.sensitive, a.tuple_id) < std::tie(b.sensitive, b.tuple_id);
    });
    for (const auto& t : tuples) {
      auto it = owner.find(t.tuple_id);
      if (it == owner.end()) {
        throw Error("release " + std::to_string(generalized.release) +
                    ": generalized tuple " + std::to_string(t.tuple_id) +
                    " not in original view");
      }
      ++position;
      published.tuples.push_back({position, t.sensitive});
      published.respondents.push_back(it->second);
      out.truth[position] = it->second;
    }
    std::sort(published.respondents.begin(), published.respondents.end());
    out.view.groups.push_back(std::move(published));
  }
  return out;
}

TruthTable TruthOf(std::span<const View> history) {
  TruthTable truth;
  for (const auto& v : history) {
    auto& release = truth[v.release];
    for (const auto& r : v.records) release[r.tuple_id] = r.respondent;
  }
  return truth;
}

TruthTable TruthOf(std::span<const ReleasedView> released) {
  TruthTable truth;
  for (const auto& r : released) truth[r.view.release] = r.truth;
  return truth;
}

RespondentRegistry RegistryOf(std::span<const View> history) {
  RespondentRegistry registry;
  for (const auto& v : history) {
    for (const auto& r : v.records) registry.emplace(r.respondent, r.qi);
  }
  return registry;
}

void WriteOriginalViews(std::ostream& views, std::ostream& truth,
                        std::span<const View> history, const QISchema& schema,
                        const SensitiveDomain& domain,
                        const std::vector<std::string>& header) {
  CheckLabelsCsvSafe(domain);
  WriteHeader(views, header);
  WriteHeader(truth, header);
  views << Join(OriginalColumns(schema)) << '\n';
  truth << Join(kTruthColumns) << '\n';
  for (const auto& v : history) {
    for (const auto& r : v.records) {
      views << v.release << ',' << r.tuple_id;
      for (int q : r.qi) views << ',' << q;
      views << ',' << domain.label(r.sensitive) << '\n';
      truth << v.release << ',' << r.tuple_id << ',' << r.respondent.value << '\n';
    }
  }
}

std::vector<View> ReadOriginalViews(std::istream& views, std::istream& truth,
                                    const QISchema& schema,
                                    const SensitiveDomain& domain) {
  const TruthTable owners = ReadTruth(truth);
  CsvReader reader(views, OriginalColumns(schema), "views");
  std::vector<View> history;
  std::vector<std::string> f;
  const std::size_t arity = schema.arity();
  while (reader.Next(f)) {
    const int release = static_cast<int>(reader.Int(f[0]));
    if (history.empty() || history.back().release != release) {
      if (!history.empty() && release < history.back().release) {
        throw Error(reader.Where() + ": views out of order");
      }
      history.push_back(View{release, {}});
    }
    Record r;
    r.tuple_id = static_cast<int>(reader.Int(f[1]));
    for (std::size_t a = 0; a < arity; ++a) {
      r.qi.push_back(static_cast<int>(reader.Int(f[2 + a])));
    }
    r.sensitive = domain.index(f[2 + arity]);
    auto rel = owners.find(release);
    if (rel == owners.end() || !rel->second.contains(r.tuple_id)) {
      throw Error(reader.Where() + ": no respondent for tuple " +
                  std::to_string(r.tuple_id) + " in truth sidecar");
    }
    r.respondent = rel->second.at(r.tuple_id);
    history.back().records.push_back(std::move(r));
  }
  for (const auto& v : history) CheckView(v, schema, domain.size());
  return history;
}

void WriteGeneralizedViews(std::ostream& out, std::span<const ReleasedView> released,
                           const QISchema& schema, const SensitiveDomain& domain,
                           const std::vector<std::string>& header) {
  CheckLabelsCsvSafe(domain);
  WriteHeader(out, header);
  out << Join(GeneralizedColumns(schema)) << '\n';
  for (const auto& rv : released) {
    for (const auto& g : rv.view.groups) {
      for (const auto& t : g.tuples) {
        out << rv.view.release << ',' << g.group_id;
        for (const auto& range : g.ranges) out << ',' << range.lo << ',' << range.hi;
        out << ',' << domain.label(t.sensitive) << '\n';
      }
    }
  }
}

void WriteTruth(std::ostream& out, const TruthTable& truth,
                const std::vector<std::string>& header) {
  WriteHeader(out, header);
  out << Join(kTruthColumns) << '\n';
  for (const auto& [release, rows] : truth) {
    std::vector<std::pair<int, RespondentId>> sorted(rows.begin(), rows.end());
    std::sort(sorted.begin(), sorted.end());
    for (const auto& [tuple, who] : sorted) {
      out << release << ',' << tuple << ',' << who.value << '\n';
    }
  }
}

std::vector<GeneralizedView> ReadGeneralizedViews(std::istream& in,
                                                  const QISchema& schema,
                                                  const SensitiveDomain& domain) {
  CsvReader reader(in, GeneralizedColumns(schema), "generalized views");
  std::vector<GeneralizedView> out;
  std::vector<std::string> f;
  const std::size_t arity = schema.arity();
  int position = 0;
  while (reader.Next(f)) {
    const int release = static_cast<int>(reader.Int(f[0]));
    const int group = static_cast<int>(reader.Int(f[1]));
    if (out.empty() || out.back().release != release) {
      if (!out.empty() && release < out.back().release) {
        throw Error(reader.Where() + ": views out of order");
      }
      out.push_back(GeneralizedView{release, {}, 0});
      position = 0;
    }
    auto& view = out.back();
    std::vector<Interval> ranges;
    for (std::size_t a = 0; a < arity; ++a) {
      ranges.push_back({static_cast<int>(reader.Int(f[2 + 2 * a])),
                        static_cast<int>(reader.Int(f[3 + 2 * a]))});
    }
    if (view.groups.empty() || view.groups.back().group_id != group) {
      for (const auto& g : view.groups) {
        if (g.group_id == group) {
          throw Error(reader.Where() + ": rows of group " + std::to_string(group) +
                      " are not contiguous");
        }
      }
      view.groups.push_back(QIGroup{group, ranges, {}, {}});
    } else if (view.groups.back().ranges != ranges) {
      throw Error(reader.Where() + ": group " + std::to_string(group) +
                  " has inconsistent ranges");
    }
    view.groups.back().tuples.push_back({++position, domain.index(f[2 + 2 * arity])});
  }
  return out;
}

TruthTable ReadTruth(std::istream& in) {
  CsvReader reader(in, kTruthColumns, "truth");
  TruthTable truth;
  std::vector<std::string> f;
  while (reader.Next(f)) {
    const int release = static_cast<int>(reader.Int(f[0]));
    const int tuple = static_cast<int>(reader.Int(f[1]));
    if (!truth[release].emplace(tuple, RespondentId{reader.Int(f[2])}).second) {
      throw Error(reader.Where() + ": duplicate tuple " + std::to_string(tuple));
    }
  }
  return truth;
}

void AttachMembership(std::vector<GeneralizedView>& released, const TruthTable& truth) {
  for (auto& view : released) {
    auto rel = truth.find(view.release);
    for (auto& g : view.groups) {
      g.respondents.clear();
      for (const auto& t : g.tuples) {
        if (rel == truth.end() || !rel->second.contains(t.tuple_id)) {
          throw Error("release " + std::to_string(view.release) + " group " +
                      std::to_string(g.group_id) + ": no respondent for tuple " +
                      std::to_string(t.tuple_id));
        }
        g.respondents.push_back(rel->second.at(t.tuple_id));
      }
      std::sort(g.respondents.begin(), g.respondents.end());
    }
  }
}

void WriteRespondents(std::ostream& out, const RespondentRegistry& registry,
                      const QISchema& schema, const std::vector<std::string>& header) {
  WriteHeader(out, header);
  std::vector<std::string> cols = {"respondent"};
  for (const auto& a : schema.attributes()) cols.push_back(a.name);
  out << Join(cols) << '\n';
  std::vector<RespondentId> ids;
  ids.reserve(registry.size());
  for (const auto& [id, _] : registry) ids.push_back(id);
  std::sort(ids.begin(), ids.end());
  for (const auto& id : ids) {
    out << id.value;
    for (int q : registry.at(id)) out << ',' << q;
    out << '\n';
  }
}

RespondentRegistry ReadRespondents(std::istream& in, const QISchema& schema) {
  std::vector<std::string> cols = {"respondent"};
  for (const auto& a : schema.attributes()) cols.push_back(a.name);
  CsvReader reader(in, cols, "respondents");
  RespondentRegistry registry;
  std::vector<std::string> f;
  while (reader.Next(f)) {
    std::vector<int> qi;
    for (std::size_t a = 0; a < schema.arity(); ++a) {
      qi.push_back(static_cast<int>(reader.Int(f[1 + a])));
    }
    schema.CheckContains(qi);
    if (!registry.emplace(RespondentId{reader.Int(f[0])}, std::move(qi)).second) {
      throw Error(reader.Where() + ": duplicate respondent");
    }
  }
  return registry;
}

SensitiveDomain ReadDomainJson(std::istream& in) {
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("domain JSON: ") + e.what());
  }
  if (!j.is_array()) throw Error("domain JSON: expected an array of labels");
  return SensitiveDomain(j.get<std::vector<std::string>>());
}

void WriteDomainJson(std::ostream& out, const SensitiveDomain& domain) {
  out << nlohmann::json(domain.labels()).dump(2) << '\n';
}

std::string ReadFile(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open '" + path + "' for reading");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void WriteFile(const std::string& path, const std::string& contents) {
  const std::filesystem::path p(path);
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot open '" + path + "' for writing");
    out << contents;
    if (!out) throw Error("write to '" + path + "' failed");
  }
  std::filesystem::rename(tmp, p);
}

SensitiveDomain InferDomain(std::istream& views) {
  std::string line;
  std::vector<std::string> labels;
  std::set<std::string> seen;
  bool header = true;
  while (std::getline(views, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    if (header) {
      header = false;
      continue;
    }
    const auto comma = line.rfind(',');
    std::string label = comma == std::string::npos ? line : line.substr(comma + 1);
    if (seen.insert(label).second) labels.push_back(std::move(label));
  }
  return SensitiveDomain(std::move(labels));
}

}  // namespace serialanon
