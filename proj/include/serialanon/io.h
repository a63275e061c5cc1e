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

// File formats shared by all subcommands.
//
//   original views   view,tuple,<qi...>,ex_res
//   truth sidecar    view,tuple,respondent
//   generalized      view,group,<qi>_lo,<qi>_hi,...,ex_res
//   respondents      respondent,<qi...>
//   domain           JSON array of labels
//
// Lines starting with '#' are provenance comments and are skipped on read.
// In a generalized file the tuple number of a row is its 1-based position
// among the rows of its view; the matching truth sidecar uses that
// numbering.

#ifndef SERIALANON_IO_H_
#define SERIALANON_IO_H_

#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "serialanon/model.h"

namespace serialanon {

using ReleaseTruth = std::unordered_map<int, RespondentId>;  // tuple -> respondent
using TruthTable = std::map<int, ReleaseTruth>;               // release -> truth
using RespondentRegistry =
    std::unordered_map<RespondentId, std::vector<int>, RespondentIdHash>;

// A generalized view in published form: tuples renumbered by row position,
// each group's respondent set sorted, plus the tuple-to-respondent pairing.
struct ReleasedView {
  GeneralizedView view;
  ReleaseTruth truth;
};

ReleasedView Release(const GeneralizedView& generalized, const View& original);
TruthTable TruthOf(std::span<const View> history);
TruthTable TruthOf(std::span<const ReleasedView> released);
RespondentRegistry RegistryOf(std::span<const View> history);

void WriteOriginalViews(std::ostream& views, std::ostream& truth,
                        std::span<const View> history, const QISchema& schema,
                        const SensitiveDomain& domain,
                        const std::vector<std::string>& header = {});
std::vector<View> ReadOriginalViews(std::istream& views, std::istream& truth,
                                    const QISchema& schema,
                                    const SensitiveDomain& domain);

void WriteGeneralizedViews(std::ostream& out, std::span<const ReleasedView> released,
                           const QISchema& schema, const SensitiveDomain& domain,
                           const std::vector<std::string>& header = {});
void WriteTruth(std::ostream& out, const TruthTable& truth,
                const std::vector<std::string>& header = {});
// Suppressed counts are not part of the file; they read back as 0.
std::vector<GeneralizedView> ReadGeneralizedViews(std::istream& in,
                                                  const QISchema& schema,
                                                  const SensitiveDomain& domain);
TruthTable ReadTruth(std::istream& in);
// Fills group respondent sets from a released truth sidecar.
void AttachMembership(std::vector<GeneralizedView>& released, const TruthTable& truth);

void WriteRespondents(std::ostream& out, const RespondentRegistry& registry,
                      const QISchema& schema,
                      const std::vector<std::string>& header = {});
RespondentRegistry ReadRespondents(std::istream& in, const QISchema& schema);

SensitiveDomain ReadDomainJson(std::istream& in);
void WriteDomainJson(std::ostream& out, const SensitiveDomain& domain);

// Whole-file helpers; throw Error on I/O failure.
std::string ReadFile(const std::string& path);
void WriteFile(const std::string& path, const std::string& contents);

// Header-only peek used to infer a domain from an original-views file
// when none is given: labels in order of first appearance.
SensitiveDomain InferDomain(std::istream& views);

}  // namespace serialanon

#endif  // SERIALANON_IO_H_
