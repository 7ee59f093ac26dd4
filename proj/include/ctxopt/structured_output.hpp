// Copyright 2026 The ctxopt Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Wire format for model output: one fenced block per reply, tagged with the
// structure it carries.
//
//   ```diagnostic                 ```mutation              ```state
//   attribution: <head>           rationale: <text>        summary: <text>
//   root_cause: <text>            ADD <section> | <text>   assessment: <text>
//   coverage_gap: <text|none>     UPDATE <id> | <text>     hypothesis: <text>
//   cited_entries: <ids|none>     DELETE <id>              phase: <phase>
//   ```                           ```                      ```
//
// Parsers throw OutputParseError with a one-line reason; the model backends
// turn that into a retry and finally MalformedModelOutput.

#ifndef CTXOPT_STRUCTURED_OUTPUT_HPP_
#define CTXOPT_STRUCTURED_OUTPUT_HPP_

#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "ctxopt/errors.hpp"
#include "ctxopt/mutation.hpp"
#include "ctxopt/optimizer_state.hpp"
#include "ctxopt/reflection.hpp"

namespace ctxopt {

class OutputParseError : public Error {
 public:
  using Error::Error;
};

// Bodies of every ```tag fenced block, in order.
std::vector<std::string> fenced_blocks(std::string_view text, std::string_view tag);

// Mode and source task are left for the caller to stamp.
Diagnostic parse_diagnostic(std::string_view text);
MutationProposal parse_mutation(std::string_view text);
StateRevision parse_state(std::string_view text);

// Replaces {{name}} with slots[name]. Unknown slots are left verbatim.
std::string fill_template(std::string_view tmpl,
                          const std::map<std::string, std::string>& slots);

}  // namespace ctxopt

#endif  // CTXOPT_STRUCTURED_OUTPUT_HPP_
