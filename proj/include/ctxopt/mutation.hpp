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

// Optimizer step: diagnostics (and optionally the optimizer state) in,
// validated playbook edits out.

#ifndef CTXOPT_MUTATION_HPP_
#define CTXOPT_MUTATION_HPP_

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "ctxopt/optimizer_state.hpp"
#include "ctxopt/playbook.hpp"
#include "ctxopt/reflection.hpp"
#include "json.hpp"

namespace ctxopt {

struct DroppedEdit {
  EditOp edit;
  std::string reason;
  friend bool operator==(const DroppedEdit&, const DroppedEdit&) = default;
};

// Raw backend output, before validation.
struct MutationProposal {
  std::vector<EditOp> edits;
  std::string rationale;
};

struct MutationResult {
  std::vector<EditOp> edits;  // all valid against the input playbook, in order
  std::string rationale;
  bool no_op = true;          // == edits.empty()
  std::vector<DroppedEdit> dropped;
  bool state_injected = false;
  friend bool operator==(const MutationResult&, const MutationResult&) = default;
};

void to_json(nlohmann::json& j, const MutationResult& r);
void from_json(const nlohmann::json& j, MutationResult& r);

class MutatorBackend {
 public:
  virtual ~MutatorBackend() = default;
  // `state` is null when the optimizer state primitive is off.
  virtual MutationProposal propose(const Playbook& playbook,
                                   std::span<const Diagnostic> diagnostics,
                                   const StateDoc* state) const = 0;
};

struct MutateOptions {
  std::size_t max_edits = 8;
};

// With no diagnostics the backend is not called and the result is a no-op.
// Otherwise every proposed edit is checked in sequence against the playbook
// as modified by the edits accepted so far; an edit is dropped (with a
// reason) if it names an unknown id, has empty or multi-line content, adds
// content that already exists, leaves an entry unchanged, or exceeds
// max_edits.
MutationResult mutate(const MutatorBackend& backend, const Playbook& playbook,
                      std::span<const Diagnostic> diagnostics, const StateDoc* state,
                      const MutateOptions& options = {});

// Throws UnknownEntryId if the result does not belong to this playbook.
Playbook apply_mutation(const Playbook& playbook, const MutationResult& result);

// Scripted majority-vote mutator. With k diagnostics it
//   deletes entries blamed (as [id] in root_cause) by >= ceil(k/2)
//   actionable diagnostics, then
//   adds one rule per coverage-gap token named by >= ceil(k/2) of them.
// With a state document it carries evidence across iterations: a gap token
// already listed as a hypothesis needs one vote, and an entry is deleted only
// if it was already a suspect.
class MajorityVoteMutator : public MutatorBackend {
 public:
  explicit MajorityVoteMutator(std::string section = "learned_rules")
      : section_(std::move(section)) {}
  MutationProposal propose(const Playbook& playbook,
                           std::span<const Diagnostic> diagnostics,
                           const StateDoc* state) const override;

  static std::string rule_for(std::string_view token);

 private:
  std::string section_;
};

}  // namespace ctxopt

#endif  // CTXOPT_MUTATION_HPP_
