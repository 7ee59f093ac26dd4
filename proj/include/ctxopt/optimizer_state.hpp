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

// Rolling optimizer state. It is read by the mutator and nothing else.

#ifndef CTXOPT_OPTIMIZER_STATE_HPP_
#define CTXOPT_OPTIMIZER_STATE_HPP_

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ctxopt/playbook.hpp"
#include "ctxopt/reflection.hpp"
#include "json.hpp"

namespace ctxopt {

enum class Phase { exploratory, convergent };

std::string_view to_string(Phase p);
std::optional<Phase> parse_phase(std::string_view text);

struct LedgerRecord {
  int iteration = 0;
  std::string summary;
  friend bool operator==(const LedgerRecord&, const LedgerRecord&) = default;
};

struct StateDoc {
  std::vector<LedgerRecord> change_ledger;  // append-only
  std::string playbook_assessment;
  std::vector<std::string> open_hypotheses;
  Phase phase = Phase::exploratory;
  int iteration = 0;
  friend bool operator==(const StateDoc&, const StateDoc&) = default;
};

void to_json(nlohmann::json& j, const StateDoc& s);
void from_json(const nlohmann::json& j, StateDoc& s);

// What a backend contributes to one update. The ledger bookkeeping and the
// iteration counter are owned by update_state.
struct StateRevision {
  std::string summary;
  std::string assessment;
  std::vector<std::string> hypotheses;
  Phase phase = Phase::exploratory;
};

class StateUpdaterBackend {
 public:
  virtual ~StateUpdaterBackend() = default;
  virtual StateRevision revise(const StateDoc& state,
                               std::span<const Diagnostic> diagnostics,
                               const Playbook& old_playbook,
                               const Playbook& new_playbook) const = 0;
};

inline constexpr std::string_view kNoEditSummary = "no edit";

// Appends exactly one ledger record and advances the iteration counter.
// Throws PreconditionViolation if new_playbook is older than old_playbook.
StateDoc update_state(const StateUpdaterBackend& backend, const StateDoc& state,
                      std::span<const Diagnostic> diagnostics,
                      const Playbook& old_playbook, const Playbook& new_playbook);

// Line-oriented text for the mutator prompt. Backslashes and newlines inside
// fields are escaped, so distinct states render differently.
std::string render_for_mutator(const StateDoc& state);

// Scripted updater:
//   summary     "no edit", or the applied edits in describe() form
//   phase       convergent iff this and the two previous updates were no-ops
//   hypotheses  "gap: <token>" for gaps still open, "suspect: [id]" for
//               blamed entries still present; resolved ones are dropped
class ScriptedStateUpdater : public StateUpdaterBackend {
 public:
  StateRevision revise(const StateDoc& state, std::span<const Diagnostic> diagnostics,
                       const Playbook& old_playbook,
                       const Playbook& new_playbook) const override;
};

std::string gap_hypothesis(std::string_view token);
std::string suspect_hypothesis(EntryId id);

}  // namespace ctxopt

#endif  // CTXOPT_OPTIMIZER_STATE_HPP_
