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

#include "ctxopt/optimizer_state.hpp"

#include <algorithm>

#include "ctxopt/errors.hpp"
#include "ctxopt/execution.hpp"

namespace ctxopt {

std::string_view to_string(Phase p) {
  return p == Phase::convergent ? "convergent" : "exploratory";
}

std::optional<Phase> parse_phase(std::string_view text) {
  if (text == "exploratory") return Phase::exploratory;
  if (text == "convergent") return Phase::convergent;
  return std::nullopt;
}

void to_json(nlohmann::json& j, const StateDoc& s) {
  nlohmann::json ledger = nlohmann::json::array();
  for (const auto& r : s.change_ledger) {
    ledger.push_back({{"iteration", r.iteration}, {"summary", r.summary}});
  }
  j = {{"change_ledger", std::move(ledger)},
       {"playbook_assessment", s.playbook_assessment},
       {"open_hypotheses", s.open_hypotheses},
       {"phase", to_string(s.phase)},
       {"iteration", s.iteration}};
}

void from_json(const nlohmann::json& j, StateDoc& s) {
  s.change_ledger.clear();
  for (const auto& r : j.at("change_ledger")) {
    s.change_ledger.push_back(
        {r.at("iteration").get<int>(), r.at("summary").get<std::string>()});
  }
  s.playbook_assessment = j.at("playbook_assessment").get<std::string>();
  s.open_hypotheses = j.at("open_hypotheses").get<std::vector<std::string>>();
  const auto phase = parse_phase(j.at("phase").get<std::string>());
  if (!phase) throw Error("state with unknown phase");
  s.phase = *phase;
  s.iteration = j.at("iteration").get<int>();
}

StateDoc update_state(const StateUpdaterBackend& backend, const StateDoc& state,
                      std::span<const Diagnostic> diagnostics,
                      const Playbook& old_playbook, const Playbook& new_playbook) {
  if (new_playbook.version() < old_playbook.version()) {
    throw PreconditionViolation("state update with a playbook older than its base");
  }
  StateRevision rev = backend.revise(state, diagnostics, old_playbook, new_playbook);
  StateDoc next = state;
  next.iteration = state.iteration + 1;
  next.change_ledger.push_back({next.iteration, std::move(rev.summary)});
  next.playbook_assessment = std::move(rev.assessment);
  next.open_hypotheses = std::move(rev.hypotheses);
  next.phase = rev.phase;
  return next;
}

namespace {

std::string escape(std::string_view text) {
  std::string out;
  for (char c : text) {
    if (c == '\\') {
      out += "\\\\";
    } else if (c == '\n') {
      out += "\\n";
    } else {
      out += c;
    }
  }
  return out;
}

}  // namespace

std::string render_for_mutator(const StateDoc& state) {
  std::string out = "# Optimizer state\n";
  out += "iteration: " + std::to_string(state.iteration) + "\n";
  out += "phase: " + std::string(to_string(state.phase)) + "\n";
  out += "assessment: " + escape(state.playbook_assessment) + "\n";
  out += "hypotheses:\n";
  for (const auto& h : state.open_hypotheses) out += "- " + escape(h) + "\n";
  out += "ledger:\n";
  for (const auto& r : state.change_ledger) {
    out += "- " + std::to_string(r.iteration) + ": " + escape(r.summary) + "\n";
  }
  return out;
}

std::string gap_hypothesis(std::string_view token) {
  return "gap: " + std::string(token);
}

std::string suspect_hypothesis(EntryId id) {
  return "suspect: [" + std::to_string(id.value) + "]";
}

StateRevision ScriptedStateUpdater::revise(const StateDoc& state,
                                           std::span<const Diagnostic> diagnostics,
                                           const Playbook& old_playbook,
                                           const Playbook& new_playbook) const {
  StateRevision rev;
  const auto edits = diff(old_playbook, new_playbook);
  if (edits.empty()) {
    rev.summary = std::string(kNoEditSummary);
  } else {
    for (std::size_t i = 0; i < edits.size(); ++i) {
      if (i) rev.summary += "; ";
      rev.summary += describe(edits[i]);
    }
  }

  int trailing_noops = edits.empty() ? 1 : 0;
  if (edits.empty()) {
    for (auto it = state.change_ledger.rbegin();
         it != state.change_ledger.rend() && it->summary == kNoEditSummary; ++it) {
      ++trailing_noops;
    }
  }
  rev.phase = trailing_noops >= 3 ? Phase::convergent : Phase::exploratory;

  std::size_t actionable = 0;
  for (const Diagnostic& d : diagnostics) {
    actionable += d.attribution == Attribution::actionable_gap;
  }
  rev.assessment = "version " + std::to_string(new_playbook.version()) + ": " +
                   std::to_string(new_playbook.entry_count()) + " entries in " +
                   std::to_string(new_playbook.sections().size()) + " sections; " +
                   std::to_string(diagnostics.size()) + " diagnostics (" +
                   std::to_string(actionable) + " actionable)";

  auto still_open = [&](const std::string& h) {
    if (h.rfind("gap: ", 0) == 0) {
      return !entry_for_token(new_playbook, std::string_view(h).substr(5)).has_value();
    }
    if (h.rfind("suspect: ", 0) == 0) {
      const auto refs = entry_refs(h);
      return !refs.empty() && new_playbook.contains(refs.front());
    }
    return true;
  };
  auto add = [&](std::string h) {
    if (still_open(h) &&
        std::find(rev.hypotheses.begin(), rev.hypotheses.end(), h) == rev.hypotheses.end()) {
      rev.hypotheses.push_back(std::move(h));
    }
  };
  for (const auto& h : state.open_hypotheses) add(h);
  for (const Diagnostic& d : diagnostics) {
    if (d.attribution != Attribution::actionable_gap) continue;
    for (const auto& tok : word_tokens(d.coverage_gap)) add(gap_hypothesis(tok));
    for (EntryId id : entry_refs(d.root_cause)) add(suspect_hypothesis(id));
  }
  return rev;
}

}  // namespace ctxopt
