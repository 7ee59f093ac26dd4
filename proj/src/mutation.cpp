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

#include "ctxopt/mutation.hpp"

#include <algorithm>
#include <map>
#include <set>

#include "ctxopt/errors.hpp"
#include "ctxopt/execution.hpp"

namespace ctxopt {

void to_json(nlohmann::json& j, const MutationResult& r) {
  nlohmann::json dropped = nlohmann::json::array();
  for (const auto& d : r.dropped) dropped.push_back({{"edit", d.edit}, {"reason", d.reason}});
  j = {{"edits", r.edits},
       {"rationale", r.rationale},
       {"no_op", r.no_op},
       {"dropped", std::move(dropped)},
       {"state_injected", r.state_injected}};
}

void from_json(const nlohmann::json& j, MutationResult& r) {
  r.edits = j.at("edits").get<std::vector<EditOp>>();
  r.rationale = j.at("rationale").get<std::string>();
  r.no_op = j.at("no_op").get<bool>();
  r.dropped.clear();
  for (const auto& d : j.at("dropped")) {
    r.dropped.push_back({d.at("edit").get<EditOp>(), d.at("reason").get<std::string>()});
  }
  r.state_injected = j.at("state_injected").get<bool>();
}

namespace {

bool has_content(const Playbook& pb, const std::string& content) {
  for (const Section& s : pb.sections()) {
    for (const Entry& e : s.entries) {
      if (e.content == content) return true;
    }
  }
  return false;
}

// Reason to reject `edit` before trying it, or empty.
std::string precheck(const Playbook& pb, const EditOp& edit) {
  if (const auto* add = std::get_if<AddEntry>(&edit)) {
    if (add->section.empty() || add->section.find('\n') != std::string::npos) {
      return "invalid section name";
    }
    if (has_content(pb, add->content)) return "duplicate content";
  } else if (const auto* upd = std::get_if<UpdateEntry>(&edit)) {
    const Entry* e = pb.find(upd->id);
    if (e && e->content == upd->content) return "unchanged content";
  }
  return {};
}

}  // namespace

MutationResult mutate(const MutatorBackend& backend, const Playbook& playbook,
                      std::span<const Diagnostic> diagnostics, const StateDoc* state,
                      const MutateOptions& options) {
  MutationResult result;
  if (diagnostics.empty()) {
    result.rationale = "no diagnostics";
    return result;
  }
  MutationProposal proposal = backend.propose(playbook, diagnostics, state);
  result.rationale = std::move(proposal.rationale);
  result.state_injected = state != nullptr;

  Playbook work = playbook;
  for (EditOp& edit : proposal.edits) {
    if (result.edits.size() >= options.max_edits) {
      result.dropped.push_back({std::move(edit), "edit cap reached"});
      continue;
    }
    std::string reason = precheck(work, edit);
    if (reason.empty()) {
      try {
        work = apply_edits(work, std::span<const EditOp>(&edit, 1));
      } catch (const Error& e) {
        reason = e.what();
      }
    }
    if (reason.empty()) {
      result.edits.push_back(std::move(edit));
    } else {
      result.dropped.push_back({std::move(edit), std::move(reason)});
    }
  }
  result.no_op = result.edits.empty();
  return result;
}

Playbook apply_mutation(const Playbook& playbook, const MutationResult& result) {
  return apply_edits(playbook, result.edits);
}

std::string MajorityVoteMutator::rule_for(std::string_view token) {
  return "Always apply " + std::string(token) + " when it is relevant.";
}

MutationProposal MajorityVoteMutator::propose(const Playbook& playbook,
                                              std::span<const Diagnostic> diagnostics,
                                              const StateDoc* state) const {
  const std::size_t k = diagnostics.size();
  const std::size_t threshold = (k + 1) / 2;

  std::map<std::string, std::size_t> gap_votes;
  std::map<EntryId, std::size_t> blame_votes;
  for (const Diagnostic& d : diagnostics) {
    if (d.attribution != Attribution::actionable_gap) continue;
    const auto words = word_tokens(d.coverage_gap);
    for (const auto& tok : std::set<std::string>(words.begin(), words.end())) {
      ++gap_votes[tok];
    }
    for (EntryId id : entry_refs(d.root_cause)) ++blame_votes[id];
  }

  std::set<std::string> hypotheses;
  if (state) hypotheses.insert(state->open_hypotheses.begin(), state->open_hypotheses.end());

  MutationProposal out;
  std::string notes;
  auto note = [&](const std::string& s) {
    if (!notes.empty()) notes += "; ";
    notes += s;
  };
  auto tally = [&](std::size_t votes) {
    return " (" + std::to_string(votes) + "/" + std::to_string(k) + ")";
  };

  for (const auto& [id, votes] : blame_votes) {
    if (votes < threshold || !playbook.contains(id)) continue;
    if (state && !hypotheses.count(suspect_hypothesis(id))) {
      note("suspect [" + std::to_string(id.value) + "] on first strike" + tally(votes));
      continue;
    }
    out.edits.push_back(DeleteEntry{id});
    note("delete [" + std::to_string(id.value) + "]" + tally(votes));
  }
  for (const auto& [tok, votes] : gap_votes) {
    const bool carried = state && hypotheses.count(gap_hypothesis(tok));
    if (votes < threshold && !carried) continue;
    out.edits.push_back(AddEntry{section_, rule_for(tok)});
    note("add '" + tok + "'" + tally(votes) + (carried && votes < threshold ? " carried" : ""));
  }
  out.rationale = notes.empty() ? "no recurring pattern across " + std::to_string(k) +
                                      " diagnostics"
                                : notes;
  return out;
}

}  // namespace ctxopt
