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

#include "ctxopt/reflection.hpp"

#include <algorithm>
#include <set>

#include "ctxopt/errors.hpp"

namespace ctxopt {

std::string_view to_string(Attribution a) {
  switch (a) {
    case Attribution::actionable_gap: return "actionable_gap";
    case Attribution::execution_variance: return "execution_variance";
    case Attribution::intractable: return "intractable";
  }
  return "actionable_gap";
}

std::string_view to_string(ReflectionMode m) {
  switch (m) {
    case ReflectionMode::single: return "single";
    case ReflectionMode::contrastive: return "contrastive";
    case ReflectionMode::dual: return "dual";
    case ReflectionMode::batched: return "batched";
  }
  return "single";
}

std::optional<Attribution> parse_attribution(std::string_view text) {
  for (auto a : {Attribution::actionable_gap, Attribution::execution_variance,
                 Attribution::intractable}) {
    if (text == to_string(a)) return a;
  }
  return std::nullopt;
}

std::optional<ReflectionMode> parse_reflection_mode(std::string_view text) {
  for (auto m : {ReflectionMode::single, ReflectionMode::contrastive,
                 ReflectionMode::dual, ReflectionMode::batched}) {
    if (text == to_string(m)) return m;
  }
  return std::nullopt;
}

void to_json(nlohmann::json& j, const Diagnostic& d) {
  j = {{"attribution", to_string(d.attribution)},
       {"root_cause", d.root_cause},
       {"coverage_gap", d.coverage_gap},
       {"cited_entry_ids", d.cited_entry_ids},
       {"source_task_id", d.source_task_id},
       {"mode", to_string(d.mode)}};
}

void from_json(const nlohmann::json& j, Diagnostic& d) {
  const auto attribution = parse_attribution(j.at("attribution").get<std::string>());
  const auto mode = parse_reflection_mode(j.at("mode").get<std::string>());
  if (!attribution || !mode) throw Error("diagnostic with unknown attribution or mode");
  d.attribution = *attribution;
  d.mode = *mode;
  d.root_cause = j.at("root_cause").get<std::string>();
  d.coverage_gap = j.at("coverage_gap").get<std::string>();
  d.cited_entry_ids = j.at("cited_entry_ids").get<std::vector<EntryId>>();
  d.source_task_id = j.at("source_task_id").get<std::string>();
}

namespace {

void require(bool condition, const char* message) {
  if (!condition) throw PreconditionViolation(message);
}

Diagnostic finish(Diagnostic d, ReflectionMode mode, std::string source,
                  const Playbook& playbook) {
  d.mode = mode;
  d.source_task_id = std::move(source);
  std::vector<EntryId> cited;
  for (EntryId id : d.cited_entry_ids) {
    if (playbook.contains(id) && std::find(cited.begin(), cited.end(), id) == cited.end()) {
      cited.push_back(id);
    }
  }
  d.cited_entry_ids = std::move(cited);
  return d;
}

}  // namespace

Diagnostic reflect_single(const ReflectorBackend& backend, const Rollout& failed,
                          const Playbook& playbook, const ReflectOptions& options) {
  require(!failed.outcome.passed, "reflect_single needs a failed trace");
  require(!failed.trajectory.annotated, "reflect_single takes standard traces only");
  ReflectionRequest req;
  req.mode = ReflectionMode::single;
  req.traces = std::span<const Rollout>(&failed, 1);
  req.playbook = &playbook;
  req.structured = options.structured;
  return finish(backend.reflect(req), ReflectionMode::single, failed.trajectory.task_id,
                playbook);
}

Diagnostic reflect_contrastive(const ReflectorBackend& backend, const Rollout& positive,
                               const Rollout& negative, const Playbook& playbook,
                               const Trajectory* annotation,
                               const ReflectOptions& options) {
  require(positive.outcome.passed && !negative.outcome.passed,
          "reflect_contrastive needs one passing and one failing trace");
  require(positive.trajectory.task_id == negative.trajectory.task_id,
          "contrastive traces must come from the same task");
  require(!positive.trajectory.annotated && !negative.trajectory.annotated,
          "contrastive traces must be standard traces");
  if (annotation) {
    require(annotation->annotated && annotation->task_id == negative.trajectory.task_id,
            "attached annotation must be an annotated trace of the same task");
  }
  ReflectionRequest req;
  req.mode = ReflectionMode::contrastive;
  req.traces = std::span<const Rollout>(&negative, 1);
  req.positive = &positive;
  req.annotation = annotation;
  req.playbook = &playbook;
  req.structured = options.structured;
  return finish(backend.reflect(req), ReflectionMode::contrastive,
                negative.trajectory.task_id, playbook);
}

Diagnostic reflect_dual(const ReflectorBackend& backend, const Rollout& standard,
                        const Trajectory& annotated, const Playbook& playbook,
                        const ReflectOptions& options) {
  require(annotated.annotated, "reflect_dual needs an annotated trace");
  require(!standard.trajectory.annotated, "reflect_dual needs a standard trace");
  require(standard.trajectory.task_id == annotated.task_id,
          "dual traces must come from the same task");
  require(!standard.outcome.passed, "reflect_dual needs a failed standard trace");
  ReflectionRequest req;
  req.mode = ReflectionMode::dual;
  req.traces = std::span<const Rollout>(&standard, 1);
  req.annotation = &annotated;
  req.playbook = &playbook;
  req.structured = options.structured;
  return finish(backend.reflect(req), ReflectionMode::dual, standard.trajectory.task_id,
                playbook);
}

Diagnostic reflect_batched(const ReflectorBackend& backend,
                           std::span<const Rollout> traces, const Playbook& playbook,
                           const ReflectOptions& options) {
  std::vector<std::string> sources;
  bool any_failed = false;
  for (const Rollout& r : traces) {
    require(!r.trajectory.annotated, "reflect_batched takes standard traces only");
    if (r.outcome.passed) continue;
    any_failed = true;
    if (std::find(sources.begin(), sources.end(), r.trajectory.task_id) == sources.end()) {
      sources.push_back(r.trajectory.task_id);
    }
  }
  require(any_failed, "reflect_batched needs at least one failed trace");
  std::string source;
  for (std::size_t i = 0; i < sources.size(); ++i) {
    if (i) source += ',';
    source += sources[i];
  }
  ReflectionRequest req;
  req.mode = ReflectionMode::batched;
  req.traces = traces;
  req.playbook = &playbook;
  req.structured = options.structured;
  return finish(backend.reflect(req), ReflectionMode::batched, std::move(source),
                playbook);
}

// ---------------------------------------------------------------------------
// Scripted reflector

namespace {

std::string quoted_list(const std::vector<std::string>& tokens) {
  std::string out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i) out += ", ";
    out += "'" + tokens[i] + "'";
  }
  return out;
}

std::string join_words(const std::vector<std::string>& tokens) {
  std::string out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i) out += ' ';
    out += tokens[i];
  }
  return out;
}

std::string entry_ref(EntryId id) { return "[" + std::to_string(id.value) + "]"; }

struct Analysis {
  Attribution attribution = Attribution::execution_variance;
  std::vector<std::string> missing;
  std::vector<std::pair<std::string, EntryId>> harmful;
  std::optional<EntryId> slipped;
  std::string root_cause;
};

std::optional<EntryId> slip_entry(const Trajectory& t) {
  for (const Step& s : t.steps) {
    if (s.action.rfind("skip ", 0) == 0) {
      const auto refs = entry_refs(s.observation);
      if (!refs.empty()) return refs.front();
    }
  }
  return std::nullopt;
}

std::string harm_text(const std::vector<std::pair<std::string, EntryId>>& harmful) {
  std::string out;
  for (const auto& [tok, id] : harmful) {
    if (!out.empty()) out += "; ";
    out += "entry " + entry_ref(id) + " prescribes forbidden '" + tok + "'";
  }
  return out;
}

Analysis analyze(const RuleSpec& rules, const Rollout& failed, const Playbook& pb,
                 bool structured, bool blame_slip) {
  Analysis a;
  std::vector<std::string> conflicts;
  for (const auto& tok : rules.required) {
    if (std::find(rules.forbidden.begin(), rules.forbidden.end(), tok) !=
        rules.forbidden.end()) {
      conflicts.push_back(tok);
    }
  }
  if (!conflicts.empty()) {
    a.attribution = Attribution::intractable;
    a.root_cause = "task both requires and forbids " + quoted_list(conflicts);
    return a;
  }
  for (const auto& tok : rules.required) {
    if (!entry_for_token(pb, tok)) a.missing.push_back(tok);
  }
  for (const auto& tok : rules.forbidden) {
    if (auto id = entry_for_token(pb, tok)) a.harmful.emplace_back(tok, *id);
  }
  if (!a.missing.empty() || !a.harmful.empty()) {
    a.attribution = Attribution::actionable_gap;
    std::string text;
    if (!a.missing.empty()) text = "no entry covers " + quoted_list(a.missing);
    if (!a.harmful.empty()) {
      if (!text.empty()) text += "; ";
      text += harm_text(a.harmful);
    }
    a.root_cause = std::move(text);
    return a;
  }
  a.attribution = Attribution::execution_variance;
  if (!failed.trajectory.failure_note.empty()) {
    a.root_cause = "run aborted: " + failed.trajectory.failure_note;
  } else {
    a.root_cause = "every rule is covered; the run failed on its own";
  }
  if (!structured && blame_slip) {
    a.slipped = slip_entry(failed.trajectory);
    if (a.slipped) a.root_cause = "the agent deviated from entry " + entry_ref(*a.slipped);
  }
  return a;
}

Diagnostic to_diagnostic(const Analysis& a, bool structured) {
  Diagnostic d;
  d.attribution = structured ? a.attribution : Attribution::actionable_gap;
  d.root_cause = a.root_cause;
  d.coverage_gap = join_words(a.missing);
  for (const auto& [tok, id] : a.harmful) d.cited_entry_ids.push_back(id);
  if (a.slipped) d.cited_entry_ids.push_back(*a.slipped);
  return d;
}

std::string divergence(const Trajectory& pos, const Trajectory& neg) {
  const std::size_t n = std::min(pos.steps.size(), neg.steps.size());
  std::size_t i = 0;
  while (i < n && pos.steps[i] == neg.steps[i]) ++i;
  const std::string p = i < pos.steps.size() ? pos.steps[i].action : "end of run";
  const std::string q = i < neg.steps.size() ? neg.steps[i].action : "end of run";
  return "runs diverge at step " + std::to_string(i + 1) + " ('" + p + "' vs '" + q + "')";
}

}  // namespace

RuleWorldReflector::RuleWorldReflector(std::span<const TaskSpec> tasks) {
  for (const TaskSpec& t : tasks) {
    if (t.rules) rules_[t.task_id] = *t.rules;
  }
}

const RuleSpec& RuleWorldReflector::rules_for(const std::string& task_id) const {
  auto it = rules_.find(task_id);
  if (it == rules_.end()) {
    throw AgentFailure("scripted reflector has no rules for task '" + task_id + "'");
  }
  return it->second;
}

Diagnostic RuleWorldReflector::reflect(const ReflectionRequest& req) const {
  const Playbook& pb = *req.playbook;
  Diagnostic d;

  if (req.mode == ReflectionMode::batched) {
    std::vector<Analysis> parts;
    for (const Rollout& r : req.traces) {
      if (r.outcome.passed) continue;
      parts.push_back(analyze(rules_for(r.trajectory.task_id), r, pb, req.structured, true));
    }
    if (parts.size() == 1) {
      d = to_diagnostic(parts.front(), req.structured);
    } else {
      bool any_actionable = false;
      bool all_intractable = true;
      std::map<std::string, int> counts;
      std::set<EntryId> harmful_ids;
      std::vector<std::pair<std::string, EntryId>> harmful;
      std::vector<EntryId> slips;
      std::size_t gap_traces = 0;
      for (const Analysis& a : parts) {
        any_actionable |= a.attribution == Attribution::actionable_gap;
        all_intractable &= a.attribution == Attribution::intractable;
        if (!a.missing.empty()) ++gap_traces;
        for (const auto& tok : a.missing) ++counts[tok];
        for (const auto& h : a.harmful) {
          if (harmful_ids.insert(h.second).second) harmful.push_back(h);
        }
        if (a.slipped && std::find(slips.begin(), slips.end(), *a.slipped) == slips.end()) {
          slips.push_back(*a.slipped);
        }
      }
      d.attribution = any_actionable    ? Attribution::actionable_gap
                      : all_intractable ? Attribution::intractable
                                        : Attribution::execution_variance;
      if (!req.structured) d.attribution = Attribution::actionable_gap;

      std::vector<std::string> shared;
      std::vector<std::string> all;
      for (const auto& [tok, n] : counts) {
        all.push_back(tok);
        if (static_cast<std::size_t>(n) == gap_traces) shared.push_back(tok);
      }
      std::string text;
      if (!shared.empty()) {
        d.coverage_gap = join_words(shared);
        text = std::to_string(gap_traces) + " failing traces lack " + quoted_list(shared);
      } else if (!all.empty()) {
        d.coverage_gap = join_words(all);
        text = "competing causes:";
        for (const auto& [tok, n] : counts) {
          text += " '" + tok + "' x" + std::to_string(n);
        }
      }
      if (!harmful.empty()) {
        if (!text.empty()) text += "; ";
        text += harm_text(harmful);
        for (const auto& h : harmful) d.cited_entry_ids.push_back(h.second);
      }
      for (EntryId id : slips) {
        if (!text.empty()) text += "; ";
        text += "the agent deviated from entry " + entry_ref(id);
        d.cited_entry_ids.push_back(id);
      }
      if (text.empty()) text = "no shared cause across " + std::to_string(parts.size()) +
                               " failing traces";
      d.root_cause = std::move(text);
    }
  } else {
    const Rollout& failed = req.traces.front();
    const RuleSpec& rules = rules_for(failed.trajectory.task_id);
    if (req.mode == ReflectionMode::contrastive && req.positive) {
      const Trajectory& pos = req.positive->trajectory;
      if (pos.steps == failed.trajectory.steps &&
          pos.final_answer == failed.trajectory.final_answer) {
        d.attribution = req.structured ? Attribution::execution_variance
                                       : Attribution::actionable_gap;
        d.root_cause = "both runs made identical decisions";
      } else {
        d = to_diagnostic(analyze(rules, failed, pb, req.structured, false),
                          req.structured);
        d.root_cause = divergence(pos, failed.trajectory) + "; " + d.root_cause;
      }
    } else {
      d = to_diagnostic(analyze(rules, failed, pb, req.structured, true), req.structured);
    }
  }

  if (req.annotation) {
    for (EntryId id : req.annotation->cited_entry_ids) d.cited_entry_ids.push_back(id);
  }
  return d;
}

}  // namespace ctxopt
