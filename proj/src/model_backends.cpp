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

#include "ctxopt/model_backends.hpp"

#include <algorithm>
#include <sstream>

#include "ctxopt/default_prompts.hpp"
#include "ctxopt/errors.hpp"
#include "ctxopt/structured_output.hpp"

namespace ctxopt {
namespace {

constexpr std::string_view kDiagnosticFormat =
    "Reply with exactly one fenced block:\n"
    "```diagnostic\n"
    "attribution: <actionable_gap | execution_variance | intractable>\n"
    "root_cause: <one line; refer to playbook entries as [id]>\n"
    "coverage_gap: <guidance the playbook lacks, or none>\n"
    "cited_entries: <comma-separated entry ids, or none>\n"
    "```\n"
    "actionable_gap: a playbook change would have prevented the failure.\n"
    "execution_variance: the playbook was adequate and the agent slipped.\n"
    "intractable: no playbook change can fix this task.\n";

constexpr std::string_view kProseFormat =
    "Explain in a few sentences why the run failed. Refer to playbook entries as [id].\n";

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

std::string one_line(std::string_view s) {
  std::string out;
  for (char c : trim(s)) out += (c == '\n' || c == '\r') ? ' ' : c;
  return out;
}

template <typename T, typename Parse>
T complete_structured(const ModelClient& client, std::vector<Message> messages,
                      std::string_view what, std::string_view tag, Parse parse) {
  std::string last;
  for (int attempt = 0; attempt <= kParseRetries; ++attempt) {
    const std::string reply = client.complete(messages);
    try {
      return parse(reply);
    } catch (const OutputParseError& e) {
      last = e.what();
      messages.push_back({"assistant", reply});
      messages.push_back({"user", "Your reply could not be parsed (" + last +
                                      "). Reply again with exactly one ```" +
                                      std::string(tag) + " block."});
    }
  }
  throw MalformedModelOutput(std::string(what) + " output unparseable after " +
                                 std::to_string(kParseRetries + 1) + " attempts: " + last,
                             kParseRetries + 1);
}

}  // namespace

std::string_view default_prompt(Role role) {
  switch (role) {
    case Role::agent: return prompts::kAgent;
    case Role::reflector: return prompts::kReflector;
    case Role::mutator: return prompts::kMutator;
    case Role::state_updater: return prompts::kStateUpdater;
  }
  return prompts::kAgent;
}

std::string render_trace(const Trajectory& t, const Outcome* outcome) {
  std::ostringstream out;
  out << "task: " << t.task_id << "\n";
  if (outcome) {
    out << "outcome: " << (outcome->passed ? "passed" : "failed") << " (reward "
        << outcome->reward << ")\n";
  } else {
    out << "outcome: withheld\n";
  }
  for (std::size_t i = 0; i < t.steps.size(); ++i) {
    out << "step " << i + 1 << "\n  thought: " << one_line(t.steps[i].thought)
        << "\n  action: " << one_line(t.steps[i].action)
        << "\n  observation: " << one_line(t.steps[i].observation) << "\n";
  }
  out << "final answer: " << one_line(t.final_answer) << "\n";
  if (!t.failure_note.empty()) out << "failure: " << one_line(t.failure_note) << "\n";
  if (t.annotated) {
    out << "cited entries:";
    for (EntryId id : t.cited_entry_ids) out << " [" << id.value << "]";
    out << "\n";
  }
  return out.str();
}

std::string render_diagnostics(std::span<const Diagnostic> diagnostics) {
  std::ostringstream out;
  for (std::size_t i = 0; i < diagnostics.size(); ++i) {
    const Diagnostic& d = diagnostics[i];
    out << "- diagnostic " << i + 1 << " (task " << d.source_task_id << ", "
        << to_string(d.mode) << ")\n  attribution: " << to_string(d.attribution)
        << "\n  root_cause: " << d.root_cause
        << "\n  coverage_gap: " << (d.coverage_gap.empty() ? "none" : d.coverage_gap)
        << "\n  cited_entries:";
    if (d.cited_entry_ids.empty()) out << " none";
    for (EntryId id : d.cited_entry_ids) out << " [" << id.value << "]";
    out << "\n";
  }
  if (diagnostics.empty()) out << "(none)\n";
  return out.str();
}

ModelAgent::ModelAgent(std::shared_ptr<const ModelClient> client, std::string prompt)
    : client_(std::move(client)), prompt_(std::move(prompt)) {}

Trajectory ModelAgent::run(const TaskSpec& task, std::string_view context, bool annotated,
                           const RolloutContext& ctx) const {
  const std::string text = fill_template(
      prompt_, {{"playbook", std::string(context)}, {"task", task.input}, {"task_id", task.task_id}});
  const std::string reply = client_->complete({{"user", text}}, ctx.temperature);

  Trajectory t;
  t.task_id = task.task_id;
  t.annotated = annotated;
  t.steps.push_back({one_line(reply), "answer", ""});
  std::vector<std::string> answers;
  try {
    answers = fenced_blocks(reply, "answer");
  } catch (const OutputParseError&) {
  }
  t.final_answer = answers.empty() ? trim(reply) : trim(answers.back());
  if (annotated) {
    std::istringstream lines(reply);
    std::string line;
    while (std::getline(lines, line)) {
      const std::string l = trim(line);
      if (l.rfind("CITE:", 0) != 0) continue;
      std::string token;
      for (char c : l.substr(5) + ",") {
        if (c >= '0' && c <= '9') {
          token += c;
        } else if (!token.empty()) {
          const EntryId id{std::stoull(token)};
          if (std::find(t.cited_entry_ids.begin(), t.cited_entry_ids.end(), id) ==
              t.cited_entry_ids.end()) {
            t.cited_entry_ids.push_back(id);
          }
          token.clear();
        }
      }
    }
  }
  return t;
}

ModelReflector::ModelReflector(std::shared_ptr<const ModelClient> client, std::string prompt)
    : client_(std::move(client)), prompt_(std::move(prompt)) {}

Diagnostic ModelReflector::reflect(const ReflectionRequest& req) const {
  std::string traces;
  if (req.positive) {
    traces += "### Passing trace\n" + render_trace(req.positive->trajectory,
                                                   &req.positive->outcome) + "\n";
  }
  for (const Rollout& r : req.traces) {
    traces += std::string(r.outcome.passed ? "### Passing trace\n" : "### Failing trace\n") +
              render_trace(r.trajectory, &r.outcome) + "\n";
  }
  if (req.annotation) {
    traces += "### Annotated trace (same task, entry citations)\n" +
              render_trace(*req.annotation, nullptr) + "\n";
  }
  const std::string text = fill_template(
      prompt_, {{"mode", std::string(to_string(req.mode))},
                {"playbook", render(*req.playbook)},
                {"traces", traces},
                {"format", std::string(req.structured ? kDiagnosticFormat : kProseFormat)}});

  if (req.structured) {
    return complete_structured<Diagnostic>(*client_, {{"user", text}}, "reflector",
                                           "diagnostic", [](const std::string& reply) {
                                             return parse_diagnostic(reply);
                                           });
  }
  return complete_structured<Diagnostic>(
      *client_, {{"user", text}}, "reflector", "diagnostic", [](const std::string& reply) {
        Diagnostic d;
        d.root_cause = one_line(reply);
        if (d.root_cause.empty()) throw OutputParseError("empty reply");
        d.cited_entry_ids = entry_refs(d.root_cause);
        return d;
      });
}

ModelMutator::ModelMutator(std::shared_ptr<const ModelClient> client, std::size_t max_edits,
                           std::string prompt)
    : client_(std::move(client)), max_edits_(max_edits), prompt_(std::move(prompt)) {}

MutationProposal ModelMutator::propose(const Playbook& playbook,
                                       std::span<const Diagnostic> diagnostics,
                                       const StateDoc* state) const {
  const std::string text = fill_template(
      prompt_, {{"playbook", render(playbook)},
                {"diagnostics", render_diagnostics(diagnostics)},
                {"state", state ? "## Optimizer state\n" + render_for_mutator(*state) : ""},
                {"max_edits", std::to_string(max_edits_)}});
  return complete_structured<MutationProposal>(
      *client_, {{"user", text}}, "mutator", "mutation",
      [](const std::string& reply) { return parse_mutation(reply); });
}

ModelStateUpdater::ModelStateUpdater(std::shared_ptr<const ModelClient> client,
                                     std::string prompt)
    : client_(std::move(client)), prompt_(std::move(prompt)) {}

StateRevision ModelStateUpdater::revise(const StateDoc& state,
                                        std::span<const Diagnostic> diagnostics,
                                        const Playbook& old_playbook,
                                        const Playbook& new_playbook) const {
  std::string edits;
  for (const EditOp& e : diff(old_playbook, new_playbook)) edits += describe(e) + "\n";
  if (edits.empty()) edits = "(none)\n";
  const std::string text = fill_template(
      prompt_, {{"state", render_for_mutator(state)},
                {"diagnostics", render_diagnostics(diagnostics)},
                {"old_playbook", render(old_playbook)},
                {"new_playbook", render(new_playbook)},
                {"edits", edits}});
  return complete_structured<StateRevision>(
      *client_, {{"user", text}}, "state updater", "state",
      [](const std::string& reply) { return parse_state(reply); });
}

}  // namespace ctxopt
