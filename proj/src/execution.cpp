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

#include "ctxopt/execution.hpp"

#include <omp.h>

#include <algorithm>
#include <map>
#include <set>
#include <sstream>

#include "ctxopt/errors.hpp"
#include "ctxopt/json_io.hpp"
#include "ctxopt/rng.hpp"

namespace ctxopt {
namespace {

std::string normalize_ws(std::string_view text) {
  std::string out;
  bool pending_space = false;
  for (char c : text) {
    if (c == ' ' || c == '\t' || c == '\n' || c == '\r') {
      pending_space = !out.empty();
      continue;
    }
    if (pending_space) out += ' ';
    pending_space = false;
    out += c;
  }
  return out;
}

std::string join(const std::vector<std::string>& parts, std::string_view sep) {
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (i) out += sep;
    out += parts[i];
  }
  return out;
}

bool is_token(std::string_view s) {
  return !s.empty() && std::all_of(s.begin(), s.end(), [](char c) {
    return (c >= 'a' && c <= 'z') || (c >= '0' && c <= '9') || c == '_';
  });
}

double temperature_for(const ExecutionOptions& options, int index) {
  if (options.temperatures.empty()) return 1.0;
  const auto i = static_cast<std::size_t>(std::max(index, 0));
  return i < options.temperatures.size() ? options.temperatures[i]
                                         : options.temperatures.back();
}

struct Job {
  std::size_t task;
  int rollout;  // -1 for the annotated trace
};

}  // namespace

std::size_t RolloutGroup::pass_count() const {
  return static_cast<std::size_t>(std::count_if(
      rollouts.begin(), rollouts.end(),
      [](const Rollout& r) { return r.outcome.passed; }));
}

bool RolloutGroup::mixed() const {
  const std::size_t p = pass_count();
  return p > 0 && p < rollouts.size();
}

bool RolloutGroup::all_failed() const {
  return !rollouts.empty() && pass_count() == 0;
}

bool RolloutGroup::all_passed() const {
  return !rollouts.empty() && pass_count() == rollouts.size();
}

std::string label_text(const TaskSpec& task) {
  if (task.label.is_string()) return task.label.get<std::string>();
  if (task.label.is_null()) return {};
  return task.label.dump();
}

Outcome ExactMatchEvaluator::score(const TaskSpec& task,
                                   const Trajectory& trajectory) const {
  Outcome out;
  out.excluded_from_eval = trajectory.annotated;
  if (!trajectory.failure_note.empty()) return out;
  const bool match =
      normalize_ws(trajectory.final_answer) == normalize_ws(label_text(task));
  out.reward = match ? 1.0 : 0.0;
  out.passed = out.reward >= kBinaryPassThreshold;
  return out;
}

std::vector<std::string> word_tokens(std::string_view text) {
  std::vector<std::string> words;
  std::string current;
  for (char raw : text) {
    char c = raw;
    if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
    if ((c >= 'a' && c <= 'z') || (c >= '0' && c <= '9') || c == '_') {
      current += c;
    } else if (!current.empty()) {
      words.push_back(std::move(current));
      current.clear();
    }
  }
  if (!current.empty()) words.push_back(std::move(current));
  return words;
}

std::vector<RenderedEntry> parse_rendered_entries(std::string_view context) {
  const std::string plain = strip_annotations(context);
  std::vector<RenderedEntry> entries;
  std::istringstream lines(plain);
  std::string line;
  while (std::getline(lines, line)) {
    if (line.size() < 4 || line[0] != '[') continue;
    const auto close = line.find("] ");
    if (close == std::string::npos || close < 2) continue;
    const std::string digits = line.substr(1, close - 1);
    if (!std::all_of(digits.begin(), digits.end(),
                     [](char c) { return c >= '0' && c <= '9'; })) {
      continue;
    }
    entries.push_back({EntryId{std::stoull(digits)}, line.substr(close + 2)});
  }
  return entries;
}

std::optional<EntryId> entry_for_token(const Playbook& playbook,
                                       std::string_view token) {
  for (const Section& s : playbook.sections()) {
    for (const Entry& e : s.entries) {
      for (const std::string& w : word_tokens(e.content)) {
        if (w == token) return e.id;
      }
    }
  }
  return std::nullopt;
}

bool rules_covered(const Playbook& playbook, const RuleSpec& rules) {
  for (const auto& tok : rules.required) {
    if (!entry_for_token(playbook, tok)) return false;
  }
  for (const auto& tok : rules.forbidden) {
    if (entry_for_token(playbook, tok)) return false;
  }
  return true;
}

Trajectory RuleWorldAgent::run(const TaskSpec& task, std::string_view context,
                               bool annotated, const RolloutContext& ctx) const {
  if (!task.rules) {
    throw AgentFailure("task '" + task.task_id + "' has no rule specification");
  }
  const RuleSpec& rules = *task.rules;

  std::map<std::string, EntryId> guidance;
  for (const RenderedEntry& e : parse_rendered_entries(context)) {
    for (std::string& w : word_tokens(e.content)) guidance.emplace(std::move(w), e.id);
  }

  std::set<std::string> tokens(rules.required.begin(), rules.required.end());
  tokens.insert(rules.forbidden.begin(), rules.forbidden.end());

  Trajectory t;
  t.task_id = task.task_id;
  t.annotated = annotated;

  std::set<std::string> applied;
  std::set<EntryId> consulted;
  for (const std::string& tok : tokens) {
    Step step{"Looking for guidance on '" + tok + "'", "lookup " + tok, "no guidance"};
    if (auto it = guidance.find(tok); it != guidance.end()) {
      step.observation = "entry [" + std::to_string(it->second.value) + "]";
      applied.insert(tok);
      consulted.insert(it->second);
    }
    t.steps.push_back(std::move(step));
  }

  bool would_pass = true;
  for (const auto& tok : rules.required) would_pass &= applied.count(tok) > 0;
  for (const auto& tok : rules.forbidden) would_pass &= applied.count(tok) == 0;

  Rng rng(ctx.seed);
  if (rules.flip_prob > 0.0 && rng.bernoulli(rules.flip_prob)) {
    if (would_pass) {
      std::vector<std::string> required(rules.required.begin(), rules.required.end());
      std::sort(required.begin(), required.end());
      if (!required.empty()) {
        const std::string& tok = required[rng.below(required.size())];
        applied.erase(tok);
        t.steps.push_back({"Proceeding without re-checking '" + tok + "'",
                           "skip " + tok,
                           "deviated from entry [" +
                               std::to_string(guidance.at(tok).value) + "]"});
      } else {
        applied.insert("improvised");
        t.steps.push_back({"Adding an unrequested step", "improvise",
                           "performed a procedure nobody asked for"});
      }
    } else {
      applied = std::set<std::string>(rules.required.begin(), rules.required.end());
      t.steps.push_back({"The playbook does not settle this; guessing", "guess",
                         "guessed the expected procedure"});
    }
  }

  t.final_answer = join(std::vector<std::string>(applied.begin(), applied.end()), " ");
  if (annotated) t.cited_entry_ids.assign(consulted.begin(), consulted.end());
  return t;
}

std::uint64_t rollout_seed(std::uint64_t base, std::string_view task_id,
                           int rollout_index, bool annotated) {
  return mix_seed({base, hash_string(task_id),
                   static_cast<std::uint64_t>(static_cast<std::int64_t>(rollout_index)),
                   annotated ? 1ULL : 0ULL});
}

namespace {

Rollout run_rendered(const AgentBackend& agent, const Evaluator& evaluator,
                     const TaskSpec& task, std::string_view context, bool annotated,
                     const RolloutContext& ctx) {
  Rollout r;
  try {
    r.trajectory = agent.run(task, context, annotated, ctx);
    r.trajectory.task_id = task.task_id;
    r.trajectory.annotated = annotated;
    if (!annotated) r.trajectory.cited_entry_ids.clear();
    r.outcome = evaluator.score(task, r.trajectory);
  } catch (const std::exception& e) {
    r.trajectory = Trajectory{};
    r.trajectory.task_id = task.task_id;
    r.trajectory.annotated = annotated;
    r.trajectory.failure_note = std::string("agent failure: ") + e.what();
    r.outcome = Outcome{};
  }
  r.outcome.excluded_from_eval = annotated;
  return r;
}

std::vector<RolloutGroup> run_jobs(const AgentBackend& agent,
                                   const Evaluator& evaluator,
                                   std::span<const TaskSpec> tasks,
                                   const Playbook& playbook, int group_size,
                                   bool with_annotation, std::uint64_t base_seed,
                                   const ExecutionOptions& options, bool parallel) {
  if (group_size < 1) throw PreconditionViolation("group size must be positive");
  const std::string plain = render(playbook);
  const std::string annotated = with_annotation ? render_annotated(playbook) : std::string();

  std::vector<Job> jobs;
  for (std::size_t i = 0; i < tasks.size(); ++i) {
    for (int r = 0; r < group_size; ++r) jobs.push_back({i, r});
    if (with_annotation) jobs.push_back({i, -1});
  }
  std::vector<Rollout> results(jobs.size());

  auto execute = [&](std::size_t j) {
    const Job& job = jobs[j];
    const TaskSpec& task = tasks[job.task];
    const bool ann = job.rollout < 0;
    RolloutContext ctx;
    ctx.rollout_index = ann ? 0 : job.rollout;
    ctx.seed = rollout_seed(base_seed, task.task_id, ctx.rollout_index, ann);
    ctx.temperature = temperature_for(options, ctx.rollout_index);
    results[j] = run_rendered(agent, evaluator, task, ann ? annotated : plain, ann, ctx);
  };

  const auto n = static_cast<std::int64_t>(jobs.size());
  if (parallel) {
    const int threads = options.max_parallel > 0 ? options.max_parallel
                                                 : omp_get_max_threads();
#pragma omp parallel for schedule(dynamic) num_threads(threads)
    for (std::int64_t j = 0; j < n; ++j) execute(static_cast<std::size_t>(j));
  } else {
    for (std::int64_t j = 0; j < n; ++j) execute(static_cast<std::size_t>(j));
  }

  std::vector<RolloutGroup> groups(tasks.size());
  for (std::size_t i = 0; i < tasks.size(); ++i) groups[i].task_id = tasks[i].task_id;
  for (std::size_t j = 0; j < jobs.size(); ++j) {
    RolloutGroup& g = groups[jobs[j].task];
    if (jobs[j].rollout < 0) {
      g.annotated = std::move(results[j]);
    } else {
      g.rollouts.push_back(std::move(results[j]));
    }
  }
  return groups;
}

}  // namespace

Rollout run_task(const AgentBackend& agent, const Evaluator& evaluator,
                 const TaskSpec& task, const Playbook& playbook, bool annotated,
                 const RolloutContext& ctx) {
  const std::string context = annotated ? render_annotated(playbook) : render(playbook);
  return run_rendered(agent, evaluator, task, context, annotated, ctx);
}

RolloutGroup run_group(const AgentBackend& agent, const Evaluator& evaluator,
                       const TaskSpec& task, const Playbook& playbook, int group_size,
                       std::uint64_t base_seed, const ExecutionOptions& options) {
  auto groups = run_jobs(agent, evaluator, std::span<const TaskSpec>(&task, 1), playbook,
                         group_size, false, base_seed, options, options.parallel);
  return std::move(groups.front());
}

DualRollout run_dual(const AgentBackend& agent, const Evaluator& evaluator,
                     const TaskSpec& task, const Playbook& playbook,
                     std::uint64_t base_seed, const ExecutionOptions& options) {
  auto groups = run_jobs(agent, evaluator, std::span<const TaskSpec>(&task, 1), playbook,
                         1, true, base_seed, options, options.parallel);
  return DualRollout{std::move(groups.front().rollouts.front()),
                     std::move(*groups.front().annotated)};
}

std::vector<RolloutGroup> run_batch(const AgentBackend& agent,
                                    const Evaluator& evaluator,
                                    std::span<const TaskSpec> tasks,
                                    const Playbook& playbook, int group_size,
                                    bool with_annotation, std::uint64_t base_seed,
                                    const ExecutionOptions& options) {
  return run_jobs(agent, evaluator, tasks, playbook, group_size, with_annotation,
                  base_seed, options, options.parallel);
}

std::vector<RolloutGroup> run_batch_serial(const AgentBackend& agent,
                                           const Evaluator& evaluator,
                                           std::span<const TaskSpec> tasks,
                                           const Playbook& playbook,
                                           int group_size, bool with_annotation,
                                           std::uint64_t base_seed,
                                           const ExecutionOptions& options) {
  return run_jobs(agent, evaluator, tasks, playbook, group_size, with_annotation,
                  base_seed, options, false);
}

double reward_variance(const RolloutGroup& group) {
  if (group.rollouts.empty()) return 0.0;
  double mean = 0.0;
  for (const Rollout& r : group.rollouts) mean += r.outcome.reward;
  mean /= static_cast<double>(group.rollouts.size());
  double var = 0.0;
  for (const Rollout& r : group.rollouts) {
    const double d = r.outcome.reward - mean;
    var += d * d;
  }
  return var / static_cast<double>(group.rollouts.size());
}

std::vector<RolloutGroup> select_for_reflection(std::span<const RolloutGroup> groups,
                                                std::size_t limit) {
  struct Candidate {
    int tier;  // 0 mixed, 1 uniform failure
    double variance;
    const RolloutGroup* group;
  };
  std::vector<Candidate> candidates;
  for (const RolloutGroup& g : groups) {
    if (g.mixed()) {
      candidates.push_back({0, 0.0, &g});
    } else if (g.all_failed()) {
      candidates.push_back({1, reward_variance(g), &g});
    }
  }
  std::sort(candidates.begin(), candidates.end(),
            [](const Candidate& a, const Candidate& b) {
              if (a.tier != b.tier) return a.tier < b.tier;
              if (a.variance != b.variance) return a.variance > b.variance;
              return a.group->task_id < b.group->task_id;
            });
  std::vector<RolloutGroup> selected;
  for (std::size_t i = 0; i < candidates.size() && i < limit; ++i) {
    selected.push_back(*candidates[i].group);
  }
  return selected;
}

std::vector<TaskSpec> parse_task_pool(const nlohmann::json& j) {
  if (!j.is_array()) throw ConfigError("task pool must be a JSON list");
  std::vector<TaskSpec> pool;
  std::set<std::string> ids;
  for (const auto& jt : j) {
    TaskSpec t;
    try {
      t.task_id = jt.at("task_id").get<std::string>();
      t.input = jt.value("input", std::string());
      if (jt.contains("label")) t.label = jt.at("label");
      const bool has_rules = jt.contains("required_tokens") ||
                             jt.contains("forbidden_tokens") ||
                             jt.contains("flip_prob");
      if (has_rules) {
        RuleSpec rules;
        rules.required = jt.value("required_tokens", std::vector<std::string>{});
        rules.forbidden = jt.value("forbidden_tokens", std::vector<std::string>{});
        rules.flip_prob = jt.value("flip_prob", 0.0);
        std::sort(rules.required.begin(), rules.required.end());
        std::sort(rules.forbidden.begin(), rules.forbidden.end());
        t.rules = std::move(rules);
      }
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(std::string("bad task entry: ") + e.what());
    }
    if (t.task_id.empty()) throw ConfigError("task with empty task_id");
    if (!ids.insert(t.task_id).second) {
      throw ConfigError("duplicate task_id '" + t.task_id + "'");
    }
    if (t.rules) {
      for (const auto* list : {&t.rules->required, &t.rules->forbidden}) {
        for (const auto& tok : *list) {
          if (!is_token(tok)) {
            throw ConfigError("task '" + t.task_id + "': token '" + tok +
                              "' must match [a-z0-9_]+");
          }
        }
      }
      if (t.rules->flip_prob < 0.0 || t.rules->flip_prob > 1.0) {
        throw ConfigError("task '" + t.task_id + "': flip_prob outside [0, 1]");
      }
      if (t.label.is_null()) t.label = join(t.rules->required, " ");
    }
    if (t.label.is_null()) throw ConfigError("task '" + t.task_id + "' has no label");
    pool.push_back(std::move(t));
  }
  return pool;
}

std::vector<TaskSpec> load_task_pool(const std::filesystem::path& path) {
  try {
    return parse_task_pool(read_json_file(path));
  } catch (const ConfigError& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

void to_json(nlohmann::json& j, const Step& step) {
  j = {{"thought", step.thought}, {"action", step.action}, {"observation", step.observation}};
}

void from_json(const nlohmann::json& j, Step& step) {
  step.thought = j.at("thought").get<std::string>();
  step.action = j.at("action").get<std::string>();
  step.observation = j.at("observation").get<std::string>();
}

void to_json(nlohmann::json& j, const Trajectory& t) {
  j = {{"task_id", t.task_id},
       {"steps", t.steps},
       {"final_answer", t.final_answer},
       {"annotated", t.annotated},
       {"cited_entry_ids", t.cited_entry_ids}};
  if (!t.failure_note.empty()) j["failure_note"] = t.failure_note;
}

void from_json(const nlohmann::json& j, Trajectory& t) {
  t.task_id = j.at("task_id").get<std::string>();
  t.steps = j.at("steps").get<std::vector<Step>>();
  t.final_answer = j.at("final_answer").get<std::string>();
  t.annotated = j.at("annotated").get<bool>();
  t.cited_entry_ids = j.at("cited_entry_ids").get<std::vector<EntryId>>();
  t.failure_note = j.value("failure_note", std::string());
}

void to_json(nlohmann::json& j, const Outcome& o) {
  j = {{"reward", o.reward}, {"passed", o.passed}, {"excluded_from_eval", o.excluded_from_eval}};
}

void from_json(const nlohmann::json& j, Outcome& o) {
  o.reward = j.at("reward").get<double>();
  o.passed = j.at("passed").get<bool>();
  o.excluded_from_eval = j.at("excluded_from_eval").get<bool>();
}

void to_json(nlohmann::json& j, const TaskSpec& t) {
  j = {{"task_id", t.task_id}, {"input", t.input}, {"label", t.label}};
  if (t.rules) {
    j["required_tokens"] = t.rules->required;
    j["forbidden_tokens"] = t.rules->forbidden;
    j["flip_prob"] = t.rules->flip_prob;
  }
}

}  // namespace ctxopt
