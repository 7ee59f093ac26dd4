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

// Forward pass: running an agent on tasks under a playbook.
//
// Rollouts are seeded per (base seed, task, rollout index, annotated), so the
// OpenMP fan-out in run_batch produces exactly what run_batch_serial does.

#ifndef CTXOPT_EXECUTION_HPP_
#define CTXOPT_EXECUTION_HPP_

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ctxopt/playbook.hpp"
#include "json.hpp"

namespace ctxopt {

// Token rules for the hermetic RuleWorld environment.
struct RuleSpec {
  std::vector<std::string> required;
  std::vector<std::string> forbidden;
  double flip_prob = 0.0;
  friend bool operator==(const RuleSpec&, const RuleSpec&) = default;
};

struct TaskSpec {
  std::string task_id;
  std::string input;
  nlohmann::json label;
  std::optional<RuleSpec> rules;
};

struct Step {
  std::string thought;
  std::string action;
  std::string observation;
  friend bool operator==(const Step&, const Step&) = default;
};

struct Trajectory {
  std::string task_id;
  std::vector<Step> steps;
  std::string final_answer;
  bool annotated = false;
  std::vector<EntryId> cited_entry_ids;  // empty unless annotated
  std::string failure_note;              // set when the backend threw
  friend bool operator==(const Trajectory&, const Trajectory&) = default;
};

struct Outcome {
  double reward = 0.0;
  bool passed = false;
  bool excluded_from_eval = false;
  friend bool operator==(const Outcome&, const Outcome&) = default;
};

struct Rollout {
  Trajectory trajectory;
  Outcome outcome;
  friend bool operator==(const Rollout&, const Rollout&) = default;
};

struct RolloutGroup {
  std::string task_id;
  std::vector<Rollout> rollouts;     // standard traces only
  std::optional<Rollout> annotated;  // never part of the contrastive group

  std::size_t pass_count() const;
  bool mixed() const;
  bool all_failed() const;
  bool all_passed() const;
};

struct RolloutContext {
  std::uint64_t seed = 0;
  int rollout_index = 0;
  double temperature = 1.0;
};

class AgentBackend {
 public:
  virtual ~AgentBackend() = default;
  // `context` is the rendered playbook (annotated or not). Must be safe to
  // call concurrently.
  virtual Trajectory run(const TaskSpec& task, std::string_view context,
                         bool annotated, const RolloutContext& ctx) const = 0;
};

// Scores a trajectory against the task label.
class Evaluator {
 public:
  virtual ~Evaluator() = default;
  virtual Outcome score(const TaskSpec& task, const Trajectory& trajectory) const = 0;
  // Graded environments report mean reward instead of pass rate.
  virtual bool graded() const { return false; }
};

// Binary threshold for environments whose reward is nominally 0/1.
inline constexpr double kBinaryPassThreshold = 0.999;

// Reward 1 iff the whitespace-normalized final answer equals the label
// (string labels as-is, other JSON values in compact form).
class ExactMatchEvaluator : public Evaluator {
 public:
  Outcome score(const TaskSpec& task, const Trajectory& trajectory) const override;
};

std::string label_text(const TaskSpec& task);

// ---------------------------------------------------------------------------
// Hermetic environment

// The agent looks up every task token in the playbook, answers with the
// tokens it found guidance for, and with probability flip_prob the outcome
// flips: a covered task slips one required token, an uncovered task guesses
// the label.
class RuleWorldAgent : public AgentBackend {
 public:
  Trajectory run(const TaskSpec& task, std::string_view context, bool annotated,
                 const RolloutContext& ctx) const override;
};

// Word tokens ([a-z0-9_]+, lowercased) of a piece of text.
std::vector<std::string> word_tokens(std::string_view text);

// Entries parsed back out of a rendered playbook, plain or annotated.
struct RenderedEntry {
  EntryId id;
  std::string content;
};
std::vector<RenderedEntry> parse_rendered_entries(std::string_view context);

// Id of the first entry mentioning `token` as a word.
std::optional<EntryId> entry_for_token(const Playbook& playbook,
                                       std::string_view token);

// Whether the playbook holds every required token and no forbidden one.
bool rules_covered(const Playbook& playbook, const RuleSpec& rules);

// ---------------------------------------------------------------------------
// Operations

std::uint64_t rollout_seed(std::uint64_t base, std::string_view task_id,
                           int rollout_index, bool annotated);

// Backend exceptions become a failed trajectory carrying the message.
Rollout run_task(const AgentBackend& agent, const Evaluator& evaluator,
                 const TaskSpec& task, const Playbook& playbook, bool annotated,
                 const RolloutContext& ctx);

struct ExecutionOptions {
  bool parallel = true;
  int max_parallel = 0;              // 0: OpenMP default
  std::vector<double> temperatures;  // per rollout index; default 1.0
};

// G standard rollouts of one task. Throws PreconditionViolation if G < 1.
RolloutGroup run_group(const AgentBackend& agent, const Evaluator& evaluator,
                       const TaskSpec& task, const Playbook& playbook, int group_size,
                       std::uint64_t base_seed, const ExecutionOptions& options = {});

struct DualRollout {
  Rollout standard;
  Rollout annotated;
};

DualRollout run_dual(const AgentBackend& agent, const Evaluator& evaluator,
                     const TaskSpec& task, const Playbook& playbook,
                     std::uint64_t base_seed, const ExecutionOptions& options = {});

// All groups of an iteration: G standard rollouts per task plus one annotated
// rollout per task when `with_annotation`. Output is ordered like `tasks`.
std::vector<RolloutGroup> run_batch(const AgentBackend& agent,
                                    const Evaluator& evaluator,
                                    std::span<const TaskSpec> tasks,
                                    const Playbook& playbook, int group_size,
                                    bool with_annotation, std::uint64_t base_seed,
                                    const ExecutionOptions& options = {});

// Single-threaded reference for run_batch.
std::vector<RolloutGroup> run_batch_serial(const AgentBackend& agent,
                                           const Evaluator& evaluator,
                                           std::span<const TaskSpec> tasks,
                                           const Playbook& playbook,
                                           int group_size, bool with_annotation,
                                           std::uint64_t base_seed,
                                           const ExecutionOptions& options = {});

// Population variance of the standard rewards.
double reward_variance(const RolloutGroup& group);

// Up to `limit` groups worth reflecting on: mixed groups first, then
// uniformly failing groups by descending reward variance; ties by task id.
// Groups that passed throughout are never returned.
std::vector<RolloutGroup> select_for_reflection(std::span<const RolloutGroup> groups,
                                                std::size_t limit);

// ---------------------------------------------------------------------------
// Task pool files

std::vector<TaskSpec> load_task_pool(const std::filesystem::path& path);
std::vector<TaskSpec> parse_task_pool(const nlohmann::json& j);

void to_json(nlohmann::json& j, const Step& step);
void from_json(const nlohmann::json& j, Step& step);
void to_json(nlohmann::json& j, const Trajectory& trajectory);
void from_json(const nlohmann::json& j, Trajectory& trajectory);
void to_json(nlohmann::json& j, const Outcome& outcome);
void from_json(const nlohmann::json& j, Outcome& outcome);
void to_json(nlohmann::json& j, const TaskSpec& task);

}  // namespace ctxopt

#endif  // CTXOPT_EXECUTION_HPP_
