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

// The outer loop. One step runs
//
//   sample -> execute (G standard [+1 annotated]) -> select -> reflect
//     -> counters -> mutate -> apply -> buffer bookkeeping -> state update
//
// with every primitive switchable through RunConfig::primitives. All
// randomness is derived from (seed, iteration), so a run resumed from a
// checkpoint continues exactly as the original did.
//
// Run directory layout:
//   config.txt  eval_tasks.json  metrics.jsonl  mutations.jsonl
//   checkpoints/NNNN/{playbook,buffer,state,diagnostics,record,meta}.json

#ifndef CTXOPT_TRAINER_HPP_
#define CTXOPT_TRAINER_HPP_

#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ctxopt/config.hpp"
#include "ctxopt/execution.hpp"
#include "ctxopt/metrics.hpp"
#include "ctxopt/mutation.hpp"
#include "ctxopt/optimizer_state.hpp"
#include "ctxopt/playbook.hpp"
#include "ctxopt/reflection.hpp"
#include "ctxopt/replay.hpp"
#include "json.hpp"

namespace ctxopt {

struct RunState {
  int iteration = 0;
  Playbook playbook;
  ReplayBuffer buffer;
  StateDoc state;
  friend bool operator==(const RunState&, const RunState&) = default;
};

struct GroupRecord {
  std::string task_id;
  std::vector<double> rewards;  // standard rollouts only
  std::vector<bool> passed;
  bool annotated_run = false;   // its outcome is never recorded
  std::vector<EntryId> annotated_cited;
  friend bool operator==(const GroupRecord&, const GroupRecord&) = default;
};

struct ReflectionRecord {
  std::string task_id;
  ReflectionMode mode = ReflectionMode::single;
  bool annotation_attached = false;
  bool structured = true;
  friend bool operator==(const ReflectionRecord&, const ReflectionRecord&) = default;
};

struct IterationRecord {
  int iteration = 0;  // 1-based: the checkpoint this step produces
  std::vector<std::string> sampled;
  std::vector<std::string> replayed;
  std::size_t standard_executions = 0;
  std::size_t annotated_executions = 0;
  std::vector<GroupRecord> groups;
  std::vector<std::string> selected;
  std::vector<ReflectionRecord> reflections;
  std::vector<Diagnostic> diagnostics;
  std::vector<EntryId> helpful_bumps;
  std::vector<EntryId> harmful_bumps;
  MutationResult mutation;
  std::uint64_t version_before = 0;
  std::uint64_t version_after = 0;
  std::vector<BufferEvent> buffer_events;
  ReplayBuffer buffer;
  StateDoc state;
  std::vector<std::string> errors;
};

void to_json(nlohmann::json& j, const GroupRecord& g);
void to_json(nlohmann::json& j, const ReflectionRecord& r);
void to_json(nlohmann::json& j, const IterationRecord& r);

// One iteration. `config` must be normalized. Backend failures are caught
// and listed in the record; ConfigError propagates.
IterationRecord step(const RunConfig& config, RunState& state,
                     std::span<const TaskSpec> pool, const Backends& backends);

struct EvalResult {
  double score = 0.0;
  std::vector<bool> solved;  // per eval task, standard traces only
};

// Mean pass rate (or mean reward for graded evaluators) with one standard
// rollout per task.
EvalResult evaluate(const Playbook& playbook, std::span<const TaskSpec> eval_set,
                    const AgentBackend& agent, const Evaluator& evaluator,
                    std::uint64_t seed = 0, const ExecutionOptions& options = {});

struct Progress {
  int iteration = 0;
  double eval_score = 0.0;
  std::size_t edits = 0;
  std::size_t errors = 0;
};

struct TrainOptions {
  std::filesystem::path out;                    // empty: nothing is written
  std::optional<std::filesystem::path> resume;  // a checkpoints/NNNN directory
  std::function<void(const Progress&)> progress;
  std::string config_text;  // written as config.txt; derived when empty
};

struct TrainResult {
  RunState final_state;
  std::vector<double> scores;  // per checkpoint, starting at 0
  SolveMatrix solve_matrix;    // eval tasks x checkpoints
  std::vector<IterationRecord> records;  // iterations run by this call
};

// Runs config.iterations steps from the seed playbook (or from `resume`).
// Throws ConfigError if pool and eval_set share a task id.
TrainResult train(const RunConfig& config, std::span<const TaskSpec> pool,
                  std::span<const TaskSpec> eval_set, const Playbook& seed_playbook,
                  const Backends& backends, const TrainOptions& options = {});

// Checkpoint I/O.
std::filesystem::path checkpoint_dir(const std::filesystem::path& run_dir, int iteration);
RunState load_checkpoint(const std::filesystem::path& dir);

}  // namespace ctxopt

#endif  // CTXOPT_TRAINER_HPP_
