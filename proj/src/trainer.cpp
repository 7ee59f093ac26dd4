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

#include "ctxopt/trainer.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <set>

#include "ctxopt/errors.hpp"
#include "ctxopt/json_io.hpp"
#include "ctxopt/rng.hpp"

namespace ctxopt {

void to_json(nlohmann::json& j, const GroupRecord& g) {
  j = {{"task_id", g.task_id},
       {"rewards", g.rewards},
       {"passed", g.passed},
       {"annotated_run", g.annotated_run},
       {"annotated_cited", g.annotated_cited}};
}

void to_json(nlohmann::json& j, const ReflectionRecord& r) {
  j = {{"task_id", r.task_id},
       {"mode", to_string(r.mode)},
       {"annotation_attached", r.annotation_attached},
       {"structured", r.structured}};
}

void to_json(nlohmann::json& j, const IterationRecord& r) {
  j = {{"iteration", r.iteration},
       {"sampled", r.sampled},
       {"replayed", r.replayed},
       {"executions", {{"standard", r.standard_executions},
                       {"annotated", r.annotated_executions}}},
       {"groups", r.groups},
       {"selected", r.selected},
       {"reflections", r.reflections},
       {"diagnostics", r.diagnostics},
       {"counters", {{"helpful", r.helpful_bumps}, {"harmful", r.harmful_bumps}}},
       {"mutation", r.mutation},
       {"version_before", r.version_before},
       {"version_after", r.version_after},
       {"buffer_events", r.buffer_events},
       {"buffer", r.buffer},
       {"state", r.state},
       {"errors", r.errors}};
}

namespace {

// Seed streams per iteration.
constexpr std::uint64_t kSampleStream = 1;
constexpr std::uint64_t kRolloutStream = 2;
constexpr std::uint64_t kEvalStream = 3;

ExecutionOptions execution_options(const RunConfig& c) {
  ExecutionOptions o;
  o.parallel = c.parallel;
  o.max_parallel = c.max_parallel;
  o.temperatures = c.temperatures;
  return o;
}

const Rollout* first_with(const RolloutGroup& g, bool passed) {
  for (const Rollout& r : g.rollouts) {
    if (r.outcome.passed == passed) return &r;
  }
  return nullptr;
}

template <typename Fn>
void guarded(std::vector<std::string>& errors, const std::string& what, Fn&& fn) {
  try {
    fn();
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    errors.push_back(what + ": " + e.what());
  }
}

}  // namespace

IterationRecord step(const RunConfig& config, RunState& run, std::span<const TaskSpec> pool,
                     const Backends& backends) {
  const PrimitiveSet& p = config.primitives;
  IterationRecord rec;
  rec.iteration = run.iteration + 1;
  rec.version_before = run.playbook.version();
  const auto it = static_cast<std::uint64_t>(rec.iteration);

  // Sample.
  Rng rng(mix_seed({config.seed, it, kSampleStream}));
  const BatchSample batch =
      sample_batch(pool, run.buffer, config.rollout_budget,
                   p.failure_replay ? config.replay_ratio : 0.0, rng);
  for (const TaskSpec& t : batch.tasks) rec.sampled.push_back(t.task_id);
  rec.replayed = batch.replayed;

  // Execute.
  const std::vector<RolloutGroup> groups =
      run_batch(*backends.agent, *backends.evaluator, batch.tasks, run.playbook,
                config.group_size, p.credit_assignment,
                mix_seed({config.seed, it, kRolloutStream}), execution_options(config));
  for (const RolloutGroup& g : groups) {
    GroupRecord gr;
    gr.task_id = g.task_id;
    for (const Rollout& r : g.rollouts) {
      gr.rewards.push_back(r.outcome.reward);
      gr.passed.push_back(r.outcome.passed);
    }
    rec.standard_executions += g.rollouts.size();
    if (g.annotated) {
      ++rec.annotated_executions;
      gr.annotated_run = true;
      gr.annotated_cited = g.annotated->trajectory.cited_entry_ids;
    }
    rec.groups.push_back(std::move(gr));
  }

  // Select and reflect.
  const std::vector<RolloutGroup> selected = select_for_reflection(groups, config.batch_size);
  for (const RolloutGroup& g : selected) rec.selected.push_back(g.task_id);
  const ReflectOptions ropts{p.auxiliary_losses};

  if (config.reflection_mode == ReflectionStyle::batched) {
    if (!selected.empty()) {
      std::vector<Rollout> failures;
      std::string ids;
      for (const RolloutGroup& g : selected) {
        failures.push_back(*first_with(g, false));
        ids += (ids.empty() ? "" : ",") + g.task_id;
      }
      rec.reflections.push_back({ids, ReflectionMode::batched, false, p.auxiliary_losses});
      guarded(rec.errors, "reflect " + ids, [&] {
        rec.diagnostics.push_back(
            reflect_batched(*backends.reflector, failures, run.playbook, ropts));
      });
    }
  } else {
    for (const RolloutGroup& g : selected) {
      const Trajectory* annotation = g.annotated ? &g.annotated->trajectory : nullptr;
      const Rollout* neg = first_with(g, false);
      ReflectionRecord rr{g.task_id, ReflectionMode::single, annotation != nullptr,
                          p.auxiliary_losses};
      if (g.mixed()) rr.mode = ReflectionMode::contrastive;
      else if (annotation) rr.mode = ReflectionMode::dual;
      rec.reflections.push_back(rr);
      guarded(rec.errors, "reflect " + g.task_id, [&] {
        switch (rr.mode) {
          case ReflectionMode::contrastive:
            rec.diagnostics.push_back(reflect_contrastive(*backends.reflector,
                                                          *first_with(g, true), *neg,
                                                          run.playbook, annotation, ropts));
            break;
          case ReflectionMode::dual:
            rec.diagnostics.push_back(
                reflect_dual(*backends.reflector, *neg, *annotation, run.playbook, ropts));
            break;
          default:
            rec.diagnostics.push_back(
                reflect_single(*backends.reflector, *neg, run.playbook, ropts));
        }
      });
    }
  }

  // Entry counters: blame from diagnostics, credit from annotated citations
  // on tasks whose standard rollouts all passed.
  {
    std::set<EntryId> harmful;
    for (const Diagnostic& d : rec.diagnostics) {
      for (EntryId id : entry_refs(d.root_cause)) {
        if (run.playbook.contains(id)) harmful.insert(id);
      }
    }
    std::set<EntryId> helpful;
    for (const RolloutGroup& g : groups) {
      if (!g.annotated || !g.all_passed()) continue;
      for (EntryId id : g.annotated->trajectory.cited_entry_ids) {
        if (run.playbook.contains(id)) helpful.insert(id);
      }
    }
    rec.helpful_bumps.assign(helpful.begin(), helpful.end());
    rec.harmful_bumps.assign(harmful.begin(), harmful.end());
  }
  const Playbook counted = run.playbook.with_counters(rec.helpful_bumps, rec.harmful_bumps);

  // Mutate and apply.
  guarded(rec.errors, "mutate", [&] {
    rec.mutation = mutate(*backends.mutator, counted, rec.diagnostics,
                          p.optimizer_state ? &run.state : nullptr,
                          MutateOptions{config.max_edits});
  });
  Playbook next = counted;
  guarded(rec.errors, "apply", [&] { next = apply_mutation(counted, rec.mutation); });

  // Buffer bookkeeping on standard outcomes, one majority outcome per task.
  if (p.failure_replay) {
    for (const RolloutGroup& g : groups) {
      const bool passed = 2 * g.pass_count() > g.rollouts.size();
      for (BufferEvent& e : run.buffer.record_outcome(g.task_id, passed, rec.iteration)) {
        rec.buffer_events.push_back(std::move(e));
      }
    }
  }

  // Optimizer state.
  if (p.optimizer_state) {
    guarded(rec.errors, "update state", [&] {
      run.state = update_state(*backends.state_updater, run.state, rec.diagnostics, counted, next);
    });
  }

  run.playbook = std::move(next);
  run.iteration = rec.iteration;
  rec.version_after = run.playbook.version();
  rec.buffer = run.buffer;
  rec.state = run.state;
  return rec;
}

EvalResult evaluate(const Playbook& playbook, std::span<const TaskSpec> eval_set,
                    const AgentBackend& agent, const Evaluator& evaluator,
                    std::uint64_t seed, const ExecutionOptions& options) {
  EvalResult out;
  if (eval_set.empty()) return out;
  const auto groups = run_batch(agent, evaluator, eval_set, playbook, 1, false, seed, options);
  double total = 0.0;
  for (const RolloutGroup& g : groups) {
    const Outcome& o = g.rollouts.front().outcome;
    out.solved.push_back(o.passed);
    total += evaluator.graded() ? o.reward : (o.passed ? 1.0 : 0.0);
  }
  out.score = total / static_cast<double>(eval_set.size());
  return out;
}

std::filesystem::path checkpoint_dir(const std::filesystem::path& run_dir, int iteration) {
  char name[16];
  std::snprintf(name, sizeof name, "%04d", iteration);
  return run_dir / "checkpoints" / name;
}

RunState load_checkpoint(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) {
    throw ConfigError("checkpoint not found: " + dir.string());
  }
  RunState s;
  try {
    s.iteration = read_json_file(dir / "meta.json").at("iteration").get<int>();
    s.playbook = load_playbook(dir / "playbook.json");
    s.buffer = read_json_file(dir / "buffer.json").get<ReplayBuffer>();
    s.state = read_json_file(dir / "state.json").get<StateDoc>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("corrupt checkpoint " + dir.string() + ": " + e.what());
  }
  return s;
}

namespace {

struct RunWriter {
  std::filesystem::path out;
  std::vector<std::string> eval_ids;
  std::vector<nlohmann::json> mutation_lines;

  bool enabled() const { return !out.empty(); }

  void checkpoint(const RunState& s, const EvalResult& eval, const IterationRecord* rec) const {
    const auto dir = checkpoint_dir(out, s.iteration);
    save_playbook(s.playbook, dir / "playbook.json");
    write_json_file(dir / "buffer.json", s.buffer);
    write_json_file(dir / "state.json", s.state);
    write_json_file(dir / "diagnostics.json",
                    rec ? nlohmann::json(rec->diagnostics) : nlohmann::json::array());
    write_json_file(dir / "record.json", rec ? nlohmann::json(*rec) : nlohmann::json(nullptr));
    write_json_file(dir / "meta.json", {{"iteration", s.iteration},
                                        {"playbook_version", s.playbook.version()},
                                        {"eval_score", eval.score},
                                        {"solved", eval.solved}});
  }

  void metrics(const std::vector<double>& scores, const SolveMatrix& m) const {
    const auto series = compute_series(m);
    std::string text;
    for (std::size_t t = 0; t < series.size(); ++t) {
      nlohmann::json line = series[t];
      line["score"] = scores[t];
      nlohmann::json solved = nlohmann::json::array();
      for (std::size_t i = 0; i < m.tasks(); ++i) {
        if (m.solved(i, t)) solved.push_back(eval_ids[i]);
      }
      line["solved"] = std::move(solved);
      text += line.dump() + "\n";
    }
    write_text_file(out / "metrics.jsonl", text);
  }

  void mutations() const {
    std::string text;
    for (const auto& line : mutation_lines) text += line.dump() + "\n";
    write_text_file(out / "mutations.jsonl", text);
  }
};

nlohmann::json mutation_line(const IterationRecord& rec) {
  nlohmann::json described = nlohmann::json::array();
  for (const EditOp& e : rec.mutation.edits) described.push_back(describe(e));
  return {{"iteration", rec.iteration},
          {"edits", described},
          {"rationale", rec.mutation.rationale},
          {"no_op", rec.mutation.no_op},
          {"dropped", nlohmann::json(rec.mutation)["dropped"]},
          {"version_after", rec.version_after}};
}

}  // namespace

TrainResult train(const RunConfig& raw_config, std::span<const TaskSpec> pool,
                  std::span<const TaskSpec> eval_set, const Playbook& seed_playbook,
                  const Backends& backends, const TrainOptions& options) {
  const RunConfig config = raw_config.normalized();
  if (pool.empty()) throw ConfigError("training pool is empty");
  std::set<std::string> pool_ids;
  for (const TaskSpec& t : pool) pool_ids.insert(t.task_id);
  for (const TaskSpec& t : eval_set) {
    if (pool_ids.count(t.task_id)) {
      throw ConfigError("task '" + t.task_id + "' is in both the pool and the eval set");
    }
  }

  RunWriter writer{options.out, {}, {}};
  for (const TaskSpec& t : eval_set) writer.eval_ids.push_back(t.task_id);

  TrainResult result;
  RunState state;
  state.playbook = seed_playbook;
  state.buffer = ReplayBuffer(config.n_grad, config.n_evict);
  const ExecutionOptions exec = execution_options(config);
  auto eval_at = [&](const Playbook& pb, int k) {
    return evaluate(pb, eval_set, *backends.agent, *backends.evaluator,
                    mix_seed({config.seed, static_cast<std::uint64_t>(k), kEvalStream}), exec);
  };

  if (options.resume) {
    const std::filesystem::path src_dir = *options.resume;
    state = load_checkpoint(src_dir);
    const auto src_run = src_dir.parent_path().parent_path();
    for (int k = 0; k <= state.iteration; ++k) {
      const auto meta = read_json_file(checkpoint_dir(src_run, k) / "meta.json");
      result.scores.push_back(meta.at("eval_score").get<double>());
      result.solve_matrix.push_checkpoint(meta.at("solved").get<std::vector<bool>>());
    }
    if (std::ifstream in(src_run / "mutations.jsonl"); in) {
      std::string line;
      while (std::getline(in, line)) {
        if (line.empty()) continue;
        auto j = nlohmann::json::parse(line);
        if (j.at("iteration").get<int>() <= state.iteration) writer.mutation_lines.push_back(j);
      }
    }
    if (writer.enabled()) {
      std::error_code ec;
      const bool same = std::filesystem::equivalent(src_run, writer.out, ec);
      if (!same) {
        for (int k = 0; k <= state.iteration; ++k) {
          const auto dst = checkpoint_dir(writer.out, k);
          std::filesystem::create_directories(dst);
          std::filesystem::copy(checkpoint_dir(src_run, k), dst,
                                std::filesystem::copy_options::recursive |
                                    std::filesystem::copy_options::overwrite_existing);
        }
      }
    }
  } else {
    const EvalResult e0 = eval_at(state.playbook, 0);
    result.scores.push_back(e0.score);
    result.solve_matrix = SolveMatrix(eval_set.size(), 0);
    result.solve_matrix.push_checkpoint(e0.solved);
    if (writer.enabled()) writer.checkpoint(state, e0, nullptr);
    if (options.progress) options.progress({0, e0.score, 0, 0});
  }

  if (writer.enabled()) {
    nlohmann::json ids = writer.eval_ids;
    write_json_file(writer.out / "eval_tasks.json", ids);
    std::string text = options.config_text;
    if (text.empty()) {
      ConfigFile cf;
      cf.run = config;
      text = config_text(cf);
    }
    write_text_file(writer.out / "config.txt", text);
    writer.metrics(result.scores, result.solve_matrix);
    writer.mutations();
  }

  while (state.iteration < config.iterations) {
    IterationRecord rec = step(config, state, pool, backends);
    const EvalResult e = eval_at(state.playbook, state.iteration);
    result.scores.push_back(e.score);
    result.solve_matrix.push_checkpoint(e.solved);
    if (writer.enabled()) {
      writer.checkpoint(state, e, &rec);
      writer.mutation_lines.push_back(mutation_line(rec));
      writer.metrics(result.scores, result.solve_matrix);
      writer.mutations();
    }
    if (options.progress) {
      options.progress({state.iteration, e.score, rec.mutation.edits.size(), rec.errors.size()});
    }
    result.records.push_back(std::move(rec));
  }
  result.final_state = std::move(state);
  return result;
}

}  // namespace ctxopt
