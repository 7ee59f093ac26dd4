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

#include "ctxopt/cli.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "ctxopt/errors.hpp"
#include "ctxopt/json_io.hpp"
#include "ctxopt/metrics.hpp"
#include "ctxopt/trainer.hpp"

namespace ctxopt::cli {
namespace {

void require_file(const std::filesystem::path& p, const char* what) {
  if (!std::filesystem::is_regular_file(p)) {
    throw ConfigError(std::string(what) + " not found: " + p.string());
  }
}

void require_dir(const std::filesystem::path& p, const char* what) {
  if (!std::filesystem::is_directory(p)) {
    throw ConfigError(std::string(what) + " not found: " + p.string());
  }
}

std::string fixed3(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3f", v);
  return buf;
}

int run_train(const std::filesystem::path& config_path, std::optional<std::uint64_t> seed,
              const std::string& out_override, const std::string& resume,
              const Environment& env, std::ostream& out, std::ostream& err) {
  require_file(config_path, "config file");
  ConfigFile cfg = load_config(config_path);
  if (seed) cfg.run.seed = *seed;
  if (!out_override.empty()) cfg.out = out_override;
  if (cfg.out.empty()) throw ConfigError("no output directory: set `out` or pass --out");
  if (cfg.pool.empty()) throw ConfigError("config does not name a task pool");
  require_file(cfg.pool, "task pool");
  if (!cfg.eval_set.empty()) require_file(cfg.eval_set, "eval set");
  if (!cfg.seed_playbook.empty()) require_file(cfg.seed_playbook, "seed playbook");
  if (!resume.empty()) require_dir(resume, "checkpoint");

  const auto pool = load_task_pool(cfg.pool);
  const auto eval_set =
      cfg.eval_set.empty() ? std::vector<TaskSpec>{} : load_task_pool(cfg.eval_set);
  const Playbook seed_pb =
      cfg.seed_playbook.empty() ? Playbook() : load_playbook(cfg.seed_playbook);
  std::vector<TaskSpec> all = pool;
  all.insert(all.end(), eval_set.begin(), eval_set.end());
  const BackendSet backends(cfg, all, env.transport);

  TrainOptions options;
  options.out = cfg.out;
  if (!resume.empty()) options.resume = resume;
  options.config_text = config_text(cfg);
  options.progress = [&err](const Progress& p) {
    err << "iteration " << p.iteration << " eval " << fixed3(p.eval_score) << " edits "
        << p.edits;
    if (p.errors) err << " errors " << p.errors;
    err << "\n";
  };
  const TrainResult result = train(cfg.run, pool, eval_set, seed_pb, backends.view(), options);
  out << cfg.out.string() << "\n";
  err << "final eval " << fixed3(result.scores.back()) << "\n";
  return kExitOk;
}

int run_eval(const std::filesystem::path& playbook_path, const std::filesystem::path& pool_path,
             const std::string& config_path, std::uint64_t seed, const Environment& env,
             std::ostream& out) {
  require_file(playbook_path, "playbook");
  require_file(pool_path, "task file");
  ConfigFile cfg;
  if (!config_path.empty()) {
    require_file(config_path, "config file");
    cfg = load_config(config_path);
  }
  const Playbook pb = load_playbook(playbook_path);
  const auto tasks = load_task_pool(pool_path);
  const BackendSet backends(cfg, tasks, env.transport);
  const Backends b = backends.view();
  ExecutionOptions exec;
  exec.parallel = cfg.run.parallel;
  exec.max_parallel = cfg.run.max_parallel;
  out << fixed3(evaluate(pb, tasks, *b.agent, *b.evaluator, seed, exec).score) << "\n";
  return kExitOk;
}

int run_inspect(const std::filesystem::path& dir, std::ostream& out) {
  require_dir(dir, "checkpoint");
  const RunState s = load_checkpoint(dir);
  const auto meta = read_json_file(dir / "meta.json");
  out << "checkpoint " << s.iteration << "\n"
      << "playbook version " << s.playbook.version() << ", " << s.playbook.entry_count()
      << " entries in " << s.playbook.sections().size() << " sections\n"
      << "eval score " << fixed3(meta.at("eval_score").get<double>()) << "\n";
  out << "replay buffer:";
  if (s.buffer.size() == 0) out << " empty";
  for (const auto& [id, r] : s.buffer.records()) {
    out << " " << id << "(+" << r.consecutive_passes << "/-" << r.consecutive_fails << ")";
  }
  out << "\n";
  out << "optimizer state: phase " << to_string(s.state.phase) << ", "
      << s.state.change_ledger.size() << " ledger records, " << s.state.open_hypotheses.size()
      << " hypotheses\n";
  const auto record = read_json_file(dir / "record.json");
  if (!record.is_null()) {
    out << "sampled:";
    for (const auto& id : record.at("sampled")) out << " " << id.get<std::string>();
    out << "\nselected:";
    for (const auto& id : record.at("selected")) out << " " << id.get<std::string>();
    out << "\n";
    for (const auto& d : record.at("diagnostics")) {
      out << "diagnostic " << d.at("source_task_id").get<std::string>() << " "
          << d.at("mode").get<std::string>() << " " << d.at("attribution").get<std::string>()
          << ": " << d.at("root_cause").get<std::string>() << "\n";
    }
    for (const auto& e : record.at("mutation").at("edits")) {
      out << "edit " << describe(e.get<EditOp>()) << "\n";
    }
    for (const auto& d : record.at("mutation").at("dropped")) {
      out << "dropped " << describe(d.at("edit").get<EditOp>()) << ": "
          << d.at("reason").get<std::string>() << "\n";
    }
    for (const auto& e : record.at("errors")) out << "error " << e.get<std::string>() << "\n";
  }
  out << "\n" << render(s.playbook);
  return kExitOk;
}

int run_metrics(const std::filesystem::path& run_dir, std::size_t window, std::ostream& out) {
  require_dir(run_dir, "run directory");
  require_file(run_dir / "metrics.jsonl", "metrics file");
  require_file(run_dir / "eval_tasks.json", "eval task list");
  const auto ids = read_json_file(run_dir / "eval_tasks.json").get<std::vector<std::string>>();
  SolveMatrix m(ids.size(), 0);
  std::ifstream in(run_dir / "metrics.jsonl");
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto j = nlohmann::json::parse(line, nullptr, false);
    if (j.is_discarded()) throw ConfigError("corrupt metrics file in " + run_dir.string());
    const auto solved = j.at("solved").get<std::vector<std::string>>();
    std::vector<bool> column(ids.size(), false);
    for (std::size_t i = 0; i < ids.size(); ++i) {
      column[i] = std::find(solved.begin(), solved.end(), ids[i]) != solved.end();
    }
    m.push_checkpoint(column);
  }
  out << format_table(compute_series(m), summary_stats(m, window));
  return kExitOk;
}

int run_diff(const std::filesystem::path& a, const std::filesystem::path& b, std::ostream& out) {
  require_file(a, "playbook");
  require_file(b, "playbook");
  const auto edits = diff(load_playbook(a), load_playbook(b));
  for (const EditOp& e : edits) out << describe(e) << "\n";
  if (edits.empty()) out << "identical\n";
  return kExitOk;
}

void report(std::ostream& err, const char* kind, const std::string& message) {
  err << nlohmann::json({{"error", kind}, {"message", message}}).dump() << "\n";
}

}  // namespace

int dispatch(const std::vector<std::string>& args, const Environment& env) {
  std::ostream& out = env.out ? *env.out : std::cout;
  std::ostream& err = env.err ? *env.err : std::cerr;

  CLI::App app{"Context optimization for agent playbooks", "ctxopt"};
  app.require_subcommand(1);

  std::string config, out_dir, resume;
  std::optional<std::uint64_t> train_seed;
  auto* train_cmd = app.add_subcommand("train", "run the optimization loop");
  train_cmd->add_option("--config", config, "run configuration file")->required();
  train_cmd->add_option("--seed", train_seed, "override the config seed");
  train_cmd->add_option("--out", out_dir, "run directory");
  train_cmd->add_option("--resume", resume, "checkpoint directory to continue from");

  std::string playbook, tasks, eval_config;
  std::uint64_t eval_seed = 0;
  auto* eval_cmd = app.add_subcommand("eval", "score a playbook on a task file");
  eval_cmd->add_option("playbook", playbook, "playbook JSON")->required();
  eval_cmd->add_option("tasks", tasks, "task list JSON")->required();
  eval_cmd->add_option("--config", eval_config, "config selecting the agent backend");
  eval_cmd->add_option("--seed", eval_seed, "rollout seed");

  std::string checkpoint;
  auto* inspect_cmd = app.add_subcommand("inspect", "summarize a checkpoint");
  inspect_cmd->add_option("checkpoint", checkpoint, "checkpoint directory")->required();

  std::string run_dir;
  std::size_t window = 5;
  auto* metrics_cmd = app.add_subcommand("metrics", "training-dynamics table for a run");
  metrics_cmd->add_option("run_dir", run_dir, "run directory")->required();
  metrics_cmd->add_option("--window", window, "trailing window for the summary")
      ->check(CLI::PositiveNumber);

  std::string pa, pb;
  auto* diff_cmd = app.add_subcommand("diff", "edit script between two playbooks");
  diff_cmd->add_option("a", pa, "old playbook")->required();
  diff_cmd->add_option("b", pb, "new playbook")->required();

  std::vector<std::string> rest(args.size() > 1 ? args.begin() + 1 : args.end(), args.end());
  std::reverse(rest.begin(), rest.end());
  try {
    app.parse(rest);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    report(err, "usage", e.what());
    return kExitUsage;
  }

  try {
    if (*train_cmd) return run_train(config, train_seed, out_dir, resume, env, out, err);
    if (*eval_cmd) return run_eval(playbook, tasks, eval_config, eval_seed, env, out);
    if (*inspect_cmd) return run_inspect(checkpoint, out);
    if (*metrics_cmd) return run_metrics(run_dir, window, out);
    if (*diff_cmd) return run_diff(pa, pb, out);
  } catch (const ConfigError& e) {
    report(err, "config", e.what());
    return kExitConfig;
  } catch (const std::exception& e) {
    report(err, "runtime", e.what());
    return kExitRuntime;
  }
  report(err, "usage", "no command given");
  return kExitUsage;
}

}  // namespace ctxopt::cli
