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

// Acceptance suite. Prints one PASS/FAIL line per criterion and exits
// nonzero if any criterion fails. Tolerances and budgets are pinned below.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <type_traits>

#include "ctxopt/config.hpp"
#include "ctxopt/errors.hpp"
#include "ctxopt/json_io.hpp"
#include "ctxopt/model_backends.hpp"
#include "ctxopt/structured_output.hpp"
#include "ctxopt/trainer.hpp"
#include "metrics_oracle.hpp"
#include "replay_oracle.hpp"
#include "test_support.hpp"

namespace ctxopt {
namespace {

constexpr double kRuntimeBudgetSeconds = 10.0;
constexpr int kConvergenceDeadline = 15;
constexpr double kIdentityTolerance = 1e-12;
constexpr int kMetricMatrices = 1000;
constexpr int kGeneratedPlaybooks = 500;
constexpr std::size_t kMinMalformedCases = 20;

struct Failed {
  std::string what;
};

void check(bool ok, const std::string& what) {
  if (!ok) throw Failed{what};
}

using testing::make_playbook;
using testing::rule_task;

// --------------------------------------------------------------------------
// Shared RuleWorld setup

struct World {
  ConfigFile config;
  std::vector<TaskSpec> pool;
  std::vector<TaskSpec> eval;
  std::vector<TaskSpec> all;
  std::unique_ptr<BackendSet> backends;

  explicit World(const char* cfg) : config(load_config(testing::fixture(cfg))) {
    pool = load_task_pool(config.pool);
    eval = load_task_pool(config.eval_set);
    all = pool;
    all.insert(all.end(), eval.begin(), eval.end());
    backends = std::make_unique<BackendSet>(config, all, nullptr);
  }
  Backends view() const { return backends->view(); }
};

TrainOptions writing_to(const std::filesystem::path& out) {
  TrainOptions o;
  o.out = out;
  return o;
}

std::string fixed3(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3f", v);
  return buf;
}

// --------------------------------------------------------------------------
// 1. Hermetic convergence

std::string convergence() {
  const auto t0 = std::chrono::steady_clock::now();
  const World full("ruleworld/full.cfg");
  const World base("ruleworld/base.cfg");
  check(full.pool.size() == 20, "pool must hold 20 tasks");
  check(full.config.run.batch_size == 3 && full.config.run.group_size == 3 &&
            full.config.run.replay_ratio == 0.5 && full.config.run.seed == 7,
        "full config must use B=3, G=3, rho=0.5, seed 7");
  check(base.config.run.primitives == PrimitiveSet::none(), "base config must disable all");

  const TrainResult rf = train(full.config.run, full.pool, full.eval, Playbook{}, full.view());
  const TrainResult rb = train(base.config.run, base.pool, base.eval, Playbook{}, base.view());
  const double seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  int first = -1;
  for (std::size_t t = 0; t < rf.scores.size(); ++t) {
    if (rf.scores[t] == 1.0) {
      first = static_cast<int>(t);
      break;
    }
  }
  check(first >= 0 && first <= kConvergenceDeadline,
        "full never reached 1.0 by iteration " + std::to_string(kConvergenceDeadline));
  const double f15 = rf.scores.at(kConvergenceDeadline);
  const double b15 = rb.scores.at(kConvergenceDeadline);
  check(b15 < f15, "base " + fixed3(b15) + " not below full " + fixed3(f15));
  check(seconds < kRuntimeBudgetSeconds, "runtime " + std::to_string(seconds) + " s");
  return "full 1.000 at iteration " + std::to_string(first) + "; at 15 full " + fixed3(f15) +
         " base " + fixed3(b15) + "; " + fixed3(seconds) + " s";
}

// --------------------------------------------------------------------------
// 2. Metrics against the brute-force oracle

std::string metrics_oracle() {
  std::mt19937_64 rng(2026);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::size_t points = 0;
  for (int trial = 0; trial < kMetricMatrices; ++trial) {
    const std::size_t n = rng() % 11;
    const std::size_t T = 1 + rng() % 20;
    const double density = u(rng);
    SolveMatrix m(n, T);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t t = 0; t < T; ++t) m.set(i, t, u(rng) < density);
    }
    const auto series = compute_series(m);
    check(series == reference::compute_series(m), "parallel series differs from serial");
    for (std::size_t t = 0; t < T; ++t) {
      check(series[t] == oracle::series_point(m, t), "series point differs from oracle");
      const double cur = current_rate(m, t);
      const double env = envelope(m, t);
      check(cur == oracle::over(oracle::current_count(m, t), n), "current rate");
      if (t > 0) check(env >= envelope(m, t - 1), "envelope decreased");
      double prev = -1.0;
      for (Window w = 1; w <= 21; ++w) {
        const double rec = recently_solved_rate(m, t, w);
        check(rec == oracle::recent(m, t, w), "recent rate differs from oracle");
        check(cur <= rec && rec <= env, "ordering chain broken");
        check(rec >= prev, "window monotonicity broken");
        prev = rec;
        const Instability d = instability_decomposition(m, t, w);
        const auto [active, stale] = oracle::decomposition(m, t, w);
        check(d.active == active && d.stale == stale, "decomposition differs from oracle");
        check(std::abs(d.active + d.stale - (env - cur)) <= kIdentityTolerance,
              "active + stale != envelope - current");
        ++points;
      }
    }
    for (Window w : {Window{1}, Window{5}, Window{10}, kAllTime}) {
      const SummaryStats s = summary_stats(m, w);
      check(s == reference::summary_stats(m, w), "parallel summary differs from serial");
      check(s == oracle::summary(m, w), "summary differs from oracle");
    }
  }
  return std::to_string(kMetricMatrices) + " matrices, " + std::to_string(points) +
         " (t, w) points";
}

// --------------------------------------------------------------------------
// 3. Replay semantics

std::string replay_semantics() {
  std::size_t strings = 0;
  for (int n_grad = 1; n_grad <= 3; ++n_grad) {
    for (int n_evict = 1; n_evict <= 3; ++n_evict) {
      for (int len = 0; len <= 8; ++len) {
        for (unsigned bits = 0; bits < (1u << len); ++bits) {
          std::string s;
          for (int i = 0; i < len; ++i) s += (bits >> i) & 1 ? 'P' : 'F';
          const oracle::SimResult want = oracle::simulate(s, n_grad, n_evict);
          ReplayBuffer b(n_grad, n_evict);
          std::vector<BufferEventKind> got;
          for (int i = 0; i < len; ++i) {
            for (const auto& e : b.record_outcome("t", s[i] == 'P', i + 1)) got.push_back(e.kind);
          }
          check(got == want.events, "events differ for " + s);
          check(b.contains("t") == want.member, "membership differs for " + s);
          check((b.evicted().count("t") > 0) == want.banned, "eviction differs for " + s);
          if (want.member) {
            const ReplayRecord& r = b.records().at("t");
            check(r.consecutive_passes == want.passes && r.consecutive_fails == want.fails,
                  "streak counters differ for " + s);
          }
          ++strings;
        }
      }
    }
  }

  std::mt19937_64 gen(5);
  int backfilled = 0;
  for (int trial = 0; trial < 2000; ++trial) {
    const std::size_t pool_size = 1 + gen() % 12;
    std::vector<TaskSpec> pool;
    for (std::size_t i = 0; i < pool_size; ++i) pool.push_back(rule_task("p" + std::to_string(i), {}));
    ReplayBuffer buffer(2, 3);
    std::set<std::string> members;
    for (const auto& t : pool) {
      if (gen() % 3 == 0) {
        buffer.record_outcome(t.task_id, false, 0);
        members.insert(t.task_id);
      }
    }
    const std::size_t size = 1 + gen() % 8;
    const double rho = static_cast<double>(gen() % 11) / 10.0;
    Rng rng(gen());
    const BatchSample s = sample_batch(pool, buffer, size, rho, rng);
    const std::size_t total = std::min(size, pool_size);
    const auto floor_rho_b = static_cast<std::size_t>(std::floor(rho * static_cast<double>(size) + 1e-9));
    const std::size_t want = std::min(floor_rho_b, total);
    check(s.tasks.size() == total, "batch size");
    check(s.replayed.size() == std::min(want, members.size()), "replay draw count");
    if (members.size() < want) ++backfilled;
    std::set<std::string> ids;
    for (const auto& t : s.tasks) check(ids.insert(t.task_id).second, "duplicate task in batch");
    for (std::size_t i = 0; i < s.replayed.size(); ++i) {
      check(members.count(s.replayed[i]) > 0, "replayed task is not a buffer member");
      check(s.tasks[i].task_id == s.replayed[i], "replayed tasks must lead the batch");
    }
  }
  return std::to_string(strings) + " outcome strings; 2000 batches (" +
         std::to_string(backfilled) + " backfilled)";
}

// --------------------------------------------------------------------------
// 4. Group selection protocol

RolloutGroup make_group(const std::string& id, const std::vector<double>& rewards) {
  RolloutGroup g;
  g.task_id = id;
  for (double r : rewards) {
    Rollout ro;
    ro.trajectory.task_id = id;
    ro.outcome.reward = r;
    ro.outcome.passed = r >= kBinaryPassThreshold;
    g.rollouts.push_back(ro);
  }
  return g;
}

std::string selection_protocol() {
  std::mt19937_64 rng(44);
  for (int trial = 0; trial < 2000; ++trial) {
    std::vector<RolloutGroup> groups;
    const std::size_t n = 1 + rng() % 8;
    const std::size_t G = 1 + rng() % 4;
    for (std::size_t i = 0; i < n; ++i) {
      std::vector<double> rewards;
      for (std::size_t k = 0; k < G; ++k) {
        // Rewards on a coarse grid so ties and exact passes both occur.
        rewards.push_back(static_cast<double>(rng() % 5) / 4.0);
      }
      groups.push_back(make_group("g" + std::to_string(i), rewards));
    }
    const std::size_t limit = 1 + rng() % 5;
    const auto selected = select_for_reflection(groups, limit);
    std::size_t eligible = 0;
    for (const auto& g : groups) eligible += g.mixed() || g.all_failed();
    check(selected.size() == std::min(limit, eligible), "selection size");
    bool seen_uniform = false;
    double last_variance = 0.0;
    for (const auto& g : selected) {
      check(!g.all_passed(), "all-pass group selected");
      if (g.mixed()) {
        check(!seen_uniform, "mixed group after a uniform-fail group");
      } else {
        const double v = reward_variance(g);
        check(!seen_uniform || v <= last_variance, "uniform-fail variance order broken");
        seen_uniform = true;
        last_variance = v;
      }
    }
    // A mixed group left out means the cap was hit by mixed groups alone.
    std::size_t mixed_total = 0, mixed_selected = 0;
    for (const auto& g : groups) mixed_total += g.mixed();
    for (const auto& g : selected) mixed_selected += g.mixed();
    check(mixed_selected == std::min(mixed_total, limit), "mixed groups not preferred");
  }

  // All-pass iteration: the k = 0 path.
  const World w("ruleworld/full.cfg");
  const std::vector<TaskSpec> pool = {rule_task("x0", {"cache", "retry"}),
                                      rule_task("x1", {"encode"}), rule_task("x2", {"dedupe"})};
  RunState s;
  s.playbook = load_playbook(testing::test_fixture("covered_playbook.json"));
  s.buffer = ReplayBuffer(2, 3);
  const std::uint64_t v0 = s.playbook.version();
  const IterationRecord rec = step(w.config.run, s, pool, w.view());
  check(rec.diagnostics.empty() && rec.reflections.empty(), "all-pass step produced diagnostics");
  check(rec.mutation.no_op && rec.version_after == v0 && s.playbook.version() == v0,
        "all-pass step changed the playbook version");
  return "2000 random group sets; all-pass step leaves version " + std::to_string(v0);
}

// --------------------------------------------------------------------------
// 5. Credit-assignment hygiene

// Compile-time interface audit: the reflection entry points and the request
// the backend sees carry no optimizer state.
static_assert(std::is_same_v<decltype(&reflect_single),
                             Diagnostic (*)(const ReflectorBackend&, const Rollout&,
                                            const Playbook&, const ReflectOptions&)>);
static_assert(std::is_same_v<decltype(&reflect_contrastive),
                             Diagnostic (*)(const ReflectorBackend&, const Rollout&,
                                            const Rollout&, const Playbook&, const Trajectory*,
                                            const ReflectOptions&)>);
static_assert(std::is_same_v<decltype(&reflect_dual),
                             Diagnostic (*)(const ReflectorBackend&, const Rollout&,
                                            const Trajectory&, const Playbook&,
                                            const ReflectOptions&)>);
static_assert(std::is_same_v<decltype(&reflect_batched),
                             Diagnostic (*)(const ReflectorBackend&, std::span<const Rollout>,
                                            const Playbook&, const ReflectOptions&)>);
static_assert(std::is_same_v<decltype(&ReflectorBackend::reflect),
                             Diagnostic (ReflectorBackend::*)(const ReflectionRequest&) const>);
static_assert(std::is_same_v<decltype(&AgentBackend::run),
                             Trajectory (AgentBackend::*)(const TaskSpec&, std::string_view, bool,
                                                          const RolloutContext&) const>);

// ReflectionRequest has exactly these six members, none of them a StateDoc;
// ReflectOptions has one. A new member breaks the structured bindings.
constexpr bool audit_reflection_request() {
  ReflectionRequest req;
  auto& [mode, traces, positive, annotation, playbook, structured] = req;
  static_assert(std::is_same_v<decltype(mode), ReflectionMode>);
  static_assert(std::is_same_v<decltype(traces), std::span<const Rollout>>);
  static_assert(std::is_same_v<decltype(positive), const Rollout*>);
  static_assert(std::is_same_v<decltype(annotation), const Trajectory*>);
  static_assert(std::is_same_v<decltype(playbook), const Playbook*>);
  static_assert(std::is_same_v<decltype(structured), bool>);
  ReflectOptions opts;
  auto& [only] = opts;
  static_assert(std::is_same_v<decltype(only), bool>);
  return true;
}
static_assert(audit_reflection_request());

// Standard rollouts fail (or pass); the annotated run passes or fails as
// configured. Counts calls per task.
class SplitAgent : public AgentBackend {
 public:
  SplitAgent(bool standard_passes, bool annotated_passes)
      : standard_(standard_passes), annotated_(annotated_passes) {}
  Trajectory run(const TaskSpec& task, std::string_view, bool annotated,
                 const RolloutContext&) const override {
    {
      std::lock_guard lock(mu_);
      ++calls_[task.task_id];
    }
    Trajectory t;
    t.task_id = task.task_id;
    t.annotated = annotated;
    t.final_answer = (annotated ? annotated_ : standard_) ? label_text(task) : "wrong";
    if (annotated) t.cited_entry_ids = {EntryId{0}};
    return t;
  }
  std::map<std::string, int> calls() const {
    std::lock_guard lock(mu_);
    return calls_;
  }

 private:
  bool standard_;
  bool annotated_;
  mutable std::mutex mu_;
  mutable std::map<std::string, int> calls_;
};

std::string credit_hygiene() {
  const World w("ruleworld/full.cfg");
  const RunConfig& c = w.config.run;
  check(c.primitives.credit_assignment, "full config must enable credit assignment");

  // Exactly G + 1 executions per sampled task.
  {
    const SplitAgent agent(false, true);
    Backends b = w.view();
    b.agent = &agent;
    RunState s;
    s.buffer = ReplayBuffer(c.n_grad, c.n_evict);
    const IterationRecord rec = step(c, s, w.pool, b);
    check(rec.standard_executions == rec.sampled.size() * static_cast<std::size_t>(c.group_size),
          "standard execution count");
    check(rec.annotated_executions == rec.sampled.size(), "annotated execution count");
    for (const auto& [id, n] : agent.calls()) {
      check(n == c.group_size + 1, "task " + id + " ran " + std::to_string(n) + " times");
    }
  }

  // Flipping only the annotated outcome leaves every accounting field alone.
  const Playbook pb = make_playbook({{"rules", {"Always apply cache when it is relevant."}}});
  const std::vector<TaskSpec> pool = {rule_task("a", {"cache"}), rule_task("b", {"cache"})};
  for (bool standard : {false, true}) {
    std::vector<nlohmann::json> views;
    std::vector<double> scores;
    for (bool annotated : {false, true}) {
      const SplitAgent agent(standard, annotated);
      Backends b = w.view();
      b.agent = &agent;
      RunState s;
      s.playbook = pb;
      s.buffer = ReplayBuffer(c.n_grad, c.n_evict);
      const nlohmann::json rec = step(c, s, pool, b);
      nlohmann::json v;
      for (const char* key : {"sampled", "replayed", "executions", "selected", "counters",
                              "buffer_events", "buffer"}) {
        v[key] = rec.at(key);
      }
      for (const auto& g : rec.at("groups")) v["groups"].push_back({g.at("rewards"), g.at("passed")});
      views.push_back(v);
      scores.push_back(evaluate(s.playbook, pool, agent, *b.evaluator).score);
      const std::vector<TaskSpec> eval = {rule_task("e", {"cache"})};
      const TrainResult tr = train(c, pool, eval, pb, b);
      for (double x : tr.scores) check(x == (standard ? 1.0 : 0.0), "eval saw the annotated run");
      check(tr.solve_matrix.tasks() == 1, "metrics matrix shape");
    }
    check(views[0] == views[1], std::string("annotated outcome leaked into accounting (standard ") +
                                    (standard ? "pass)" : "fail)"));
    check(scores[0] == scores[1], "annotated outcome leaked into evaluation");
  }
  return "G+1 = " + std::to_string(c.group_size + 1) +
         " executions per task; reflection interfaces carry no state; annotated outcome inert";
}

// --------------------------------------------------------------------------
// 6. Determinism and resume

std::map<std::string, std::string> tree(const std::filesystem::path& root) {
  std::map<std::string, std::string> files;
  for (const auto& e : std::filesystem::recursive_directory_iterator(root)) {
    if (e.is_regular_file()) {
      files[std::filesystem::relative(e.path(), root).string()] = read_text_file(e.path());
    }
  }
  return files;
}

std::string first_difference(const std::map<std::string, std::string>& a,
                             const std::map<std::string, std::string>& b) {
  for (const auto& [k, v] : a) {
    auto it = b.find(k);
    if (it == b.end()) return k + " missing";
    if (it->second != v) return k + " differs";
  }
  for (const auto& [k, v] : b) {
    if (!a.count(k)) return k + " extra";
  }
  return {};
}

std::string determinism() {
  const World w("ruleworld/full.cfg");
  testing::TempDir dir("acceptance_det");
  const RunConfig& c = w.config.run;
  train(c, w.pool, w.eval, Playbook{}, w.view(), writing_to(dir.path() / "a"));
  train(c, w.pool, w.eval, Playbook{}, w.view(), writing_to(dir.path() / "b"));
  const auto a = tree(dir.path() / "a");
  const auto b = tree(dir.path() / "b");
  check(a.size() > static_cast<std::size_t>(c.iterations), "run tree is too small");
  const std::string d = first_difference(a, b);
  check(d.empty(), "repeat run: " + d);

  RunConfig serial = c;
  serial.parallel = false;
  train(serial, w.pool, w.eval, Playbook{}, w.view(), writing_to(dir.path() / "serial"));
  const std::string ds = first_difference(a, tree(dir.path() / "serial"));
  check(ds.empty(), "serial run: " + ds);

  for (int t : {1, 7, c.iterations - 1}) {
    const auto out = dir.path() / ("resume_" + std::to_string(t));
    TrainOptions opts;
    opts.out = out;
    opts.resume = checkpoint_dir(dir.path() / "a", t);
    const TrainResult r = train(c, w.pool, w.eval, Playbook{}, w.view(), opts);
    check(static_cast<int>(r.records.size()) == c.iterations - t, "resume ran the wrong count");
    const std::string dr = first_difference(a, tree(out));
    check(dr.empty(), "resume from " + std::to_string(t) + ": " + dr);
  }
  return std::to_string(a.size()) + " files identical across repeat, serial and resumed runs";
}

// --------------------------------------------------------------------------
// 7. Playbook algebra

std::string playbook_algebra() {
  std::mt19937_64 rng(777);
  for (int i = 0; i < kGeneratedPlaybooks; ++i) {
    const Playbook a = testing::random_playbook(rng, 12);
    const Playbook b = (i % 2 == 0) ? apply_edits(a, testing::random_edits(a, rng, rng() % 8))
                                    : testing::random_playbook(rng, 12);
    check(content_equal(apply_edits(a, diff(a, b)), b), "apply(diff) round trip");
    check(strip_annotations(render_annotated(a)) == render(a), "strip equivalence");

    Playbook pb = a;
    std::set<std::uint64_t> ever;
    for (EntryId id : pb.entry_ids()) ever.insert(id.value);
    for (int s = 0; s < 4; ++s) {
      const auto edits = testing::random_edits(pb, rng, 1 + rng() % 4);
      const Playbook next = apply_edits(pb, edits);
      check(next.version() == pb.version() + 1, "version must grow by one per applied batch");
      check(next.next_entry_id() >= pb.next_entry_id(), "id counter decreased");
      for (EntryId id : next.entry_ids()) {
        if (!pb.contains(id)) {
          check(id.value >= pb.next_entry_id(), "fresh id below the counter");
          check(ever.insert(id.value).second, "id reused");
        }
      }
      pb = next;
    }
  }
  return std::to_string(kGeneratedPlaybooks) + " generated playbooks";
}

// --------------------------------------------------------------------------
// 8. Model-output robustness

std::string openai_body(const std::string& text) {
  return nlohmann::json{{"choices", {{{"message", {{"role", "assistant"}, {"content", text}}}}}}}
      .dump();
}

ClientOptions quiet_options() {
  ClientOptions o;
  o.sleeper = [](std::chrono::milliseconds) {};
  o.env = [](const std::string&) { return std::optional<std::string>("k"); };
  return o;
}

ModelEndpoint local_endpoint() {
  ModelEndpoint e;
  e.base_url = "http://localhost:1";
  e.model_name = "m";
  e.api_key_env = "K";
  e.max_retries = 0;
  return e;
}

std::shared_ptr<ModelClient> client_for(std::shared_ptr<Transport> t) {
  return std::make_shared<ModelClient>(local_endpoint(), std::move(t), quiet_options());
}

// Always answers with the same text.
std::shared_ptr<ScriptedTransport> constant(const std::string& reply) {
  return std::make_shared<ScriptedTransport>(
      [reply](const HttpRequest&) { return HttpResponse{200, openai_body(reply)}; });
}

std::string model_output_robustness() {
  const auto corpus =
      nlohmann::json::parse(read_text_file(testing::test_fixture("malformed_outputs.json")));
  check(corpus.size() >= kMinMalformedCases, "corpus too small");
  testing::TempDir dir("acceptance_malformed");

  const Playbook pb = make_playbook({{"rules", {"Always apply cache when it is relevant."}}});
  Rollout failed;
  failed.trajectory.task_id = "t";
  failed.trajectory.final_answer = "wrong";
  Diagnostic diag;
  diag.attribution = Attribution::actionable_gap;
  diag.root_cause = "missing";
  diag.coverage_gap = "retry";
  const std::vector<Diagnostic> diags = {diag};

  std::size_t index = 0;
  for (const auto& c : corpus) {
    const std::string name = c.at("name");
    const std::string reply = c.at("reply");
    // Record a log holding exactly the retry budget of this reply, then
    // replay it offline.
    const auto log = dir.path() / (std::to_string(index++) + ".jsonl");
    std::string text;
    for (int i = 0; i <= kParseRetries; ++i) {
      text += nlohmann::json{{"request", ""}, {"status", 200}, {"response", openai_body(reply)}}
                  .dump() +
              "\n";
    }
    write_text_file(log, text);
    auto replay = std::make_shared<ReplayTransport>(log);
    const auto client = client_for(replay);
    try {
      if (c.at("role") == "reflector") {
        reflect_single(ModelReflector(client), failed, pb);
      } else {
        mutate(ModelMutator(client, 8), pb, diags, nullptr);
      }
      throw Failed{name + " was accepted"};
    } catch (const MalformedModelOutput& e) {
      check(e.attempts() == kParseRetries + 1, name + ": wrong attempt count");
    }
    // The whole budget was spent: the log is exhausted.
    bool exhausted = false;
    try {
      client->complete({{"user", "again"}});
    } catch (const ExhaustedError&) {
      exhausted = true;
    }
    check(exhausted, name + ": retry budget not fully used");
  }

  // A reply that recovers on the last attempt is accepted.
  {
    auto t = std::make_shared<ScriptedTransport>();
    for (int i = 0; i < kParseRetries; ++i) t->push({200, openai_body("garbage")});
    t->push({200, openai_body("```diagnostic\nattribution: intractable\nroot_cause: x\n"
                              "coverage_gap: none\n```")});
    const Diagnostic d = reflect_single(ModelReflector(client_for(t)), failed, pb);
    check(d.attribution == Attribution::intractable, "recovered reply misparsed");
  }

  const World w("ruleworld/full.cfg");
  RunConfig c = w.config.run;
  c.iterations = 3;

  // Malformed reflector for a whole run: every reflection is an error, the
  // playbook never changes, and the run completes.
  {
    const ModelReflector reflector(client_for(constant(corpus.at(0).at("reply"))));
    Backends b = w.view();
    b.reflector = &reflector;
    const TrainResult r =
        train(c, w.pool, w.eval, pb, b, writing_to(dir.path() / "bad_reflector"));
    check(r.final_state.iteration == c.iterations, "run stopped early");
    check(content_equal(r.final_state.playbook, pb) &&
              r.final_state.playbook.version() == pb.version(),
          "malformed reflections changed the playbook");
    std::size_t errors = 0;
    for (const auto& rec : r.records) {
      check(rec.errors.size() == rec.reflections.size(), "reflection error not recorded");
      for (const auto& e : rec.errors) {
        check(e.find("unparseable after 3 attempts") != std::string::npos, "error text: " + e);
      }
      errors += rec.errors.size();
    }
    check(errors > 0, "no reflections were attempted");
    check(std::filesystem::exists(checkpoint_dir(dir.path() / "bad_reflector", c.iterations) /
                                  "record.json"),
          "checkpoint missing");
  }

  // Malformed mutator: the diagnostics survive, the edit step is skipped.
  {
    const ModelMutator mutator(client_for(constant("no block here")), c.max_edits);
    Backends b = w.view();
    b.mutator = &mutator;
    const TrainResult r = train(c, w.pool, w.eval, Playbook{}, b);
    for (const auto& rec : r.records) {
      if (rec.diagnostics.empty()) continue;
      check(rec.errors.size() == 1 && rec.errors[0].rfind("mutate: ", 0) == 0,
            "mutator error not recorded");
      check(rec.version_after == rec.version_before, "malformed mutation changed the version");
    }
    check(r.final_state.playbook.entry_count() == 0, "malformed mutator added entries");
  }

  // Well-formed proposal with invalid edits: each is dropped with a reason
  // and logged; the valid ones apply.
  {
    const std::string reply =
        "```mutation\nrationale: mixed bag\n"
        "ADD learned_rules | Always apply retry when it is relevant.\n"
        "DELETE 99\n"
        "ADD learned_rules | Always apply retry when it is relevant.\n"
        "UPDATE 42 | nothing here\n"
        "ADD learned_rules |\n"
        "ADD learned_rules | Always apply cache when it is relevant.\n"
        "```";
    const ModelMutator mutator(client_for(constant(reply)), c.max_edits);
    Backends b = w.view();
    b.mutator = &mutator;
    RunConfig one = c;
    one.iterations = 1;
    const auto out = dir.path() / "dropped";
    const TrainResult r = train(one, w.pool, w.eval, Playbook{}, b, writing_to(out));
    const MutationResult& m = r.records.at(0).mutation;
    check(m.edits.size() == 2, "expected two accepted edits");
    check(m.dropped.size() == 4, "expected four dropped edits");
    const std::vector<std::string> reasons = {"unknown entry id 99", "duplicate content",
                                              "unknown entry id 42", "empty"};
    for (std::size_t i = 0; i < reasons.size(); ++i) {
      check(m.dropped[i].reason.find(reasons[i]) != std::string::npos,
            "drop reason: " + m.dropped[i].reason);
    }
    const std::string log = read_text_file(out / "mutations.jsonl");
    const auto line = nlohmann::json::parse(log.substr(0, log.find('\n')));
    check(line.at("dropped").size() == 4, "dropped edits not logged");
    check(r.final_state.playbook.entry_count() == 2, "valid edits not applied");
  }
  return std::to_string(corpus.size()) + " malformed replies exhaust " +
         std::to_string(kParseRetries + 1) + " attempts; runs complete; invalid edits dropped";
}

// --------------------------------------------------------------------------
// 9. Primitive isolation

// Top-level IterationRecord keys each primitive may change when it alone is
// switched off. Everything else must match the full configuration exactly.
const std::map<std::string, std::set<std::string>> kAllowed = {
    {"batching",
     {"selected", "reflections", "diagnostics", "counters", "mutation", "version_after",
      "state"}},
    {"grouped_rollouts",
     {"executions", "groups", "selected", "reflections", "diagnostics", "counters", "mutation",
      "version_after", "buffer_events", "buffer", "state"}},
    {"credit_assignment",
     {"executions", "groups", "reflections", "diagnostics", "counters", "mutation",
      "version_after", "state"}},
    {"auxiliary_losses",
     {"reflections", "diagnostics", "counters", "mutation", "version_after", "state"}},
    {"failure_replay", {"buffer_events", "buffer"}},
    {"optimizer_state", {"mutation", "version_after", "state"}},
};

// Key each primitive must visibly change somewhere, so the check is not vacuous.
const std::map<std::string, std::string> kWitness = {
    {"batching", "selected"},      {"grouped_rollouts", "executions"},
    {"credit_assignment", "executions"}, {"auxiliary_losses", "reflections"},
    {"failure_replay", "buffer"},  {"optimizer_state", "state"},
};

std::set<std::string> changed_keys(const nlohmann::json& a, const nlohmann::json& b) {
  std::set<std::string> keys;
  for (const auto& [k, v] : a.items()) {
    if (!b.contains(k) || b.at(k) != v) keys.insert(k);
  }
  for (const auto& [k, v] : b.items()) {
    if (!a.contains(k)) keys.insert(k);
  }
  return keys;
}

std::string primitive_isolation() {
  const World w("ruleworld/full.cfg");
  const RunConfig full = w.config.run;
  check(full.primitives == PrimitiveSet::all(), "full config must enable every primitive");

  // Prepared states: checkpoints 0..5 of a full run.
  std::vector<RunState> states;
  {
    RunState s;
    s.buffer = ReplayBuffer(full.n_grad, full.n_evict);
    states.push_back(s);
    for (int i = 0; i < 5; ++i) {
      step(full, s, w.pool, w.view());
      states.push_back(s);
    }
  }

  std::ostringstream summary;
  for (std::string_view name : kPrimitiveNames) {
    const std::string key(name);
    RunConfig off = full;
    primitive_flag(off.primitives, name) = false;
    off = off.normalized();
    bool witnessed = false;
    for (const RunState& prepared : states) {
      RunState s0 = prepared;
      if (key == "failure_replay") {
        // With an empty buffer the batch is the same either way, so only the
        // bookkeeping may differ. Sampling effects are checked below.
        s0.buffer = ReplayBuffer(full.n_grad, full.n_evict);
      }
      RunState a = s0, b = s0;
      const nlohmann::json ra = step(full, a, w.pool, w.view());
      const nlohmann::json rb = step(off, b, w.pool, w.view());
      for (const std::string& k : changed_keys(ra, rb)) {
        check(kAllowed.at(key).count(k) > 0,
              key + " off changed '" + k + "' at iteration " + std::to_string(s0.iteration));
      }
      witnessed |= ra.at(kWitness.at(key)) != rb.at(kWitness.at(key));

      // Finer checks inside the allowed keys.
      if (key == "batching") {
        check(rb.at("selected").size() <= 1, "batching off selected more than one group");
        if (!ra.at("selected").empty()) {
          check(rb.at("selected").at(0) == ra.at("selected").at(0), "B=1 pick differs");
        }
      } else if (key == "grouped_rollouts") {
        check(ra.at("executions").at("annotated") == rb.at("executions").at("annotated"),
              "G=1 changed annotated executions");
        for (std::size_t i = 0; i < ra.at("groups").size(); ++i) {
          const auto& ga = ra.at("groups")[i];
          const auto& gb = rb.at("groups")[i];
          check(gb.at("rewards").size() == 1 && gb.at("rewards")[0] == ga.at("rewards")[0],
                "G=1 first rollout differs");
          check(gb.at("annotated_cited") == ga.at("annotated_cited"),
                "G=1 changed the annotated run");
        }
      } else if (key == "credit_assignment") {
        check(ra.at("executions").at("standard") == rb.at("executions").at("standard"),
              "credit off changed standard executions");
        check(rb.at("executions").at("annotated") == 0, "credit off still annotates");
        for (std::size_t i = 0; i < ra.at("groups").size(); ++i) {
          check(ra.at("groups")[i].at("passed") == rb.at("groups")[i].at("passed"),
                "credit off changed standard outcomes");
        }
        for (const auto& r : rb.at("reflections")) {
          check(!r.at("annotation_attached").get<bool>() && r.at("mode") != "dual",
                "credit off still attaches annotations");
        }
      } else if (key == "auxiliary_losses") {
        for (std::size_t i = 0; i < ra.at("reflections").size(); ++i) {
          nlohmann::json x = ra.at("reflections")[i], y = rb.at("reflections")[i];
          check(!y.at("structured").get<bool>(), "aux off still structured");
          x.erase("structured");
          y.erase("structured");
          check(x == y, "aux off changed reflection routing");
        }
      } else if (key == "optimizer_state") {
        check(!rb.at("mutation").at("state_injected").get<bool>() ||
                  rb.at("diagnostics").empty(),
              "state off still injects the state document");
        check(rb.at("state") == nlohmann::json(prepared.state), "state off still updates");
      }
    }
    // Replay with a non-empty buffer: only sampling changes, and the
    // execution volume stays the same.
    if (key == "failure_replay") {
      for (const RunState& prepared : states) {
        RunState a = prepared, b = prepared;
        const IterationRecord ra = step(full, a, w.pool, w.view());
        const IterationRecord rb = step(off, b, w.pool, w.view());
        check(rb.replayed.empty(), "replay off still replays");
        check(rb.buffer_events.empty() && rb.buffer == prepared.buffer,
              "replay off still maintains the buffer");
        check(ra.standard_executions == rb.standard_executions, "replay off changed volume");
        witnessed |= !ra.replayed.empty();
      }
    }
    check(witnessed, key + " off never changed '" + kWitness.at(key) + "'");
    summary << (summary.tellp() > 0 ? ", " : "") << key;
  }
  return "isolated over " + std::to_string(states.size()) + " prepared states: " + summary.str();
}

}  // namespace
}  // namespace ctxopt

int main() {
  using Criterion = std::pair<const char*, std::function<std::string()>>;
  const std::vector<Criterion> criteria = {
      {"hermetic convergence", ctxopt::convergence},
      {"metrics oracle equivalence", ctxopt::metrics_oracle},
      {"replay semantics", ctxopt::replay_semantics},
      {"group selection protocol", ctxopt::selection_protocol},
      {"credit-assignment hygiene", ctxopt::credit_hygiene},
      {"determinism and resume", ctxopt::determinism},
      {"playbook algebra", ctxopt::playbook_algebra},
      {"model-output robustness", ctxopt::model_output_robustness},
      {"primitive isolation", ctxopt::primitive_isolation},
  };
  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const auto& [name, fn] = criteria[i];
    std::string detail;
    bool ok = false;
    try {
      detail = fn();
      ok = true;
    } catch (const ctxopt::Failed& f) {
      detail = f.what;
    } catch (const std::exception& e) {
      detail = std::string("exception: ") + e.what();
    }
    failures += !ok;
    std::printf("[%s] criterion %zu %s: %s\n", ok ? "PASS" : "FAIL", i + 1, name, detail.c_str());
    std::fflush(stdout);
  }
  std::printf("%d of %zu criteria passed\n", static_cast<int>(criteria.size()) - failures,
              criteria.size());
  return failures == 0 ? 0 : 1;
}
