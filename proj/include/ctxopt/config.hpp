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

// Run configuration and the flat `key = value` file format.
//
//   # comment
//   iterations = 15
//   primitives = batching, grouped_rollouts, failure_replay
//   reflector = model
//   reflector.base_url = https://api.example.com/v1
//   reflector.api_key_env = EXAMPLE_API_KEY
//
// Relative paths resolve against the config file's directory. Credentials
// are only ever read from the environment variable a role names.

#ifndef CTXOPT_CONFIG_HPP_
#define CTXOPT_CONFIG_HPP_

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "ctxopt/execution.hpp"
#include "ctxopt/model_client.hpp"
#include "ctxopt/mutation.hpp"
#include "ctxopt/optimizer_state.hpp"
#include "ctxopt/reflection.hpp"

namespace ctxopt {

struct PrimitiveSet {
  bool batching = true;
  bool grouped_rollouts = true;
  bool credit_assignment = true;
  bool auxiliary_losses = true;
  bool failure_replay = true;
  bool optimizer_state = true;

  static PrimitiveSet all() { return {}; }
  static PrimitiveSet none() { return {false, false, false, false, false, false}; }
  friend bool operator==(const PrimitiveSet&, const PrimitiveSet&) = default;
};

// Canonical names, in declaration order.
inline constexpr std::string_view kPrimitiveNames[] = {
    "batching",        "grouped_rollouts", "credit_assignment",
    "auxiliary_losses", "failure_replay",  "optimizer_state"};

// Returns a reference to the flag called `name`; throws ConfigError if none.
bool& primitive_flag(PrimitiveSet& set, std::string_view name);
std::string describe(const PrimitiveSet& set);

enum class ReflectionStyle { per_trace, batched };

struct RunConfig {
  int iterations = 30;
  std::size_t batch_size = 3;      // B: groups selected for reflection
  int group_size = 3;              // G
  double replay_ratio = 0.5;       // rho
  int n_grad = 2;
  int n_evict = 3;
  ReflectionStyle reflection_mode = ReflectionStyle::per_trace;
  PrimitiveSet primitives;
  std::size_t rollout_budget = 0;  // tasks sampled per iteration; 0 means B
  std::uint64_t seed = 0;
  std::size_t max_edits = 8;
  int max_parallel = 0;
  bool parallel = true;
  std::string learned_section = "learned_rules";
  std::vector<double> temperatures;  // per rollout index

  // Forces B = 1, G = 1 and rho = 0 for disabled primitives, fills in the
  // rollout budget, and validates ranges (ConfigError).
  RunConfig normalized() const;
};

struct RoleConfig {
  std::string backend = "scripted";  // scripted | model
  ModelEndpoint endpoint;
  std::filesystem::path prompt;      // empty: built-in template
  int max_in_flight = 0;
};

struct ConfigFile {
  RunConfig run;
  std::filesystem::path pool;
  std::filesystem::path eval_set;
  std::filesystem::path seed_playbook;  // empty: start from an empty playbook
  std::filesystem::path out;
  RoleConfig agent;
  RoleConfig reflector;
  RoleConfig mutator;
  RoleConfig state_updater;
};

// Throws ConfigError naming the offending line or key.
ConfigFile parse_config(std::string_view text, const std::filesystem::path& base_dir);
ConfigFile load_config(const std::filesystem::path& path);

// Normalized configuration in the same format, one key per line. Contains
// environment variable names but never their values.
std::string config_text(const ConfigFile& config);

struct Backends {
  const AgentBackend* agent = nullptr;
  const Evaluator* evaluator = nullptr;
  const ReflectorBackend* reflector = nullptr;
  const MutatorBackend* mutator = nullptr;
  const StateUpdaterBackend* state_updater = nullptr;
};

using TransportFactory = std::function<std::shared_ptr<Transport>()>;

// Owns the role implementations selected by a config file.
class BackendSet {
 public:
  // Scripted roles use RuleWorld over `tasks`. Model roles call
  // `transport` once each; with no factory they throw ConfigError.
  BackendSet(const ConfigFile& config, std::span<const TaskSpec> tasks,
             const TransportFactory& transport);
  Backends view() const;

 private:
  std::unique_ptr<AgentBackend> agent_;
  std::unique_ptr<Evaluator> evaluator_;
  std::unique_ptr<ReflectorBackend> reflector_;
  std::unique_ptr<MutatorBackend> mutator_;
  std::unique_ptr<StateUpdaterBackend> state_updater_;
};

}  // namespace ctxopt

#endif  // CTXOPT_CONFIG_HPP_
