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

#include "ctxopt/config.hpp"

#include <charconv>
#include <sstream>

#include "ctxopt/errors.hpp"
#include "ctxopt/json_io.hpp"
#include "ctxopt/model_backends.hpp"

namespace ctxopt {

bool& primitive_flag(PrimitiveSet& set, std::string_view name) {
  if (name == "batching") return set.batching;
  if (name == "grouped_rollouts") return set.grouped_rollouts;
  if (name == "credit_assignment") return set.credit_assignment;
  if (name == "auxiliary_losses") return set.auxiliary_losses;
  if (name == "failure_replay") return set.failure_replay;
  if (name == "optimizer_state") return set.optimizer_state;
  throw ConfigError("unknown primitive '" + std::string(name) + "'");
}

std::string describe(const PrimitiveSet& set) {
  PrimitiveSet copy = set;
  std::string out;
  for (std::string_view name : kPrimitiveNames) {
    if (!primitive_flag(copy, name)) continue;
    if (!out.empty()) out += ", ";
    out += name;
  }
  return out.empty() ? "none" : out;
}

RunConfig RunConfig::normalized() const {
  RunConfig c = *this;
  if (c.iterations < 0) throw ConfigError("iterations must be >= 0");
  if (c.batch_size < 1) throw ConfigError("batch_size must be positive");
  if (c.group_size < 1) throw ConfigError("group_size must be positive");
  if (c.replay_ratio < 0.0 || c.replay_ratio > 1.0) {
    throw ConfigError("replay_ratio must lie in [0, 1]");
  }
  if (c.n_grad < 1 || c.n_evict < 1) throw ConfigError("n_grad and n_evict must be positive");
  if (c.max_parallel < 0) throw ConfigError("max_parallel must be >= 0");
  if (c.learned_section.empty() || c.learned_section.find('\n') != std::string::npos) {
    throw ConfigError("learned_section must be a non-empty single line");
  }
  if (c.rollout_budget == 0) c.rollout_budget = c.batch_size;
  if (!c.primitives.batching) c.batch_size = 1;
  if (!c.primitives.grouped_rollouts) c.group_size = 1;
  if (!c.primitives.failure_replay) c.replay_ratio = 0.0;
  return c;
}

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split_list(const std::string& value) {
  std::vector<std::string> out;
  std::string token;
  for (char c : value + ",") {
    if (c == ',') {
      if (auto t = trim(token); !t.empty()) out.push_back(t);
      token.clear();
    } else {
      token += c;
    }
  }
  return out;
}

template <typename T>
T parse_number(const std::string& key, const std::string& value) {
  T out{};
  const char* end = value.data() + value.size();
  auto [ptr, ec] = std::from_chars(value.data(), end, out);
  if (ec != std::errc() || ptr != end) {
    throw ConfigError("key '" + key + "': bad number '" + value + "'");
  }
  return out;
}

double parse_real(const std::string& key, const std::string& value) {
  try {
    std::size_t used = 0;
    const double v = std::stod(value, &used);
    if (used == value.size()) return v;
  } catch (const std::exception&) {
  }
  throw ConfigError("key '" + key + "': bad number '" + value + "'");
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "on" || value == "1") return true;
  if (value == "false" || value == "off" || value == "0") return false;
  throw ConfigError("key '" + key + "': expected true or false");
}

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& value) {
  std::filesystem::path p(value);
  return p.is_absolute() ? p : (base / p).lexically_normal();
}

void set_role_key(RoleConfig& role, const std::string& key, const std::string& field,
                  const std::string& value, const std::filesystem::path& base) {
  if (field == "base_url") {
    role.endpoint.base_url = value;
  } else if (field == "model") {
    role.endpoint.model_name = value;
  } else if (field == "api_key_env") {
    role.endpoint.api_key_env = value;
  } else if (field == "temperature") {
    role.endpoint.temperature = parse_real(key, value);
  } else if (field == "max_retries") {
    role.endpoint.max_retries = parse_number<int>(key, value);
    if (role.endpoint.max_retries < 0) throw ConfigError("key '" + key + "' must be >= 0");
  } else if (field == "timeout") {
    role.endpoint.timeout = std::chrono::milliseconds(
        static_cast<std::int64_t>(parse_real(key, value) * 1000.0));
  } else if (field == "provider") {
    const auto p = parse_provider(value);
    if (!p) throw ConfigError("key '" + key + "': provider must be openai or anthropic");
    role.endpoint.provider = *p;
  } else if (field == "prompt") {
    role.prompt = resolve(base, value);
  } else if (field == "max_in_flight") {
    role.max_in_flight = parse_number<int>(key, value);
  } else {
    throw ConfigError("unknown key '" + key + "'");
  }
}

std::string real_text(double v) {
  std::ostringstream out;
  out.precision(17);
  out << v;
  return out.str();
}

}  // namespace

ConfigFile parse_config(std::string_view text, const std::filesystem::path& base_dir) {
  ConfigFile cfg;
  std::istringstream in{std::string(text)};
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("line " + std::to_string(lineno) + ": expected key = value");
    }
    const std::string key = trim(std::string_view(line).substr(0, eq));
    const std::string value = trim(std::string_view(line).substr(eq + 1));
    RunConfig& run = cfg.run;

    if (key == "iterations") {
      run.iterations = parse_number<int>(key, value);
    } else if (key == "batch_size") {
      run.batch_size = parse_number<std::size_t>(key, value);
    } else if (key == "group_size") {
      run.group_size = parse_number<int>(key, value);
    } else if (key == "replay_ratio") {
      run.replay_ratio = parse_real(key, value);
    } else if (key == "n_grad") {
      run.n_grad = parse_number<int>(key, value);
    } else if (key == "n_evict") {
      run.n_evict = parse_number<int>(key, value);
    } else if (key == "reflection_mode") {
      if (value == "per_trace") {
        run.reflection_mode = ReflectionStyle::per_trace;
      } else if (value == "batched") {
        run.reflection_mode = ReflectionStyle::batched;
      } else {
        throw ConfigError("key 'reflection_mode': expected per_trace or batched");
      }
    } else if (key == "primitives") {
      if (value == "all") {
        run.primitives = PrimitiveSet::all();
      } else {
        run.primitives = PrimitiveSet::none();
        if (value != "none") {
          for (const auto& name : split_list(value)) primitive_flag(run.primitives, name) = true;
        }
      }
    } else if (key == "rollout_budget") {
      run.rollout_budget = parse_number<std::size_t>(key, value);
    } else if (key == "seed") {
      run.seed = parse_number<std::uint64_t>(key, value);
    } else if (key == "max_edits") {
      run.max_edits = parse_number<std::size_t>(key, value);
    } else if (key == "max_parallel") {
      run.max_parallel = parse_number<int>(key, value);
    } else if (key == "parallel") {
      run.parallel = parse_bool(key, value);
    } else if (key == "learned_section") {
      run.learned_section = value;
    } else if (key == "pool") {
      cfg.pool = resolve(base_dir, value);
    } else if (key == "eval_set") {
      cfg.eval_set = resolve(base_dir, value);
    } else if (key == "seed_playbook") {
      cfg.seed_playbook = value.empty() ? std::filesystem::path() : resolve(base_dir, value);
    } else if (key == "out") {
      cfg.out = resolve(base_dir, value);
    } else if (key == "agent.temperatures") {
      run.temperatures.clear();
      for (const auto& t : split_list(value)) run.temperatures.push_back(parse_real(key, t));
    } else {
      const auto dot = key.find('.');
      const std::string role_name = key.substr(0, dot);
      RoleConfig* role = role_name == "agent"           ? &cfg.agent
                         : role_name == "reflector"     ? &cfg.reflector
                         : role_name == "mutator"       ? &cfg.mutator
                         : role_name == "state_updater" ? &cfg.state_updater
                                                        : nullptr;
      if (!role) throw ConfigError("unknown key '" + key + "'");
      if (dot == std::string::npos) {
        if (value != "scripted" && value != "model") {
          throw ConfigError("key '" + key + "': expected scripted or model");
        }
        role->backend = value;
      } else {
        set_role_key(*role, key, key.substr(dot + 1), value, base_dir);
      }
    }
  }
  cfg.run = cfg.run.normalized();
  return cfg;
}

ConfigFile load_config(const std::filesystem::path& path) {
  if (!std::filesystem::is_regular_file(path)) {
    throw ConfigError("config file not found: " + path.string());
  }
  return parse_config(read_text_file(path), path.parent_path());
}

std::string config_text(const ConfigFile& cfg) {
  const RunConfig r = cfg.run.normalized();
  std::ostringstream out;
  out << "iterations = " << r.iterations << "\n"
      << "batch_size = " << r.batch_size << "\n"
      << "group_size = " << r.group_size << "\n"
      << "replay_ratio = " << real_text(r.replay_ratio) << "\n"
      << "n_grad = " << r.n_grad << "\n"
      << "n_evict = " << r.n_evict << "\n"
      << "reflection_mode = "
      << (r.reflection_mode == ReflectionStyle::batched ? "batched" : "per_trace") << "\n"
      << "primitives = " << describe(r.primitives) << "\n"
      << "rollout_budget = " << r.rollout_budget << "\n"
      << "seed = " << r.seed << "\n"
      << "max_edits = " << r.max_edits << "\n"
      << "learned_section = " << r.learned_section << "\n";
  if (!r.temperatures.empty()) {
    out << "agent.temperatures = ";
    for (std::size_t i = 0; i < r.temperatures.size(); ++i) {
      out << (i ? ", " : "") << real_text(r.temperatures[i]);
    }
    out << "\n";
  }
  const std::pair<const char*, const RoleConfig*> roles[] = {
      {"agent", &cfg.agent},
      {"reflector", &cfg.reflector},
      {"mutator", &cfg.mutator},
      {"state_updater", &cfg.state_updater}};
  for (const auto& [name, role] : roles) {
    out << name << " = " << role->backend << "\n";
    if (role->backend != "model") continue;
    const ModelEndpoint& e = role->endpoint;
    out << name << ".provider = " << to_string(e.provider) << "\n"
        << name << ".base_url = " << e.base_url << "\n"
        << name << ".model = " << e.model_name << "\n"
        << name << ".api_key_env = " << e.api_key_env << "\n"
        << name << ".temperature = " << real_text(e.temperature) << "\n"
        << name << ".max_retries = " << e.max_retries << "\n";
    if (!role->prompt.empty()) out << name << ".prompt = " << role->prompt.filename().string() << "\n";
  }
  return out.str();
}

namespace {

std::shared_ptr<const ModelClient> make_client(const RoleConfig& role, const char* name,
                                               const TransportFactory& transport) {
  if (!transport) {
    throw ConfigError(std::string(name) + " = model, but no network transport is available");
  }
  if (role.endpoint.base_url.empty() || role.endpoint.model_name.empty()) {
    throw ConfigError(std::string(name) + " = model needs " + name + ".base_url and " + name +
                      ".model");
  }
  ClientOptions options;
  options.max_in_flight = role.max_in_flight;
  return std::make_shared<ModelClient>(role.endpoint, transport(), std::move(options));
}

std::string prompt_for(const RoleConfig& role, Role r) {
  return role.prompt.empty() ? std::string(default_prompt(r)) : read_text_file(role.prompt);
}

}  // namespace

BackendSet::BackendSet(const ConfigFile& cfg, std::span<const TaskSpec> tasks,
                       const TransportFactory& transport) {
  evaluator_ = std::make_unique<ExactMatchEvaluator>();
  if (cfg.agent.backend == "model") {
    agent_ = std::make_unique<ModelAgent>(make_client(cfg.agent, "agent", transport),
                                          prompt_for(cfg.agent, Role::agent));
  } else {
    agent_ = std::make_unique<RuleWorldAgent>();
  }
  if (cfg.reflector.backend == "model") {
    reflector_ = std::make_unique<ModelReflector>(
        make_client(cfg.reflector, "reflector", transport),
        prompt_for(cfg.reflector, Role::reflector));
  } else {
    reflector_ = std::make_unique<RuleWorldReflector>(tasks);
  }
  if (cfg.mutator.backend == "model") {
    mutator_ = std::make_unique<ModelMutator>(make_client(cfg.mutator, "mutator", transport),
                                              cfg.run.max_edits,
                                              prompt_for(cfg.mutator, Role::mutator));
  } else {
    mutator_ = std::make_unique<MajorityVoteMutator>(cfg.run.learned_section);
  }
  if (cfg.state_updater.backend == "model") {
    state_updater_ = std::make_unique<ModelStateUpdater>(
        make_client(cfg.state_updater, "state_updater", transport),
        prompt_for(cfg.state_updater, Role::state_updater));
  } else {
    state_updater_ = std::make_unique<ScriptedStateUpdater>();
  }
}

Backends BackendSet::view() const {
  return {agent_.get(), evaluator_.get(), reflector_.get(), mutator_.get(),
          state_updater_.get()};
}

}  // namespace ctxopt
