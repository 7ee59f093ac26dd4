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

// Model-backed implementations of the four roles. Each renders a prompt
// template, calls the client and parses the reply; an unparseable reply is
// re-requested up to kParseRetries times with the parse error attached, then
// surfaces as MalformedModelOutput.

#ifndef CTXOPT_MODEL_BACKENDS_HPP_
#define CTXOPT_MODEL_BACKENDS_HPP_

#include <memory>
#include <string>
#include <string_view>

#include "ctxopt/execution.hpp"
#include "ctxopt/model_client.hpp"
#include "ctxopt/mutation.hpp"
#include "ctxopt/optimizer_state.hpp"
#include "ctxopt/reflection.hpp"

namespace ctxopt {

inline constexpr int kParseRetries = 2;

enum class Role { agent, reflector, mutator, state_updater };
std::string_view default_prompt(Role role);

// Prompt renderings, shared with tests.
std::string render_trace(const Trajectory& trajectory, const Outcome* outcome);
std::string render_diagnostics(std::span<const Diagnostic> diagnostics);

class ModelAgent : public AgentBackend {
 public:
  explicit ModelAgent(std::shared_ptr<const ModelClient> client,
                      std::string prompt = std::string(default_prompt(Role::agent)));
  Trajectory run(const TaskSpec& task, std::string_view context, bool annotated,
                 const RolloutContext& ctx) const override;

 private:
  std::shared_ptr<const ModelClient> client_;
  std::string prompt_;
};

class ModelReflector : public ReflectorBackend {
 public:
  explicit ModelReflector(std::shared_ptr<const ModelClient> client,
                          std::string prompt = std::string(default_prompt(Role::reflector)));
  Diagnostic reflect(const ReflectionRequest& request) const override;

 private:
  std::shared_ptr<const ModelClient> client_;
  std::string prompt_;
};

class ModelMutator : public MutatorBackend {
 public:
  ModelMutator(std::shared_ptr<const ModelClient> client, std::size_t max_edits,
               std::string prompt = std::string(default_prompt(Role::mutator)));
  MutationProposal propose(const Playbook& playbook, std::span<const Diagnostic> diagnostics,
                           const StateDoc* state) const override;

 private:
  std::shared_ptr<const ModelClient> client_;
  std::size_t max_edits_;
  std::string prompt_;
};

class ModelStateUpdater : public StateUpdaterBackend {
 public:
  explicit ModelStateUpdater(
      std::shared_ptr<const ModelClient> client,
      std::string prompt = std::string(default_prompt(Role::state_updater)));
  StateRevision revise(const StateDoc& state, std::span<const Diagnostic> diagnostics,
                       const Playbook& old_playbook,
                       const Playbook& new_playbook) const override;

 private:
  std::shared_ptr<const ModelClient> client_;
  std::string prompt_;
};

}  // namespace ctxopt

#endif  // CTXOPT_MODEL_BACKENDS_HPP_
