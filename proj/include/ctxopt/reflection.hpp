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

// Backward pass: trajectories and outcomes in, structured diagnostics out.
//
// Two properties are enforced by the types below rather than by checks:
//   * annotated traces reach the reflector as a bare Trajectory, so their
//     outcome cannot be read;
//   * nothing here accepts the optimizer state.

#ifndef CTXOPT_REFLECTION_HPP_
#define CTXOPT_REFLECTION_HPP_

#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ctxopt/execution.hpp"
#include "ctxopt/playbook.hpp"
#include "json.hpp"

namespace ctxopt {

enum class Attribution { actionable_gap, execution_variance, intractable };
enum class ReflectionMode { single, contrastive, dual, batched };

std::string_view to_string(Attribution a);
std::string_view to_string(ReflectionMode m);
std::optional<Attribution> parse_attribution(std::string_view text);
std::optional<ReflectionMode> parse_reflection_mode(std::string_view text);

struct Diagnostic {
  Attribution attribution = Attribution::actionable_gap;
  std::string root_cause;
  std::string coverage_gap;
  std::vector<EntryId> cited_entry_ids;
  std::string source_task_id;  // comma-joined for batched diagnostics
  ReflectionMode mode = ReflectionMode::single;
  friend bool operator==(const Diagnostic&, const Diagnostic&) = default;
};

void to_json(nlohmann::json& j, const Diagnostic& d);
void from_json(const nlohmann::json& j, Diagnostic& d);

// Everything a reflector may look at.
struct ReflectionRequest {
  ReflectionMode mode = ReflectionMode::single;
  std::span<const Rollout> traces;       // standard traces; failures for all but batched
  const Rollout* positive = nullptr;     // contrastive mode only
  const Trajectory* annotation = nullptr;
  const Playbook* playbook = nullptr;
  bool structured = true;  // false when auxiliary heads are disabled
};

class ReflectorBackend {
 public:
  virtual ~ReflectorBackend() = default;
  virtual Diagnostic reflect(const ReflectionRequest& request) const = 0;
};

struct ReflectOptions {
  bool structured = true;
};

// Each op validates its precondition (PreconditionViolation), calls the
// backend, then stamps mode and source task and drops cited ids the playbook
// does not hold.

Diagnostic reflect_single(const ReflectorBackend& backend, const Rollout& failed,
                          const Playbook& playbook, const ReflectOptions& options = {});

// The only entry point that hands a passing trace to the reflector.
Diagnostic reflect_contrastive(const ReflectorBackend& backend, const Rollout& positive,
                               const Rollout& negative, const Playbook& playbook,
                               const Trajectory* annotation = nullptr,
                               const ReflectOptions& options = {});

Diagnostic reflect_dual(const ReflectorBackend& backend, const Rollout& standard,
                        const Trajectory& annotated, const Playbook& playbook,
                        const ReflectOptions& options = {});

Diagnostic reflect_batched(const ReflectorBackend& backend,
                           std::span<const Rollout> traces, const Playbook& playbook,
                           const ReflectOptions& options = {});

// Scripted reflector for RuleWorld. It knows the task rules, so its
// diagnoses are exact:
//   missing required token or forbidden token in use -> actionable_gap
//   covered task that failed anyway                  -> execution_variance
//   task that requires and forbids the same token    -> intractable
// With structured == false it emits free text only: attribution falls back to
// actionable_gap and, for a failure on a covered task, the single-trace mode
// blames the entry the agent deviated from.
class RuleWorldReflector : public ReflectorBackend {
 public:
  explicit RuleWorldReflector(std::span<const TaskSpec> tasks);
  Diagnostic reflect(const ReflectionRequest& request) const override;

 private:
  const RuleSpec& rules_for(const std::string& task_id) const;
  std::map<std::string, RuleSpec> rules_;
};

}  // namespace ctxopt

#endif  // CTXOPT_REFLECTION_HPP_
