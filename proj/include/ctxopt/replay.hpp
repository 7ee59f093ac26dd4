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

// Failure replay buffer and batch sampling.

#ifndef CTXOPT_REPLAY_HPP_
#define CTXOPT_REPLAY_HPP_

#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ctxopt/execution.hpp"
#include "ctxopt/rng.hpp"
#include "json.hpp"

namespace ctxopt {

struct ReplayRecord {
  int consecutive_passes = 0;
  int consecutive_fails = 0;
  int added_iteration = 0;
  friend bool operator==(const ReplayRecord&, const ReplayRecord&) = default;
};

enum class BufferEventKind { added, graduated, evicted };
std::string_view to_string(BufferEventKind kind);

struct BufferEvent {
  std::string task_id;
  BufferEventKind kind = BufferEventKind::added;
  int iteration = 0;
  friend bool operator==(const BufferEvent&, const BufferEvent&) = default;
};

class ReplayBuffer {
 public:
  // Throws ConfigError unless both thresholds are positive.
  explicit ReplayBuffer(int n_grad = 2, int n_evict = 3);

  int n_grad() const { return n_grad_; }
  int n_evict() const { return n_evict_; }
  const std::map<std::string, ReplayRecord>& records() const { return records_; }
  // Tasks evicted during this run. They never re-enter the buffer but stay
  // in the fresh pool.
  const std::set<std::string>& evicted() const { return evicted_; }
  bool contains(const std::string& task_id) const { return records_.count(task_id) > 0; }
  std::size_t size() const { return records_.size(); }

  // A failure inserts or extends a record, a pass on a member extends its
  // pass streak; reaching n_grad passes graduates the task and n_evict fails
  // evicts it. Returns the membership changes caused by this outcome.
  std::vector<BufferEvent> record_outcome(const std::string& task_id, bool passed,
                                          int iteration);

  friend bool operator==(const ReplayBuffer&, const ReplayBuffer&) = default;

  friend void to_json(nlohmann::json& j, const ReplayBuffer& b);
  friend void from_json(const nlohmann::json& j, ReplayBuffer& b);

 private:
  int n_grad_;
  int n_evict_;
  std::map<std::string, ReplayRecord> records_;
  std::set<std::string> evicted_;
};

void to_json(nlohmann::json& j, const BufferEvent& e);
void from_json(const nlohmann::json& j, BufferEvent& e);

struct BatchSample {
  std::vector<TaskSpec> tasks;          // replayed tasks first
  std::vector<std::string> replayed;    // ids drawn from the buffer
};

// floor(rho * size) tasks drawn uniformly without replacement from buffer
// members present in the pool, the rest uniformly from the remaining pool.
// Returns min(size, |pool|) distinct tasks. No randomness is consumed for
// the replay draw when it is empty, so rho = 0 samples exactly like a run
// without a buffer. Throws PreconditionViolation on an empty pool.
BatchSample sample_batch(std::span<const TaskSpec> pool, const ReplayBuffer& buffer,
                         std::size_t size, double rho, Rng& rng);

std::size_t replay_count(std::size_t size, double rho);

}  // namespace ctxopt

#endif  // CTXOPT_REPLAY_HPP_
