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

#include "ctxopt/replay.hpp"

#include <cmath>

#include "ctxopt/errors.hpp"

namespace ctxopt {

std::string_view to_string(BufferEventKind kind) {
  switch (kind) {
    case BufferEventKind::added: return "added";
    case BufferEventKind::graduated: return "graduated";
    case BufferEventKind::evicted: return "evicted";
  }
  return "added";
}

ReplayBuffer::ReplayBuffer(int n_grad, int n_evict) : n_grad_(n_grad), n_evict_(n_evict) {
  if (n_grad < 1 || n_evict < 1) {
    throw ConfigError("n_grad and n_evict must be positive");
  }
}

std::vector<BufferEvent> ReplayBuffer::record_outcome(const std::string& task_id,
                                                      bool passed, int iteration) {
  std::vector<BufferEvent> events;
  auto it = records_.find(task_id);
  if (passed) {
    if (it == records_.end()) return events;
    it->second.consecutive_fails = 0;
    if (++it->second.consecutive_passes >= n_grad_) {
      records_.erase(it);
      events.push_back({task_id, BufferEventKind::graduated, iteration});
    }
    return events;
  }
  if (evicted_.count(task_id)) return events;
  if (it == records_.end()) {
    it = records_.emplace(task_id, ReplayRecord{0, 0, iteration}).first;
    events.push_back({task_id, BufferEventKind::added, iteration});
  }
  it->second.consecutive_passes = 0;
  if (++it->second.consecutive_fails >= n_evict_) {
    records_.erase(it);
    evicted_.insert(task_id);
    events.push_back({task_id, BufferEventKind::evicted, iteration});
  }
  return events;
}

void to_json(nlohmann::json& j, const ReplayBuffer& b) {
  nlohmann::json records = nlohmann::json::object();
  for (const auto& [id, r] : b.records_) {
    records[id] = {{"consecutive_passes", r.consecutive_passes},
                   {"consecutive_fails", r.consecutive_fails},
                   {"added_iteration", r.added_iteration}};
  }
  j = {{"n_grad", b.n_grad_},
       {"n_evict", b.n_evict_},
       {"records", std::move(records)},
       {"evicted", b.evicted_}};
}

void from_json(const nlohmann::json& j, ReplayBuffer& b) {
  b = ReplayBuffer(j.at("n_grad").get<int>(), j.at("n_evict").get<int>());
  for (const auto& [id, r] : j.at("records").items()) {
    b.records_[id] = {r.at("consecutive_passes").get<int>(),
                      r.at("consecutive_fails").get<int>(),
                      r.at("added_iteration").get<int>()};
  }
  b.evicted_ = j.at("evicted").get<std::set<std::string>>();
}

void to_json(nlohmann::json& j, const BufferEvent& e) {
  j = {{"task_id", e.task_id}, {"kind", to_string(e.kind)}, {"iteration", e.iteration}};
}

void from_json(const nlohmann::json& j, BufferEvent& e) {
  e.task_id = j.at("task_id").get<std::string>();
  const auto kind = j.at("kind").get<std::string>();
  e.kind = kind == "graduated" ? BufferEventKind::graduated
           : kind == "evicted" ? BufferEventKind::evicted
                               : BufferEventKind::added;
  e.iteration = j.at("iteration").get<int>();
}

std::size_t replay_count(std::size_t size, double rho) {
  const double n = std::floor(rho * static_cast<double>(size) + 1e-9);
  return std::min(size, n <= 0.0 ? std::size_t{0} : static_cast<std::size_t>(n));
}

namespace {

// Partial Fisher-Yates: moves `n` uniformly chosen items to the front.
template <typename T>
void draw_front(std::vector<T>& items, std::size_t n, Rng& rng) {
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t j = i + rng.below(items.size() - i);
    std::swap(items[i], items[j]);
  }
}

}  // namespace

BatchSample sample_batch(std::span<const TaskSpec> pool, const ReplayBuffer& buffer,
                         std::size_t size, double rho, Rng& rng) {
  if (pool.empty()) throw PreconditionViolation("cannot sample from an empty pool");
  if (rho < 0.0 || rho > 1.0) throw PreconditionViolation("replay ratio outside [0, 1]");
  const std::size_t total = std::min(size, pool.size());

  std::vector<std::size_t> members;
  for (std::size_t i = 0; i < pool.size(); ++i) {
    if (buffer.contains(pool[i].task_id)) members.push_back(i);
  }
  BatchSample out;
  std::vector<bool> taken(pool.size(), false);
  const std::size_t want = std::min(replay_count(size, rho), total);
  if (want > 0 && !members.empty()) {
    const std::size_t n = std::min(want, members.size());
    draw_front(members, n, rng);
    for (std::size_t i = 0; i < n; ++i) {
      taken[members[i]] = true;
      out.tasks.push_back(pool[members[i]]);
      out.replayed.push_back(pool[members[i]].task_id);
    }
  }
  std::vector<std::size_t> fresh;
  for (std::size_t i = 0; i < pool.size(); ++i) {
    if (!taken[i]) fresh.push_back(i);
  }
  const std::size_t n = total - out.tasks.size();
  draw_front(fresh, n, rng);
  for (std::size_t i = 0; i < n; ++i) out.tasks.push_back(pool[fresh[i]]);
  return out;
}

}  // namespace ctxopt
