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

// Solve matrices and the stability statistics derived from them.
//
// Rates are integer counts divided by the task count, and differences of
// rates are differences of counts divided by the task count, so every value
// here is reproducible bit for bit by any implementation that follows the
// same definitions. compute_series is the OpenMP kernel; namespace
// `reference` holds the direct serial definitions it is tested against.

#ifndef CTXOPT_METRICS_HPP_
#define CTXOPT_METRICS_HPP_

#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

namespace ctxopt {

class SolveMatrix {
 public:
  SolveMatrix() = default;
  SolveMatrix(std::size_t tasks, std::size_t checkpoints)
      : tasks_(tasks), checkpoints_(checkpoints), cells_(tasks * checkpoints, 0) {}
  // rows[task][checkpoint]; throws std::invalid_argument if ragged.
  static SolveMatrix from_rows(const std::vector<std::vector<bool>>& rows);

  std::size_t tasks() const { return tasks_; }
  std::size_t checkpoints() const { return checkpoints_; }
  bool solved(std::size_t task, std::size_t t) const { return cells_[task * checkpoints_ + t] != 0; }
  void set(std::size_t task, std::size_t t, bool v) { cells_[task * checkpoints_ + t] = v ? 1 : 0; }
  // Appends a checkpoint column.
  void push_checkpoint(const std::vector<bool>& column);

  friend bool operator==(const SolveMatrix&, const SolveMatrix&) = default;

 private:
  std::size_t tasks_ = 0;
  std::size_t checkpoints_ = 0;
  std::vector<std::uint8_t> cells_;  // task-major
};

// Trailing window length in checkpoints; kAllTime gives the envelope.
using Window = std::size_t;
inline constexpr Window kAllTime = std::numeric_limits<std::size_t>::max();

// All rate functions throw std::out_of_range for t >= checkpoints and return
// 0 for a matrix without tasks.
double current_rate(const SolveMatrix& m, std::size_t t);
double recently_solved_rate(const SolveMatrix& m, std::size_t t, Window w);
double envelope(const SolveMatrix& m, std::size_t t);

struct Instability {
  double active = 0.0;  // recently solved, not solved now
  double stale = 0.0;   // solved before the window, not since
};
Instability instability_decomposition(const SolveMatrix& m, std::size_t t, Window w);

struct SummaryStats {
  std::optional<std::size_t> first_all_solved;
  double max_rate = 0.0;
  double mean_active_instability = 0.0;
  double pct_relearned = 1.0;  // vacuously 1 without unlearn events
  std::size_t unlearn_events = 0;
  std::size_t relearned_events = 0;
  friend bool operator==(const SummaryStats&, const SummaryStats&) = default;
};
SummaryStats summary_stats(const SolveMatrix& m, Window w = 5);

struct SeriesPoint {
  std::size_t checkpoint = 0;
  double current = 0.0;
  double recent_w5 = 0.0;
  double recent_w10 = 0.0;
  double envelope = 0.0;
  double active_w5 = 0.0;
  double stale_w5 = 0.0;
  double active_w10 = 0.0;
  double stale_w10 = 0.0;
  friend bool operator==(const SeriesPoint&, const SeriesPoint&) = default;
};

// Per-checkpoint series, parallel over tasks.
std::vector<SeriesPoint> compute_series(const SolveMatrix& m);

void to_json(nlohmann::json& j, const SeriesPoint& p);
void to_json(nlohmann::json& j, const SummaryStats& s);

// Plain-text table: one row per checkpoint and a summary row.
std::string format_table(const std::vector<SeriesPoint>& series, const SummaryStats& summary);

namespace reference {
std::vector<SeriesPoint> compute_series(const SolveMatrix& m);
SummaryStats summary_stats(const SolveMatrix& m, Window w = 5);
}  // namespace reference

}  // namespace ctxopt

#endif  // CTXOPT_METRICS_HPP_
