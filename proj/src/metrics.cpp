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

#include "ctxopt/metrics.hpp"

#include <algorithm>
#include <cstdio>
#include <stdexcept>

namespace ctxopt {

SolveMatrix SolveMatrix::from_rows(const std::vector<std::vector<bool>>& rows) {
  const std::size_t cols = rows.empty() ? 0 : rows.front().size();
  SolveMatrix m(rows.size(), cols);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].size() != cols) throw std::invalid_argument("ragged solve matrix");
    for (std::size_t t = 0; t < cols; ++t) m.set(i, t, rows[i][t]);
  }
  return m;
}

void SolveMatrix::push_checkpoint(const std::vector<bool>& column) {
  if (checkpoints_ == 0 && tasks_ == 0) tasks_ = column.size();
  if (column.size() != tasks_) throw std::invalid_argument("column size mismatch");
  std::vector<std::uint8_t> cells(tasks_ * (checkpoints_ + 1));
  for (std::size_t i = 0; i < tasks_; ++i) {
    std::copy_n(cells_.begin() + static_cast<std::ptrdiff_t>(i * checkpoints_), checkpoints_,
                cells.begin() + static_cast<std::ptrdiff_t>(i * (checkpoints_ + 1)));
    cells[i * (checkpoints_ + 1) + checkpoints_] = column[i] ? 1 : 0;
  }
  cells_ = std::move(cells);
  ++checkpoints_;
}

namespace {

void check_args(const SolveMatrix& m, std::size_t t, Window w) {
  if (t >= m.checkpoints()) throw std::out_of_range("checkpoint out of range");
  if (w == 0) throw std::invalid_argument("window must be positive");
}

double ratio(std::int64_t count, std::size_t n) {
  return n == 0 ? 0.0 : static_cast<double>(count) / static_cast<double>(n);
}

// Per-checkpoint counts: solved now, solved within window a, within window b,
// solved at any point so far. Layout [t * 4 + k].
std::vector<std::int64_t> window_counts(const SolveMatrix& m, Window a, Window b) {
  const std::size_t T = m.checkpoints();
  const auto n = static_cast<std::int64_t>(m.tasks());
  std::vector<std::int64_t> counts(4 * T, 0);
  std::int64_t* c = counts.data();
  const std::size_t len = counts.size();
#pragma omp parallel for schedule(static) reduction(+ : c[:len])
  for (std::int64_t i = 0; i < n; ++i) {
    std::size_t last = 0;
    bool seen = false;
    for (std::size_t t = 0; t < T; ++t) {
      if (m.solved(static_cast<std::size_t>(i), t)) {
        last = t;
        seen = true;
        c[t * 4] += 1;
      }
      if (seen) {
        c[t * 4 + 1] += (t - last < a) ? 1 : 0;
        c[t * 4 + 2] += (t - last < b) ? 1 : 0;
        c[t * 4 + 3] += 1;
      }
    }
  }
  return counts;
}

std::int64_t count_current(const SolveMatrix& m, std::size_t t) {
  std::int64_t c = 0;
  for (std::size_t i = 0; i < m.tasks(); ++i) c += m.solved(i, t);
  return c;
}

std::int64_t count_recent(const SolveMatrix& m, std::size_t t, Window w) {
  const std::size_t start = (w == kAllTime || w > t) ? 0 : t - w + 1;
  std::int64_t c = 0;
  for (std::size_t i = 0; i < m.tasks(); ++i) {
    for (std::size_t s = start; s <= t; ++s) {
      if (m.solved(i, s)) {
        ++c;
        break;
      }
    }
  }
  return c;
}

}  // namespace

double current_rate(const SolveMatrix& m, std::size_t t) {
  check_args(m, t, 1);
  return ratio(count_current(m, t), m.tasks());
}

double recently_solved_rate(const SolveMatrix& m, std::size_t t, Window w) {
  check_args(m, t, w);
  return ratio(count_recent(m, t, w), m.tasks());
}

double envelope(const SolveMatrix& m, std::size_t t) {
  check_args(m, t, 1);
  return ratio(count_recent(m, t, kAllTime), m.tasks());
}

Instability instability_decomposition(const SolveMatrix& m, std::size_t t, Window w) {
  check_args(m, t, w);
  const std::int64_t c = count_current(m, t);
  const std::int64_t r = count_recent(m, t, w);
  const std::int64_t e = count_recent(m, t, kAllTime);
  return {ratio(r - c, m.tasks()), ratio(e - r, m.tasks())};
}

namespace {

SeriesPoint point_from_counts(std::size_t t, std::int64_t c, std::int64_t r5,
                              std::int64_t r10, std::int64_t e, std::size_t n) {
  SeriesPoint p;
  p.checkpoint = t;
  p.current = ratio(c, n);
  p.recent_w5 = ratio(r5, n);
  p.recent_w10 = ratio(r10, n);
  p.envelope = ratio(e, n);
  p.active_w5 = ratio(r5 - c, n);
  p.stale_w5 = ratio(e - r5, n);
  p.active_w10 = ratio(r10 - c, n);
  p.stale_w10 = ratio(e - r10, n);
  return p;
}

SummaryStats summary_from(const SolveMatrix& m, const std::vector<std::int64_t>& current,
                          const std::vector<std::int64_t>& recent,
                          const std::vector<std::int64_t>& env, std::size_t unlearns,
                          std::size_t relearned) {
  SummaryStats s;
  const std::size_t T = m.checkpoints();
  const std::size_t n = m.tasks();
  std::int64_t active_total = 0;
  for (std::size_t t = 0; t < T; ++t) {
    if (!s.first_all_solved && env[t] == static_cast<std::int64_t>(n)) s.first_all_solved = t;
    s.max_rate = std::max(s.max_rate, ratio(current[t], n));
    active_total += recent[t] - current[t];
  }
  if (T > 0 && n > 0) {
    s.mean_active_instability =
        static_cast<double>(active_total) / (static_cast<double>(n) * static_cast<double>(T));
  }
  s.unlearn_events = unlearns;
  s.relearned_events = relearned;
  s.pct_relearned =
      unlearns == 0 ? 1.0 : static_cast<double>(relearned) / static_cast<double>(unlearns);
  return s;
}

}  // namespace

std::vector<SeriesPoint> compute_series(const SolveMatrix& m) {
  const auto counts = window_counts(m, 5, 10);
  std::vector<SeriesPoint> series(m.checkpoints());
  for (std::size_t t = 0; t < m.checkpoints(); ++t) {
    series[t] = point_from_counts(t, counts[t * 4], counts[t * 4 + 1], counts[t * 4 + 2],
                                  counts[t * 4 + 3], m.tasks());
  }
  return series;
}

SummaryStats summary_stats(const SolveMatrix& m, Window w) {
  if (w == 0) throw std::invalid_argument("window must be positive");
  const std::size_t T = m.checkpoints();
  const auto counts = window_counts(m, w, w);
  std::vector<std::int64_t> current(T), recent(T), env(T);
  for (std::size_t t = 0; t < T; ++t) {
    current[t] = counts[t * 4];
    recent[t] = counts[t * 4 + 1];
    env[t] = counts[t * 4 + 3];
  }
  std::int64_t unlearns = 0;
  std::int64_t relearned = 0;
  const auto n = static_cast<std::int64_t>(m.tasks());
#pragma omp parallel for schedule(static) reduction(+ : unlearns, relearned)
  for (std::int64_t i = 0; i < n; ++i) {
    // Scanning backwards, `later` says whether any checkpoint after t + 1
    // is solved.
    bool later = false;
    for (std::size_t t = T; t-- > 1;) {
      const bool before = m.solved(static_cast<std::size_t>(i), t - 1);
      const bool now = m.solved(static_cast<std::size_t>(i), t);
      if (before && !now) {
        ++unlearns;
        relearned += later ? 1 : 0;
      }
      later |= now;
    }
  }
  return summary_from(m, current, recent, env, static_cast<std::size_t>(unlearns),
                      static_cast<std::size_t>(relearned));
}

namespace reference {

std::vector<SeriesPoint> compute_series(const SolveMatrix& m) {
  std::vector<SeriesPoint> series;
  for (std::size_t t = 0; t < m.checkpoints(); ++t) {
    series.push_back(point_from_counts(t, count_current(m, t), count_recent(m, t, 5),
                                       count_recent(m, t, 10),
                                       count_recent(m, t, kAllTime), m.tasks()));
  }
  return series;
}

SummaryStats summary_stats(const SolveMatrix& m, Window w) {
  if (w == 0) throw std::invalid_argument("window must be positive");
  const std::size_t T = m.checkpoints();
  std::vector<std::int64_t> current(T), recent(T), env(T);
  for (std::size_t t = 0; t < T; ++t) {
    current[t] = count_current(m, t);
    recent[t] = count_recent(m, t, w);
    env[t] = count_recent(m, t, kAllTime);
  }
  std::size_t unlearns = 0;
  std::size_t relearned = 0;
  for (std::size_t i = 0; i < m.tasks(); ++i) {
    for (std::size_t t = 0; t + 1 < T; ++t) {
      if (!m.solved(i, t) || m.solved(i, t + 1)) continue;
      ++unlearns;
      for (std::size_t s = t + 2; s < T; ++s) {
        if (m.solved(i, s)) {
          ++relearned;
          break;
        }
      }
    }
  }
  return summary_from(m, current, recent, env, unlearns, relearned);
}

}  // namespace reference

void to_json(nlohmann::json& j, const SeriesPoint& p) {
  j = {{"checkpoint", p.checkpoint}, {"current", p.current},
       {"recent_w5", p.recent_w5},   {"recent_w10", p.recent_w10},
       {"envelope", p.envelope},     {"active_w5", p.active_w5},
       {"stale_w5", p.stale_w5},     {"active_w10", p.active_w10},
       {"stale_w10", p.stale_w10}};
}

void to_json(nlohmann::json& j, const SummaryStats& s) {
  j = {{"first_all_solved", s.first_all_solved ? nlohmann::json(*s.first_all_solved)
                                               : nlohmann::json(nullptr)},
       {"max_rate", s.max_rate},
       {"mean_active_instability", s.mean_active_instability},
       {"pct_relearned", s.pct_relearned},
       {"unlearn_events", s.unlearn_events},
       {"relearned_events", s.relearned_events}};
}

std::string format_table(const std::vector<SeriesPoint>& series,
                         const SummaryStats& summary) {
  std::string out;
  char line[160];
  std::snprintf(line, sizeof line, "%-5s %8s %8s %8s %8s %8s %8s\n", "ckpt", "current",
                "rec_w5", "rec_w10", "envelope", "act_w5", "stale_w5");
  out += line;
  for (const SeriesPoint& p : series) {
    std::snprintf(line, sizeof line, "%-5zu %8.3f %8.3f %8.3f %8.3f %8.3f %8.3f\n",
                  p.checkpoint, p.current, p.recent_w5, p.recent_w10, p.envelope,
                  p.active_w5, p.stale_w5);
    out += line;
  }
  const std::string first =
      summary.first_all_solved ? std::to_string(*summary.first_all_solved) : "-";
  std::snprintf(line, sizeof line,
                "summary first_all_solved=%s max_rate=%.3f mean_active=%.3f "
                "pct_relearned=%.3f\n",
                first.c_str(), summary.max_rate, summary.mean_active_instability,
                summary.pct_relearned);
  out += line;
  return out;
}

}  // namespace ctxopt
