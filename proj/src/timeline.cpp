// Copyright 2026 The mixplan Authors.
// SPDX-License-Identifier: Apache-2.0

#include "mixplan/timeline.hpp"

#include <algorithm>
#include <cstring>
#include <limits>
#include <map>
#include <set>
#include <unordered_map>

#include "mixplan/error.hpp"

namespace mixplan {

namespace {

constexpr std::uint64_t kFnvOffset = 1469598103934665603ULL;
constexpr std::uint64_t kFnvPrime = 1099511628211ULL;

void mix(std::uint64_t& h, const void* data, std::size_t n) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= kFnvPrime;
  }
}

template <typename T>
void mix_value(std::uint64_t& h, const T& v) {
  mix(h, &v, sizeof v);
}

bool is_compute(TraceOp op) {
  return op == TraceOp::Route || op == TraceOp::ExpertCompute || op == TraceOp::LocalReduce;
}

double duration(const TraceEvent& e, const ClusterConfig& cluster,
                const CalibrationCoefficients& calib) {
  if (is_compute(e.op)) return calib.compute_coeff * e.work;
  if (e.op == TraceOp::Irecv) return 0.0;
  if ((e.op == TraceOp::ReduceScatter || e.op == TraceOp::AllGather) &&
      e.peer_or_group.size() <= 1) {
    return 0.0;
  }
  const LinkClass link =
      effective_link(cluster, calib, e.lane == Lane::Intra ? LinkKind::Intra : LinkKind::Inter);
  return link.alpha + e.bytes / link.beta;
}

using LaneKey = std::pair<int, Lane>;

struct Unit {
  std::vector<std::size_t> members;  // indices into the trace
  std::size_t pending_deps = 0;
  double ready = 0.0;
  std::int64_t min_id = 0;
  int stage = 0;
};

[[noreturn]] void report_cycle(const Trace& trace, const std::vector<bool>& done,
                               const std::unordered_map<std::int64_t, std::size_t>& index) {
  // Walk dependencies among unscheduled events until one repeats.
  std::size_t cur = 0;
  while (cur < done.size() && done[cur]) ++cur;
  std::vector<std::int64_t> path;
  std::map<std::size_t, std::size_t> seen;
  while (!seen.count(cur)) {
    seen[cur] = path.size();
    path.push_back(trace.events[cur].id);
    std::size_t next = cur;
    for (auto d : trace.events[cur].deps) {
      const std::size_t j = index.at(d);
      if (!done[j]) {
        next = j;
        break;
      }
    }
    if (next == cur) break;  // blocked by a collective partner, not a dependency
    cur = next;
  }
  std::string msg = "dependency cycle:";
  const std::size_t from = seen.count(cur) ? seen[cur] : 0;
  for (std::size_t i = from; i < path.size(); ++i) msg += " " + std::to_string(path[i]);
  throw ScheduleError(msg);
}

}  // namespace

std::uint64_t trace_fingerprint(const Trace& trace) {
  std::uint64_t h = kFnvOffset;
  for (const auto& e : trace.events) {
    mix_value(h, e.id);
    mix_value(h, e.rank);
    mix_value(h, e.op);
    for (int g : e.peer_or_group) mix_value(h, g);
    mix_value(h, e.bytes);
    mix_value(h, e.round);
    mix_value(h, e.lane);
    mix_value(h, e.stage);
    mix_value(h, e.collective);
    mix_value(h, e.work);
  }
  return h;
}

Timeline schedule(const Trace& trace, const ClusterConfig& cluster,
                  const CalibrationCoefficients& calib, const ScheduleOptions& options) {
  const std::size_t n = trace.events.size();
  std::unordered_map<std::int64_t, std::size_t> index;
  for (std::size_t i = 0; i < n; ++i) {
    if (!index.emplace(trace.events[i].id, i).second) {
      throw ScheduleError("duplicate event id " + std::to_string(trace.events[i].id));
    }
  }

  // Group collective members into units.
  std::vector<Unit> units;
  std::vector<std::size_t> unit_of(n);
  std::map<std::int64_t, std::size_t> by_collective;
  for (std::size_t i = 0; i < n; ++i) {
    const auto& e = trace.events[i];
    std::size_t u = units.size();
    if (e.collective >= 0) {
      auto [it, fresh] = by_collective.emplace(e.collective, units.size());
      u = it->second;
      if (fresh) units.emplace_back();
    } else {
      units.emplace_back();
    }
    if (units[u].members.empty()) {
      units[u].min_id = e.id;
      units[u].stage = e.stage;
    }
    units[u].members.push_back(i);
    units[u].min_id = std::min(units[u].min_id, e.id);
    unit_of[i] = u;
  }

  // Unit-level dependency edges.
  std::vector<std::vector<std::size_t>> dependents(units.size());
  for (std::size_t u = 0; u < units.size(); ++u) {
    std::set<std::size_t> preds;
    for (std::size_t i : units[u].members) {
      for (auto d : trace.events[i].deps) {
        auto it = index.find(d);
        if (it == index.end()) {
          throw ScheduleError("event " + std::to_string(trace.events[i].id) +
                              " depends on unknown event " + std::to_string(d));
        }
        if (unit_of[it->second] != u) preds.insert(unit_of[it->second]);
      }
    }
    units[u].pending_deps = preds.size();
    for (std::size_t p : preds) dependents[p].push_back(u);
  }

  // Stage barriers: a unit waits for every unit of the nearest earlier stage.
  std::vector<int> stages;
  std::map<int, std::size_t> stage_remaining;
  for (const auto& u : units) ++stage_remaining[u.stage];
  for (const auto& [s, count] : stage_remaining) stages.push_back(s);
  std::map<int, double> stage_end;
  auto previous_stage = [&](int s) {
    auto it = std::lower_bound(stages.begin(), stages.end(), s);
    return it == stages.begin() ? std::numeric_limits<int>::min() : *(it - 1);
  };
  auto barrier_open = [&](const Unit& u, double& ready) {
    if (!options.stage_barriers) return true;
    const int prev = previous_stage(u.stage);
    if (prev == std::numeric_limits<int>::min()) return true;
    if (stage_remaining[prev] != 0) return false;
    ready = std::max(ready, stage_end[prev]);
    return true;
  };

  std::vector<double> dur(n);
  for (std::size_t i = 0; i < n; ++i) dur[i] = duration(trace.events[i], cluster, calib);

  Timeline tl;
  tl.events.resize(n);
  std::map<LaneKey, double> lane_free;
  std::map<LaneKey, double> lane_busy;
  std::vector<bool> done(n, false);
  std::vector<bool> unit_done(units.size(), false);
  std::set<std::pair<double, std::pair<std::int64_t, std::size_t>>> eligible;
  std::vector<std::size_t> waiting;  // deps met, barrier closed
  for (std::size_t u = 0; u < units.size(); ++u) {
    if (units[u].pending_deps == 0) waiting.push_back(u);
  }
  auto admit = [&]() {
    std::vector<std::size_t> still;
    for (std::size_t u : waiting) {
      double ready = units[u].ready;
      if (barrier_open(units[u], ready)) {
        units[u].ready = ready;
        eligible.insert({ready, {units[u].min_id, u}});
      } else {
        still.push_back(u);
      }
    }
    waiting.swap(still);
  };
  admit();

  std::size_t scheduled = 0;
  while (!eligible.empty()) {
    const auto [ready, key] = *eligible.begin();
    eligible.erase(eligible.begin());
    const std::size_t u = key.second;
    const Unit& unit = units[u];

    double span = 0.0;
    double start = ready;
    for (std::size_t i : unit.members) {
      span = std::max(span, dur[i]);
      if (dur[i] > 0.0) {
        start = std::max(start, lane_free[{trace.events[i].rank, trace.events[i].lane}]);
      }
    }
    // Instantaneous events (receives, trivial collectives) do not hold a lane.
    const double end = start + span;
    for (std::size_t i : unit.members) {
      const auto& e = trace.events[i];
      if (span > 0.0) {
        lane_free[{e.rank, e.lane}] = end;
        lane_busy[{e.rank, e.lane}] += span;
      } else {
        lane_busy.emplace(LaneKey{e.rank, e.lane}, 0.0);
      }
      tl.events[i] = ScheduledEvent{e.id, e.rank, e.lane, e.op, start, end, e.bytes};
      done[i] = true;
      ++scheduled;
    }
    unit_done[u] = true;
    tl.makespan = std::max(tl.makespan, end);
    stage_end[unit.stage] = std::max(stage_end[unit.stage], end);
    --stage_remaining[unit.stage];
    for (std::size_t v : dependents[u]) {
      units[v].ready = std::max(units[v].ready, end);
      if (--units[v].pending_deps == 0) waiting.push_back(v);
    }
    admit();
  }
  if (scheduled != n) report_cycle(trace, done, index);

  for (const auto& [key, busy] : lane_busy) {
    tl.lanes.push_back(
        LaneUsage{key.first, key.second, busy, tl.makespan > 0.0 ? busy / tl.makespan : 0.0});
  }
  tl.fingerprint = trace_fingerprint(trace);
  return tl;
}

Timeline schedule_synchronous(const Trace& trace, const ClusterConfig& cluster,
                              const CalibrationCoefficients& calib) {
  ScheduleOptions options;
  options.stage_barriers = true;
  return schedule(trace, cluster, calib, options);
}

OverlapMetrics overlap_metrics(const Timeline& fused, const Timeline& sync) {
  if (fused.fingerprint != sync.fingerprint) {
    throw ScheduleError("overlap_metrics: timelines come from different workloads");
  }
  OverlapMetrics m;
  m.fused_makespan = fused.makespan;
  m.sync_makespan = sync.makespan;
  m.savings = sync.makespan - fused.makespan;
  m.savings_ratio = sync.makespan > 0.0 ? m.savings / sync.makespan : 0.0;
  for (const auto& lane : fused.lanes) {
    if (lane.lane != Lane::Compute) m.lower_bound = std::max(m.lower_bound, lane.busy);
  }
  // Relative slack absorbs summation-order rounding in the lane totals.
  const double eps = 1e-12 * std::max(1.0, m.sync_makespan);
  m.fused_le_sync = m.fused_makespan <= m.sync_makespan + eps;
  m.fused_ge_lower_bound = m.fused_makespan + eps >= m.lower_bound;
  return m;
}

nlohmann::json to_json(const OverlapMetrics& m) {
  return {
      {"fused_makespan_s", m.fused_makespan},
      {"sync_makespan_s", m.sync_makespan},
      {"savings_s", m.savings},
      {"savings_ratio", m.savings_ratio},
      {"lower_bound_s", m.lower_bound},
      {"fused_le_sync", m.fused_le_sync},
      {"fused_ge_lower_bound", m.fused_ge_lower_bound},
  };
}

}  // namespace mixplan
