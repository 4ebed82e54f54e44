// Copyright 2026 The mixplan Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <json.hpp>
#include <string>
#include <string_view>
#include <vector>

#include "mixplan/config.hpp"
#include "mixplan/trace.hpp"

namespace mixplan {

struct ScheduledEvent {
  std::int64_t id = 0;
  int rank = 0;
  Lane lane = Lane::Compute;
  TraceOp op = TraceOp::Isend;
  double start = 0.0;
  double end = 0.0;
  double bytes = 0.0;
};

struct LaneUsage {
  int rank = 0;
  Lane lane = Lane::Compute;
  double busy = 0.0;         // seconds
  double utilization = 0.0;  // busy / makespan
};

struct Timeline {
  std::vector<ScheduledEvent> events;  // trace order
  std::vector<LaneUsage> lanes;        // sorted by (rank, lane)
  double makespan = 0.0;
  std::uint64_t fingerprint = 0;  // of the scheduled trace, ignoring deps
};

struct ScheduleOptions {
  /// Events of a stage wait for every event of the preceding stage: the
  /// synchronous baseline.
  bool stage_barriers = false;
};

/// List scheduling on three lanes per rank. The ready unit (an event, or all
/// members of one collective) with the earliest ready time goes first, ties
/// broken by the smallest event id, and starts once its lanes are free.
/// Durations: alpha + bytes / beta of the lane's link class for transfers,
/// zero for receives and single-member collectives, compute_coeff * work for
/// compute events. Members of a collective share start and end.
/// Throws ScheduleError on dependency cycles or unknown dependency ids.
Timeline schedule(const Trace& trace, const ClusterConfig& cluster,
                  const CalibrationCoefficients& calib, const ScheduleOptions& options = {});

Timeline schedule_synchronous(const Trace& trace, const ClusterConfig& cluster,
                              const CalibrationCoefficients& calib);

std::uint64_t trace_fingerprint(const Trace& trace);

struct OverlapMetrics {
  double fused_makespan = 0.0;
  double sync_makespan = 0.0;
  double savings = 0.0;        // sync - fused, seconds
  double savings_ratio = 0.0;  // savings / sync
  double lower_bound = 0.0;    // busiest intra or inter lane total
  bool fused_le_sync = true;
  bool fused_ge_lower_bound = true;
};

/// Throws ScheduleError when the timelines come from different traces.
OverlapMetrics overlap_metrics(const Timeline& fused, const Timeline& sync);

nlohmann::json to_json(const OverlapMetrics& m);

enum class GanttFormat { Csv, Svg, Json };

GanttFormat parse_gantt_format(std::string_view s);
std::string_view extension(GanttFormat f);

/// Columns rank,lane,op,start_s,end_s,bytes.
std::string timeline_to_csv(const Timeline& t);
/// One row per lane, one bar per event.
std::string timeline_to_svg(const Timeline& t);
nlohmann::json timeline_to_json(const Timeline& t);
std::string render_gantt(const Timeline& t, GanttFormat format);

void export_gantt(const Timeline& t, const std::filesystem::path& path, GanttFormat format);

}  // namespace mixplan
