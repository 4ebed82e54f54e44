// Copyright 2026 The mixplan Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <tuple>
#include <vector>

namespace mixplan {

enum class TraceOp {
  Isend,
  Irecv,
  ReduceScatter,
  AllGather,
  LocalReduce,
  ExpertCompute,
  Route,
};

enum class Lane { Intra, Inter, Compute };

std::string_view to_string(TraceOp op);
std::string_view to_string(Lane lane);
TraceOp parse_trace_op(std::string_view s);
Lane parse_lane(std::string_view s);

/// Barrier groups of the MoE block, in execution order.
namespace stage {
inline constexpr int kRoute = 0;
inline constexpr int kDispatchA2A = 1;
inline constexpr int kDispatchAG = 2;
inline constexpr int kExpert = 3;
inline constexpr int kCombineRS = 4;
inline constexpr int kCombineA2A = 5;
inline constexpr int kWeighting = 6;
inline constexpr int kFinal = 7;
}  // namespace stage

struct TraceEvent {
  std::int64_t id = 0;
  int rank = 0;
  TraceOp op = TraceOp::Isend;
  std::vector<int> peer_or_group;  // peer for send/recv, members otherwise
  double bytes = 0.0;
  int round = 0;
  std::vector<std::int64_t> deps;
  Lane lane = Lane::Compute;
  int stage = 0;
  std::int64_t collective = -1;  // shared by all members of one collective call
  double work = 0.0;             // element-ops, compute events only

  bool operator==(const TraceEvent&) const = default;
};

struct Trace {
  std::vector<TraceEvent> events;

  bool operator==(const Trace&) const = default;
};

/// Appends events with consecutive ids and per (rank, stage, op) round
/// counters.
class TraceBuilder {
 public:
  explicit TraceBuilder(Trace& trace) : trace_(trace) {}

  std::int64_t add(int rank, TraceOp op, Lane lane, int stage, std::vector<int> peer_or_group,
                   double bytes, std::vector<std::int64_t> deps, std::int64_t collective = -1,
                   double work = 0.0);

  std::int64_t new_collective() { return next_collective_++; }

  const Trace& trace() const { return trace_; }

 private:
  Trace& trace_;
  std::map<std::tuple<int, int, TraceOp>, int> rounds_;
  std::int64_t next_collective_ = 0;
};

inline constexpr std::string_view kTraceCsvHeader =
    "rank,op,peer_or_group,bytes,round,dep_ids,id,lane,stage,collective,work";

std::string trace_to_csv(const Trace& trace);

/// Throws ParseError with the offending line number.
Trace parse_trace_csv(const std::string& text);

/// Fails when ids are not consecutive, dependencies point forward, or a
/// collective's members disagree on op or group.
void check_trace(const Trace& trace);

}  // namespace mixplan
