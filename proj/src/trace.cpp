// Copyright 2026 The mixplan Authors.
// SPDX-License-Identifier: Apache-2.0

#include "mixplan/trace.hpp"

#include <cstdio>
#include <sstream>

#include "mixplan/error.hpp"

namespace mixplan {

std::string_view to_string(TraceOp op) {
  switch (op) {
    case TraceOp::Isend:
      return "isend";
    case TraceOp::Irecv:
      return "irecv";
    case TraceOp::ReduceScatter:
      return "reduce_scatter";
    case TraceOp::AllGather:
      return "all_gather";
    case TraceOp::LocalReduce:
      return "local_reduce";
    case TraceOp::ExpertCompute:
      return "expert_compute";
    case TraceOp::Route:
      return "route";
  }
  return "?";
}

std::string_view to_string(Lane lane) {
  switch (lane) {
    case Lane::Intra:
      return "intra";
    case Lane::Inter:
      return "inter";
    case Lane::Compute:
      return "compute";
  }
  return "?";
}

TraceOp parse_trace_op(std::string_view s) {
  for (TraceOp op : {TraceOp::Isend, TraceOp::Irecv, TraceOp::ReduceScatter, TraceOp::AllGather,
                     TraceOp::LocalReduce, TraceOp::ExpertCompute, TraceOp::Route}) {
    if (s == to_string(op)) return op;
  }
  throw ParseError("unknown trace op '" + std::string(s) + "'");
}

Lane parse_lane(std::string_view s) {
  for (Lane l : {Lane::Intra, Lane::Inter, Lane::Compute}) {
    if (s == to_string(l)) return l;
  }
  throw ParseError("unknown lane '" + std::string(s) + "'");
}

std::int64_t TraceBuilder::add(int rank, TraceOp op, Lane lane, int stage,
                               std::vector<int> peer_or_group, double bytes,
                               std::vector<std::int64_t> deps, std::int64_t collective,
                               double work) {
  TraceEvent e;
  e.id = static_cast<std::int64_t>(trace_.events.size());
  e.rank = rank;
  e.op = op;
  e.lane = lane;
  e.stage = stage;
  e.peer_or_group = std::move(peer_or_group);
  e.bytes = bytes;
  e.deps = std::move(deps);
  e.collective = collective;
  e.work = work;
  e.round = rounds_[{rank, stage, op}]++;
  trace_.events.push_back(std::move(e));
  return trace_.events.back().id;
}

namespace {

std::string num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

template <typename T>
std::string join(const std::vector<T>& xs) {
  std::string out;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (i) out += ';';
    out += std::to_string(xs[i]);
  }
  return out;
}

[[noreturn]] void bad_line(int line_no, const std::string& what) {
  throw ParseError("trace line " + std::to_string(line_no) + ": " + what);
}

std::int64_t to_int(const std::string& s, int line_no, const char* field) {
  std::size_t pos = 0;
  long long v = 0;
  try {
    v = std::stoll(s, &pos);
  } catch (const std::exception&) {
    pos = 0;
  }
  if (s.empty() || pos != s.size()) bad_line(line_no, std::string("bad ") + field + " '" + s + "'");
  return v;
}

double to_double(const std::string& s, int line_no, const char* field) {
  std::size_t pos = 0;
  double v = 0;
  try {
    v = std::stod(s, &pos);
  } catch (const std::exception&) {
    pos = 0;
  }
  if (s.empty() || pos != s.size()) bad_line(line_no, std::string("bad ") + field + " '" + s + "'");
  return v;
}

template <typename T>
std::vector<T> to_list(const std::string& s, int line_no, const char* field) {
  std::vector<T> out;
  if (s.empty()) return out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ';')) {
    out.push_back(static_cast<T>(to_int(item, line_no, field)));
  }
  return out;
}

}  // namespace

std::string trace_to_csv(const Trace& trace) {
  std::string out(kTraceCsvHeader);
  out += '\n';
  for (const auto& e : trace.events) {
    out += std::to_string(e.rank);
    out += ',';
    out += to_string(e.op);
    out += ',';
    out += join(e.peer_or_group);
    out += ',';
    out += num(e.bytes);
    out += ',';
    out += std::to_string(e.round);
    out += ',';
    out += join(e.deps);
    out += ',';
    out += std::to_string(e.id);
    out += ',';
    out += to_string(e.lane);
    out += ',';
    out += std::to_string(e.stage);
    out += ',';
    out += std::to_string(e.collective);
    out += ',';
    out += num(e.work);
    out += '\n';
  }
  return out;
}

Trace parse_trace_csv(const std::string& text) {
  Trace trace;
  std::stringstream in(text);
  std::string line;
  int line_no = 0;
  bool header = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (!header) {
      if (line != kTraceCsvHeader)
        bad_line(line_no, "expected header " + std::string(kTraceCsvHeader));
      header = true;
      continue;
    }
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    if (cells.size() != 11)
      bad_line(line_no, "expected 11 fields, got " + std::to_string(cells.size()));
    TraceEvent e;
    e.rank = static_cast<int>(to_int(cells[0], line_no, "rank"));
    try {
      e.op = parse_trace_op(cells[1]);
      e.lane = parse_lane(cells[7]);
    } catch (const ParseError& err) {
      bad_line(line_no, err.what());
    }
    e.peer_or_group = to_list<int>(cells[2], line_no, "peer_or_group");
    e.bytes = to_double(cells[3], line_no, "bytes");
    e.round = static_cast<int>(to_int(cells[4], line_no, "round"));
    e.deps = to_list<std::int64_t>(cells[5], line_no, "dep_ids");
    e.id = to_int(cells[6], line_no, "id");
    e.stage = static_cast<int>(to_int(cells[8], line_no, "stage"));
    e.collective = to_int(cells[9], line_no, "collective");
    e.work = to_double(cells[10], line_no, "work");
    if (e.rank < 0) bad_line(line_no, "negative rank");
    if (e.bytes < 0 || e.work < 0) bad_line(line_no, "negative size");
    trace.events.push_back(std::move(e));
  }
  if (!header) throw ParseError("trace: missing header");
  return trace;
}

void check_trace(const Trace& trace) {
  std::map<std::int64_t, const TraceEvent*> first_member;
  for (std::size_t i = 0; i < trace.events.size(); ++i) {
    const auto& e = trace.events[i];
    if (e.id != static_cast<std::int64_t>(i)) {
      throw SimulationError("trace: event ids must be consecutive from 0 (event " +
                            std::to_string(i) + " has id " + std::to_string(e.id) + ")");
    }
    for (auto d : e.deps) {
      if (d < 0 || d >= e.id) {
        throw SimulationError("trace: event " + std::to_string(e.id) +
                              " depends on non-earlier event " + std::to_string(d));
      }
    }
    if (e.collective >= 0) {
      auto [it, fresh] = first_member.emplace(e.collective, &e);
      if (!fresh && (it->second->op != e.op || it->second->peer_or_group != e.peer_or_group)) {
        throw SimulationError("trace: collective " + std::to_string(e.collective) +
                              " members disagree on op or group");
      }
    }
  }
}

}  // namespace mixplan
