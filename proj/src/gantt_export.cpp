// Copyright 2026 The mixplan Authors.
// SPDX-License-Identifier: Apache-2.0

#include <cstdio>
#include <fstream>
#include <map>

#include "mixplan/error.hpp"
#include "mixplan/timeline.hpp"

namespace mixplan {

namespace {

std::string num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string fixed(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.3f", v);
  return buf;
}

const char* color(TraceOp op) {
  switch (op) {
    case TraceOp::Isend:
      return "#f4a261";
    case TraceOp::Irecv:
      return "#e76f51";
    case TraceOp::ReduceScatter:
      return "#90be6d";
    case TraceOp::AllGather:
      return "#43aa8b";
    case TraceOp::LocalReduce:
      return "#577590";
    case TraceOp::ExpertCompute:
      return "#277da1";
    case TraceOp::Route:
      return "#adb5bd";
  }
  return "#000000";
}

}  // namespace

GanttFormat parse_gantt_format(std::string_view s) {
  if (s == "csv") return GanttFormat::Csv;
  if (s == "svg") return GanttFormat::Svg;
  if (s == "json") return GanttFormat::Json;
  throw ParseError("unknown format '" + std::string(s) + "' (expected csv, svg or json)");
}

std::string_view extension(GanttFormat f) {
  switch (f) {
    case GanttFormat::Csv:
      return "csv";
    case GanttFormat::Svg:
      return "svg";
    case GanttFormat::Json:
      return "json";
  }
  return "txt";
}

std::string timeline_to_csv(const Timeline& t) {
  std::string out = "rank,lane,op,start_s,end_s,bytes\n";
  for (const auto& e : t.events) {
    out += std::to_string(e.rank);
    out += ',';
    out += to_string(e.lane);
    out += ',';
    out += to_string(e.op);
    out += ',';
    out += num(e.start);
    out += ',';
    out += num(e.end);
    out += ',';
    out += num(e.bytes);
    out += '\n';
  }
  return out;
}

std::string timeline_to_svg(const Timeline& t) {
  constexpr double kLabel = 120.0;
  constexpr double kWidth = 800.0;
  constexpr double kRow = 20.0;
  std::map<std::pair<int, Lane>, std::size_t> rows;
  for (const auto& e : t.events) rows.emplace(std::pair{e.rank, e.lane}, 0);
  std::size_t r = 0;
  for (auto& [key, row] : rows) row = r++;

  const double height = kRow * static_cast<double>(rows.size()) + 10.0;
  const double scale = t.makespan > 0.0 ? kWidth / t.makespan : 0.0;
  std::string out;
  out += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + fixed(kLabel + kWidth + 10.0) +
         "\" height=\"" + fixed(height) + "\">\n";
  for (const auto& [key, row] : rows) {
    const double y = kRow * static_cast<double>(row);
    out += "<text class=\"lane\" x=\"2\" y=\"" + fixed(y + 14.0) + "\" font-size=\"11\">rank " +
           std::to_string(key.first) + " " + std::string(to_string(key.second)) + "</text>\n";
  }
  for (const auto& e : t.events) {
    const double y = kRow * static_cast<double>(rows.at({e.rank, e.lane}));
    const double x = kLabel + e.start * scale;
    const double w = (e.end - e.start) * scale;
    out += "<rect class=\"event\" x=\"" + fixed(x) + "\" y=\"" + fixed(y + 2.0) + "\" width=\"" +
           fixed(w) + "\" height=\"" + fixed(kRow - 4.0) + "\" fill=\"" + color(e.op) +
           "\"><title>" + std::string(to_string(e.op)) + " #" + std::to_string(e.id) + " " +
           num(e.start) + "-" + num(e.end) + " s</title></rect>\n";
  }
  out += "</svg>\n";
  return out;
}

nlohmann::json timeline_to_json(const Timeline& t) {
  nlohmann::json events = nlohmann::json::array();
  for (const auto& e : t.events) {
    events.push_back({{"id", e.id},
                      {"rank", e.rank},
                      {"lane", std::string(to_string(e.lane))},
                      {"op", std::string(to_string(e.op))},
                      {"start_s", e.start},
                      {"end_s", e.end},
                      {"bytes", e.bytes}});
  }
  nlohmann::json lanes = nlohmann::json::array();
  for (const auto& l : t.lanes) {
    lanes.push_back({{"rank", l.rank},
                     {"lane", std::string(to_string(l.lane))},
                     {"busy_s", l.busy},
                     {"utilization", l.utilization}});
  }
  return {{"makespan_s", t.makespan}, {"events", events}, {"lanes", lanes}};
}

std::string render_gantt(const Timeline& t, GanttFormat format) {
  switch (format) {
    case GanttFormat::Csv:
      return timeline_to_csv(t);
    case GanttFormat::Svg:
      return timeline_to_svg(t);
    case GanttFormat::Json:
      return timeline_to_json(t).dump(2) + "\n";
  }
  return {};
}

void export_gantt(const Timeline& t, const std::filesystem::path& path, GanttFormat format) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << render_gantt(t, format);
  if (!out) throw Error("write failed: " + path.string());
}

}  // namespace mixplan
