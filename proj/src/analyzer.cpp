// Copyright 2026 The mixplan Authors.
// SPDX-License-Identifier: Apache-2.0

#include "mixplan/analyzer.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cctype>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "mixplan/error.hpp"

namespace mixplan {

using nlohmann::json;

std::string_view to_string(OpKind kind) {
  switch (kind) {
    case OpKind::AR:
      return "AR";
    case OpKind::RS:
      return "RS";
    case OpKind::AG:
      return "AG";
    case OpKind::A2A:
      return "A2A";
    case OpKind::P2P:
      return "P2P";
    case OpKind::MoECompute:
      return "MoE_compute";
  }
  return "?";
}

std::string_view to_string(Objective o) {
  switch (o) {
    case Objective::TTFT:
      return "ttft";
    case Objective::ITL:
      return "itl";
    case Objective::Throughput:
      return "throughput";
  }
  return "?";
}

Objective parse_objective(std::string_view text) {
  std::string t(text);
  std::transform(t.begin(), t.end(), t.begin(), [](unsigned char c) { return std::tolower(c); });
  if (t == "ttft") return Objective::TTFT;
  if (t == "itl") return Objective::ITL;
  if (t == "throughput") return Objective::Throughput;
  throw ParseError("unknown objective '" + std::string(text) +
                   "' (expected ttft, itl or throughput)");
}

namespace {

std::string trim(const std::string& s) {
  std::size_t b = 0;
  std::size_t e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return s.substr(b, e - b);
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) out.push_back(trim(cell));
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

OpKind parse_op_kind(const std::string& s, int line_no) {
  for (OpKind k :
       {OpKind::AR, OpKind::RS, OpKind::AG, OpKind::A2A, OpKind::P2P, OpKind::MoECompute}) {
    if (s == to_string(k)) return k;
  }
  throw ParseError("observations line " + std::to_string(line_no) + ": unknown op_kind '" + s +
                   "'");
}

double parse_number(const std::string& s, const char* field, int line_no) {
  std::size_t pos = 0;
  double v = 0.0;
  try {
    v = std::stod(s, &pos);
  } catch (const std::exception&) {
    pos = 0;
  }
  if (pos == 0 || pos != s.size()) {
    throw ParseError("observations line " + std::to_string(line_no) + ": bad " + field + " '" + s +
                     "'");
  }
  return v;
}

}  // namespace

std::vector<ProfilingObservation> parse_observations_csv(const std::string& text) {
  std::vector<ProfilingObservation> out;
  std::stringstream in(text);
  std::string line;
  int line_no = 0;
  bool header_seen = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty()) continue;
    const auto cells = split_csv_line(line);
    if (!header_seen) {
      const std::vector<std::string> expected = {"op_kind", "size", "degree", "scope",
                                                 "measured_seconds"};
      if (cells != expected) {
        throw ParseError(
            "observations: expected header op_kind,size,degree,scope,measured_seconds");
      }
      header_seen = true;
      continue;
    }
    if (cells.size() != 5) {
      throw ParseError("observations line " + std::to_string(line_no) + ": expected 5 fields");
    }
    ProfilingObservation o;
    o.op_kind = parse_op_kind(cells[0], line_no);
    o.size = parse_number(cells[1], "size", line_no);
    const double degree = parse_number(cells[2], "degree", line_no);
    o.degree = static_cast<std::int64_t>(degree);
    if (static_cast<double>(o.degree) != degree) {
      throw ParseError("observations line " + std::to_string(line_no) +
                       ": degree must be an integer");
    }
    if (cells[3] == "intra") {
      o.scope = LinkKind::Intra;
    } else if (cells[3] == "inter") {
      o.scope = LinkKind::Inter;
    } else {
      throw ParseError("observations line " + std::to_string(line_no) +
                       ": scope must be intra or inter");
    }
    o.measured_seconds = parse_number(cells[4], "measured_seconds", line_no);
    const std::string where = "observations[" + std::to_string(line_no) + "]";
    if (o.degree < 1) throw ValidationError(where + ".degree", "must be >= 1");
    if (!(o.measured_seconds > 0)) {
      throw ValidationError(where + ".measured_seconds", "must be positive");
    }
    if (o.size < 0) throw ValidationError(where + ".size", "must be non-negative");
    out.push_back(o);
  }
  if (!header_seen) throw ParseError("observations: empty input");
  return out;
}

std::vector<ProfilingObservation> load_observations(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open observations file: " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_observations_csv(ss.str());
}

namespace {

// Coefficients of (alpha, 1/beta) in the cost formula of one observation.
Eigen::Vector2d link_features(const ProfilingObservation& o, bool ar_literal) {
  const double d = static_cast<double>(o.degree);
  const double x = o.size;
  if (o.op_kind == OpKind::P2P) return {1.0, x};
  if (o.degree <= 1) return {0.0, 0.0};
  switch (o.op_kind) {
    case OpKind::RS:
    case OpKind::AG:
      return {1.0, x / d};
    case OpKind::AR:
      return ar_literal ? Eigen::Vector2d(2.0, 2.0 * x / (d * d))
                        : Eigen::Vector2d(2.0, 2.0 * x / d);
    case OpKind::A2A:
      return {d - 1.0, (d - 1.0) * x / d};
    default:
      return {0.0, 0.0};
  }
}

LinkClass fit_link(const std::vector<ProfilingObservation>& obs, bool ar_literal,
                   const std::string& name) {
  if (obs.size() < 2) {
    throw DegenerateFitError("degenerate fit for " + name + ": need at least 2 observations, got " +
                             std::to_string(obs.size()));
  }
  Eigen::MatrixXd a(static_cast<Eigen::Index>(obs.size()), 2);
  Eigen::VectorXd t(static_cast<Eigen::Index>(obs.size()));
  for (std::size_t i = 0; i < obs.size(); ++i) {
    const auto row = static_cast<Eigen::Index>(i);
    a.row(row) = link_features(obs[i], ar_literal).transpose();
    t(row) = obs[i].measured_seconds;
  }
  // Column scaling keeps the rank test meaningful when bytes are ~1e9.
  Eigen::Vector2d scale = a.colwise().norm().transpose();
  for (int c = 0; c < 2; ++c) {
    if (scale(c) == 0.0) scale(c) = 1.0;
  }
  const Eigen::MatrixXd scaled = a * scale.cwiseInverse().asDiagonal();
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(scaled);
  qr.setThreshold(1e-9);
  if (qr.rank() < 2) {
    throw DegenerateFitError("degenerate fit for " + name +
                             ": observations do not separate latency from bandwidth");
  }
  const Eigen::Vector2d coef = qr.solve(t).cwiseQuotient(scale);
  if (!(coef(1) > 0.0)) {
    throw DegenerateFitError("degenerate fit for " + name + ": non-positive inverse bandwidth");
  }
  return LinkClass{std::max(coef(0), 0.0), 1.0 / coef(1)};
}

}  // namespace

CalibrationCoefficients calibrate(const std::vector<ProfilingObservation>& obs,
                                  const CalibrationCoefficients& defaults) {
  CalibrationCoefficients out = defaults;
  std::vector<ProfilingObservation> intra;
  std::vector<ProfilingObservation> inter;
  std::vector<ProfilingObservation> compute;
  for (const auto& o : obs) {
    if (o.op_kind == OpKind::MoECompute) {
      compute.push_back(o);
    } else if (o.scope == LinkKind::Intra) {
      intra.push_back(o);
    } else {
      inter.push_back(o);
    }
  }
  if (!intra.empty()) out.intra = fit_link(intra, defaults.ar_literal, "intra link");
  if (!inter.empty()) out.inter = fit_link(inter, defaults.ar_literal, "inter link");
  if (!compute.empty()) {
    if (compute.size() < 2) {
      throw DegenerateFitError(
          "degenerate fit for MoE_compute: need at least 2 observations, got 1");
    }
    double xt = 0.0;
    double xx = 0.0;
    for (const auto& o : compute) {
      xt += o.size * o.measured_seconds;
      xx += o.size * o.size;
    }
    if (!(xx > 0.0)) {
      throw DegenerateFitError("degenerate fit for MoE_compute: all sizes are zero");
    }
    out.compute_coeff = xt / xx;
  }
  return out;
}

std::optional<double> objective_score(const cost::CostEstimate& e, Objective o) {
  switch (o) {
    case Objective::TTFT:
      return e.ttft;
    case Objective::ITL:
      if (!e.stable) return std::nullopt;
      return e.itl;
    case Objective::Throughput:
      if (!e.theta) return std::nullopt;
      return -*e.theta;
  }
  return std::nullopt;
}

RankedStrategies rank_strategies(const std::vector<ParallelStrategy>& candidates,
                                 const ConfigBundle& bundle, const SelectOptions& options) {
  RankedStrategies ranked;
  ranked.objective = options.objective;
  ranked.bundle = bundle;
  for (auto s : candidates) {
    assign_scopes(s, bundle.cluster);
    RankedEntry entry;
    entry.memory = check_memory(s, bundle.model, bundle.cluster, bundle.workload);
    if (!entry.memory.feasible) continue;
    entry.estimate =
        cost::indicators(s, bundle.model, bundle.workload, bundle.cluster, bundle.calibration);
    if (options.max_ttft && !(entry.estimate.ttft && *entry.estimate.ttft <= *options.max_ttft)) {
      continue;
    }
    if (options.max_itl && !(entry.estimate.stable && entry.estimate.itl <= *options.max_itl)) {
      continue;
    }
    entry.strategy = std::move(s);
    ranked.entries.push_back(std::move(entry));
  }
  if (ranked.entries.empty()) {
    throw NoFeasibleStrategyError(
        "no feasible strategy: every candidate violates the memory or latency "
        "constraints");
  }

  const Objective obj = options.objective;
  std::sort(ranked.entries.begin(), ranked.entries.end(),
            [obj](const RankedEntry& a, const RankedEntry& b) {
              const auto sa = objective_score(a.estimate, obj);
              const auto sb = objective_score(b.estimate, obj);
              if (sa.has_value() != sb.has_value()) return sa.has_value();
              if (sa && *sa != *sb) return *sa < *sb;
              if (!sa && a.estimate.svc_decode != b.estimate.svc_decode) {
                return a.estimate.svc_decode < b.estimate.svc_decode;
              }
              return strategy_less(a.strategy, b.strategy);
            });
  return ranked;
}

RankedStrategies select_strategy(const ConfigBundle& bundle, const SelectOptions& options) {
  return rank_strategies(enumerate_strategies(bundle.cluster, bundle.model), bundle, options);
}

RankedStrategies select_strategy(const ModelHyperparams& model, const ClusterConfig& cluster,
                                 const WorkloadSpec& workload, const CalibrationCoefficients& calib,
                                 Objective objective) {
  ConfigBundle bundle;
  bundle.model = model;
  bundle.cluster = cluster;
  bundle.workload = workload;
  bundle.calibration = calib;
  SelectOptions options;
  options.objective = objective;
  return select_strategy(bundle, options);
}

std::vector<RankedEntry> pareto_front(const RankedStrategies& ranked) {
  std::vector<const RankedEntry*> stable;
  for (const auto& e : ranked.entries) {
    if (e.estimate.stable && e.estimate.ttft && e.estimate.theta) stable.push_back(&e);
  }
  auto dominates = [](const cost::CostEstimate& a, const cost::CostEstimate& b) {
    const bool no_worse = *a.ttft <= *b.ttft && a.itl <= b.itl && *a.theta >= *b.theta;
    const bool better = *a.ttft < *b.ttft || a.itl < b.itl || *a.theta > *b.theta;
    return no_worse && better;
  };
  std::vector<RankedEntry> front;
  for (const auto* e : stable) {
    const bool dominated = std::any_of(stable.begin(), stable.end(), [&](const auto* o) {
      return dominates(o->estimate, e->estimate);
    });
    if (!dominated) front.push_back(*e);
  }
  return front;
}

json compare_report(const RankedStrategies& ranked, std::size_t top_n) {
  const auto& b = ranked.bundle;
  json report;
  report["header"] = {
      {"objective", std::string(to_string(ranked.objective))},
      {"method", "fit from observations, rank by theory"},
      {"tie_break", ranked.tie_break},
      {"ar_literal", b.calibration.ar_literal},
      {"tau_literal", b.calibration.tau_literal},
      {"cluster", std::to_string(b.cluster.n_node) + "x" + std::to_string(b.cluster.n_proc)},
      {"candidates", ranked.entries.size()},
  };
  json rows = json::array();
  const std::size_t n = std::min(top_n, ranked.entries.size());
  for (std::size_t i = 0; i < n; ++i) {
    const auto& e = ranked.entries[i];
    json row = cost::to_json(e.estimate);
    row["rank"] = i + 1;
    row["strategy"] = format_strategy(e.strategy);
    row["memory_bytes"] = e.memory.required_bytes;
    row["dp_ep_case"] = std::string(to_string(classify_dp_ep(e.strategy).relation));
    rows.push_back(std::move(row));
  }
  report["rows"] = std::move(rows);

  const std::int64_t np = b.cluster.n_proc;
  const std::int64_t nn = b.cluster.n_node;
  const auto ep_only = make_strategy(np, nn, 1, np * nn);
  const auto hybrid = make_strategy(np, nn, np, nn);
  auto present = [&](const ParallelStrategy& s) {
    return std::any_of(ranked.entries.begin(), ranked.entries.end(),
                       [&](const RankedEntry& e) { return e.strategy == s; });
  };
  if (!(ep_only == hybrid) && present(ep_only) && present(hybrid)) {
    const auto lep = cost::lambda_ep_baseline(b.model, b.workload, b.cluster, b.calibration);
    const auto lmix = cost::lambda_mix(b.model, b.workload, b.cluster, b.calibration);
    report["lambda_comparison"] = {
        {"ep_strategy", format_strategy(ep_only)},
        {"mix_strategy", format_strategy(hybrid)},
        {"lambda_ep", lep.total()},
        {"lambda_mix", lmix.total()},
        {"lambda_ep_a2a_volume_bytes", lep.a2a_volume_bytes},
        {"lambda_mix_a2a_volume_bytes", lmix.a2a_volume_bytes},
        {"lambda_mix_ag", lmix.ag},
    };
  }
  return report;
}

namespace {

std::string fmt(const json& v) {
  if (v.is_null()) return "saturated";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", v.get<double>());
  return buf;
}

}  // namespace

std::string render_report_text(const json& report) {
  std::ostringstream os;
  const auto& h = report.at("header");
  os << "# objective: " << h.at("objective").get<std::string>() << "\n";
  os << "# method: " << h.at("method").get<std::string>() << "\n";
  os << "# tie-break: " << h.at("tie_break").get<std::string>() << "\n";
  os << "# ar_literal: " << (h.at("ar_literal").get<bool>() ? "true" : "false")
     << "  tau_literal: " << (h.at("tau_literal").get<bool>() ? "true" : "false") << "\n";
  char line[256];
  std::snprintf(line, sizeof line, "%-5s %-50s %-12s %-12s %-12s %-10s\n", "rank", "strategy",
                "ttft_s", "itl_s", "tok_per_s", "case");
  os << line;
  for (const auto& row : report.at("rows")) {
    std::snprintf(line, sizeof line, "%-5d %-50s %-12s %-12s %-12s %-10s\n",
                  row.at("rank").get<int>(), row.at("strategy").get<std::string>().c_str(),
                  fmt(row.at("ttft")).c_str(), fmt(row.at("itl")).c_str(),
                  fmt(row.at("throughput")).c_str(),
                  row.at("dp_ep_case").get<std::string>().c_str());
    os << line;
  }
  if (report.contains("lambda_comparison")) {
    const auto& c = report.at("lambda_comparison");
    os << "lambda_EP (" << c.at("ep_strategy").get<std::string>() << "): " << fmt(c.at("lambda_ep"))
       << " s\n";
    os << "lambda_mix (" << c.at("mix_strategy").get<std::string>()
       << "): " << fmt(c.at("lambda_mix")) << " s\n";
  }
  return os.str();
}

json compare_strategies(const std::vector<ParallelStrategy>& strategies, const ConfigBundle& bundle,
                        Objective objective) {
  const auto& b = bundle;
  json doc;
  doc["header"] = {
      {"objective", std::string(to_string(objective))},
      {"method", "fit from observations, rank by theory"},
      {"ar_literal", b.calibration.ar_literal},
      {"tau_literal", b.calibration.tau_literal},
      {"cluster", std::to_string(b.cluster.n_node) + "x" + std::to_string(b.cluster.n_proc)},
  };
  json columns = json::array();
  for (auto s : strategies) {
    validate_against(s, b.cluster);
    assign_scopes(s, b.cluster);
    const auto est = cost::indicators(s, b.model, b.workload, b.cluster, b.calibration);
    const auto mem = check_memory(s, b.model, b.cluster, b.workload);
    json col = cost::to_json(est);
    col["strategy"] = format_strategy(s);
    col["memory_bytes"] = mem.required_bytes;
    col["memory_feasible"] = mem.feasible;
    col["dp_ep_case"] = std::string(to_string(classify_dp_ep(s).relation));
    columns.push_back(std::move(col));
  }
  doc["columns"] = std::move(columns);
  const auto lep = cost::lambda_ep_baseline(b.model, b.workload, b.cluster, b.calibration);
  const auto lmix = cost::lambda_mix(b.model, b.workload, b.cluster, b.calibration);
  doc["lambda_comparison"] = {
      {"lambda_ep", lep.total()},
      {"lambda_mix", lmix.total()},
      {"lambda_ep_a2a_volume_bytes", lep.a2a_volume_bytes},
      {"lambda_mix_a2a_volume_bytes", lmix.a2a_volume_bytes},
      {"lambda_mix_ag", lmix.ag},
  };
  return doc;
}

std::string render_comparison_text(const json& comparison) {
  std::ostringstream os;
  const auto& h = comparison.at("header");
  os << "# objective: " << h.at("objective").get<std::string>() << "\n";
  os << "# method: " << h.at("method").get<std::string>() << "\n";
  os << "# ar_literal: " << (h.at("ar_literal").get<bool>() ? "true" : "false")
     << "  tau_literal: " << (h.at("tau_literal").get<bool>() ? "true" : "false") << "\n";
  const auto& cols = comparison.at("columns");
  char cell[128];
  auto row = [&](const std::string& name, auto&& value) {
    std::snprintf(cell, sizeof cell, "%-16s", name.c_str());
    os << cell;
    for (const auto& c : cols) {
      std::snprintf(cell, sizeof cell, " %-36s", value(c).c_str());
      os << cell;
    }
    os << "\n";
  };
  row("strategy", [](const json& c) { return c.at("strategy").get<std::string>(); });
  row("ttft_s", [](const json& c) { return fmt(c.at("ttft")); });
  row("itl_s", [](const json& c) { return fmt(c.at("itl")); });
  row("tok_per_s", [](const json& c) { return fmt(c.at("throughput")); });
  row("tau_s", [](const json& c) { return fmt(c.at("tau")); });
  row("lambda_s", [](const json& c) { return fmt(c.at("lambda")); });
  row("p2p_s", [](const json& c) { return fmt(c.at("p2p")); });
  row("memory_bytes", [](const json& c) { return fmt(c.at("memory_bytes")); });
  row("memory_ok", [](const json& c) {
    return std::string(c.at("memory_feasible").get<bool>() ? "yes" : "no");
  });
  row("dp_ep_case", [](const json& c) { return c.at("dp_ep_case").get<std::string>(); });
  const auto& l = comparison.at("lambda_comparison");
  os << "lambda_EP_s      " << fmt(l.at("lambda_ep")) << "\n";
  os << "lambda_mix_s     " << fmt(l.at("lambda_mix")) << "\n";
  return os.str();
}

}  // namespace mixplan
