// Copyright 2026 The mixplan Authors.
// SPDX-License-Identifier: Apache-2.0

#include <CLI11.hpp>
#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "mixplan/analyzer.hpp"
#include "mixplan/cli.hpp"
#include "mixplan/config.hpp"
#include "mixplan/error.hpp"
#include "mixplan/moe_block.hpp"
#include "mixplan/strategy.hpp"
#include "mixplan/timeline.hpp"
#include "mixplan/version.hpp"

namespace mixplan::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr double kTolerance = 1e-9;

struct Options {
  std::string config;
  std::string objective = "ttft";
  std::string profiling;
  std::string out_dir = ".";
  std::vector<std::string> strategies;
  std::uint64_t seed = 0;
  std::string mode = "both";
  std::string format = "svg";
  std::string trace;
  std::int64_t tokens = 64;
  std::int64_t hidden = 16;
  std::size_t top_n = 0;
  std::optional<double> max_ttft;
  std::optional<double> max_itl;
  bool synchronous = false;
};

std::string utc_now() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

class Manifest {
 public:
  Manifest(std::string command, const Options& o) : command_(std::move(command)) {
    doc_["command"] = command_;
    doc_["config"] = o.config.empty() ? json(nullptr) : json(o.config);
    doc_["version"] = kVersion;
    doc_["started_at"] = utc_now();
    dir_ = o.out_dir;
    fs::create_directories(dir_);
  }

  void seed(std::uint64_t s) { doc_["seed"] = s; }

  fs::path write(const std::string& name, const std::string& content) {
    const fs::path path = dir_ / name;
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write " + path.string());
    out << content;
    if (!out) throw Error("write failed: " + path.string());
    outputs_.push_back(path.string());
    return path;
  }

  void finish() {
    const fs::path path = dir_ / "manifest.json";
    outputs_.push_back(path.string());
    doc_["outputs"] = outputs_;
    doc_["finished_at"] = utc_now();
    std::ofstream out(path, std::ios::binary);
    out << doc_.dump(2) << "\n";
    if (!out) throw Error("write failed: " + path.string());
  }

 private:
  std::string command_;
  fs::path dir_;
  json doc_;
  std::vector<std::string> outputs_;
};

ConfigBundle load_bundle(const Options& o, std::ostream& err) {
  if (!fs::exists(o.config)) throw ParseError("config file not found: " + o.config);
  ConfigBundle b = load_config(o.config);
  for (const auto& w : validate_bundle(b)) err << "warning: " << w << "\n";
  return b;
}

int cmd_analyze(const Options& o, std::ostream& out, std::ostream& err) {
  ConfigBundle bundle = load_bundle(o, err);
  if (!o.profiling.empty()) {
    bundle.calibration = calibrate(load_observations(o.profiling), bundle.calibration);
  }
  SelectOptions sel;
  sel.objective = parse_objective(o.objective);
  sel.max_ttft = o.max_ttft;
  sel.max_itl = o.max_itl;
  const auto ranked = select_strategy(bundle, sel);
  const std::size_t top_n = o.top_n == 0 ? ranked.entries.size() : o.top_n;
  const json report = compare_report(ranked, top_n);

  Manifest manifest("analyze", o);
  manifest.write("report.json", report.dump(2) + "\n");
  manifest.write("report.txt", render_report_text(report));
  manifest.finish();
  out << "selected: " << format_strategy(ranked.entries.front().strategy) << "\n";
  return kExitOk;
}

int cmd_compare(const Options& o, std::ostream& out, std::ostream& err) {
  const ConfigBundle bundle = load_bundle(o, err);
  if (o.strategies.empty()) throw ParseError("compare: at least one --strategy is required");
  std::vector<ParallelStrategy> strategies;
  for (const auto& text : o.strategies) strategies.push_back(parse_strategy(text, bundle.cluster));
  const json doc = compare_strategies(strategies, bundle, parse_objective(o.objective));
  const std::string text = render_comparison_text(doc);

  Manifest manifest("compare", o);
  manifest.write("compare.json", doc.dump(2) + "\n");
  manifest.write("compare.txt", text);
  manifest.finish();
  out << text;
  return kExitOk;
}

int cmd_simulate(const Options& o, std::ostream& out, std::ostream& err) {
  const ConfigBundle bundle = load_bundle(o, err);
  const auto& cluster = bundle.cluster;
  ParallelStrategy s;
  if (o.strategies.empty()) {
    s = make_strategy(cluster.n_proc, cluster.n_node, cluster.n_proc, cluster.n_node);
    assign_scopes(s, cluster);
  } else {
    s = parse_strategy(o.strategies.front(), cluster);
  }
  if (o.mode != "fused" && o.mode != "baseline" && o.mode != "both") {
    throw ParseError("--mode must be fused, baseline or both");
  }
  if (o.tokens < 1 || o.hidden < 1) throw ParseError("--tokens and --hidden must be positive");

  std::vector<SimMode> modes;
  json notes = json::array();
  const bool fused_ok = is_fused_layout(s, cluster);
  if (o.mode == "fused" && !fused_ok) {
    throw ParseError("fused mode needs TP=" + std::to_string(cluster.n_proc) + " + DP=" +
                     std::to_string(cluster.n_node) + ", TP=" + std::to_string(cluster.n_proc) +
                     " + EP=" + std::to_string(cluster.n_node) + "; got " + format_strategy(s));
  }
  if (o.mode != "baseline") {
    if (fused_ok) {
      modes.push_back(SimMode::Fused);
    } else {
      notes.push_back("fused mode skipped: " + format_strategy(s) +
                      " is not the intra-TP + inter-EP layout");
    }
  }
  if (o.mode != "fused") modes.push_back(SimMode::Baseline);

  const int experts_n = static_cast<int>(bundle.model.num_routed_experts);
  const int k = static_cast<int>(bundle.model.top_k);
  const Router router = Router::seeded(experts_n, k, static_cast<int>(o.tokens), o.seed);
  const ExpertSpec experts = ExpertSpec::seeded(experts_n, o.hidden, o.hidden, o.seed + 1);
  const Mat x = seeded_input(o.tokens, o.hidden, o.seed + 2);
  const Mat reference = moe_oracle(x, router, experts);

  Manifest manifest("simulate", o);
  manifest.seed(o.seed);
  json verify;
  verify["strategy"] = format_strategy(s);
  verify["tolerance"] = kTolerance;
  verify["tokens"] = o.tokens;
  verify["hidden"] = o.hidden;
  verify["notes"] = notes;
  json overlap;
  bool all_pass = true;
  for (SimMode mode : modes) {
    MoeBlockOptions mo;
    mo.mode = mode;
    mo.bytes_per_value = bundle.model.bytes_per_element;
    const auto result = run_moe_block(cluster, s, x, router, experts, mo);
    const double error = max_relative_error(result.y, reference);
    const bool pass = error <= kTolerance;
    all_pass = all_pass && pass;
    const std::string name(to_string(mode));
    verify["modes"][name] = {{"max_relative_error", error},
                             {"pass", pass},
                             {"dispatched_rows", result.dispatched_rows},
                             {"events", result.trace.events.size()}};
    manifest.write("trace_" + name + ".csv", trace_to_csv(result.trace));
    const auto fused_tl = schedule(result.trace, cluster, bundle.calibration);
    const auto sync_tl = schedule_synchronous(result.trace, cluster, bundle.calibration);
    overlap[name] = to_json(overlap_metrics(fused_tl, sync_tl));
    out << name << ": max relative error " << error << (pass ? " (pass)" : " (FAIL)") << "\n";
  }
  for (const auto& n : notes) out << "note: " << n.get<std::string>() << "\n";
  manifest.write("verify.json", verify.dump(2) + "\n");
  manifest.write("overlap.json", overlap.dump(2) + "\n");
  manifest.finish();
  if (!all_pass) {
    err << "verification failed: simulated output differs from the dense oracle\n";
    return kExitVerificationFailed;
  }
  return kExitOk;
}

int cmd_gantt(const Options& o, std::ostream& out, std::ostream& err) {
  ConfigBundle bundle;
  if (!o.config.empty()) bundle = load_bundle(o, err);
  std::ifstream in(o.trace);
  if (!in) throw ParseError("cannot open trace file: " + o.trace);
  std::stringstream ss;
  ss << in.rdbuf();
  const Trace trace = parse_trace_csv(ss.str());
  const GanttFormat format = parse_gantt_format(o.format);
  const Timeline tl = o.synchronous
                          ? schedule_synchronous(trace, bundle.cluster, bundle.calibration)
                          : schedule(trace, bundle.cluster, bundle.calibration);
  Manifest manifest("gantt", o);
  const auto path =
      manifest.write("gantt." + std::string(extension(format)), render_gantt(tl, format));
  manifest.finish();
  out << "makespan " << tl.makespan << " s, " << tl.events.size() << " events -> " << path.string()
      << "\n";
  return kExitOk;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{
      "Plan hybrid TP/EP/DP/PP layouts for MoE inference and verify fused "
      "RS-Combine / AG-Dispatch communication."};
  app.require_subcommand(1);
  app.set_version_flag("--version", kVersion);
  Options o;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--out-dir", o.out_dir, "Directory for outputs")->capture_default_str();
  };

  auto* analyze = app.add_subcommand("analyze", "Rank every feasible strategy");
  analyze->add_option("--config", o.config, "Config JSON")->required();
  analyze->add_option("--objective", o.objective, "ttft | itl | throughput")->capture_default_str();
  analyze->add_option("--profiling", o.profiling, "Profiling observations CSV");
  analyze->add_option("--top-n", o.top_n, "Rows in the report (0 = all)");
  analyze->add_option("--max-ttft", o.max_ttft, "TTFT SLO in seconds");
  analyze->add_option("--max-itl", o.max_itl, "ITL SLO in seconds");
  add_common(analyze);

  auto* simulate = app.add_subcommand("simulate", "Run the MoE block on the simulated cluster");
  simulate->add_option("--config", o.config, "Config JSON")->required();
  simulate->add_option("--strategy", o.strategies, "Strategy string")->expected(1);
  simulate->add_option("--seed", o.seed, "Seed for generated tensors")->capture_default_str();
  simulate->add_option("--mode", o.mode, "fused | baseline | both")->capture_default_str();
  simulate->add_option("--tokens", o.tokens, "Tokens in the block")->capture_default_str();
  simulate->add_option("--hidden", o.hidden, "Hidden size of the simulated tensors")
      ->capture_default_str();
  add_common(simulate);

  auto* gantt = app.add_subcommand("gantt", "Schedule a trace and export a Gantt chart");
  gantt->add_option("--trace", o.trace, "Trace CSV")->required();
  gantt->add_option("--format", o.format, "csv | svg | json")->capture_default_str();
  gantt->add_option("--config", o.config, "Config JSON supplying link and compute coefficients");
  gantt->add_flag("--synchronous", o.synchronous, "Insert barriers between stages");
  add_common(gantt);

  auto* compare = app.add_subcommand("compare", "Side-by-side indicators for given strategies");
  compare->add_option("--config", o.config, "Config JSON")->required();
  compare->add_option("--strategy", o.strategies, "Strategy string (repeatable)")->required();
  compare->add_option("--objective", o.objective, "ttft | itl | throughput")->capture_default_str();
  add_common(compare);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitInputError;
  }

  try {
    if (*analyze) return cmd_analyze(o, out, err);
    if (*simulate) return cmd_simulate(o, out, err);
    if (*gantt) return cmd_gantt(o, out, err);
    if (*compare) return cmd_compare(o, out, err);
  } catch (const ParseError& e) {
    err << "error: " << e.what() << "\n";
    return kExitInputError;
  } catch (const ValidationError& e) {
    err << "error: " << e.what() << "\n";
    return kExitInputError;
  } catch (const DegenerateFitError& e) {
    err << "error: " << e.what() << "\n";
    return kExitInputError;
  } catch (const NoFeasibleStrategyError& e) {
    err << "error: " << e.what() << "\n";
    return kExitInputError;
  } catch (const CapacityError& e) {
    err << "error: " << e.what() << "\n";
    return kExitInputError;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitVerificationFailed;
  }
  return kExitInputError;
}

}  // namespace mixplan::cli
