// Copyright 2026 The mixplan Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <json.hpp>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "mixplan/config.hpp"
#include "mixplan/cost_model.hpp"
#include "mixplan/strategy.hpp"

namespace mixplan {

enum class OpKind { AR, RS, AG, A2A, P2P, MoECompute };

std::string_view to_string(OpKind kind);

struct ProfilingObservation {
  OpKind op_kind = OpKind::AR;
  double size = 0.0;  // bytes, or element-ops for MoE_compute
  std::int64_t degree = 1;
  LinkKind scope = LinkKind::Intra;
  double measured_seconds = 0.0;
};

/// Header: op_kind,size,degree,scope,measured_seconds
std::vector<ProfilingObservation> parse_observations_csv(const std::string& text);
std::vector<ProfilingObservation> load_observations(const std::filesystem::path& path);

/// Least-squares fit of (alpha, 1/beta) per link class and of the compute
/// coefficient, using the cost formulas as the fit model. Classes without
/// observations keep the values of `defaults`.
CalibrationCoefficients calibrate(const std::vector<ProfilingObservation>& obs,
                                  const CalibrationCoefficients& defaults = {});

enum class Objective { TTFT, ITL, Throughput };

std::string_view to_string(Objective o);
Objective parse_objective(std::string_view text);

struct SelectOptions {
  Objective objective = Objective::TTFT;
  std::optional<double> max_ttft;  // seconds
  std::optional<double> max_itl;
};

struct RankedEntry {
  ParallelStrategy strategy;
  cost::CostEstimate estimate;
  MemoryVerdict memory;
  bool meets_slo = true;
};

struct RankedStrategies {
  std::vector<RankedEntry> entries;
  Objective objective = Objective::TTFT;
  std::string tie_break = "lexicographically smallest (d_pp, d_TP, d_EP, d_DP)";
  ConfigBundle bundle;
};

/// The value being optimized, oriented so that smaller is better. Empty when
/// the objective is undefined (saturated queue).
std::optional<double> objective_score(const cost::CostEstimate& e, Objective o);

/// Scores `candidates` in the given order and ranks them. Memory-infeasible
/// and SLO-violating strategies are dropped; saturated ones follow the stable
/// ones. Throws NoFeasibleStrategyError when nothing is left.
RankedStrategies rank_strategies(const std::vector<ParallelStrategy>& candidates,
                                 const ConfigBundle& bundle, const SelectOptions& options);

RankedStrategies select_strategy(const ConfigBundle& bundle, const SelectOptions& options);
RankedStrategies select_strategy(const ModelHyperparams& model, const ClusterConfig& cluster,
                                 const WorkloadSpec& workload, const CalibrationCoefficients& calib,
                                 Objective objective);

/// Stable entries not dominated in (TTFT, ITL, -throughput).
std::vector<RankedEntry> pareto_front(const RankedStrategies& ranked);

nlohmann::json compare_report(const RankedStrategies& ranked, std::size_t top_n);

/// Plain-text table rendering of a compare_report document.
std::string render_report_text(const nlohmann::json& report);

/// Side-by-side indicators for the given strategies in the given order,
/// memory-infeasible ones included and flagged, plus the lambda_EP and
/// lambda_mix figures of the cluster.
nlohmann::json compare_strategies(const std::vector<ParallelStrategy>& strategies,
                                  const ConfigBundle& bundle, Objective objective);

/// One column per strategy, one row per indicator.
std::string render_comparison_text(const nlohmann::json& comparison);

}  // namespace mixplan
