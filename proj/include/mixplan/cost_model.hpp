// Copyright 2026 The mixplan Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <json.hpp>
#include <map>
#include <optional>
#include <string>

#include "mixplan/config.hpp"
#include "mixplan/strategy.hpp"

namespace mixplan::cost {

// Collective costs under the alpha-beta model. Sizes are bytes, results are
// seconds, and every collective over a single rank costs nothing.

/// One round: alpha + (size / degree) / beta.
double rs_cost(double size, std::int64_t degree, const LinkClass& link);
double ag_cost(double size, std::int64_t degree, const LinkClass& link);

/// literal: RS(size/d, d) + AG(size/d, d); otherwise RS(size, d) + AG(size, d).
double ar_cost(double size, std::int64_t degree, const LinkClass& link, bool literal = true);

/// Pairwise all-to-all: (degree - 1) * (alpha + (size / degree) / beta).
double a2a_cost(double size, std::int64_t degree, const LinkClass& link);

double p2p_cost(double size, const LinkClass& link);

LinkClass link_for(Scope scope, const ClusterConfig& cluster, const CalibrationCoefficients& calib);

/// c_tau * psi_active / (d_TP * d_EP) * (b / d_DP) * tokens, times h when
/// calib.tau_literal is set.
double compute_latency(const ParallelStrategy& s, const ModelHyperparams& model,
                       const WorkloadSpec& workload, const CalibrationCoefficients& calib,
                       std::int64_t seq_tokens);
double compute_latency(const ParallelStrategy& s, const ModelHyperparams& model,
                       const WorkloadSpec& workload, const CalibrationCoefficients& calib);

struct CommBreakdown {
  double ar_attn = 0.0;  // attention TP all-reduce
  double ar_moe = 0.0;   // MoE TP all-reduce
  double a2a_dispatch = 0.0;
  double a2a_combine = 0.0;
  double ar_volume_bytes = 0.0;
  double a2a_volume_bytes = 0.0;
  std::int64_t a2a_group = 1;
  Scope a2a_scope = Scope::Intra;
  DpEpCase dp_ep;

  double total() const { return ar_attn + ar_moe + a2a_dispatch + a2a_combine; }
};

/// Per-layer communication: one AR per block plus dispatch and combine A2A.
/// When d_DP >= d_EP the A2A runs over d_EP ranks with batch b/d_DP;
/// otherwise over d_DP ranks with batch b/d_EP (redundant tokens dropped).
CommBreakdown comm_breakdown(const ParallelStrategy& s, const ModelHyperparams& model,
                             const WorkloadSpec& workload, const ClusterConfig& cluster,
                             const CalibrationCoefficients& calib, std::int64_t seq_tokens);

double comm_latency(const ParallelStrategy& s, const ModelHyperparams& model,
                    const WorkloadSpec& workload, const ClusterConfig& cluster,
                    const CalibrationCoefficients& calib);

/// Pipeline hand-off: (d_pp - 1) * P2P((b / d_DP) * s * h bytes).
double pipeline_latency(const ParallelStrategy& s, const ModelHyperparams& model,
                        const WorkloadSpec& workload, const ClusterConfig& cluster,
                        const CalibrationCoefficients& calib, std::int64_t seq_tokens);

/// l * (tau + lambda) + pipeline hand-off, evaluated at `seq_tokens`.
double svc_latency(const ParallelStrategy& s, const ModelHyperparams& model,
                   const WorkloadSpec& workload, const ClusterConfig& cluster,
                   const CalibrationCoefficients& calib, std::int64_t seq_tokens);

/// M/M/1 waiting time lambda_a / (mu (mu - lambda_a)), mu = 1 / svc.
/// Throws SaturationError when lambda_a * svc >= 1.
double queuing_delay(double arrival_rate, double svc);

struct CostEstimate {
  double tau = 0.0;          // per layer, at the workload sequence length
  double lambda_comm = 0.0;  // per layer, at the workload sequence length
  double p2p = 0.0;
  double svc_prefill = 0.0;  // s = L_in
  double svc_decode = 0.0;   // s = 1
  double rho = 0.0;
  bool stable = true;
  std::optional<double> w_q;
  std::optional<double> ttft;
  double itl = 0.0;
  std::optional<double> theta;  // tokens/s
  std::map<std::string, double> breakdown;
};

/// The queue is fed with tokens and served at the decode rate 1 / svc_decode.
CostEstimate indicators(const ParallelStrategy& s, const ModelHyperparams& model,
                        const WorkloadSpec& workload, const ClusterConfig& cluster,
                        const CalibrationCoefficients& calib);

nlohmann::json to_json(const CostEstimate& e);

struct LambdaBreakdown {
  double ar = 0.0;
  double ag = 0.0;
  double a2a = 0.0;  // both A2A phases
  double a2a_volume_bytes = 0.0;
  double ag_volume_bytes = 0.0;

  double total() const { return ar + ag + a2a; }
};

/// Full-EP MoE block: AR(bsh, n_proc) + 2 A2A(bshk, n_node).
LambdaBreakdown lambda_ep_baseline(const ModelHyperparams& model, const WorkloadSpec& workload,
                                   const ClusterConfig& cluster,
                                   const CalibrationCoefficients& calib);

/// Hybrid TP-EP: AR(bsh, n_proc) + AG(bshk/n_proc, n_proc)
///               + 2 A2A(bshk/n_proc, n_node).
LambdaBreakdown lambda_mix(const ModelHyperparams& model, const WorkloadSpec& workload,
                           const ClusterConfig& cluster, const CalibrationCoefficients& calib);

}  // namespace mixplan::cost
