// Copyright 2026 The mixplan Authors.
// SPDX-License-Identifier: Apache-2.0

#include "mixplan/cost_model.hpp"

#include "mixplan/error.hpp"

namespace mixplan::cost {

namespace {

double as_double(std::int64_t v) { return static_cast<double>(v); }

// (b / d) * tokens * h * bytes
double activation_bytes(const ModelHyperparams& model, const WorkloadSpec& workload,
                        std::int64_t batch_divisor, std::int64_t seq_tokens) {
  return as_double(workload.batch_size) / as_double(batch_divisor) * as_double(seq_tokens) *
         as_double(model.hidden_dim) * model.bytes_per_element;
}

}  // namespace

double rs_cost(double size, std::int64_t degree, const LinkClass& link) {
  if (degree <= 1) return 0.0;
  return link.alpha + (size / as_double(degree)) / link.beta;
}

double ag_cost(double size, std::int64_t degree, const LinkClass& link) {
  return rs_cost(size, degree, link);
}

double ar_cost(double size, std::int64_t degree, const LinkClass& link, bool literal) {
  if (degree <= 1) return 0.0;
  const double arg = literal ? size / as_double(degree) : size;
  return rs_cost(arg, degree, link) + ag_cost(arg, degree, link);
}

double a2a_cost(double size, std::int64_t degree, const LinkClass& link) {
  if (degree <= 1) return 0.0;
  return as_double(degree - 1) * (link.alpha + (size / as_double(degree)) / link.beta);
}

double p2p_cost(double size, const LinkClass& link) { return link.alpha + size / link.beta; }

LinkClass link_for(Scope scope, const ClusterConfig& cluster,
                   const CalibrationCoefficients& calib) {
  // A group spanning nodes pays the inter-node link for every member.
  return effective_link(cluster, calib, scope == Scope::Intra ? LinkKind::Intra : LinkKind::Inter);
}

double compute_latency(const ParallelStrategy& s, const ModelHyperparams& model,
                       const WorkloadSpec& workload, const CalibrationCoefficients& calib,
                       std::int64_t seq_tokens) {
  double t = calib.compute_coeff * model.psi_active / (as_double(s.d_tp()) * as_double(s.d_ep())) *
             (as_double(workload.batch_size) / as_double(s.d_dp())) * as_double(seq_tokens);
  if (calib.tau_literal) t *= as_double(model.hidden_dim);
  return t;
}

double compute_latency(const ParallelStrategy& s, const ModelHyperparams& model,
                       const WorkloadSpec& workload, const CalibrationCoefficients& calib) {
  return compute_latency(s, model, workload, calib, workload.seq_len);
}

CommBreakdown comm_breakdown(const ParallelStrategy& s, const ModelHyperparams& model,
                             const WorkloadSpec& workload, const ClusterConfig& cluster,
                             const CalibrationCoefficients& calib, std::int64_t seq_tokens) {
  CommBreakdown out;
  out.dp_ep = classify_dp_ep(s);

  const std::int64_t dp = s.d_dp();
  const std::int64_t ep = s.d_ep();
  out.ar_volume_bytes = activation_bytes(model, workload, dp, seq_tokens);

  const auto attn_tp = group_layout(s, BlockKind::Attention, ParallelKind::TP, cluster);
  const auto moe_tp = group_layout(s, BlockKind::MoE, ParallelKind::TP, cluster);
  out.ar_attn = ar_cost(out.ar_volume_bytes, attn_tp.size, link_for(attn_tp.scope, cluster, calib),
                        calib.ar_literal);
  out.ar_moe = ar_cost(out.ar_volume_bytes, moe_tp.size, link_for(moe_tp.scope, cluster, calib),
                       calib.ar_literal);

  const double k = as_double(model.top_k);
  if (dp >= ep) {
    out.a2a_volume_bytes = activation_bytes(model, workload, dp, seq_tokens) * k;
    out.a2a_group = ep;
    out.a2a_scope = group_layout(s, BlockKind::MoE, ParallelKind::EP, cluster).scope;
  } else {
    out.a2a_volume_bytes = activation_bytes(model, workload, ep, seq_tokens) * k;
    out.a2a_group = dp;
    out.a2a_scope = group_layout(s, BlockKind::Attention, ParallelKind::DP, cluster).scope;
  }
  const LinkClass a2a_link = link_for(out.a2a_scope, cluster, calib);
  out.a2a_dispatch = a2a_cost(out.a2a_volume_bytes, out.a2a_group, a2a_link);
  out.a2a_combine = out.a2a_dispatch;
  return out;
}

double comm_latency(const ParallelStrategy& s, const ModelHyperparams& model,
                    const WorkloadSpec& workload, const ClusterConfig& cluster,
                    const CalibrationCoefficients& calib) {
  return comm_breakdown(s, model, workload, cluster, calib, workload.seq_len).total();
}

double pipeline_latency(const ParallelStrategy& s, const ModelHyperparams& model,
                        const WorkloadSpec& workload, const ClusterConfig& cluster,
                        const CalibrationCoefficients& calib, std::int64_t seq_tokens) {
  if (s.d_pp <= 1) return 0.0;
  const double size = activation_bytes(model, workload, s.d_dp(), seq_tokens);
  return as_double(s.d_pp - 1) *
         p2p_cost(size, link_for(pipeline_scope(s, cluster), cluster, calib));
}

double svc_latency(const ParallelStrategy& s, const ModelHyperparams& model,
                   const WorkloadSpec& workload, const ClusterConfig& cluster,
                   const CalibrationCoefficients& calib, std::int64_t seq_tokens) {
  const double tau = compute_latency(s, model, workload, calib, seq_tokens);
  const double lambda = comm_breakdown(s, model, workload, cluster, calib, seq_tokens).total();
  return as_double(model.num_layers) * (tau + lambda) +
         pipeline_latency(s, model, workload, cluster, calib, seq_tokens);
}

double queuing_delay(double arrival_rate, double svc) {
  if (!(svc > 0.0)) {
    throw Error("queuing_delay: service time must be positive");
  }
  if (arrival_rate < 0.0) {
    throw Error("queuing_delay: arrival rate must be non-negative");
  }
  const double rho = arrival_rate * svc;
  if (rho >= 1.0) {
    throw SaturationError("queue saturated: rho = " + std::to_string(rho) + " >= 1");
  }
  const double mu = 1.0 / svc;
  return arrival_rate / (mu * (mu - arrival_rate));
}

CostEstimate indicators(const ParallelStrategy& s, const ModelHyperparams& model,
                        const WorkloadSpec& workload, const ClusterConfig& cluster,
                        const CalibrationCoefficients& calib) {
  CostEstimate e;
  const std::int64_t nominal = workload.seq_len;
  e.tau = compute_latency(s, model, workload, calib, nominal);
  const CommBreakdown comm = comm_breakdown(s, model, workload, cluster, calib, nominal);
  e.lambda_comm = comm.total();
  e.p2p = pipeline_latency(s, model, workload, cluster, calib, nominal);

  e.svc_prefill = svc_latency(s, model, workload, cluster, calib, workload.input_len);
  e.svc_decode = svc_latency(s, model, workload, cluster, calib, 1);
  e.itl = e.svc_decode;

  e.rho = workload.arrival_rate * e.svc_decode;
  if (e.svc_decode > 0.0 && e.rho < 1.0) {
    e.w_q = queuing_delay(workload.arrival_rate, e.svc_decode);
  } else if (e.svc_decode <= 0.0 && workload.arrival_rate == 0.0) {
    e.w_q = 0.0;
  }
  e.stable = e.w_q.has_value();
  if (e.stable) {
    e.ttft = *e.w_q + e.svc_prefill;
    const double total_tokens = as_double(workload.input_len + workload.output_len);
    const double busy = *e.w_q + e.svc_prefill + as_double(workload.output_len) * e.svc_decode;
    if (busy > 0.0) e.theta = total_tokens / busy;
  }

  auto& b = e.breakdown;
  b["tau"] = e.tau;
  b["ar_attn"] = comm.ar_attn;
  b["ar_moe"] = comm.ar_moe;
  b["a2a_dispatch"] = comm.a2a_dispatch;
  b["a2a_combine"] = comm.a2a_combine;
  b["a2a_group"] = as_double(comm.a2a_group);
  b["a2a_volume_bytes"] = comm.a2a_volume_bytes;
  b["ar_volume_bytes"] = comm.ar_volume_bytes;
  b["redundancy_factor"] = comm.dp_ep.redundancy_factor;
  b["p2p"] = e.p2p;
  const auto prefill = comm_breakdown(s, model, workload, cluster, calib, workload.input_len);
  b["prefill_tau"] = compute_latency(s, model, workload, calib, workload.input_len);
  b["prefill_lambda"] = prefill.total();
  b["prefill_p2p"] = pipeline_latency(s, model, workload, cluster, calib, workload.input_len);
  const auto decode = comm_breakdown(s, model, workload, cluster, calib, 1);
  b["decode_tau"] = compute_latency(s, model, workload, calib, 1);
  b["decode_lambda"] = decode.total();
  b["decode_p2p"] = pipeline_latency(s, model, workload, cluster, calib, 1);
  return e;
}

nlohmann::json to_json(const CostEstimate& e) {
  nlohmann::json j;
  j["tau"] = e.tau;
  j["lambda"] = e.lambda_comm;
  j["p2p"] = e.p2p;
  j["svc_prefill"] = e.svc_prefill;
  j["svc_decode"] = e.svc_decode;
  j["rho"] = e.rho;
  j["stable"] = e.stable;
  j["w_q"] = e.w_q ? nlohmann::json(*e.w_q) : nlohmann::json(nullptr);
  j["ttft"] = e.ttft ? nlohmann::json(*e.ttft) : nlohmann::json(nullptr);
  j["itl"] = e.itl;
  j["throughput"] = e.theta ? nlohmann::json(*e.theta) : nlohmann::json(nullptr);
  j["breakdown"] = e.breakdown;
  return j;
}

LambdaBreakdown lambda_ep_baseline(const ModelHyperparams& model, const WorkloadSpec& workload,
                                   const ClusterConfig& cluster,
                                   const CalibrationCoefficients& calib) {
  const LinkClass intra = effective_link(cluster, calib, LinkKind::Intra);
  const LinkClass inter = effective_link(cluster, calib, LinkKind::Inter);
  const double bsh = activation_bytes(model, workload, 1, workload.seq_len);
  LambdaBreakdown out;
  out.ar = ar_cost(bsh, cluster.n_proc, intra, calib.ar_literal);
  out.a2a_volume_bytes = bsh * as_double(model.top_k);
  out.a2a = 2.0 * a2a_cost(out.a2a_volume_bytes, cluster.n_node, inter);
  return out;
}

LambdaBreakdown lambda_mix(const ModelHyperparams& model, const WorkloadSpec& workload,
                           const ClusterConfig& cluster, const CalibrationCoefficients& calib) {
  const LinkClass intra = effective_link(cluster, calib, LinkKind::Intra);
  const LinkClass inter = effective_link(cluster, calib, LinkKind::Inter);
  const double bsh = activation_bytes(model, workload, 1, workload.seq_len);
  const double bshk_per_proc = bsh * as_double(model.top_k) / as_double(cluster.n_proc);
  LambdaBreakdown out;
  out.ar = ar_cost(bsh, cluster.n_proc, intra, calib.ar_literal);
  out.ag_volume_bytes = bshk_per_proc;
  out.ag = ag_cost(bshk_per_proc, cluster.n_proc, intra);
  out.a2a_volume_bytes = bshk_per_proc;
  out.a2a = 2.0 * a2a_cost(bshk_per_proc, cluster.n_node, inter);
  return out;
}

}  // namespace mixplan::cost
