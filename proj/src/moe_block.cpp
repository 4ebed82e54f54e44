// Copyright 2026 The mixplan Authors.
// SPDX-License-Identifier: Apache-2.0

#include "mixplan/moe_block.hpp"

#include <string>

#include "mixplan/collectives.hpp"
#include "mixplan/error.hpp"

namespace mixplan {

std::string_view to_string(SimMode mode) { return mode == SimMode::Fused ? "fused" : "baseline"; }

namespace {

std::size_t at(std::int64_t i) { return static_cast<std::size_t>(i); }

void check_inputs(const Mat& x, const Router& router, const ExpertSpec& experts) {
  if (router.num_experts() != experts.size()) {
    throw SimulationError("router and expert spec disagree on the expert count");
  }
  if (x.cols() != experts.hidden()) {
    throw SimulationError("input hidden size " + std::to_string(x.cols()) +
                          " does not match experts (" + std::to_string(experts.hidden()) + ")");
  }
  if (router.num_tokens() < x.rows()) {
    throw SimulationError("router covers fewer tokens than the input holds");
  }
}

// Expert partial outputs for `rows` taken from `block` (full hidden rows).
Mat expert_partials(const ExpertSpec& experts, const std::vector<RoutedRow>& rows, const Mat& block,
                    std::int64_t part, std::int64_t parts) {
  Mat out(block.rows(), experts.hidden());
  for (std::size_t j = 0; j < rows.size(); ++j) {
    const auto row = static_cast<Eigen::Index>(j);
    out.row(row) = experts.apply_partial(rows[j].expert, block.row(row), part, parts);
  }
  return out;
}

double expert_work(const ExpertSpec& experts, std::int64_t rows, std::int64_t part,
                   std::int64_t parts) {
  const auto f = split_sizes(experts.ffn(), parts)[at(part)];
  return 2.0 * static_cast<double>(rows) * static_cast<double>(experts.hidden()) *
         static_cast<double>(f);
}

MoeBlockResult run_fused(const ClusterConfig& cfg, const Mat& x, const Router& router,
                         const ExpertSpec& experts, const MoeBlockOptions& options) {
  const int n = static_cast<int>(cfg.n_node);
  const int m = static_cast<int>(cfg.n_proc);
  SimCluster cluster(n, m);
  const RoutingPlan plan = build_routing_plan(router, x.rows(), n);

  MoeBlockResult result;
  TraceBuilder trace(result.trace);
  FusedOptions fo;
  fo.bytes_per_value = options.bytes_per_value;
  fo.capacity_rows = options.capacity_rows;

  std::vector<Mat> inputs;
  for (int r = 0; r < cluster.size(); ++r) {
    const int q = cluster.rank(r).node;
    inputs.push_back(x.middleRows(plan.token_offsets[at(q)], plan.tokens_in(q)));
  }
  const auto dispatched = fused_ag_dispatch(cluster, inputs, plan, router.top_k(), trace, fo);

  std::vector<std::vector<Mat>> partials(at(cluster.size()), std::vector<Mat>(at(n)));
  std::vector<std::vector<std::int64_t>> ready(at(cluster.size()),
                                               std::vector<std::int64_t>(at(n), -1));
  for (int r = 0; r < cluster.size(); ++r) {
    const int p = cluster.rank(r).node;
    const int t = cluster.rank(r).tp_rank;
    for (int q = 0; q < n; ++q) {
      const auto& rows = plan.block(q, p);
      partials[at(r)][at(q)] =
          expert_partials(experts, rows, dispatched.blocks[at(r)][at(q)], t, m);
      if (rows.empty()) {
        ready[at(r)][at(q)] = dispatched.ready[at(r)][at(q)];
        continue;
      }
      ready[at(r)][at(q)] =
          trace.add(r, TraceOp::ExpertCompute, Lane::Compute, stage::kExpert, {}, 0.0,
                    {dispatched.ready[at(r)][at(q)]}, -1,
                    expert_work(experts, static_cast<std::int64_t>(rows.size()), t, m));
    }
  }
  for (int q = 0; q < n; ++q) {
    for (int p = 0; p < n; ++p) {
      result.dispatched_rows += static_cast<std::int64_t>(plan.block(q, p).size());
    }
  }

  const auto combined = fused_rs_combine(cluster, partials, plan, router, trace, fo, ready);
  result.peak_staged_values = combined.peak_staged_values;
  result.y = Mat(x.rows(), x.cols());
  for (int p = 0; p < n; ++p) {
    result.y.middleRows(plan.token_offsets[at(p)], plan.tokens_in(p)) =
        combined.outputs[at(cluster.global_rank(p, 0))];
  }
  return result;
}

struct Layout {
  std::int64_t tp_a = 1, dp = 1, stride_tp_a = 1, stride_dp = 1;
  std::int64_t tp_m = 1, ep = 1, stride_tp_m = 1, stride_ep = 1;

  int attn_rank(std::int64_t a, std::int64_t g) const {
    return static_cast<int>(a * stride_tp_a + g * stride_dp);
  }
  int moe_rank(std::int64_t u, std::int64_t slot) const {
    return static_cast<int>(u * stride_tp_m + slot * stride_ep);
  }
};

Layout layout_of(const ParallelStrategy& s, const ClusterConfig& cluster) {
  Layout l;
  const auto ta = group_layout(s, BlockKind::Attention, ParallelKind::TP, cluster);
  const auto da = group_layout(s, BlockKind::Attention, ParallelKind::DP, cluster);
  const auto tm = group_layout(s, BlockKind::MoE, ParallelKind::TP, cluster);
  const auto em = group_layout(s, BlockKind::MoE, ParallelKind::EP, cluster);
  l.tp_a = ta.size;
  l.stride_tp_a = ta.stride;
  l.dp = da.size;
  l.stride_dp = da.stride;
  l.tp_m = tm.size;
  l.stride_tp_m = tm.stride;
  l.ep = em.size;
  l.stride_ep = em.stride;
  return l;
}

struct Meta {
  RoutedRow row;
  int owner = 0;
};

MoeBlockResult run_baseline(const ClusterConfig& cfg, const ParallelStrategy& s, const Mat& x,
                            const Router& router, const ExpertSpec& experts,
                            const MoeBlockOptions& options) {
  const Layout l = layout_of(s, cfg);
  const int d = static_cast<int>(s.devices_per_stage());
  const auto node_of = [&](int r) { return static_cast<std::int64_t>(r) / cfg.n_proc; };
  const double bpv = options.bytes_per_value;
  const Eigen::Index h = x.cols();

  MoeBlockResult result;
  TraceBuilder trace(result.trace);
  const auto tok_off = split_offsets(x.rows(), l.dp);

  // Outgoing dispatch rows per (src, dst), ordered by token then slot then
  // MoE TP member.
  std::vector<std::vector<std::vector<Meta>>> meta(at(d), std::vector<std::vector<Meta>>(at(d)));
  std::vector<std::int64_t> owned_rows(at(d), 0);
  for (std::int64_t g = 0; g < l.dp; ++g) {
    for (std::int64_t t = tok_off[at(g)]; t < tok_off[at(g) + 1]; ++t) {
      const int owner = l.attn_rank((t - tok_off[at(g)]) % l.tp_a, g);
      ++owned_rows[at(owner)];
      const auto& route = router.route(t);
      for (std::size_t slot = 0; slot < route.experts.size(); ++slot) {
        const int e = route.experts[slot];
        for (std::int64_t u = 0; u < l.tp_m; ++u) {
          const int dst = l.moe_rank(u, e % l.ep);
          meta[at(owner)][at(dst)].push_back(Meta{RoutedRow{t, static_cast<int>(slot), e}, owner});
          ++result.dispatched_rows;
        }
      }
    }
  }

  std::vector<std::int64_t> route_id(at(d));
  std::vector<std::vector<Mat>> send(at(d), std::vector<Mat>(at(d)));
  for (int r = 0; r < d; ++r) {
    for (int dst = 0; dst < d; ++dst) {
      const auto& rows = meta[at(r)][at(dst)];
      Mat buf(static_cast<Eigen::Index>(rows.size()), h);
      for (std::size_t j = 0; j < rows.size(); ++j) {
        buf.row(static_cast<Eigen::Index>(j)) = x.row(static_cast<Eigen::Index>(rows[j].row.token));
      }
      send[at(r)][at(dst)] = std::move(buf);
    }
    route_id[at(r)] = trace.add(r, TraceOp::Route, Lane::Compute, stage::kRoute, {}, 0.0, {}, -1,
                                static_cast<double>(owned_rows[at(r)] * router.top_k()));
  }

  // Pairwise exchange trace: round i sends to (r + i) mod d.
  auto exchange_trace = [&](const std::vector<std::vector<Mat>>& bufs, int stage_id,
                            const std::vector<std::vector<std::int64_t>>& send_deps) {
    std::vector<std::vector<std::int64_t>> recv_id(at(d), std::vector<std::int64_t>(at(d), -1));
    for (int i = 1; i < d; ++i) {
      std::vector<std::int64_t> send_id(at(d));
      for (int r = 0; r < d; ++r) {
        const int to = (r + i) % d;
        const Lane lane = node_of(r) == node_of(to) ? Lane::Intra : Lane::Inter;
        send_id[at(r)] = trace.add(r, TraceOp::Isend, lane, stage_id, {to},
                                   static_cast<double>(bufs[at(r)][at(to)].size()) * bpv,
                                   send_deps[at(r)][at(to)] >= 0
                                       ? std::vector<std::int64_t>{send_deps[at(r)][at(to)]}
                                       : std::vector<std::int64_t>{});
      }
      for (int r = 0; r < d; ++r) {
        const int from = (r - i + d) % d;
        const Lane lane = node_of(r) == node_of(from) ? Lane::Intra : Lane::Inter;
        recv_id[at(r)][at(from)] =
            trace.add(r, TraceOp::Irecv, lane, stage_id, {from},
                      static_cast<double>(bufs[at(from)][at(r)].size()) * bpv, {send_id[at(from)]});
      }
    }
    return recv_id;
  };

  std::vector<std::vector<std::int64_t>> dispatch_deps(at(d));
  for (int r = 0; r < d; ++r) dispatch_deps[at(r)].assign(at(d), route_id[at(r)]);
  const auto recv = ref_all_to_all_pairwise(send);
  const auto dispatch_recv = exchange_trace(send, stage::kDispatchA2A, dispatch_deps);

  // Expert partials on every MoE TP member.
  std::vector<std::vector<Mat>> back(at(d), std::vector<Mat>(at(d)));
  std::vector<std::vector<std::int64_t>> compute_id(at(d), std::vector<std::int64_t>(at(d), -1));
  for (int r = 0; r < d; ++r) {
    const std::int64_t u = (r / l.stride_tp_m) % l.tp_m;
    for (int src = 0; src < d; ++src) {
      const auto& rows = meta[at(src)][at(r)];
      std::vector<RoutedRow> plain;
      for (const auto& mrow : rows) plain.push_back(mrow.row);
      back[at(r)][at(src)] = expert_partials(experts, plain, recv[at(r)][at(src)], u, l.tp_m);
      const std::int64_t ready = src == r ? route_id[at(r)] : dispatch_recv[at(r)][at(src)];
      if (rows.empty()) {
        compute_id[at(r)][at(src)] = ready;
        continue;
      }
      compute_id[at(r)][at(src)] =
          trace.add(r, TraceOp::ExpertCompute, Lane::Compute, stage::kExpert, {}, 0.0, {ready}, -1,
                    expert_work(experts, static_cast<std::int64_t>(rows.size()), u, l.tp_m));
    }
  }

  const auto returned = ref_all_to_all_pairwise(back);
  const auto combine_recv = exchange_trace(back, stage::kCombineA2A, compute_id);

  // Owners weight and sum the returned partials; rows they do not own stay
  // zero until the attention TP all-reduce.
  std::vector<Mat> partial_y(at(d));
  std::vector<std::int64_t> lr_id(at(d));
  for (int r = 0; r < d; ++r) {
    const std::int64_t g = (r / l.stride_dp) % l.dp;
    const std::int64_t offset = tok_off[at(g)];
    Mat y = Mat::Zero(tok_off[at(g) + 1] - offset, h);
    std::vector<std::int64_t> deps;
    double work = 0.0;
    for (int src = 0; src < d; ++src) {
      const auto& rows = meta[at(r)][at(src)];
      const Mat& z = returned[at(r)][at(src)];
      for (std::size_t j = 0; j < rows.size(); ++j) {
        const double w = router.route(rows[j].row.token).weights[at(rows[j].row.slot)];
        y.row(static_cast<Eigen::Index>(rows[j].row.token - offset)) +=
            w * z.row(static_cast<Eigen::Index>(j));
      }
      work += static_cast<double>(z.size());
      deps.push_back(src == r ? compute_id[at(r)][at(r)] : combine_recv[at(r)][at(src)]);
    }
    partial_y[at(r)] = std::move(y);
    lr_id[at(r)] = trace.add(r, TraceOp::LocalReduce, Lane::Compute, stage::kWeighting, {}, 0.0,
                             std::move(deps), -1, work);
  }

  result.y = Mat(x.rows(), h);
  for (std::int64_t g = 0; g < l.dp; ++g) {
    std::vector<int> group;
    for (std::int64_t a = 0; a < l.tp_a; ++a) group.push_back(l.attn_rank(a, g));
    std::vector<Mat> inputs;
    for (int r : group) inputs.push_back(partial_y[at(r)]);
    const auto shards = ref_reduce_scatter(inputs);
    const auto full = ref_all_gather(shards);
    const Lane lane = node_of(group.front()) == node_of(group.back()) ? Lane::Intra : Lane::Inter;
    const std::int64_t rs_coll = trace.new_collective();
    std::vector<std::int64_t> rs_id;
    for (std::size_t j = 0; j < group.size(); ++j) {
      rs_id.push_back(trace.add(group[j], TraceOp::ReduceScatter, lane, stage::kFinal, group,
                                static_cast<double>(shards[j].size()) * bpv, {lr_id[at(group[j])]},
                                rs_coll));
    }
    const std::int64_t ag_coll = trace.new_collective();
    for (std::size_t j = 0; j < group.size(); ++j) {
      trace.add(group[j], TraceOp::AllGather, lane, stage::kFinal, group,
                static_cast<double>(shards[j].size()) * bpv, {rs_id[j]}, ag_coll);
    }
    result.y.middleRows(tok_off[at(g)], tok_off[at(g) + 1] - tok_off[at(g)]) = full[0];
  }
  return result;
}

}  // namespace

bool is_fused_layout(const ParallelStrategy& s, const ClusterConfig& cluster) {
  if (s.d_pp != 1) return false;
  if (s.attn_tp() != cluster.n_proc || s.moe_tp() != cluster.n_proc) return false;
  if (s.d_dp() != cluster.n_node || s.d_ep() != cluster.n_node) return false;
  if (cluster.n_proc > 1) {
    if (group_layout(s, BlockKind::Attention, ParallelKind::TP, cluster).stride != 1) return false;
    if (group_layout(s, BlockKind::MoE, ParallelKind::TP, cluster).stride != 1) return false;
  }
  return true;
}

MoeBlockResult run_moe_block(const ClusterConfig& cluster, const ParallelStrategy& s, const Mat& x,
                             const Router& router, const ExpertSpec& experts,
                             const MoeBlockOptions& options) {
  check_inputs(x, router, experts);
  validate_against(s, cluster);
  if (options.mode == SimMode::Fused) {
    if (!is_fused_layout(s, cluster)) {
      throw SimulationError(
          "fused mode needs TP=" + std::to_string(cluster.n_proc) +
          " + DP=" + std::to_string(cluster.n_node) + ", TP=" + std::to_string(cluster.n_proc) +
          " + EP=" + std::to_string(cluster.n_node) + "; got " + format_strategy(s));
    }
    return run_fused(cluster, x, router, experts, options);
  }
  return run_baseline(cluster, s, x, router, experts, options);
}

}  // namespace mixplan
