// Copyright 2026 The mixplan Authors.
// SPDX-License-Identifier: Apache-2.0

#include "mixplan/fused.hpp"

#include <string>

#include "mixplan/collectives.hpp"
#include "mixplan/error.hpp"

namespace mixplan {

namespace {

std::size_t at(int i) { return static_cast<std::size_t>(i); }

int mod(int a, int b) { return ((a % b) + b) % b; }

// Rows of `x` (local token indices relative to `offset`) picked by `rows`,
// restricted to columns [col, col + width).
Mat gather_rows(const Mat& x, const std::vector<RoutedRow>& rows, std::int64_t offset,
                Eigen::Index col, Eigen::Index width) {
  Mat out(static_cast<Eigen::Index>(rows.size()), width);
  for (std::size_t j = 0; j < rows.size(); ++j) {
    out.row(static_cast<Eigen::Index>(j)) =
        x.row(static_cast<Eigen::Index>(rows[j].token - offset)).segment(col, width);
  }
  return out;
}

}  // namespace

DispatchOutput fused_ag_dispatch(SimCluster& cluster, const std::vector<Mat>& inputs,
                                 const RoutingPlan& plan, int top_k, TraceBuilder& trace,
                                 const FusedOptions& options,
                                 const std::vector<std::vector<std::int64_t>>& upstream) {
  const int n = cluster.n_node();
  const int m = cluster.n_proc();
  const int world = cluster.size();
  if (plan.groups != n) throw SimulationError("dispatch: routing plan groups != n_node");
  if (static_cast<int>(inputs.size()) != world) {
    throw SimulationError("dispatch: expected one input per rank");
  }
  const Eigen::Index h = inputs[0].cols();
  const auto col_off = split_offsets(h, m);
  for (int r = 0; r < world; ++r) {
    const int q = cluster.rank(r).node;
    if (inputs[at(r)].rows() != plan.tokens_in(q) || inputs[at(r)].cols() != h) {
      throw SimulationError("dispatch: rank " + std::to_string(r) +
                            " input shape does not match its token shard");
    }
  }
  if (options.capacity_rows) {
    for (int p = 0; p < n; ++p) {
      if (plan.rows_into(p) > *options.capacity_rows) {
        throw CapacityError("dispatch: node " + std::to_string(p) + " receives " +
                            std::to_string(plan.rows_into(p)) + " rows, capacity is " +
                            std::to_string(*options.capacity_rows));
      }
    }
  }

  DispatchOutput out;
  out.blocks.assign(at(world), std::vector<Mat>(at(n)));
  out.ready.assign(at(world), std::vector<std::int64_t>(at(n), -1));

  // Expert map on the local TP rank, then the hidden slice per destination.
  std::vector<std::int64_t> route_id(at(world));
  std::vector<std::vector<Mat>> slices(at(world), std::vector<Mat>(at(n)));
  for (int r = 0; r < world; ++r) {
    const int q = cluster.rank(r).node;
    const int t = cluster.rank(r).tp_rank;
    const std::int64_t offset = plan.token_offsets[at(q)];
    for (int p = 0; p < n; ++p) {
      slices[at(r)][at(p)] = gather_rows(inputs[at(r)], plan.block(q, p), offset, col_off[at(t)],
                                         col_off[at(t) + 1] - col_off[at(t)]);
    }
    out.blocks[at(r)][at(q)] = gather_rows(inputs[at(r)], plan.block(q, q), offset, 0, h);
    std::vector<std::int64_t> deps =
        upstream.empty() ? std::vector<std::int64_t>{} : upstream[at(r)];
    route_id[at(r)] =
        trace.add(r, TraceOp::Route, Lane::Compute, stage::kRoute, {}, 0.0, std::move(deps), -1,
                  static_cast<double>(plan.tokens_in(q) * top_k));
    out.ready[at(r)][at(q)] = route_id[at(r)];
  }

  std::vector<std::vector<Mat>> received(at(world), std::vector<Mat>(at(n)));
  std::vector<std::vector<std::int64_t>> recv_id(at(world), std::vector<std::int64_t>(at(n)));
  for (int i = 1; i < n; ++i) {
    std::vector<std::int64_t> send_id(at(world));
    for (int r = 0; r < world; ++r) {
      const int q = cluster.rank(r).node;
      const int to = mod(r + i * m, world);
      const Mat& block = slices[at(r)][at(mod(q + i, n))];
      send_id[at(r)] =
          trace.add(r, TraceOp::Isend, Lane::Inter, stage::kDispatchA2A, {to},
                    static_cast<double>(block.size()) * options.bytes_per_value, {route_id[at(r)]});
      cluster.isend(r, to, i, block);
    }
    for (int r = 0; r < world; ++r) {
      const int q = cluster.rank(r).node;
      const int from = mod(r - i * m, world);
      const int src = mod(q - i, n);
      Mat block = cluster.irecv(r, from, i);
      recv_id[at(r)][at(src)] = trace.add(
          r, TraceOp::Irecv, Lane::Inter, stage::kDispatchA2A, {from},
          static_cast<double>(block.size()) * options.bytes_per_value, {send_id[at(from)]});
      received[at(r)][at(src)] = std::move(block);
    }
  }

  // One all-gather per received block reassembles the hidden dimension.
  for (int i = 1; i < n; ++i) {
    for (int q = 0; q < n; ++q) {
      const int src = mod(q - i, n);
      const auto group = cluster.node_group(q);
      std::vector<Mat> shards;
      for (int r : group) shards.push_back(received[at(r)][at(src)]);
      const auto full = ref_all_gather(shards);
      const std::int64_t coll = trace.new_collective();
      for (std::size_t j = 0; j < group.size(); ++j) {
        const int r = group[j];
        out.blocks[at(r)][at(src)] = full[j];
        out.ready[at(r)][at(src)] =
            trace.add(r, TraceOp::AllGather, Lane::Intra, stage::kDispatchAG, group,
                      static_cast<double>(shards[j].size()) * options.bytes_per_value,
                      {recv_id[at(r)][at(src)]}, coll);
      }
    }
  }
  return out;
}

CombineOutput fused_rs_combine(SimCluster& cluster, const std::vector<std::vector<Mat>>& partials,
                               const RoutingPlan& plan, const Router& router, TraceBuilder& trace,
                               const FusedOptions& options,
                               const std::vector<std::vector<std::int64_t>>& ready) {
  const int n = cluster.n_node();
  const int m = cluster.n_proc();
  const int world = cluster.size();
  if (plan.groups != n) throw SimulationError("combine: routing plan groups != n_node");
  if (static_cast<int>(partials.size()) != world) {
    throw SimulationError("combine: expected partial outputs for every rank");
  }
  Eigen::Index h = -1;
  for (int r = 0; r < world; ++r) {
    const int p = cluster.rank(r).node;
    if (static_cast<int>(partials[at(r)].size()) != n) {
      throw SimulationError("combine: rank " + std::to_string(r) +
                            " needs one partial block per source node");
    }
    for (int q = 0; q < n; ++q) {
      const Mat& z = partials[at(r)][at(q)];
      if (z.rows() != static_cast<Eigen::Index>(plan.block(q, p).size())) {
        throw SimulationError("combine: rank " + std::to_string(r) + " block " + std::to_string(q) +
                              " row count mismatch");
      }
      if (z.rows() > 0 || h < 0) h = std::max<Eigen::Index>(h, z.cols());
    }
  }
  if (h < 0) h = 0;
  const auto col_off = split_offsets(h, m);
  auto width = [&](int t) { return col_off[at(t) + 1] - col_off[at(t)]; };

  CombineOutput out;
  out.outputs.resize(at(world));
  out.done.assign(at(world), -1);
  out.peak_staged_values.assign(at(world), 0);

  // staged[rank][i]: reduced slice for this rank's tokens, S_{i+1}.
  std::vector<std::vector<Mat>> staged(at(world), std::vector<Mat>(at(n)));
  std::vector<std::vector<std::int64_t>> staged_id(at(world), std::vector<std::int64_t>(at(n)));
  std::vector<std::vector<Mat>> outgoing(at(world), std::vector<Mat>(at(n)));
  std::vector<std::int64_t> last_rs(at(world), -1);

  // Reduce-scatter per destination block, in round order.
  std::vector<std::vector<std::int64_t>> rs_id(at(world), std::vector<std::int64_t>(at(n)));
  for (int i = 0; i < n; ++i) {
    for (int p = 0; p < n; ++p) {
      const int q = mod(p + i, n);  // owner of the tokens in this block
      const auto group = cluster.node_group(p);
      std::vector<Mat> inputs;
      for (int r : group) {
        Mat z = partials[at(r)][at(q)];
        if (z.rows() == 0) z.resize(0, h);
        inputs.push_back(std::move(z));
      }
      const auto shards = ref_reduce_scatter(inputs);
      const std::int64_t coll = trace.new_collective();
      for (std::size_t j = 0; j < group.size(); ++j) {
        const int r = group[j];
        std::vector<std::int64_t> deps;
        if (last_rs[at(r)] >= 0) deps.push_back(last_rs[at(r)]);
        if (!ready.empty() && ready[at(r)][at(q)] >= 0) deps.push_back(ready[at(r)][at(q)]);
        const double bytes = static_cast<double>(shards[j].size()) * options.bytes_per_value;
        rs_id[at(r)][at(i)] = trace.add(r, TraceOp::ReduceScatter, Lane::Intra, stage::kCombineRS,
                                        group, bytes, std::move(deps), coll);
        last_rs[at(r)] = rs_id[at(r)][at(i)];
        if (i == 0) {
          staged[at(r)][0] = shards[j];
          staged_id[at(r)][0] = rs_id[at(r)][0];
        } else {
          outgoing[at(r)][at(i)] = shards[j];
        }
      }
    }
  }

  for (int i = 1; i < n; ++i) {
    std::vector<std::int64_t> send_id(at(world));
    for (int r = 0; r < world; ++r) {
      const int to = mod(r + i * m, world);
      const Mat& block = outgoing[at(r)][at(i)];
      send_id[at(r)] = trace.add(r, TraceOp::Isend, Lane::Inter, stage::kCombineA2A, {to},
                                 static_cast<double>(block.size()) * options.bytes_per_value,
                                 {rs_id[at(r)][at(i)]});
      cluster.isend(r, to, n + i, block);
    }
    for (int r = 0; r < world; ++r) {
      const int from = mod(r - i * m, world);
      Mat block = cluster.irecv(r, from, n + i);
      staged_id[at(r)][at(i)] = trace.add(
          r, TraceOp::Irecv, Lane::Inter, stage::kCombineA2A, {from},
          static_cast<double>(block.size()) * options.bytes_per_value, {send_id[at(from)]});
      staged[at(r)][at(i)] = std::move(block);
    }
  }

  // Weighted accumulation of every staged slice into Y_t.
  std::vector<std::int64_t> last_lr(at(world), -1);
  for (int r = 0; r < world; ++r) {
    const int p = cluster.rank(r).node;
    out.outputs[at(r)] = Mat::Zero(plan.tokens_in(p), width(cluster.rank(r).tp_rank));
    std::int64_t staged_values = 0;
    for (int i = 0; i < n; ++i) staged_values += staged[at(r)][at(i)].size();
    out.peak_staged_values[at(r)] = staged_values;
  }
  for (int i = 0; i < n; ++i) {
    for (int r = 0; r < world; ++r) {
      const int p = cluster.rank(r).node;
      const int src = mod(p - i, n);  // node that computed this slice
      const auto& rows = plan.block(p, src);
      const Mat& s = staged[at(r)][at(i)];
      Mat& y = out.outputs[at(r)];
      const std::int64_t offset = plan.token_offsets[at(p)];
      for (std::size_t j = 0; j < rows.size(); ++j) {
        const double w = router.route(rows[j].token).weights[at(rows[j].slot)];
        y.row(static_cast<Eigen::Index>(rows[j].token - offset)) +=
            w * s.row(static_cast<Eigen::Index>(j));
      }
      std::vector<std::int64_t> deps = {staged_id[at(r)][at(i)]};
      if (last_lr[at(r)] >= 0) deps.push_back(last_lr[at(r)]);
      last_lr[at(r)] = trace.add(r, TraceOp::LocalReduce, Lane::Compute, stage::kWeighting, {}, 0.0,
                                 std::move(deps), -1, static_cast<double>(s.size()));
    }
  }

  for (int p = 0; p < n; ++p) {
    const auto group = cluster.node_group(p);
    std::vector<Mat> shards;
    for (int r : group) shards.push_back(out.outputs[at(r)]);
    const auto full = ref_all_gather(shards);
    const std::int64_t coll = trace.new_collective();
    for (std::size_t j = 0; j < group.size(); ++j) {
      const int r = group[j];
      out.done[at(r)] = trace.add(r, TraceOp::AllGather, Lane::Intra, stage::kFinal, group,
                                  static_cast<double>(shards[j].size()) * options.bytes_per_value,
                                  {last_lr[at(r)]}, coll);
    }
    for (std::size_t j = 0; j < group.size(); ++j) out.outputs[at(group[j])] = full[j];
  }
  if (cluster.pending() != 0) throw SimulationError("combine: undelivered messages");
  return out;
}

}  // namespace mixplan
