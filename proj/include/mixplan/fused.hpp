// Copyright 2026 The mixplan Authors.
// SPDX-License-Identifier: Apache-2.0

// Fused communication for the hybrid layout: attention TP = n_proc within a
// node and DP = n_node across nodes, MoE TP = n_proc within a node and
// EP = n_node across nodes. Node q owns token shard q, replicated on its
// n_proc ranks, and hosts the experts e with e mod n_node == q.

#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "mixplan/sim_cluster.hpp"
#include "mixplan/trace.hpp"

namespace mixplan {

struct FusedOptions {
  double bytes_per_value = 8.0;
  /// Maximum dispatched rows a rank may receive; unlimited when empty.
  std::optional<std::int64_t> capacity_rows;
};

struct DispatchOutput {
  /// blocks[rank][src node]: full-hidden rows of plan.block(src, node(rank)).
  std::vector<std::vector<Mat>> blocks;
  /// Event after which blocks[rank][src] is available.
  std::vector<std::vector<std::int64_t>> ready;
};

/// AG-Dispatch. Each rank routes its hidden slice, exchanges it with the
/// same TP rank of the other nodes over n_node - 1 pairwise rounds
/// (send to (r + i m) mod mn, receive from (r - i m) mod mn) and restores
/// the full hidden dimension with one intra-node all-gather per round. The
/// local block needs no communication.
///
/// "the total number of communication rounds both within and between nodes
/// is n_node - 1"; "the time complexity of the algorithm is O(n_node) and the
/// space complexity is O(1)".
///
/// `inputs[rank]` holds the token shard of the rank's node. `upstream[rank]`
/// (optional) lists events the routing step depends on.
DispatchOutput fused_ag_dispatch(SimCluster& cluster, const std::vector<Mat>& inputs,
                                 const RoutingPlan& plan, int top_k, TraceBuilder& trace,
                                 const FusedOptions& options = {},
                                 const std::vector<std::vector<std::int64_t>>& upstream = {});

struct CombineOutput {
  std::vector<Mat> outputs;        // per rank, token shard of its node, full hidden
  std::vector<std::int64_t> done;  // final all-gather event per rank
  std::vector<std::int64_t> peak_staged_values;
};

/// RS-Combine. For i = 0..n_node-1 rank (p, t) reduce-scatters, over its
/// node, the partial expert outputs for the tokens of node (p + i) mod n,
/// keeping hidden slice t. Slice 0 is staged locally; the others travel to
/// (r + i m) mod mn while the slice for node p arrives from (r - i m) mod mn.
/// Each staged slice is weighted and accumulated, and one all-gather
/// restores the full hidden dimension.
///
/// "necessitates n_node - 1 rounds of communication between nodes and n_node
/// rounds of communication within each node"; "the space complexity is
/// O(bsh * n_proc) in total".
///
/// `partials[rank][src node]` has the rows of plan.block(src, node(rank)).
/// `ready[rank][src]` (optional) lists the event producing that partial.
CombineOutput fused_rs_combine(SimCluster& cluster, const std::vector<std::vector<Mat>>& partials,
                               const RoutingPlan& plan, const Router& router, TraceBuilder& trace,
                               const FusedOptions& options = {},
                               const std::vector<std::vector<std::int64_t>>& ready = {});

}  // namespace mixplan
