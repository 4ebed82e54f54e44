// Copyright 2026 The mixplan Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <optional>
#include <string_view>
#include <vector>

#include "mixplan/config.hpp"
#include "mixplan/fused.hpp"
#include "mixplan/sim_cluster.hpp"
#include "mixplan/strategy.hpp"
#include "mixplan/trace.hpp"

namespace mixplan {

enum class SimMode { Fused, Baseline };

std::string_view to_string(SimMode mode);

struct MoeBlockOptions {
  SimMode mode = SimMode::Fused;
  double bytes_per_value = 8.0;
  std::optional<std::int64_t> capacity_rows;
};

struct MoeBlockResult {
  Mat y;
  Trace trace;
  std::vector<std::int64_t> peak_staged_values;  // fused mode only
  std::int64_t dispatched_rows = 0;              // rows sent to expert owners
};

/// True when attention is TP = n_proc + DP = n_node and MoE is
/// TP = n_proc + EP = n_node with TP on the intra-node index and no pipeline.
bool is_fused_layout(const ParallelStrategy& s, const ClusterConfig& cluster);

/// Runs one MoE block for the tokens in `x` on the simulated cluster.
///
/// Fused mode composes AG-Dispatch, expert compute and RS-Combine and needs
/// the fused layout. Baseline mode accepts any strategy: each token is owned
/// by one attention TP rank of its DP group, a pairwise all-to-all over the
/// stage's ranks carries it to every TP member of the owning MoE group, the
/// partial outputs return the same way, and an all-reduce over the attention
/// TP group completes the rows. With d_pp > 1 one pipeline stage runs.
MoeBlockResult run_moe_block(const ClusterConfig& cluster, const ParallelStrategy& s, const Mat& x,
                             const Router& router, const ExpertSpec& experts,
                             const MoeBlockOptions& options = {});

}  // namespace mixplan
