// Copyright 2026 The mixplan Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <tuple>
#include <vector>

#include "mixplan/config.hpp"

namespace mixplan {

enum class ParallelKind { TP, EP, DP };
enum class Scope { Intra, Inter, Flat };
enum class BlockKind { Attention, MoE };

std::string_view to_string(ParallelKind kind);
std::string_view to_string(Scope scope);

/// One `P=d` term. Components listed first are laid out on the fastest
/// varying rank index, so the first term of "TP=4 + DP=8" is intra-node.
struct BlockParallel {
  ParallelKind kind = ParallelKind::TP;
  std::int64_t degree = 1;
  Scope scope = Scope::Flat;  // derived by assign_scopes

  bool operator==(const BlockParallel& o) const { return kind == o.kind && degree == o.degree; }
};

struct ParallelStrategy {
  std::vector<BlockParallel> attention;  // TP and/or DP
  std::vector<BlockParallel> moe;        // TP and/or EP
  std::int64_t d_pp = 1;

  std::int64_t degree(BlockKind block, ParallelKind kind) const;
  std::int64_t attn_tp() const { return degree(BlockKind::Attention, ParallelKind::TP); }
  std::int64_t moe_tp() const { return degree(BlockKind::MoE, ParallelKind::TP); }
  std::int64_t d_dp() const { return degree(BlockKind::Attention, ParallelKind::DP); }
  std::int64_t d_ep() const { return degree(BlockKind::MoE, ParallelKind::EP); }
  /// The TP degree entering the compute-latency formula: the attention TP,
  /// which is the headline TP of the notation ("TP=4 + DP=8, ...").
  std::int64_t d_tp() const { return attn_tp(); }
  std::int64_t devices_per_stage() const { return attn_tp() * d_dp(); }
  std::int64_t total_devices() const { return devices_per_stage() * d_pp; }

  /// Lexicographic ordering key (d_pp, d_TP, d_EP, d_DP).
  std::tuple<std::int64_t, std::int64_t, std::int64_t, std::int64_t> order_key() const {
    return {d_pp, d_tp(), d_ep(), d_dp()};
  }

  bool operator==(const ParallelStrategy& o) const {
    return attention == o.attention && moe == o.moe && d_pp == o.d_pp;
  }
};

bool strategy_less(const ParallelStrategy& a, const ParallelStrategy& b);

/// Grammar: `<attn-spec>, <moe-spec> [PP=n]` or `<spec> [PP=n]`, each spec
/// being `P=d` or `P=d + P=d`. A single TP-only spec applies to both blocks.
/// Throws ParseError on grammar violations and non power-of-two degrees.
ParallelStrategy parse_strategy(std::string_view text);

/// Also checks the degree products against the cluster and derives scopes.
ParallelStrategy parse_strategy(std::string_view text, const ClusterConfig& cluster);

std::string format_strategy(const ParallelStrategy& s);

/// Throws ValidationError when per-block degree products differ from
/// n_node * n_proc / d_pp.
void validate_against(const ParallelStrategy& s, const ClusterConfig& cluster);

/// Fills BlockParallel::scope from the rank layout on `cluster`.
void assign_scopes(ParallelStrategy& s, const ClusterConfig& cluster);

/// Communication group of all components of `kind` within `block`.
struct GroupLayout {
  std::int64_t size = 1;
  std::int64_t stride = 1;  // rank distance between consecutive members
  Scope scope = Scope::Intra;
};

GroupLayout group_layout(const ParallelStrategy& s, BlockKind block, ParallelKind kind,
                         const ClusterConfig& cluster);

/// Scope of point-to-point transfers between pipeline stages.
Scope pipeline_scope(const ParallelStrategy& s, const ClusterConfig& cluster);

/// All grammar-legal strategies with power-of-two degrees whose per-block
/// degree products equal n_node * n_proc / d_pp, for power-of-two d_pp
/// dividing both the device count and the layer count. Sorted by order_key.
std::vector<ParallelStrategy> enumerate_strategies(const ClusterConfig& cluster,
                                                   const ModelHyperparams& model);

/// Builds the canonical strategy from degrees (TP listed before DP / EP).
ParallelStrategy make_strategy(std::int64_t attn_tp, std::int64_t dp, std::int64_t moe_tp,
                               std::int64_t ep, std::int64_t pp = 1);

struct MemoryVerdict {
  bool feasible = false;
  double required_bytes = 0.0;
};

/// bytes_per_element * (psi_attn / tp_attn + psi_moe / (ep * tp_moe)
///                      + 2 b s h l / d_pp), feasible iff < mem_per_device.
MemoryVerdict check_memory(const ParallelStrategy& s, const ModelHyperparams& model,
                           const ClusterConfig& cluster, const WorkloadSpec& workload);

enum class DpEpRelation { Equal, DpGreater, DpLess };
std::string_view to_string(DpEpRelation c);

struct DpEpCase {
  DpEpRelation relation = DpEpRelation::Equal;
  std::int64_t num_parallel_groups = 1;
  std::int64_t group_size = 1;
  double redundancy_factor = 1.0;
};

/// Throws ValidationError when the degrees do not divide one another.
DpEpCase classify_dp_ep(std::int64_t d_dp, std::int64_t d_ep);
DpEpCase classify_dp_ep(const ParallelStrategy& s);

}  // namespace mixplan
