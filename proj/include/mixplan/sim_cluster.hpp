// Copyright 2026 The mixplan Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <deque>
#include <map>
#include <utility>
#include <vector>

#include "mixplan/tensor.hpp"

namespace mixplan {

using Mat = Tensor<double>;

struct SimRank {
  int global = 0;
  int node = 0;
  int tp_rank = 0;  // global mod n_proc
};

/// n_node x n_proc ranks numbered node-major, with tagged point-to-point
/// mailboxes. Delivery is in order per (source, destination) pair.
class SimCluster {
 public:
  SimCluster(int n_node, int n_proc);

  int n_node() const { return n_node_; }
  int n_proc() const { return n_proc_; }
  int size() const { return n_node_ * n_proc_; }
  const SimRank& rank(int r) const { return ranks_.at(static_cast<std::size_t>(r)); }
  int global_rank(int node, int tp_rank) const { return node * n_proc_ + tp_rank; }
  std::vector<int> node_group(int node) const;

  void isend(int src, int dst, int tag, Mat payload);
  /// Throws SimulationError when no message with that tag is waiting.
  Mat irecv(int dst, int src, int tag);
  std::size_t pending() const;

 private:
  int n_node_;
  int n_proc_;
  std::vector<SimRank> ranks_;
  std::map<std::pair<int, int>, std::deque<std::pair<int, Mat>>> mail_;
};

SimCluster build_cluster(int n_node, int n_proc);

/// Top-k selection of one token: expert ids paired with weights.
struct TokenRoute {
  std::vector<int> experts;
  std::vector<double> weights;
};

/// Routing as a pure function of the token index, backed by a table.
class Router {
 public:
  Router(int num_experts, std::vector<TokenRoute> table);

  /// Token t picks experts (t + i) mod E for i < k with weights
  /// proportional to i + 1.
  static Router round_robin(int num_experts, int top_k, int num_tokens);
  /// Every token picks experts 0..k-1.
  static Router skewed(int num_experts, int top_k, int num_tokens);
  /// Distinct uniformly drawn experts and normalized positive weights.
  static Router seeded(int num_experts, int top_k, int num_tokens, std::uint64_t seed);

  const TokenRoute& route(std::int64_t token) const;
  int num_experts() const { return num_experts_; }
  int top_k() const;
  std::int64_t num_tokens() const { return static_cast<std::int64_t>(table_.size()); }

  /// Relabels expert e as perm[e].
  Router permuted(const std::vector<int>& perm) const;

 private:
  int num_experts_;
  std::vector<TokenRoute> table_;
};

/// Expert e maps x to W2_e (W1_e x) + b_e with W1: ffn x h, W2: h x ffn.
struct Expert {
  Eigen::MatrixXd w1;
  Eigen::MatrixXd w2;
  Eigen::VectorXd b;
};

struct ExpertSpec {
  std::vector<Expert> experts;

  int size() const { return static_cast<int>(experts.size()); }
  std::int64_t hidden() const { return experts.empty() ? 0 : experts[0].w2.rows(); }
  std::int64_t ffn() const { return experts.empty() ? 0 : experts[0].w1.rows(); }

  /// Expert_e(x) = (e + 1) x + e, realized with W1 = I, W2 = (e + 1) I.
  static ExpertSpec affine(int num_experts, std::int64_t hidden);
  /// Dense random matrices in [0.5, 1.5) scaled by 1 / sqrt(dim).
  static ExpertSpec seeded(int num_experts, std::int64_t hidden, std::int64_t ffn,
                           std::uint64_t seed);

  /// Applies expert e to each row of x.
  Mat apply(int e, const Mat& x) const;
  /// Contribution of tensor-parallel part `part` of `parts`: rows
  /// [F_part) of W1 and columns [F_part) of W2; the bias is added by part 0.
  Mat apply_partial(int e, const Mat& x, std::int64_t part, std::int64_t parts) const;

  ExpertSpec permuted(const std::vector<int>& perm) const;
};

/// Dense reference: Y[t] = sum over ascending expert id of w * Expert_e(X[t]).
Mat moe_oracle(const Mat& x, const Router& router, const ExpertSpec& experts);

/// Rows exchanged between EP groups, precomputed by the driver so that
/// receive buffers have static shapes.
struct RoutedRow {
  std::int64_t token = 0;  // global token index
  int slot = 0;            // position in the token's top-k list
  int expert = 0;
};

struct RoutingPlan {
  int groups = 1;                                           // EP groups (nodes)
  std::vector<std::int64_t> token_offsets;                  // groups + 1 entries
  std::vector<std::vector<std::vector<RoutedRow>>> blocks;  // [src][dst]

  std::int64_t tokens_in(int group) const {
    return token_offsets[static_cast<std::size_t>(group) + 1] -
           token_offsets[static_cast<std::size_t>(group)];
  }
  const std::vector<RoutedRow>& block(int src, int dst) const {
    return blocks[static_cast<std::size_t>(src)][static_cast<std::size_t>(dst)];
  }
  std::int64_t rows_into(int dst) const;
};

/// Token shards are contiguous near-equal splits; expert e lives in group
/// e mod groups. Rows are ordered by token, then slot.
RoutingPlan build_routing_plan(const Router& router, std::int64_t num_tokens, int groups);

/// Positive uniform values in [0.5, 1.5).
Mat seeded_input(std::int64_t tokens, std::int64_t hidden, std::uint64_t seed);

}  // namespace mixplan
