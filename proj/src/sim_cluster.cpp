// Copyright 2026 The mixplan Authors.
// SPDX-License-Identifier: Apache-2.0

#include "mixplan/sim_cluster.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <string>

#include "mixplan/error.hpp"

namespace mixplan {

SimCluster::SimCluster(int n_node, int n_proc) : n_node_(n_node), n_proc_(n_proc) {
  if (n_node < 1 || n_proc < 1) {
    throw SimulationError("cluster needs at least one node and one device per node");
  }
  for (int r = 0; r < n_node * n_proc; ++r) {
    ranks_.push_back(SimRank{r, r / n_proc, r % n_proc});
  }
}

std::vector<int> SimCluster::node_group(int node) const {
  std::vector<int> g(static_cast<std::size_t>(n_proc_));
  std::iota(g.begin(), g.end(), node * n_proc_);
  return g;
}

void SimCluster::isend(int src, int dst, int tag, Mat payload) {
  mail_[{src, dst}].emplace_back(tag, std::move(payload));
}

Mat SimCluster::irecv(int dst, int src, int tag) {
  auto it = mail_.find({src, dst});
  if (it == mail_.end() || it->second.empty()) {
    throw SimulationError("irecv: rank " + std::to_string(dst) + " has no message from " +
                          std::to_string(src));
  }
  auto& queue = it->second;
  if (queue.front().first != tag) {
    throw SimulationError("irecv: rank " + std::to_string(dst) + " expected tag " +
                          std::to_string(tag) + " from " + std::to_string(src) + ", found " +
                          std::to_string(queue.front().first));
  }
  Mat out = std::move(queue.front().second);
  queue.pop_front();
  return out;
}

std::size_t SimCluster::pending() const {
  std::size_t n = 0;
  for (const auto& [key, q] : mail_) n += q.size();
  return n;
}

SimCluster build_cluster(int n_node, int n_proc) { return SimCluster(n_node, n_proc); }

Router::Router(int num_experts, std::vector<TokenRoute> table)
    : num_experts_(num_experts), table_(std::move(table)) {
  for (std::size_t t = 0; t < table_.size(); ++t) {
    const auto& r = table_[t];
    if (r.experts.size() != r.weights.size()) {
      throw SimulationError("router: token " + std::to_string(t) +
                            " has mismatched expert and weight counts");
    }
    auto sorted = r.experts;
    std::sort(sorted.begin(), sorted.end());
    if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) {
      throw SimulationError("router: token " + std::to_string(t) + " repeats an expert");
    }
    for (int e : r.experts) {
      if (e < 0 || e >= num_experts_) {
        throw SimulationError("router: token " + std::to_string(t) + " expert " +
                              std::to_string(e) + " out of range");
      }
    }
    for (double w : r.weights) {
      if (w < 0) throw SimulationError("router: negative weight");
    }
  }
}

namespace {

std::vector<double> ramp_weights(int k) {
  std::vector<double> w(static_cast<std::size_t>(k));
  const double total = k * (k + 1) / 2.0;
  for (int i = 0; i < k; ++i) w[static_cast<std::size_t>(i)] = (i + 1) / total;
  return w;
}

void require_top_k(int num_experts, int top_k) {
  if (top_k < 1 || top_k > num_experts) {
    throw SimulationError("router: top_k must be in [1, num_experts]");
  }
}

}  // namespace

Router Router::round_robin(int num_experts, int top_k, int num_tokens) {
  require_top_k(num_experts, top_k);
  std::vector<TokenRoute> table(static_cast<std::size_t>(num_tokens));
  for (int t = 0; t < num_tokens; ++t) {
    auto& r = table[static_cast<std::size_t>(t)];
    for (int i = 0; i < top_k; ++i) r.experts.push_back((t + i) % num_experts);
    r.weights = ramp_weights(top_k);
  }
  return Router(num_experts, std::move(table));
}

Router Router::skewed(int num_experts, int top_k, int num_tokens) {
  require_top_k(num_experts, top_k);
  std::vector<TokenRoute> table(static_cast<std::size_t>(num_tokens));
  for (auto& r : table) {
    for (int i = 0; i < top_k; ++i) r.experts.push_back(i);
    r.weights = ramp_weights(top_k);
  }
  return Router(num_experts, std::move(table));
}

Router Router::seeded(int num_experts, int top_k, int num_tokens, std::uint64_t seed) {
  require_top_k(num_experts, top_k);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> weight(0.1, 1.0);
  std::vector<int> ids(static_cast<std::size_t>(num_experts));
  std::vector<TokenRoute> table(static_cast<std::size_t>(num_tokens));
  for (auto& r : table) {
    std::iota(ids.begin(), ids.end(), 0);
    std::shuffle(ids.begin(), ids.end(), rng);
    r.experts.assign(ids.begin(), ids.begin() + top_k);
    double total = 0.0;
    for (int i = 0; i < top_k; ++i) {
      r.weights.push_back(weight(rng));
      total += r.weights.back();
    }
    for (double& w : r.weights) w /= total;
  }
  return Router(num_experts, std::move(table));
}

const TokenRoute& Router::route(std::int64_t token) const {
  if (token < 0 || token >= num_tokens()) {
    throw SimulationError("router: token " + std::to_string(token) + " not covered");
  }
  return table_[static_cast<std::size_t>(token)];
}

int Router::top_k() const {
  return table_.empty() ? 0 : static_cast<int>(table_[0].experts.size());
}

Router Router::permuted(const std::vector<int>& perm) const {
  auto table = table_;
  for (auto& r : table) {
    for (int& e : r.experts) e = perm.at(static_cast<std::size_t>(e));
  }
  return Router(num_experts_, std::move(table));
}

ExpertSpec ExpertSpec::affine(int num_experts, std::int64_t hidden) {
  ExpertSpec spec;
  for (int e = 0; e < num_experts; ++e) {
    Expert x;
    x.w1 = Eigen::MatrixXd::Identity(hidden, hidden);
    x.w2 = Eigen::MatrixXd::Identity(hidden, hidden) * static_cast<double>(e + 1);
    x.b = Eigen::VectorXd::Constant(hidden, static_cast<double>(e));
    spec.experts.push_back(std::move(x));
  }
  return spec;
}

ExpertSpec ExpertSpec::seeded(int num_experts, std::int64_t hidden, std::int64_t ffn,
                              std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.5, 1.5);
  auto fill = [&](Eigen::Index rows, Eigen::Index cols, double scale) {
    Eigen::MatrixXd m(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i) {
      for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = u(rng) * scale;
    }
    return m;
  };
  ExpertSpec spec;
  for (int e = 0; e < num_experts; ++e) {
    Expert x;
    x.w1 = fill(ffn, hidden, 1.0 / std::sqrt(static_cast<double>(hidden)));
    x.w2 = fill(hidden, ffn, 1.0 / std::sqrt(static_cast<double>(ffn)));
    x.b = fill(hidden, 1, 1.0).col(0);
    spec.experts.push_back(std::move(x));
  }
  return spec;
}

Mat ExpertSpec::apply(int e, const Mat& x) const {
  const auto& ex = experts.at(static_cast<std::size_t>(e));
  Mat y = (x * ex.w1.transpose()) * ex.w2.transpose();
  y.rowwise() += ex.b.transpose();
  return y;
}

Mat ExpertSpec::apply_partial(int e, const Mat& x, std::int64_t part, std::int64_t parts) const {
  const auto& ex = experts.at(static_cast<std::size_t>(e));
  const auto off = split_offsets(ex.w1.rows(), parts);
  const auto p = static_cast<std::size_t>(part);
  const Eigen::Index begin = off[p];
  const Eigen::Index len = off[p + 1] - off[p];
  Mat y = (x * ex.w1.middleRows(begin, len).transpose()) * ex.w2.middleCols(begin, len).transpose();
  if (part == 0) y.rowwise() += ex.b.transpose();
  return y;
}

ExpertSpec ExpertSpec::permuted(const std::vector<int>& perm) const {
  ExpertSpec out;
  out.experts.resize(experts.size());
  for (std::size_t e = 0; e < experts.size(); ++e) {
    out.experts.at(static_cast<std::size_t>(perm.at(e))) = experts[e];
  }
  return out;
}

Mat moe_oracle(const Mat& x, const Router& router, const ExpertSpec& experts) {
  Mat y = Mat::Zero(x.rows(), x.cols());
  for (Eigen::Index t = 0; t < x.rows(); ++t) {
    const auto& r = router.route(t);
    std::vector<std::size_t> order(r.experts.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return r.experts[a] < r.experts[b]; });
    const Mat row = x.row(t);
    for (std::size_t i : order) {
      y.row(t) += r.weights[i] * experts.apply(r.experts[i], row);
    }
  }
  return y;
}

std::int64_t RoutingPlan::rows_into(int dst) const {
  std::int64_t n = 0;
  for (int src = 0; src < groups; ++src) n += static_cast<std::int64_t>(block(src, dst).size());
  return n;
}

RoutingPlan build_routing_plan(const Router& router, std::int64_t num_tokens, int groups) {
  if (groups < 1) throw SimulationError("routing plan needs at least one group");
  RoutingPlan plan;
  plan.groups = groups;
  plan.token_offsets = split_offsets(num_tokens, groups);
  plan.blocks.assign(static_cast<std::size_t>(groups),
                     std::vector<std::vector<RoutedRow>>(static_cast<std::size_t>(groups)));
  for (int src = 0; src < groups; ++src) {
    for (std::int64_t t = plan.token_offsets[static_cast<std::size_t>(src)];
         t < plan.token_offsets[static_cast<std::size_t>(src) + 1]; ++t) {
      const auto& r = router.route(t);
      for (std::size_t slot = 0; slot < r.experts.size(); ++slot) {
        const int e = r.experts[slot];
        plan.blocks[static_cast<std::size_t>(src)][static_cast<std::size_t>(e % groups)].push_back(
            RoutedRow{t, static_cast<int>(slot), e});
      }
    }
  }
  return plan;
}

Mat seeded_input(std::int64_t tokens, std::int64_t hidden, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.5, 1.5);
  Mat x(tokens, hidden);
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    for (Eigen::Index j = 0; j < x.cols(); ++j) x(i, j) = u(rng);
  }
  return x;
}

}  // namespace mixplan
