// Copyright 2026 The mixplan Authors.
// SPDX-License-Identifier: Apache-2.0

#include "mixplan/fused.hpp"

#include <gtest/gtest.h>

#include <map>
#include <numeric>
#include <random>

#include "mixplan/error.hpp"
#include "mixplan/moe_block.hpp"
#include "mixplan/strategy.hpp"

namespace mixplan {
namespace {

ClusterConfig shape(int n, int m) {
  ClusterConfig c;
  c.n_node = n;
  c.n_proc = m;
  return c;
}

ParallelStrategy hybrid(int n, int m) { return make_strategy(m, n, m, n); }

struct Case {
  Router router;
  ExpertSpec experts;
  Mat x;
};

Case make_case(int experts, int k, int tokens, std::int64_t h, std::uint64_t seed) {
  return {Router::seeded(experts, k, tokens, seed), ExpertSpec::seeded(experts, h, 2 * h, seed + 1),
          seeded_input(tokens, h, seed + 2)};
}

TEST(Fused, MatchesOracleOnSmallGrid) {
  for (int n : {1, 2, 4}) {
    for (int m : {1, 2, 4}) {
      for (int k : {1, 2}) {
        const auto c = make_case(8, k, 16, 8, static_cast<std::uint64_t>(n * 100 + m * 10 + k));
        const auto r = run_moe_block(shape(n, m), hybrid(n, m), c.x, c.router, c.experts);
        EXPECT_LT(max_relative_error(r.y, moe_oracle(c.x, c.router, c.experts)), 1e-9)
            << n << "x" << m << " k=" << k;
      }
    }
  }
}

TEST(Fused, UnevenHiddenAndTokenSplits) {
  const auto c = make_case(6, 3, 7, 7, 42);
  const auto r = run_moe_block(shape(2, 4), hybrid(2, 4), c.x, c.router, c.experts);
  EXPECT_LT(max_relative_error(r.y, moe_oracle(c.x, c.router, c.experts)), 1e-9);
}

TEST(Fused, AffineExpertsMatchClosedForm) {
  const int E = 4;
  const auto router = Router::round_robin(E, 2, 8);
  const auto experts = ExpertSpec::affine(E, 4);
  Mat x = Mat::Zero(8, 4);
  for (int t = 0; t < 8; ++t) x.row(t).setConstant(t + 1.0);
  const auto r = run_moe_block(shape(2, 2), hybrid(2, 2), x, router, experts);
  for (int t = 0; t < 8; ++t) {
    const int e0 = t % E;
    const int e1 = (t + 1) % E;
    const double want =
        (1.0 / 3.0) * ((e0 + 1) * (t + 1.0) + e0) + (2.0 / 3.0) * ((e1 + 1) * (t + 1.0) + e1);
    for (int c = 0; c < 4; ++c) EXPECT_NEAR(r.y(t, c), want, 1e-13 * want);
  }
}

std::map<std::pair<int, TraceOp>, std::vector<const TraceEvent*>> by_rank_op(const Trace& t) {
  std::map<std::pair<int, TraceOp>, std::vector<const TraceEvent*>> out;
  for (const auto& e : t.events) out[{e.rank, e.op}].push_back(&e);
  return out;
}

TEST(Fused, CombineRoundCountsAndPeers) {
  for (int n : {1, 2, 4}) {
    for (int m : {1, 2, 4}) {
      const auto c = make_case(8, 2, 16, 8, 5);
      const auto r = run_moe_block(shape(n, m), hybrid(n, m), c.x, c.router, c.experts);
      const auto ops = by_rank_op(r.trace);
      const int mn = n * m;
      for (int rank = 0; rank < mn; ++rank) {
        auto count = [&](TraceOp op, int stage) {
          int k = 0;
          auto it = ops.find({rank, op});
          if (it == ops.end()) return 0;
          for (const auto* e : it->second) k += e->stage == stage;
          return k;
        };
        EXPECT_EQ(count(TraceOp::ReduceScatter, stage::kCombineRS), n);
        EXPECT_EQ(count(TraceOp::Isend, stage::kCombineA2A), n - 1);
        EXPECT_EQ(count(TraceOp::Irecv, stage::kCombineA2A), n - 1);
        EXPECT_EQ(count(TraceOp::AllGather, stage::kFinal), 1);
        EXPECT_EQ(count(TraceOp::Isend, stage::kDispatchA2A), n - 1);
        EXPECT_EQ(count(TraceOp::Irecv, stage::kDispatchA2A), n - 1);
        EXPECT_EQ(count(TraceOp::AllGather, stage::kDispatchAG), n - 1);

        for (const auto& e : r.trace.events) {
          if (e.rank != rank) continue;
          const int i = e.round + 1;
          if (e.op == TraceOp::Isend) {
            EXPECT_EQ(e.peer_or_group, std::vector<int>{(rank + i * m) % mn});
            EXPECT_EQ(e.lane, Lane::Inter);
          }
          if (e.op == TraceOp::Irecv) {
            EXPECT_EQ(e.peer_or_group, std::vector<int>{((rank - i * m) % mn + mn) % mn});
          }
          if (e.op == TraceOp::ReduceScatter || e.op == TraceOp::AllGather) {
            const int node = rank / m;
            std::vector<int> group(static_cast<std::size_t>(m));
            std::iota(group.begin(), group.end(), node * m);
            EXPECT_EQ(e.peer_or_group, group);
            EXPECT_EQ(e.lane, Lane::Intra);
          }
        }
      }
      EXPECT_NO_THROW(check_trace(r.trace));
    }
  }
}

TEST(Fused, PeersStayOnSameTpRankAndDifferentNode) {
  const int n = 4;
  const int m = 4;
  const auto c = make_case(8, 2, 16, 8, 9);
  const auto r = run_moe_block(shape(n, m), hybrid(n, m), c.x, c.router, c.experts);
  for (const auto& e : r.trace.events) {
    if (e.op != TraceOp::Isend && e.op != TraceOp::Irecv) continue;
    const int peer = e.peer_or_group.at(0);
    EXPECT_EQ(peer % m, e.rank % m);
    EXPECT_NE(peer / m, e.rank / m);
  }
}

TEST(Fused, SingleNodeHasNoInterTraffic) {
  const auto c = make_case(4, 2, 8, 8, 3);
  const auto r = run_moe_block(shape(1, 4), hybrid(1, 4), c.x, c.router, c.experts);
  for (const auto& e : r.trace.events) EXPECT_NE(e.lane, Lane::Inter);
}

TEST(Fused, CapacityExceeded) {
  const auto c = make_case(8, 2, 16, 8, 1);
  MoeBlockOptions opt;
  opt.capacity_rows = 1;
  EXPECT_THROW(run_moe_block(shape(2, 2), hybrid(2, 2), c.x, c.router, c.experts, opt),
               CapacityError);
  opt.capacity_rows = 32;
  EXPECT_NO_THROW(run_moe_block(shape(2, 2), hybrid(2, 2), c.x, c.router, c.experts, opt));
}

TEST(Fused, SkewedRouterConcentratesLoad) {
  const int T = 16;
  const auto router = Router::skewed(8, 2, T);
  const auto experts = ExpertSpec::seeded(8, 8, 8, 2);
  const Mat x = seeded_input(T, 8, 3);
  const auto r = run_moe_block(shape(4, 2), hybrid(4, 2), x, router, experts);
  EXPECT_LT(max_relative_error(r.y, moe_oracle(x, router, experts)), 1e-9);
  const auto plan = build_routing_plan(router, T, 4);
  EXPECT_EQ(plan.rows_into(0), T);
  EXPECT_EQ(plan.rows_into(1), T);
  EXPECT_EQ(plan.rows_into(2), 0);
}

TEST(Fused, ExpertPermutationSafety) {
  const auto c = make_case(8, 2, 16, 8, 12);
  std::vector<int> perm(8);
  std::iota(perm.begin(), perm.end(), 0);
  std::mt19937_64 rng(12);
  std::shuffle(perm.begin(), perm.end(), rng);
  const auto a = run_moe_block(shape(2, 2), hybrid(2, 2), c.x, c.router, c.experts);
  const auto b = run_moe_block(shape(2, 2), hybrid(2, 2), c.x, c.router.permuted(perm),
                               c.experts.permuted(perm));
  EXPECT_LT(max_relative_error(a.y, b.y), 1e-12);
}

TEST(Fused, DispatchConservesRows) {
  const auto c = make_case(8, 4, 16, 8, 21);
  const auto r = run_moe_block(shape(4, 2), hybrid(4, 2), c.x, c.router, c.experts);
  EXPECT_EQ(r.dispatched_rows, 16 * 4);
}

TEST(Fused, StagedStorageBound) {
  const int n = 4;
  const int m = 2;
  const std::int64_t h = 8;
  const int T = 16;
  const int k = 2;
  const auto c = make_case(8, k, T, h, 31);
  const auto r = run_moe_block(shape(n, m), hybrid(n, m), c.x, c.router, c.experts);
  const auto plan = build_routing_plan(c.router, T, n);
  ASSERT_EQ(r.peak_staged_values.size(), static_cast<std::size_t>(n * m));
  for (int rank = 0; rank < n * m; ++rank) {
    const std::int64_t bound = plan.tokens_in(rank / m) * k * ((h + m - 1) / m);
    EXPECT_LE(r.peak_staged_values[static_cast<std::size_t>(rank)], bound);
  }
}

TEST(Fused, DeterministicTrace) {
  const auto c = make_case(8, 2, 16, 8, 77);
  const auto a = run_moe_block(shape(2, 4), hybrid(2, 4), c.x, c.router, c.experts);
  const auto b = run_moe_block(shape(2, 4), hybrid(2, 4), c.x, c.router, c.experts);
  EXPECT_EQ(trace_to_csv(a.trace), trace_to_csv(b.trace));
  EXPECT_TRUE((a.y.array() == b.y.array()).all());
}

TEST(Fused, RejectsNonFusedLayout) {
  const auto c = make_case(8, 2, 16, 8, 1);
  EXPECT_FALSE(is_fused_layout(parse_strategy("TP=4, EP=4"), shape(2, 2)));
  EXPECT_TRUE(is_fused_layout(hybrid(2, 2), shape(2, 2)));
  EXPECT_THROW(run_moe_block(shape(2, 2), parse_strategy("TP=4, EP=4"), c.x, c.router, c.experts),
               SimulationError);
}

TEST(Fused, InputValidation) {
  const auto c = make_case(8, 2, 16, 8, 1);
  const auto wrong_h = ExpertSpec::seeded(8, 4, 4, 1);
  EXPECT_THROW(run_moe_block(shape(2, 2), hybrid(2, 2), c.x, c.router, wrong_h), SimulationError);
  const auto few = Router::seeded(8, 2, 4, 1);
  EXPECT_THROW(run_moe_block(shape(2, 2), hybrid(2, 2), c.x, few, c.experts), SimulationError);
}

TEST(Baseline, MatchesOracleForEveryStrategy) {
  const auto cluster = shape(2, 2);
  ModelHyperparams model;
  model.num_layers = 2;
  const auto c = make_case(8, 2, 12, 6, 55);
  const Mat want = moe_oracle(c.x, c.router, c.experts);
  for (const auto& s : enumerate_strategies(cluster, model)) {
    MoeBlockOptions opt;
    opt.mode = SimMode::Baseline;
    const auto r = run_moe_block(cluster, s, c.x, c.router, c.experts, opt);
    EXPECT_LT(max_relative_error(r.y, want), 1e-9) << format_strategy(s);
    EXPECT_NO_THROW(check_trace(r.trace)) << format_strategy(s);
  }
}

}  // namespace
}  // namespace mixplan
