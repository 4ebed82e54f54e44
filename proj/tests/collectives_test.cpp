// Copyright 2026 The mixplan Authors.
// SPDX-License-Identifier: Apache-2.0

#include "mixplan/collectives.hpp"

#include <gtest/gtest.h>

#include <set>

#include "mixplan/error.hpp"
#include "mixplan/sim_cluster.hpp"

namespace mixplan {
namespace {

Mat filled(Eigen::Index rows, Eigen::Index cols, double v) { return Mat::Constant(rows, cols, v); }

TEST(Collectives, AllReduceSums) {
  std::vector<Mat> in;
  for (double v : {1.0, 2.0, 3.0, 4.0}) in.push_back(filled(2, 5, v));
  for (const auto& out : ref_all_reduce(in)) {
    ASSERT_EQ(out.rows(), 2);
    ASSERT_EQ(out.cols(), 5);
    EXPECT_TRUE((out.array() == 10.0).all());
  }
}

TEST(Collectives, ReduceScatterUnevenSlices) {
  std::vector<Mat> in(3, Mat(1, 7));
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 7; ++c) in[static_cast<std::size_t>(r)](0, c) = 10.0 * r + c;
  }
  const auto out = ref_reduce_scatter(in);
  ASSERT_EQ(out.size(), 3u);
  EXPECT_EQ(out[0].cols(), 3);
  EXPECT_EQ(out[1].cols(), 2);
  EXPECT_EQ(out[2].cols(), 2);
  EXPECT_EQ(out[0](0, 0), 30.0);
  EXPECT_EQ(out[1](0, 0), 30.0 + 3 * 3);
  EXPECT_EQ(out[2](0, 1), 30.0 + 3 * 6);
  const auto back = ref_all_gather(out);
  for (int c = 0; c < 7; ++c) EXPECT_EQ(back[1](0, c), 30.0 + 3.0 * c);
}

TEST(Collectives, ShapeMismatchThrows) {
  EXPECT_THROW(ref_reduce_scatter(std::vector<Mat>{filled(2, 4, 1), filled(3, 4, 1)}),
               SimulationError);
  EXPECT_THROW(ref_all_gather(std::vector<Mat>{filled(2, 4, 1), filled(3, 4, 1)}), SimulationError);
}

TEST(Collectives, PairwiseAllToAll) {
  const std::size_t d = 4;
  std::vector<std::vector<Mat>> send(d, std::vector<Mat>(d));
  for (std::size_t i = 0; i < d; ++i) {
    for (std::size_t j = 0; j < d; ++j) send[i][j] = filled(1, 1, 10.0 * i + j);
  }
  std::set<std::size_t> rounds;
  std::vector<std::vector<int>> peers(d, std::vector<int>(d, -1));
  const auto recv =
      ref_all_to_all_pairwise<double>(send, [&](std::size_t r, std::size_t src, std::size_t dst) {
        rounds.insert(r);
        peers[src][r] = static_cast<int>(dst);
      });
  for (std::size_t i = 0; i < d; ++i) {
    for (std::size_t j = 0; j < d; ++j) EXPECT_EQ(recv[j][i](0, 0), 10.0 * i + j);
  }
  EXPECT_EQ(rounds.size(), d - 1);
  for (std::size_t i = 0; i < d; ++i) {
    for (std::size_t r = 1; r < d; ++r) EXPECT_EQ(peers[i][r], static_cast<int>((i + r) % d));
  }
}

TEST(SimCluster, MailboxOrderingAndTags) {
  SimCluster c(2, 2);
  EXPECT_EQ(c.size(), 4);
  EXPECT_EQ(c.rank(3).node, 1);
  EXPECT_EQ(c.rank(3).tp_rank, 1);
  EXPECT_EQ(c.global_rank(1, 0), 2);
  EXPECT_EQ(c.node_group(1), (std::vector<int>{2, 3}));
  c.isend(0, 2, 5, filled(1, 1, 1.0));
  c.isend(0, 2, 5, filled(1, 1, 2.0));
  EXPECT_EQ(c.pending(), 2u);
  EXPECT_THROW(c.irecv(2, 0, 6), SimulationError);
  EXPECT_EQ(c.irecv(2, 0, 5)(0, 0), 1.0);
  EXPECT_EQ(c.irecv(2, 0, 5)(0, 0), 2.0);
  EXPECT_THROW(c.irecv(2, 0, 5), SimulationError);
  EXPECT_EQ(c.pending(), 0u);
  EXPECT_THROW(SimCluster(0, 2), SimulationError);
}

TEST(Router, RoundRobinAndSkewed) {
  const auto rr = Router::round_robin(8, 3, 5);
  EXPECT_EQ(rr.route(6 % 5).experts, (std::vector<int>{1, 2, 3}));
  EXPECT_DOUBLE_EQ(rr.route(0).weights[2], 3.0 / 6.0);
  const auto sk = Router::skewed(8, 2, 4);
  for (int t = 0; t < 4; ++t) EXPECT_EQ(sk.route(t).experts, (std::vector<int>{0, 1}));
  EXPECT_THROW(rr.route(5), SimulationError);
  EXPECT_THROW(Router::round_robin(2, 3, 1), SimulationError);
}

TEST(Router, SeededIsDeterministicAndValid) {
  const auto a = Router::seeded(16, 4, 32, 99);
  const auto b = Router::seeded(16, 4, 32, 99);
  for (int t = 0; t < 32; ++t) {
    EXPECT_EQ(a.route(t).experts, b.route(t).experts);
    EXPECT_EQ(a.route(t).weights, b.route(t).weights);
    const std::set<int> distinct(a.route(t).experts.begin(), a.route(t).experts.end());
    EXPECT_EQ(distinct.size(), 4u);
    double sum = 0.0;
    for (double w : a.route(t).weights) {
      EXPECT_GT(w, 0.0);
      sum += w;
    }
    EXPECT_NEAR(sum, 1.0, 1e-15);
  }
}

TEST(Experts, AffineClosedForm) {
  const auto spec = ExpertSpec::affine(4, 3);
  Mat x(1, 3);
  x << 1.0, 2.0, 3.0;
  const Mat y = spec.apply(2, x);
  EXPECT_EQ(y(0, 0), 3.0 * 1.0 + 2.0);
  EXPECT_EQ(y(0, 2), 3.0 * 3.0 + 2.0);
}

TEST(Experts, PartialsSumToFull) {
  const auto spec = ExpertSpec::seeded(3, 6, 10, 5);
  const Mat x = seeded_input(4, 6, 1);
  for (std::int64_t parts : {1, 2, 3, 4}) {
    Mat sum = Mat::Zero(4, 6);
    for (std::int64_t p = 0; p < parts; ++p) sum += spec.apply_partial(1, x, p, parts);
    EXPECT_LT(max_relative_error(sum, spec.apply(1, x)), 1e-13) << parts;
  }
}

TEST(Oracle, MatchesHandComputation) {
  // Expert e: (e + 1) x + e, so y = sum_i w_i ((e_i + 1) x + e_i).
  const int experts = 4;
  const auto spec = ExpertSpec::affine(experts, 2);
  const auto router = Router::round_robin(experts, 2, 3);
  Mat x(3, 2);
  x << 1, 2, 3, 4, 5, 6;
  const Mat y = moe_oracle(x, router, spec);
  for (int t = 0; t < 3; ++t) {
    for (int c = 0; c < 2; ++c) {
      double want = 0.0;
      for (int i = 0; i < 2; ++i) {
        const int e = (t + i) % experts;
        const double w = (i + 1) / 3.0;
        want += w * ((e + 1) * x(t, c) + e);
      }
      EXPECT_NEAR(y(t, c), want, 1e-14 * std::abs(want));
    }
  }
}

TEST(RoutingPlan, BlocksCoverEveryAssignment) {
  const auto router = Router::seeded(8, 2, 10, 4);
  const auto plan = build_routing_plan(router, 10, 4);
  EXPECT_EQ(plan.token_offsets, (std::vector<std::int64_t>{0, 3, 6, 8, 10}));
  std::int64_t total = 0;
  for (int src = 0; src < 4; ++src) {
    for (int dst = 0; dst < 4; ++dst) {
      const auto& rows = plan.block(src, dst);
      for (std::size_t j = 0; j < rows.size(); ++j) {
        EXPECT_EQ(rows[j].expert % 4, dst);
        EXPECT_GE(rows[j].token, plan.token_offsets[static_cast<std::size_t>(src)]);
        EXPECT_LT(rows[j].token, plan.token_offsets[static_cast<std::size_t>(src) + 1]);
        if (j > 0) {
          EXPECT_TRUE(rows[j - 1].token < rows[j].token ||
                      (rows[j - 1].token == rows[j].token && rows[j - 1].slot < rows[j].slot));
        }
      }
      total += static_cast<std::int64_t>(rows.size());
    }
  }
  EXPECT_EQ(total, 20);
  std::int64_t into = 0;
  for (int dst = 0; dst < 4; ++dst) into += plan.rows_into(dst);
  EXPECT_EQ(into, 20);
}

}  // namespace
}  // namespace mixplan
