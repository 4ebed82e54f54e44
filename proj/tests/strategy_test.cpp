// Copyright 2026 The mixplan Authors.
// SPDX-License-Identifier: Apache-2.0

#include "mixplan/strategy.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <set>

#include "mixplan/error.hpp"
#include "test_util.hpp"

namespace mixplan {
namespace {

ClusterConfig cluster(std::int64_t n, std::int64_t m) {
  ClusterConfig c;
  c.n_node = n;
  c.n_proc = m;
  return c;
}

TEST(Strategy, ParsesHybridNotation) {
  const auto s = parse_strategy("TP=4 + DP=8, TP=4 + EP=8");
  EXPECT_EQ(s.attn_tp(), 4);
  EXPECT_EQ(s.d_dp(), 8);
  EXPECT_EQ(s.moe_tp(), 4);
  EXPECT_EQ(s.d_ep(), 8);
  EXPECT_EQ(s.d_pp, 1);
  EXPECT_EQ(s, make_strategy(4, 8, 4, 8));
}

TEST(Strategy, SingleTpSpecAppliesToBothBlocks) {
  const auto s = parse_strategy("TP=8 [PP=4]");
  EXPECT_EQ(s.attn_tp(), 8);
  EXPECT_EQ(s.moe_tp(), 8);
  EXPECT_EQ(s.d_pp, 4);
  EXPECT_EQ(format_strategy(s), "TP=8 [PP=4]");
}

TEST(Strategy, FormatRoundTrip) {
  for (const char* text : {"TP=32, EP=32", "TP=4 + DP=8, TP=32", "DP=4, TP=2 + EP=2 [PP=2]", "TP=1",
                           "TP=2 + DP=2, TP=2 + EP=2", "DP=2 + TP=2, EP=2 + TP=2"}) {
    EXPECT_EQ(format_strategy(parse_strategy(text)), text);
  }
}

TEST(Strategy, GrammarViolations) {
  for (const char* text : {"", "TP=3", "TP=0", "TP=x", "EP=4, EP=4", "TP=2, DP=2",
                           "TP=2 + DP=2 + DP=2, EP=8", "TP=2, EP=2 [PP=3]", "TP=2, EP=2 [XP=2]",
                           "TP=2, EP=2 [PP=2", "TP4, EP=4", "DP=4", "TP=2, EP=2, EP=2", "QP=2"}) {
    EXPECT_THROW(parse_strategy(text), ParseError) << text;
  }
}

TEST(Strategy, ValidateAgainstCluster) {
  const auto c = cluster(4, 8);
  EXPECT_NO_THROW(parse_strategy("TP=8 + DP=4, TP=8 + EP=4", c));
  EXPECT_NO_THROW(parse_strategy("TP=8, EP=8 [PP=4]", c));
  try {
    parse_strategy("TP=8, EP=8", c);
    FAIL();
  } catch (const ValidationError& e) {
    EXPECT_EQ(e.field(), "strategy.attention");
  }
  try {
    parse_strategy("TP=2 + DP=16, TP=4 + EP=4", c);
    FAIL();
  } catch (const ValidationError& e) {
    EXPECT_EQ(e.field(), "strategy.moe");
  }
  EXPECT_THROW(parse_strategy("TP=1 [PP=64]", c), ValidationError);
}

TEST(Strategy, ScopesFollowRankLayout) {
  const auto c = cluster(4, 8);
  auto s = parse_strategy("TP=8 + DP=4, TP=8 + EP=4", c);
  EXPECT_EQ(s.attention[0].scope, Scope::Intra);
  EXPECT_EQ(s.attention[1].scope, Scope::Inter);
  EXPECT_EQ(s.moe[1].scope, Scope::Inter);

  s = parse_strategy("TP=4 + DP=8, TP=32", c);
  EXPECT_EQ(s.attention[0].scope, Scope::Intra);
  EXPECT_EQ(s.attention[1].scope, Scope::Flat);
  EXPECT_EQ(s.moe[0].scope, Scope::Flat);

  const auto g = group_layout(s, BlockKind::Attention, ParallelKind::DP, c);
  EXPECT_EQ(g.size, 8);
  EXPECT_EQ(g.stride, 4);
  EXPECT_EQ(g.scope, Scope::Flat);
  const auto t = group_layout(s, BlockKind::Attention, ParallelKind::TP, c);
  EXPECT_EQ(t.size, 4);
  EXPECT_EQ(t.stride, 1);
  EXPECT_EQ(t.scope, Scope::Intra);
  const auto e = group_layout(s, BlockKind::MoE, ParallelKind::EP, c);
  EXPECT_EQ(e.size, 1);

  EXPECT_EQ(pipeline_scope(parse_strategy("TP=8 [PP=4]", c), c), Scope::Inter);
  EXPECT_EQ(pipeline_scope(parse_strategy("TP=2 [PP=16]", c), c), Scope::Intra);
}

TEST(Strategy, EnumerationIsCompleteAndSorted) {
  ModelHyperparams model;
  model.num_layers = 4;
  const auto c = cluster(2, 4);
  const auto all = enumerate_strategies(c, model);
  // Independent count: per pp, (log2(W/pp) + 1)^2 canonical layouts.
  std::size_t expected = 0;
  for (std::int64_t pp : {1, 2, 4}) {
    int levels = 0;
    for (std::int64_t v = 8 / pp; v > 1; v /= 2) ++levels;
    expected += static_cast<std::size_t>((levels + 1) * (levels + 1));
  }
  EXPECT_EQ(all.size(), expected);
  EXPECT_TRUE(std::is_sorted(all.begin(), all.end(), strategy_less));
  std::set<std::string> names;
  for (const auto& s : all) {
    EXPECT_NO_THROW(validate_against(s, c)) << format_strategy(s);
    EXPECT_EQ(s.total_devices(), 8);
    names.insert(format_strategy(s));
  }
  EXPECT_EQ(names.size(), all.size());
  EXPECT_TRUE(names.count("TP=4 + DP=2, TP=4 + EP=2"));
  EXPECT_TRUE(names.count("DP=8, EP=8"));
  EXPECT_FALSE(names.count("TP=1 [PP=8]"));  // 4 layers
}

TEST(Strategy, OrderKeyTieBreak) {
  const auto a = make_strategy(2, 4, 8, 1);
  const auto b = make_strategy(2, 4, 1, 8);
  EXPECT_TRUE(strategy_less(a, b));  // d_EP 1 < 8
  EXPECT_FALSE(strategy_less(b, a));
  EXPECT_TRUE(strategy_less(make_strategy(8, 1, 8, 1), make_strategy(1, 4, 1, 4, 2)));
}

TEST(Strategy, MemoryFormula) {
  ModelHyperparams m;
  m.hidden_dim = 10;
  m.num_layers = 4;
  m.psi_attn = 800;
  m.psi_moe = 1600;
  m.bytes_per_element = 2;
  WorkloadSpec w;
  w.batch_size = 2;
  w.seq_len = 5;
  auto c = cluster(2, 2);
  const auto s = make_strategy(2, 2, 1, 4);
  // 2 * (800/2 + 1600/4 + 2*2*5*10*4) = 2 * 1600
  c.mem_per_device = 3200.0;
  auto v = check_memory(s, m, c, w);
  EXPECT_DOUBLE_EQ(v.required_bytes, 3200.0);
  EXPECT_FALSE(v.feasible);
  c.mem_per_device = 3200.5;
  EXPECT_TRUE(check_memory(s, m, c, w).feasible);
  // Pipelining splits the activation term.
  const auto p = make_strategy(1, 2, 1, 2, 2);
  EXPECT_DOUBLE_EQ(check_memory(p, m, c, w).required_bytes, 2.0 * (800 + 800 + 400));
}

TEST(Strategy, DpEpCases) {
  auto c = classify_dp_ep(4, 4);
  EXPECT_EQ(c.relation, DpEpRelation::Equal);
  EXPECT_EQ(c.num_parallel_groups, 1);
  EXPECT_DOUBLE_EQ(c.redundancy_factor, 1.0);
  c = classify_dp_ep(8, 2);
  EXPECT_EQ(c.relation, DpEpRelation::DpGreater);
  EXPECT_EQ(c.num_parallel_groups, 4);
  EXPECT_EQ(c.group_size, 2);
  EXPECT_DOUBLE_EQ(c.redundancy_factor, 1.0);
  c = classify_dp_ep(2, 8);
  EXPECT_EQ(c.relation, DpEpRelation::DpLess);
  EXPECT_EQ(c.num_parallel_groups, 4);
  EXPECT_EQ(c.group_size, 2);
  EXPECT_DOUBLE_EQ(c.redundancy_factor, 4.0);
  EXPECT_THROW(classify_dp_ep(0, 2), ValidationError);
  EXPECT_THROW(classify_dp_ep(3, 2), ValidationError);
}

}  // namespace
}  // namespace mixplan
