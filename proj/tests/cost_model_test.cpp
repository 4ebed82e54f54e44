// Copyright 2026 The mixplan Authors.
// SPDX-License-Identifier: Apache-2.0

#include "mixplan/cost_model.hpp"

#include <gtest/gtest.h>

#include <cmath>

#include "mixplan/error.hpp"
#include "test_util.hpp"

namespace mixplan {
namespace {

using cost::a2a_cost;
using cost::ag_cost;
using cost::ar_cost;
using cost::p2p_cost;
using cost::rs_cost;

const LinkClass kLink{2e-6, 50e9};

TEST(CostModel, CollectiveFormulas) {
  EXPECT_DOUBLE_EQ(rs_cost(1e6, 4, kLink), 2e-6 + 2.5e5 / 50e9);
  EXPECT_DOUBLE_EQ(ag_cost(1e6, 4, kLink), rs_cost(1e6, 4, kLink));
  EXPECT_DOUBLE_EQ(ar_cost(1e6, 4, kLink, true), 2.0 * (2e-6 + 6.25e4 / 50e9));
  EXPECT_DOUBLE_EQ(ar_cost(1e6, 4, kLink, false), 2.0 * (2e-6 + 2.5e5 / 50e9));
  EXPECT_DOUBLE_EQ(a2a_cost(1e6, 4, kLink), 3.0 * (2e-6 + 2.5e5 / 50e9));
  EXPECT_DOUBLE_EQ(p2p_cost(1e6, kLink), 2e-6 + 1e6 / 50e9);
}

TEST(CostModel, DegreeOneIsFree) {
  EXPECT_EQ(rs_cost(1e9, 1, kLink), 0.0);
  EXPECT_EQ(ag_cost(1e9, 1, kLink), 0.0);
  EXPECT_EQ(ar_cost(1e9, 1, kLink), 0.0);
  EXPECT_EQ(a2a_cost(1e9, 1, kLink), 0.0);
}

TEST(CostModel, A2AScalesWithRounds) {
  for (std::int64_t d : {2, 4, 8, 16}) {
    const double per_round = kLink.alpha + (4e6 / static_cast<double>(d)) / kLink.beta;
    EXPECT_NEAR(a2a_cost(4e6, d, kLink), static_cast<double>(d - 1) * per_round, 1e-18);
  }
}

TEST(CostModel, ComputeLatencyUnitExample) {
  ModelHyperparams m;
  m.psi_active = 100;
  m.psi_attn = 100;
  m.psi_moe = 100;
  WorkloadSpec w;
  w.batch_size = 1;
  w.seq_len = 1;
  CalibrationCoefficients c;
  c.compute_coeff = 1e-12;
  const auto s = make_strategy(1, 1, 1, 1);
  EXPECT_DOUBLE_EQ(cost::compute_latency(s, m, w, c), 1e-10);
  m.hidden_dim = 7;
  c.tau_literal = true;
  EXPECT_DOUBLE_EQ(cost::compute_latency(s, m, w, c), 7e-10);
}

TEST(CostModel, ComputeLatencyDivisors) {
  auto b = testing::toy_bundle(2, 4);
  const auto s = make_strategy(2, 4, 1, 8);
  const double expected =
      b.calibration.compute_coeff * b.model.psi_active / (2.0 * 8.0) * (8.0 / 4.0) * 128.0;
  EXPECT_DOUBLE_EQ(cost::compute_latency(s, b.model, b.workload, b.calibration), expected);
}

// Independent recomputation of the per-layer communication term.
double lambda_oracle(const ParallelStrategy& s, const ConfigBundle& b, std::int64_t tokens) {
  const auto& c = b.cluster;
  const LinkClass intra{c.intra_alpha, c.intra_beta};
  const LinkClass inter{c.inter_alpha, c.inter_beta};
  // TP is listed first, so a group of extent e ranks stays on one node iff e <= m.
  auto link = [&](std::int64_t extent) { return extent <= c.n_proc ? intra : inter; };
  auto ar = [&](double size, std::int64_t d, LinkClass l) {
    if (d <= 1) return 0.0;
    const double chunk = size / static_cast<double>(d);
    return 2.0 * (l.alpha + chunk / static_cast<double>(d) / l.beta);
  };
  auto a2a = [&](double size, std::int64_t d, LinkClass l) {
    if (d <= 1) return 0.0;
    return static_cast<double>(d - 1) * (l.alpha + size / static_cast<double>(d) / l.beta);
  };
  const double h = static_cast<double>(b.model.hidden_dim);
  const double bytes = b.model.bytes_per_element;
  const double bb = static_cast<double>(b.workload.batch_size);
  const double sl = static_cast<double>(tokens);
  const double k = static_cast<double>(b.model.top_k);
  const auto tpa = s.attn_tp(), dp = s.d_dp(), tpm = s.moe_tp(), ep = s.d_ep();
  const double ar_size = bb / static_cast<double>(dp) * sl * h * bytes;
  double total = ar(ar_size, tpa, link(tpa)) + ar(ar_size, tpm, link(tpm));
  if (dp >= ep) {
    total += 2.0 * a2a(bb / static_cast<double>(dp) * sl * h * k * bytes, ep, link(tpm * ep));
  } else {
    total += 2.0 * a2a(bb / static_cast<double>(ep) * sl * h * k * bytes, dp, link(tpa * dp));
  }
  return total;
}

TEST(CostModel, CommLatencyMatchesOracleOnEnumeration) {
  for (auto [n, m] : {std::pair{1, 4}, std::pair{2, 2}, std::pair{2, 4}, std::pair{4, 8}}) {
    auto b = testing::toy_bundle(n, m);
    for (const auto& s : enumerate_strategies(b.cluster, b.model)) {
      if (s.d_pp != 1) continue;
      const double got = cost::comm_latency(s, b.model, b.workload, b.cluster, b.calibration);
      EXPECT_NEAR(got, lambda_oracle(s, b, b.workload.seq_len), 1e-12 * got)
          << format_strategy(s) << " on " << n << "x" << m;
    }
  }
}

TEST(CostModel, DpEpVolumes) {
  auto b = testing::toy_bundle(2, 4);
  const double bsh_k = 8.0 * 128.0 * 64.0 * 2.0 * 2.0;
  const auto less = cost::comm_breakdown(make_strategy(4, 2, 1, 8), b.model, b.workload, b.cluster,
                                         b.calibration, 128);
  EXPECT_EQ(less.dp_ep.relation, DpEpRelation::DpLess);
  EXPECT_EQ(less.a2a_group, 2);
  EXPECT_DOUBLE_EQ(less.a2a_volume_bytes, bsh_k / 8.0);
  const auto greater = cost::comm_breakdown(make_strategy(1, 8, 4, 2), b.model, b.workload,
                                            b.cluster, b.calibration, 128);
  EXPECT_EQ(greater.dp_ep.relation, DpEpRelation::DpGreater);
  EXPECT_EQ(greater.a2a_group, 2);
  EXPECT_DOUBLE_EQ(greater.a2a_volume_bytes, bsh_k / 8.0);
  EXPECT_EQ(greater.a2a_scope, Scope::Inter);
}

TEST(CostModel, ServiceLatencyComposition) {
  auto b = testing::toy_bundle(2, 4);
  const auto s = make_strategy(2, 2, 2, 2, 2);
  const double tau = cost::compute_latency(s, b.model, b.workload, b.calibration, 64);
  const double lambda =
      cost::comm_breakdown(s, b.model, b.workload, b.cluster, b.calibration, 64).total();
  // Each stage fills a node, so the stage hand-off crosses nodes.
  const double p2p = 5e-6 + (8.0 / 2.0 * 64.0 * 64.0 * 2.0) / 10e9;
  EXPECT_DOUBLE_EQ(cost::pipeline_latency(s, b.model, b.workload, b.cluster, b.calibration, 64),
                   p2p);
  EXPECT_DOUBLE_EQ(cost::svc_latency(s, b.model, b.workload, b.cluster, b.calibration, 64),
                   8.0 * (tau + lambda) + p2p);
}

TEST(CostModel, QueueClosedForm) {
  for (double svc : {1e-4, 3.7e-3, 0.02, 0.5}) {
    for (double rho : {0.0, 0.1, 0.5, 0.9, 0.999}) {
      const double la = rho / svc;
      const double mu = 1.0 / svc;
      const double expected = la / (mu * (mu - la));
      const double got = cost::queuing_delay(la, svc);
      EXPECT_NEAR(got, expected, 4 * std::numeric_limits<double>::epsilon() * expected);
    }
  }
  EXPECT_EQ(cost::queuing_delay(0.0, 0.25), 0.0);
}

TEST(CostModel, QueueSaturation) {
  EXPECT_THROW(cost::queuing_delay(10.0, 0.1), SaturationError);
  EXPECT_THROW(cost::queuing_delay(11.0, 0.1), SaturationError);
  EXPECT_THROW(cost::queuing_delay(1e9, 1.0), SaturationError);
  EXPECT_NO_THROW(cost::queuing_delay(9.99, 0.1));
}

TEST(CostModel, IndicatorsStableAndSaturated) {
  auto b = testing::toy_bundle(2, 4);
  const auto s = make_strategy(4, 2, 4, 2);
  auto e = cost::indicators(s, b.model, b.workload, b.cluster, b.calibration);
  ASSERT_TRUE(e.stable);
  EXPECT_DOUBLE_EQ(e.rho, b.workload.arrival_rate * e.svc_decode);
  EXPECT_DOUBLE_EQ(*e.w_q, cost::queuing_delay(b.workload.arrival_rate, e.svc_decode));
  EXPECT_DOUBLE_EQ(*e.ttft, *e.w_q + e.svc_prefill);
  EXPECT_DOUBLE_EQ(e.itl, e.svc_decode);
  const double theta = (128.0 + 32.0) / (*e.w_q + e.svc_prefill + 32.0 * e.svc_decode);
  EXPECT_DOUBLE_EQ(*e.theta, theta);
  EXPECT_DOUBLE_EQ(e.breakdown.at("a2a_group"), 2.0);

  b.workload.arrival_rate = 2.0 / e.svc_decode;
  e = cost::indicators(s, b.model, b.workload, b.cluster, b.calibration);
  EXPECT_FALSE(e.stable);
  EXPECT_FALSE(e.w_q.has_value());
  EXPECT_FALSE(e.ttft.has_value());
  EXPECT_FALSE(e.theta.has_value());
  const auto j = cost::to_json(e);
  EXPECT_TRUE(j["ttft"].is_null());
  EXPECT_FALSE(j["stable"].get<bool>());
}

TEST(CostModel, LambdaMixReducesInterVolume) {
  auto b = testing::toy_bundle(4, 8);
  const auto ep = cost::lambda_ep_baseline(b.model, b.workload, b.cluster, b.calibration);
  const auto mix = cost::lambda_mix(b.model, b.workload, b.cluster, b.calibration);
  EXPECT_DOUBLE_EQ(ep.a2a_volume_bytes, 8.0 * mix.a2a_volume_bytes);
  EXPECT_DOUBLE_EQ(ep.ar, mix.ar);
  EXPECT_EQ(ep.ag, 0.0);
  EXPECT_GT(mix.ag, 0.0);
}

}  // namespace
}  // namespace mixplan
