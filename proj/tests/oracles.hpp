// Copyright 2026 The mixplan Authors.
// SPDX-License-Identifier: Apache-2.0

// Reference computations shared by the unit tests and the acceptance runner.
// They re-derive results from first principles and never call the code path
// under test for the quantity being checked.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <tuple>
#include <vector>

#include "mixplan/analyzer.hpp"
#include "mixplan/cost_model.hpp"
#include "mixplan/strategy.hpp"

namespace mixplan::oracle {

inline double bytes_needed(std::int64_t tpa, std::int64_t tpm, std::int64_t ep, std::int64_t pp,
                           const ConfigBundle& b) {
  const double act = 2.0 *
                     static_cast<double>(b.workload.batch_size * b.workload.seq_len *
                                         b.model.hidden_dim * b.model.num_layers) /
                     static_cast<double>(pp);
  return b.model.bytes_per_element * (b.model.psi_attn / static_cast<double>(tpa) +
                                      b.model.psi_moe / static_cast<double>(ep * tpm) + act);
}

/// Brute-force winner: every power-of-two (pp, attention TP, MoE TP) triple,
/// memory filter, objective score, saturated candidates after stable ones,
/// ties on (pp, attention TP, EP, DP).
inline std::optional<ParallelStrategy> argmin(const ConfigBundle& b, Objective objective) {
  const std::int64_t world = b.cluster.n_node * b.cluster.n_proc;
  struct Best {
    bool stable;
    double score;
    std::tuple<std::int64_t, std::int64_t, std::int64_t, std::int64_t> key;
    ParallelStrategy s;
  };
  std::optional<Best> best;
  for (std::int64_t pp = 1; pp <= world; pp *= 2) {
    if (world % pp != 0 || b.model.num_layers % pp != 0) continue;
    const std::int64_t stage = world / pp;
    for (std::int64_t tpa = 1; tpa <= stage; tpa *= 2) {
      for (std::int64_t tpm = 1; tpm <= stage; tpm *= 2) {
        const std::int64_t dp = stage / tpa;
        const std::int64_t ep = stage / tpm;
        if (!(bytes_needed(tpa, tpm, ep, pp, b) < b.cluster.mem_per_device)) continue;
        auto s = make_strategy(tpa, dp, tpm, ep, pp);
        assign_scopes(s, b.cluster);
        const auto e = cost::indicators(s, b.model, b.workload, b.cluster, b.calibration);
        const bool stable = b.workload.arrival_rate * e.svc_decode < 1.0;
        double score = e.svc_decode;
        if (stable) {
          const double mu = 1.0 / e.svc_decode;
          const double la = b.workload.arrival_rate;
          const double wq = la / (mu * (mu - la));
          const double ttft = wq + e.svc_prefill;
          const double out = static_cast<double>(b.workload.output_len);
          const double theta =
              (static_cast<double>(b.workload.input_len) + out) / (ttft + out * e.svc_decode);
          score = objective == Objective::TTFT  ? ttft
                  : objective == Objective::ITL ? e.svc_decode
                                                : -theta;
        }
        Best cand{stable, score, {pp, tpa, ep, dp}, s};
        auto better = [](const Best& x, const Best& y) {
          if (x.stable != y.stable) return x.stable;
          if (x.score != y.score) return x.score < y.score;
          return x.key < y.key;
        };
        if (!best || better(cand, *best)) best = cand;
      }
    }
  }
  if (!best) return std::nullopt;
  return best->s;
}

/// Cost of one observation under the alpha-beta model with the given link.
inline double model_seconds(OpKind op, double size, std::int64_t d, const LinkClass& l,
                            bool ar_literal) {
  const double dd = static_cast<double>(d);
  switch (op) {
    case OpKind::P2P:
      return l.alpha + size / l.beta;
    case OpKind::RS:
    case OpKind::AG:
      return d <= 1 ? 0.0 : l.alpha + size / dd / l.beta;
    case OpKind::AR: {
      if (d <= 1) return 0.0;
      const double part = ar_literal ? size / dd : size;
      return 2.0 * (l.alpha + part / dd / l.beta);
    }
    case OpKind::A2A:
      return d <= 1 ? 0.0 : (dd - 1.0) * (l.alpha + size / dd / l.beta);
    case OpKind::MoECompute:
      return 0.0;
  }
  return 0.0;
}

/// Noise-free observations of every op kind on both link classes plus
/// compute samples, generated from `truth`.
inline std::vector<ProfilingObservation> synthetic_observations(
    const CalibrationCoefficients& truth, std::uint64_t seed, double noise = 0.0) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> jitter(-noise, noise);
  std::vector<ProfilingObservation> obs;
  for (LinkKind kind : {LinkKind::Intra, LinkKind::Inter}) {
    const LinkClass l = kind == LinkKind::Intra ? *truth.intra : *truth.inter;
    for (OpKind op : {OpKind::AR, OpKind::RS, OpKind::AG, OpKind::A2A, OpKind::P2P}) {
      for (std::int64_t d : {2, 4, 8}) {
        for (double size : {1e4, 1e6, 6.4e7}) {
          const double t = model_seconds(op, size, d, l, truth.ar_literal);
          obs.push_back({op, size, d, kind, t * (1.0 + jitter(rng))});
        }
      }
    }
  }
  for (double work : {1e8, 1e10, 3e11}) {
    obs.push_back({OpKind::MoECompute, work, 1, LinkKind::Intra,
                   truth.compute_coeff * work * (1.0 + jitter(rng))});
  }
  std::shuffle(obs.begin(), obs.end(), rng);
  return obs;
}

inline double rel_err(double got, double want) { return std::abs(got - want) / std::abs(want); }

/// Inter-node time saved by sending bshk / m instead of bshk over the n-node
/// pairwise exchange (both phases), and the intra-node all-gather it costs.
struct MixTradeoff {
  double inter_savings = 0.0;
  double ag_cost = 0.0;
  double ep_volume = 0.0;
  double mix_volume = 0.0;
};

inline MixTradeoff mix_tradeoff(const ConfigBundle& b) {
  const double n = static_cast<double>(b.cluster.n_node);
  const double m = static_cast<double>(b.cluster.n_proc);
  const double bshk = static_cast<double>(b.workload.batch_size * b.workload.seq_len *
                                          b.model.hidden_dim * b.model.top_k) *
                      b.model.bytes_per_element;
  MixTradeoff t;
  t.ep_volume = bshk;
  t.mix_volume = bshk / m;
  if (b.cluster.n_node > 1) {
    t.inter_savings = 2.0 * (n - 1.0) * (bshk - bshk / m) / n / b.cluster.inter_beta;
  }
  if (b.cluster.n_proc > 1) {
    t.ag_cost = b.cluster.intra_alpha + (bshk / m) / m / b.cluster.intra_beta;
  }
  return t;
}

}  // namespace mixplan::oracle
