// Copyright 2026 The mixplan Authors.
// SPDX-License-Identifier: Apache-2.0

#include "mixplan/strategy.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>

#include "mixplan/error.hpp"

namespace mixplan {

std::string_view to_string(ParallelKind kind) {
  switch (kind) {
    case ParallelKind::TP:
      return "TP";
    case ParallelKind::EP:
      return "EP";
    case ParallelKind::DP:
      return "DP";
  }
  return "?";
}

std::string_view to_string(Scope scope) {
  switch (scope) {
    case Scope::Intra:
      return "intra";
    case Scope::Inter:
      return "inter";
    case Scope::Flat:
      return "flat";
  }
  return "?";
}

std::string_view to_string(DpEpRelation c) {
  switch (c) {
    case DpEpRelation::Equal:
      return "equal";
    case DpEpRelation::DpGreater:
      return "dp_greater";
    case DpEpRelation::DpLess:
      return "dp_less";
  }
  return "?";
}

std::int64_t ParallelStrategy::degree(BlockKind block, ParallelKind kind) const {
  const auto& comps = block == BlockKind::Attention ? attention : moe;
  std::int64_t d = 1;
  for (const auto& c : comps) {
    if (c.kind == kind) d *= c.degree;
  }
  return d;
}

bool strategy_less(const ParallelStrategy& a, const ParallelStrategy& b) {
  if (a.order_key() != b.order_key()) return a.order_key() < b.order_key();
  // Same degrees, different component order: fall back to the text form.
  return format_strategy(a) < format_strategy(b);
}

namespace {

std::string trim(std::string_view s) {
  std::size_t b = 0;
  std::size_t e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}

std::vector<std::string> split(std::string_view s, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  for (std::size_t i = 0; i <= s.size(); ++i) {
    if (i == s.size() || s[i] == sep) {
      out.push_back(trim(s.substr(start, i - start)));
      start = i + 1;
    }
  }
  return out;
}

std::int64_t parse_degree(const std::string& text, const std::string& ctx) {
  std::int64_t v = 0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || ptr != text.data() + text.size()) {
    throw ParseError("strategy: bad degree '" + text + "' in '" + ctx + "'");
  }
  if (!is_power_of_two(v)) {
    throw ParseError("strategy: degree must be a power of two, got " + text + " in '" + ctx + "'");
  }
  return v;
}

BlockParallel parse_term(const std::string& term) {
  auto eq = term.find('=');
  if (eq == std::string::npos) {
    throw ParseError("strategy: expected 'P=d', got '" + term + "'");
  }
  std::string name = trim(std::string_view(term).substr(0, eq));
  std::string value = trim(std::string_view(term).substr(eq + 1));
  BlockParallel bp;
  if (name == "TP") {
    bp.kind = ParallelKind::TP;
  } else if (name == "EP") {
    bp.kind = ParallelKind::EP;
  } else if (name == "DP") {
    bp.kind = ParallelKind::DP;
  } else {
    throw ParseError("strategy: unknown parallelism '" + name + "'");
  }
  bp.degree = parse_degree(value, term);
  return bp;
}

std::vector<BlockParallel> parse_block(const std::string& spec) {
  if (spec.empty()) {
    throw ParseError("strategy: empty block spec");
  }
  auto terms = split(spec, '+');
  if (terms.size() > 2) {
    throw ParseError(
        "strategy: a block has at most an intra-node and an "
        "inter-node term: '" +
        spec + "'");
  }
  std::vector<BlockParallel> out;
  for (const auto& t : terms) out.push_back(parse_term(t));
  return out;
}

void check_block(const std::vector<BlockParallel>& comps, BlockKind block,
                 const std::string& spec) {
  for (const auto& c : comps) {
    if (block == BlockKind::Attention && c.kind == ParallelKind::EP) {
      throw ParseError("strategy: EP is not allowed in the attention block: '" + spec + "'");
    }
    if (block == BlockKind::MoE && c.kind == ParallelKind::DP) {
      throw ParseError("strategy: DP is not allowed in the MoE block: '" + spec + "'");
    }
  }
}

std::string format_block(const std::vector<BlockParallel>& comps) {
  std::string out;
  for (std::size_t i = 0; i < comps.size(); ++i) {
    if (i) out += " + ";
    out += to_string(comps[i].kind);
    out += "=" + std::to_string(comps[i].degree);
  }
  return out;
}

std::vector<BlockParallel> canonical_block(ParallelKind first, std::int64_t a, ParallelKind second,
                                           std::int64_t b) {
  std::vector<BlockParallel> out;
  if (a > 1) out.push_back({first, a, Scope::Flat});
  if (b > 1) out.push_back({second, b, Scope::Flat});
  if (out.empty()) out.push_back({ParallelKind::TP, 1, Scope::Flat});
  return out;
}

// Rank extent covered by one component group.
Scope scope_for(std::int64_t stride, std::int64_t degree, std::int64_t n_proc) {
  if (degree <= 1 || stride * degree <= n_proc) return Scope::Intra;
  if (stride >= n_proc) return Scope::Inter;
  return Scope::Flat;
}

}  // namespace

ParallelStrategy parse_strategy(std::string_view text) {
  std::string s = trim(text);
  ParallelStrategy out;

  auto lb = s.find('[');
  if (lb != std::string::npos) {
    auto rb = s.find(']', lb);
    if (rb == std::string::npos || trim(std::string_view(s).substr(rb + 1)) != "") {
      throw ParseError("strategy: malformed pipeline suffix in '" + s + "'");
    }
    std::string inner = trim(std::string_view(s).substr(lb + 1, rb - lb - 1));
    auto eq = inner.find('=');
    if (eq == std::string::npos || trim(std::string_view(inner).substr(0, eq)) != "PP") {
      throw ParseError("strategy: expected '[PP=n]', got '[" + inner + "]'");
    }
    out.d_pp = parse_degree(trim(std::string_view(inner).substr(eq + 1)), s);
    s = trim(std::string_view(s).substr(0, lb));
  }

  auto parts = split(s, ',');
  if (parts.size() == 1) {
    auto comps = parse_block(parts[0]);
    for (const auto& c : comps) {
      if (c.kind != ParallelKind::TP) {
        throw ParseError(
            "strategy: a single spec applies to both blocks and "
            "may only use TP: '" +
            parts[0] + "'");
      }
    }
    out.attention = comps;
    out.moe = comps;
  } else if (parts.size() == 2) {
    out.attention = parse_block(parts[0]);
    out.moe = parse_block(parts[1]);
    check_block(out.attention, BlockKind::Attention, parts[0]);
    check_block(out.moe, BlockKind::MoE, parts[1]);
  } else {
    throw ParseError("strategy: expected '<attention>, <moe>' in '" + s + "'");
  }

  return out;
}

ParallelStrategy parse_strategy(std::string_view text, const ClusterConfig& cluster) {
  ParallelStrategy s = parse_strategy(text);
  validate_against(s, cluster);
  assign_scopes(s, cluster);
  return s;
}

std::string format_strategy(const ParallelStrategy& s) {
  std::string out;
  bool single =
      s.attention == s.moe && std::all_of(s.attention.begin(), s.attention.end(),
                                          [](const auto& c) { return c.kind == ParallelKind::TP; });
  if (single) {
    out = format_block(s.attention);
  } else {
    out = format_block(s.attention) + ", " + format_block(s.moe);
  }
  if (s.d_pp > 1) out += " [PP=" + std::to_string(s.d_pp) + "]";
  return out;
}

void validate_against(const ParallelStrategy& s, const ClusterConfig& cluster) {
  const std::int64_t world = cluster.world_size();
  if (s.d_pp < 1 || world % s.d_pp != 0) {
    throw ValidationError("strategy.pp", "PP degree " + std::to_string(s.d_pp) +
                                             " does not divide " + std::to_string(world) +
                                             " devices");
  }
  const std::int64_t per_stage = world / s.d_pp;
  auto product = [](const std::vector<BlockParallel>& comps) {
    std::int64_t d = 1;
    for (const auto& c : comps) d *= c.degree;
    return d;
  };
  if (product(s.attention) != per_stage) {
    throw ValidationError("strategy.attention",
                          "degree product " + std::to_string(product(s.attention)) +
                              " != " + std::to_string(per_stage) + " devices per pipeline stage");
  }
  if (product(s.moe) != per_stage) {
    throw ValidationError("strategy.moe", "degree product " + std::to_string(product(s.moe)) +
                                              " != " + std::to_string(per_stage) +
                                              " devices per pipeline stage");
  }
}

void assign_scopes(ParallelStrategy& s, const ClusterConfig& cluster) {
  for (auto* comps : {&s.attention, &s.moe}) {
    std::int64_t stride = 1;
    for (auto& c : *comps) {
      c.scope = scope_for(stride, c.degree, cluster.n_proc);
      stride *= c.degree;
    }
  }
}

GroupLayout group_layout(const ParallelStrategy& s, BlockKind block, ParallelKind kind,
                         const ClusterConfig& cluster) {
  const auto& comps = block == BlockKind::Attention ? s.attention : s.moe;
  GroupLayout g;
  std::int64_t stride = 1;
  bool first = true;
  std::int64_t extent = 1;
  for (const auto& c : comps) {
    if (c.kind == kind && c.degree > 1) {
      if (first) {
        g.stride = stride;
        first = false;
      }
      g.size *= c.degree;
      extent = stride * c.degree;
    }
    stride *= c.degree;
  }
  if (g.size <= 1) {
    g.scope = Scope::Intra;
    return g;
  }
  if (extent <= cluster.n_proc) {
    g.scope = Scope::Intra;
  } else if (g.stride >= cluster.n_proc) {
    g.scope = Scope::Inter;
  } else {
    g.scope = Scope::Flat;
  }
  return g;
}

Scope pipeline_scope(const ParallelStrategy& s, const ClusterConfig& cluster) {
  const std::int64_t per_stage = cluster.world_size() / std::max<std::int64_t>(s.d_pp, 1);
  return per_stage >= cluster.n_proc ? Scope::Inter : Scope::Intra;
}

ParallelStrategy make_strategy(std::int64_t attn_tp, std::int64_t dp, std::int64_t moe_tp,
                               std::int64_t ep, std::int64_t pp) {
  ParallelStrategy s;
  s.attention = canonical_block(ParallelKind::TP, attn_tp, ParallelKind::DP, dp);
  s.moe = canonical_block(ParallelKind::TP, moe_tp, ParallelKind::EP, ep);
  s.d_pp = pp;
  return s;
}

std::vector<ParallelStrategy> enumerate_strategies(const ClusterConfig& cluster,
                                                   const ModelHyperparams& model) {
  const std::int64_t world = cluster.world_size();
  std::vector<ParallelStrategy> out;
  for (std::int64_t pp = 1; pp <= world; pp *= 2) {
    if (world % pp != 0 || model.num_layers % pp != 0) continue;
    const std::int64_t per_stage = world / pp;
    for (std::int64_t tp_a = 1; tp_a <= per_stage; tp_a *= 2) {
      for (std::int64_t tp_m = 1; tp_m <= per_stage; tp_m *= 2) {
        auto s = make_strategy(tp_a, per_stage / tp_a, tp_m, per_stage / tp_m, pp);
        assign_scopes(s, cluster);
        out.push_back(std::move(s));
      }
    }
  }
  std::sort(out.begin(), out.end(), strategy_less);
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

MemoryVerdict check_memory(const ParallelStrategy& s, const ModelHyperparams& model,
                           const ClusterConfig& cluster, const WorkloadSpec& workload) {
  const double weights = model.psi_attn / static_cast<double>(s.attn_tp()) +
                         model.psi_moe / static_cast<double>(s.d_ep() * s.moe_tp());
  const double kv = 2.0 * static_cast<double>(workload.batch_size) *
                    static_cast<double>(workload.seq_len) * static_cast<double>(model.hidden_dim) *
                    static_cast<double>(model.num_layers) / static_cast<double>(s.d_pp);
  MemoryVerdict v;
  v.required_bytes = model.bytes_per_element * (weights + kv);
  v.feasible = v.required_bytes < cluster.mem_per_device;
  return v;
}

DpEpCase classify_dp_ep(std::int64_t d_dp, std::int64_t d_ep) {
  if (d_dp < 1 || d_ep < 1) {
    throw ValidationError("strategy", "DP and EP degrees must be >= 1");
  }
  DpEpCase c;
  if (d_dp == d_ep) {
    c.relation = DpEpRelation::Equal;
    c.num_parallel_groups = 1;
    c.group_size = d_ep;
  } else if (d_dp > d_ep) {
    if (d_dp % d_ep != 0) {
      throw ValidationError("strategy", "d_DP=" + std::to_string(d_dp) +
                                            " is not a multiple of d_EP=" + std::to_string(d_ep));
    }
    c.relation = DpEpRelation::DpGreater;
    c.num_parallel_groups = d_dp / d_ep;
    c.group_size = d_ep;
  } else {
    if (d_ep % d_dp != 0) {
      throw ValidationError("strategy", "d_EP=" + std::to_string(d_ep) +
                                            " is not a multiple of d_DP=" + std::to_string(d_dp));
    }
    c.relation = DpEpRelation::DpLess;
    c.num_parallel_groups = d_ep / d_dp;
    c.group_size = d_dp;
  }
  c.redundancy_factor = std::max(static_cast<double>(d_ep) / static_cast<double>(d_dp), 1.0);
  return c;
}

DpEpCase classify_dp_ep(const ParallelStrategy& s) { return classify_dp_ep(s.d_dp(), s.d_ep()); }

}  // namespace mixplan
