// Copyright 2026 The mixplan Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <json.hpp>
#include <optional>
#include <string>
#include <vector>

namespace mixplan {

// Units are fixed across the library: bytes, seconds and element counts.
// Parameter volumes are element counts; a byte size is always
// element_count * bytes_per_element.

struct ModelHyperparams {
  std::int64_t hidden_dim = 1;
  std::int64_t num_layers = 1;
  std::int64_t top_k = 1;
  std::int64_t num_routed_experts = 1;
  std::int64_t num_shared_experts = 0;
  double psi_attn = 1.0;    // attention parameters, all layers
  double psi_moe = 1.0;     // MoE parameters, all layers
  double psi_active = 1.0;  // parameters activated per token
  double bytes_per_element = 2.0;

  bool operator==(const ModelHyperparams&) const = default;
};

struct ClusterConfig {
  std::int64_t n_node = 1;
  std::int64_t n_proc = 1;   // devices per node
  double intra_alpha = 0.0;  // s per message
  double intra_beta = 1.0;   // bytes/s
  double inter_alpha = 0.0;
  double inter_beta = 1.0;
  double mem_per_device = 1.0;  // bytes
  double compute_rate = 1.0;    // element-ops/s per device

  std::int64_t world_size() const { return n_node * n_proc; }
  bool operator==(const ClusterConfig&) const = default;
};

struct WorkloadSpec {
  std::int64_t batch_size = 1;
  std::int64_t seq_len = 1;
  std::int64_t input_len = 1;
  std::int64_t output_len = 1;
  double arrival_rate = 0.0;  // tokens/s

  bool operator==(const WorkloadSpec&) const = default;
};

/// Per-message latency (alpha, s) and bandwidth (beta, bytes/s) of one link class.
struct LinkClass {
  double alpha = 0.0;
  double beta = 1.0;

  bool operator==(const LinkClass&) const = default;
};

struct CalibrationCoefficients {
  double compute_coeff = 1.0;  // seconds per element-op
  std::optional<LinkClass> intra;
  std::optional<LinkClass> inter;
  // AR(size, d) = RS(size/d, d) + AG(size/d, d) exactly as written when true;
  // RS(size, d) + AG(size, d) otherwise.
  bool ar_literal = true;
  // Multiply the compute latency by the hidden dimension as printed.
  bool tau_literal = false;

  bool operator==(const CalibrationCoefficients&) const = default;
};

struct ConfigBundle {
  ModelHyperparams model;
  ClusterConfig cluster;
  WorkloadSpec workload;
  CalibrationCoefficients calibration;

  bool operator==(const ConfigBundle&) const = default;
};

enum class LinkKind { Intra, Inter };

/// Link parameters after calibration overrides are applied.
LinkClass effective_link(const ClusterConfig& cluster, const CalibrationCoefficients& calib,
                         LinkKind kind);

bool is_power_of_two(std::int64_t v);

/// Parses and validates a config document. Omitted calibration fields get
/// their defaults (compute_coeff = 1 / compute_rate, links from the cluster).
/// Throws ParseError or ValidationError.
ConfigBundle parse_config(const std::string& text);
ConfigBundle load_config(const std::filesystem::path& path);
ConfigBundle bundle_from_json(const nlohmann::json& doc);

nlohmann::json to_json(const ConfigBundle& bundle);
std::string serialize_config(const ConfigBundle& bundle);

/// Hard invariants; throws ValidationError naming the first violated field.
void check_invariants(const ConfigBundle& bundle);

/// Non-fatal findings. Never mutates the bundle.
std::vector<std::string> validate_bundle(const ConfigBundle& bundle);

}  // namespace mixplan
