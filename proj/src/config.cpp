// Copyright 2026 The mixplan Authors.
// SPDX-License-Identifier: Apache-2.0

#include "mixplan/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "mixplan/error.hpp"

namespace mixplan {

using nlohmann::json;

namespace {

class Section {
 public:
  Section(const json& doc, std::string name) : name_(std::move(name)) {
    if (!doc.contains(name_)) {
      throw ValidationError(name_, "missing section");
    }
    obj_ = &doc.at(name_);
    if (!obj_->is_object()) {
      throw ValidationError(name_, "expected an object");
    }
  }

  std::int64_t count(const std::string& key) {
    const json& v = get(key);
    if (!v.is_number_integer()) {
      throw ValidationError(path(key), "expected an integer");
    }
    return v.get<std::int64_t>();
  }

  double number(const std::string& key) {
    const json& v = get(key);
    if (!v.is_number()) {
      throw ValidationError(path(key), "expected a number");
    }
    return v.get<double>();
  }

  std::optional<double> optional_number(const std::string& key) {
    if (!obj_->contains(key)) {
      return std::nullopt;
    }
    return number(key);
  }

  std::optional<bool> optional_bool(const std::string& key) {
    if (!obj_->contains(key)) {
      return std::nullopt;
    }
    seen_.insert(key);
    const json& v = obj_->at(key);
    if (!v.is_boolean()) {
      throw ValidationError(path(key), "expected a boolean");
    }
    return v.get<bool>();
  }

  // Unknown keys are errors so that typos never silently fall back to
  // defaults.
  void finish() const {
    for (auto it = obj_->begin(); it != obj_->end(); ++it) {
      if (!seen_.count(it.key())) {
        throw ValidationError(path(it.key()), "unknown key");
      }
    }
  }

 private:
  const json& get(const std::string& key) {
    if (!obj_->contains(key)) {
      throw ValidationError(path(key), "missing field");
    }
    seen_.insert(key);
    return obj_->at(key);
  }

  std::string path(const std::string& key) const { return name_ + "." + key; }

  std::string name_;
  const json* obj_ = nullptr;
  std::set<std::string> seen_;
};

void require(bool ok, const std::string& field, const std::string& what) {
  if (!ok) {
    throw ValidationError(field, what);
  }
}

}  // namespace

bool is_power_of_two(std::int64_t v) { return v >= 1 && (v & (v - 1)) == 0; }

LinkClass effective_link(const ClusterConfig& cluster, const CalibrationCoefficients& calib,
                         LinkKind kind) {
  if (kind == LinkKind::Intra) {
    return calib.intra.value_or(LinkClass{cluster.intra_alpha, cluster.intra_beta});
  }
  return calib.inter.value_or(LinkClass{cluster.inter_alpha, cluster.inter_beta});
}

void check_invariants(const ConfigBundle& b) {
  const auto& m = b.model;
  require(m.hidden_dim >= 1, "model.hidden_dim", "must be positive");
  require(m.num_layers >= 1, "model.num_layers", "must be positive");
  require(m.top_k >= 1, "model.top_k", "must be positive");
  require(m.num_routed_experts >= 1, "model.num_routed_experts", "must be positive");
  require(m.num_shared_experts >= 0, "model.num_shared_experts", "must be non-negative");
  require(m.top_k <= m.num_routed_experts, "model.top_k", "must not exceed num_routed_experts");
  require(m.psi_attn > 0, "model.psi_attn", "must be positive");
  require(m.psi_moe > 0, "model.psi_moe", "must be positive");
  require(m.psi_active > 0, "model.psi_active", "must be positive");
  require(m.psi_active <= m.psi_attn + m.psi_moe, "model.psi_active",
          "must not exceed psi_attn + psi_moe");
  require(m.bytes_per_element > 0, "model.bytes_per_element", "must be positive");

  const auto& c = b.cluster;
  require(c.n_node >= 1, "cluster.n_node", "must be positive");
  require(is_power_of_two(c.n_node), "cluster.n_node", "degree must be a power of two");
  require(c.n_proc >= 1, "cluster.n_proc", "must be positive");
  require(is_power_of_two(c.n_proc), "cluster.n_proc", "degree must be a power of two");
  require(c.intra_alpha >= 0, "cluster.intra_alpha", "must be non-negative");
  require(c.inter_alpha >= 0, "cluster.inter_alpha", "must be non-negative");
  require(c.intra_beta > 0, "cluster.intra_beta", "must be positive");
  require(c.inter_beta > 0, "cluster.inter_beta", "must be positive");
  require(c.mem_per_device > 0, "cluster.mem_per_device", "must be positive");
  require(c.compute_rate > 0, "cluster.compute_rate", "must be positive");

  const auto& w = b.workload;
  require(w.batch_size >= 1, "workload.batch_size", "must be >= 1");
  require(w.seq_len >= 1, "workload.seq_len", "must be >= 1");
  require(w.input_len >= 1, "workload.input_len", "must be >= 1");
  require(w.output_len >= 1, "workload.output_len", "must be >= 1");
  require(w.arrival_rate >= 0, "workload.arrival_rate", "must be >= 0");

  const auto& k = b.calibration;
  require(k.compute_coeff > 0, "calibration.compute_coeff", "must be positive");
  if (k.intra) {
    require(k.intra->alpha >= 0, "calibration.intra_alpha", "must be non-negative");
    require(k.intra->beta > 0, "calibration.intra_beta", "must be positive");
  }
  if (k.inter) {
    require(k.inter->alpha >= 0, "calibration.inter_alpha", "must be non-negative");
    require(k.inter->beta > 0, "calibration.inter_beta", "must be positive");
  }
}

ConfigBundle bundle_from_json(const json& doc) {
  if (!doc.is_object()) {
    throw ParseError("config root must be an object");
  }
  for (auto it = doc.begin(); it != doc.end(); ++it) {
    const auto& key = it.key();
    if (key != "model" && key != "cluster" && key != "workload" && key != "calibration") {
      throw ValidationError(key, "unknown section");
    }
  }

  ConfigBundle b;
  {
    Section s(doc, "model");
    b.model.hidden_dim = s.count("hidden_dim");
    b.model.num_layers = s.count("num_layers");
    b.model.top_k = s.count("top_k");
    b.model.num_routed_experts = s.count("num_routed_experts");
    b.model.num_shared_experts = s.count("num_shared_experts");
    b.model.psi_attn = s.number("psi_attn");
    b.model.psi_moe = s.number("psi_moe");
    b.model.psi_active = s.number("psi_active");
    b.model.bytes_per_element = s.number("bytes_per_element");
    s.finish();
  }
  {
    Section s(doc, "cluster");
    b.cluster.n_node = s.count("n_node");
    b.cluster.n_proc = s.count("n_proc");
    b.cluster.intra_alpha = s.number("intra_alpha");
    b.cluster.intra_beta = s.number("intra_beta");
    b.cluster.inter_alpha = s.number("inter_alpha");
    b.cluster.inter_beta = s.number("inter_beta");
    b.cluster.mem_per_device = s.number("mem_per_device");
    b.cluster.compute_rate = s.number("compute_rate");
    s.finish();
  }
  {
    Section s(doc, "workload");
    b.workload.batch_size = s.count("batch_size");
    b.workload.seq_len = s.count("seq_len");
    b.workload.input_len = s.count("input_len");
    b.workload.output_len = s.count("output_len");
    b.workload.arrival_rate = s.number("arrival_rate");
    s.finish();
  }

  // compute_rate must be checked before it becomes the default coefficient.
  require(b.cluster.compute_rate > 0, "cluster.compute_rate", "must be positive");
  b.calibration.compute_coeff = 1.0 / b.cluster.compute_rate;
  if (doc.contains("calibration")) {
    Section s(doc, "calibration");
    if (auto v = s.optional_number("compute_coeff")) {
      b.calibration.compute_coeff = *v;
    }
    auto ia = s.optional_number("intra_alpha");
    auto ib = s.optional_number("intra_beta");
    if (ia || ib) {
      b.calibration.intra =
          LinkClass{ia.value_or(b.cluster.intra_alpha), ib.value_or(b.cluster.intra_beta)};
    }
    auto ea = s.optional_number("inter_alpha");
    auto eb = s.optional_number("inter_beta");
    if (ea || eb) {
      b.calibration.inter =
          LinkClass{ea.value_or(b.cluster.inter_alpha), eb.value_or(b.cluster.inter_beta)};
    }
    if (auto v = s.optional_bool("ar_literal")) {
      b.calibration.ar_literal = *v;
    }
    if (auto v = s.optional_bool("tau_literal")) {
      b.calibration.tau_literal = *v;
    }
    s.finish();
  }

  check_invariants(b);
  return b;
}

ConfigBundle parse_config(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("malformed config: ") + e.what());
  }
  return bundle_from_json(doc);
}

ConfigBundle load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw ParseError("cannot open config file: " + path.string());
  }
  std::stringstream ss;
  ss << in.rdbuf();
  try {
    return parse_config(ss.str());
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

json to_json(const ConfigBundle& b) {
  json doc;
  doc["model"] = {
      {"hidden_dim", b.model.hidden_dim},
      {"num_layers", b.model.num_layers},
      {"top_k", b.model.top_k},
      {"num_routed_experts", b.model.num_routed_experts},
      {"num_shared_experts", b.model.num_shared_experts},
      {"psi_attn", b.model.psi_attn},
      {"psi_moe", b.model.psi_moe},
      {"psi_active", b.model.psi_active},
      {"bytes_per_element", b.model.bytes_per_element},
  };
  doc["cluster"] = {
      {"n_node", b.cluster.n_node},
      {"n_proc", b.cluster.n_proc},
      {"intra_alpha", b.cluster.intra_alpha},
      {"intra_beta", b.cluster.intra_beta},
      {"inter_alpha", b.cluster.inter_alpha},
      {"inter_beta", b.cluster.inter_beta},
      {"mem_per_device", b.cluster.mem_per_device},
      {"compute_rate", b.cluster.compute_rate},
  };
  doc["workload"] = {
      {"batch_size", b.workload.batch_size},     {"seq_len", b.workload.seq_len},
      {"input_len", b.workload.input_len},       {"output_len", b.workload.output_len},
      {"arrival_rate", b.workload.arrival_rate},
  };
  json calib = {
      {"compute_coeff", b.calibration.compute_coeff},
      {"ar_literal", b.calibration.ar_literal},
      {"tau_literal", b.calibration.tau_literal},
  };
  if (b.calibration.intra) {
    calib["intra_alpha"] = b.calibration.intra->alpha;
    calib["intra_beta"] = b.calibration.intra->beta;
  }
  if (b.calibration.inter) {
    calib["inter_alpha"] = b.calibration.inter->alpha;
    calib["inter_beta"] = b.calibration.inter->beta;
  }
  doc["calibration"] = std::move(calib);
  return doc;
}

std::string serialize_config(const ConfigBundle& bundle) { return to_json(bundle).dump(2) + "\n"; }

std::vector<std::string> validate_bundle(const ConfigBundle& b) {
  std::vector<std::string> warnings;
  const LinkClass intra = effective_link(b.cluster, b.calibration, LinkKind::Intra);
  const LinkClass inter = effective_link(b.cluster, b.calibration, LinkKind::Inter);
  if (intra.beta < inter.beta) {
    std::ostringstream os;
    os << "cluster.intra_beta: inverted bandwidth hierarchy (intra " << intra.beta
       << " B/s < inter " << inter.beta << " B/s)";
    warnings.push_back(os.str());
  }
  return warnings;
}

}  // namespace mixplan
