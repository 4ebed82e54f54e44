// Copyright 2026 The mixplan Authors.
// SPDX-License-Identifier: Apache-2.0

// Reference collectives over an in-process group. Element i of every vector
// belongs to the i-th member of the group in rank-ascending order.

#pragma once

#include <functional>
#include <string>
#include <vector>

#include "mixplan/error.hpp"
#include "mixplan/tensor.hpp"

namespace mixplan {

namespace detail {

template <typename Scalar>
void require_same_shape(const std::vector<Tensor<Scalar>>& xs, const char* op) {
  for (std::size_t i = 1; i < xs.size(); ++i) {
    if (xs[i].rows() != xs[0].rows() || xs[i].cols() != xs[0].cols()) {
      throw SimulationError(std::string(op) + ": shape mismatch at group member " +
                            std::to_string(i));
    }
  }
}

}  // namespace detail

/// Sums member inputs in member order, then hands member i column slice i.
template <typename Scalar>
std::vector<Tensor<Scalar>> ref_reduce_scatter(const std::vector<Tensor<Scalar>>& inputs) {
  if (inputs.empty()) return {};
  detail::require_same_shape(inputs, "reduce_scatter");
  Tensor<Scalar> sum = inputs[0];
  for (std::size_t i = 1; i < inputs.size(); ++i) sum += inputs[i];
  const auto d = static_cast<std::int64_t>(inputs.size());
  std::vector<Tensor<Scalar>> out;
  out.reserve(inputs.size());
  for (std::int64_t i = 0; i < d; ++i) out.push_back(hidden_slice(sum, i, d));
  return out;
}

/// Concatenates member shards along columns; every member gets the result.
template <typename Scalar>
std::vector<Tensor<Scalar>> ref_all_gather(const std::vector<Tensor<Scalar>>& shards) {
  if (shards.empty()) return {};
  Eigen::Index cols = 0;
  for (const auto& s : shards) {
    if (s.rows() != shards[0].rows()) {
      throw SimulationError("all_gather: row count mismatch across group members");
    }
    cols += s.cols();
  }
  Tensor<Scalar> full(shards[0].rows(), cols);
  Eigen::Index at = 0;
  for (const auto& s : shards) {
    full.middleCols(at, s.cols()) = s;
    at += s.cols();
  }
  return std::vector<Tensor<Scalar>>(shards.size(), full);
}

template <typename Scalar>
std::vector<Tensor<Scalar>> ref_all_reduce(const std::vector<Tensor<Scalar>>& inputs) {
  return ref_all_gather(ref_reduce_scatter(inputs));
}

/// Pairwise exchange: send[i][j] goes from member i to member j. Runs
/// size - 1 rounds; in round r member i sends to (i + r) mod size and
/// receives from (i - r) mod size. The own block is copied without a round.
/// `on_round(round, src, dst)` observes each transfer.
template <typename Scalar>
std::vector<std::vector<Tensor<Scalar>>> ref_all_to_all_pairwise(
    const std::vector<std::vector<Tensor<Scalar>>>& send,
    const std::function<void(std::size_t, std::size_t, std::size_t)>& on_round = {}) {
  const std::size_t d = send.size();
  for (const auto& row : send) {
    if (row.size() != d) throw SimulationError("all_to_all: expected one buffer per peer");
  }
  std::vector<std::vector<Tensor<Scalar>>> recv(d, std::vector<Tensor<Scalar>>(d));
  for (std::size_t i = 0; i < d; ++i) recv[i][i] = send[i][i];
  for (std::size_t r = 1; r < d; ++r) {
    for (std::size_t i = 0; i < d; ++i) {
      const std::size_t dst = (i + r) % d;
      recv[dst][i] = send[i][dst];
      if (on_round) on_round(r, i, dst);
    }
  }
  return recv;
}

}  // namespace mixplan
