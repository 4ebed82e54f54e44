// Copyright 2026 The mixplan Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <vector>

namespace mixplan {

/// Token-major activation block: one row per token, one column per hidden
/// element.
template <typename Scalar>
using Tensor = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Sizes of `parts` near-equal pieces of `total`; the first total % parts
/// pieces get one extra element.
inline std::vector<std::int64_t> split_sizes(std::int64_t total, std::int64_t parts) {
  std::vector<std::int64_t> out(static_cast<std::size_t>(parts), total / parts);
  for (std::int64_t i = 0; i < total % parts; ++i) ++out[static_cast<std::size_t>(i)];
  return out;
}

inline std::vector<std::int64_t> split_offsets(std::int64_t total, std::int64_t parts) {
  std::vector<std::int64_t> out(static_cast<std::size_t>(parts) + 1, 0);
  const auto sizes = split_sizes(total, parts);
  for (std::size_t i = 0; i < sizes.size(); ++i) out[i + 1] = out[i] + sizes[i];
  return out;
}

/// Column slice `part` of `parts` along the hidden dimension.
template <typename Scalar>
Tensor<Scalar> hidden_slice(const Tensor<Scalar>& x, std::int64_t part, std::int64_t parts) {
  const auto off = split_offsets(x.cols(), parts);
  const auto p = static_cast<std::size_t>(part);
  return x.middleCols(off[p], off[p + 1] - off[p]);
}

/// Largest elementwise |a - b| / |b|; `floor` guards against division by
/// zero on exact zeros.
template <typename Scalar>
double max_relative_error(const Tensor<Scalar>& a, const Tensor<Scalar>& b, double floor = 1e-300) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    return std::numeric_limits<double>::infinity();
  }
  double worst = 0.0;
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    for (Eigen::Index j = 0; j < a.cols(); ++j) {
      const double diff = std::abs(static_cast<double>(a(i, j) - b(i, j)));
      if (diff == 0.0) continue;
      const double denom = std::max(std::abs(static_cast<double>(b(i, j))), floor);
      worst = std::max(worst, diff / denom);
    }
  }
  return worst;
}

}  // namespace mixplan
