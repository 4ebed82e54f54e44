// Copyright 2026 The mixplan Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <ostream>

namespace mixplan::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitVerificationFailed = 1;
inline constexpr int kExitInputError = 2;

/// Entry point of the `mixplan` tool: analyze, simulate, gantt, compare.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace mixplan::cli
