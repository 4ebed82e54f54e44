// Copyright 2026 The mixplan Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

namespace mixplan {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace mixplan
