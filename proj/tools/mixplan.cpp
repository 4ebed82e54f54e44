// Copyright 2026 The mixplan Authors.
// SPDX-License-Identifier: Apache-2.0

#include <iostream>

#include "mixplan/cli.hpp"

int main(int argc, char** argv) { return mixplan::cli::run(argc, argv, std::cout, std::cerr); }
