// Copyright 2026 The mixplan Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace mixplan {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed input text (config JSON, strategy string, CSV).
class ParseError : public Error {
 public:
  using Error::Error;
};

/// Input parsed but violates a documented invariant. The message starts with
/// the dotted field path, e.g. "cluster.n_proc: degree must be a power of two".
class ValidationError : public Error {
 public:
  ValidationError(const std::string& field, const std::string& what)
      : Error(field + ": " + what), field_(field) {}
  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

/// M/M/1 queue with utilization >= 1.
class SaturationError : public Error {
 public:
  using Error::Error;
};

/// Least-squares calibration without enough independent observations.
class DegenerateFitError : public Error {
 public:
  using Error::Error;
};

/// No strategy survives the memory and SLO filters.
class NoFeasibleStrategyError : public Error {
 public:
  using Error::Error;
};

/// A rank would receive more dispatched rows than its buffer holds.
class CapacityError : public Error {
 public:
  using Error::Error;
};

/// Inconsistent simulation inputs (shapes, groups, layouts).
class SimulationError : public Error {
 public:
  using Error::Error;
};

/// Trace dependency graph cannot be scheduled.
class ScheduleError : public Error {
 public:
  using Error::Error;
};

}  // namespace mixplan
