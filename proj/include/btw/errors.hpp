// Copyright 2026 The btw Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace btw {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InvalidInputError : public Error {
 public:
  using Error::Error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

class InsufficientDataError : public Error {
 public:
  using Error::Error;
};

class IncompleteInputError : public Error {
 public:
  using Error::Error;
};

class NumericError : public Error {
 public:
  using Error::Error;
};

class InvalidStateError : public Error {
 public:
  using Error::Error;
};

class RangeError : public Error {
 public:
  using Error::Error;
};

class InvalidSpecError : public Error {
 public:
  using Error::Error;
};

class ConsistencyError : public Error {
 public:
  using Error::Error;
};

// Raised when a training phase produces a non-finite loss.
class TrainingFailure : public Error {
 public:
  TrainingFailure(std::string phase, std::size_t epoch, const std::string& what)
      : Error(phase + " phase, epoch " + std::to_string(epoch) + ": " + what),
        phase_(std::move(phase)),
        epoch_(epoch) {}

  const std::string& phase() const noexcept { return phase_; }
  std::size_t epoch() const noexcept { return epoch_; }

 private:
  std::string phase_;
  std::size_t epoch_;
};

}  // namespace btw
