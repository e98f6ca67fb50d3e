// Copyright 2026 The btw Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <istream>
#include <string>
#include <string_view>
#include <vector>

#include "btw/errors.hpp"
#include "btw/trainloop.hpp"

namespace btw::config {

/// Parse failure that names the field and 1-based source line.
class ParseError : public Error {
 public:
  ParseError(std::string field, std::size_t line, const std::string& what);
  const std::string& field() const noexcept { return field_; }
  std::size_t line() const noexcept { return line_; }

 private:
  std::string field_;
  std::size_t line_;
};

struct Entry {
  std::string key;
  std::string value;
  std::size_t line = 0;
};

/// Flat `key=value` lines; `#` starts a comment, blank lines are skipped.
std::vector<Entry> parse_entries(std::istream& in);

trainloop::ExperimentConfig parse_experiment_config(std::istream& in);
trainloop::ExperimentConfig parse_experiment_config_file(const std::string& path);
trainloop::ExperimentConfig parse_experiment_config_text(std::string_view text);

/// Canonical text form; parsing it yields an identical config.
std::string render_experiment_config(const trainloop::ExperimentConfig& cfg);

}  // namespace btw::config
