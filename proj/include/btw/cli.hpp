// Copyright 2026 The btw Authors
// SPDX-License-Identifier: Apache-2.0
//
// Exit codes: 0 ok, 2 parse, 3 output directory not empty, 4 training
// failure, 5 some comparison cells failed.

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "btw/trainloop.hpp"

namespace btw::cli {

inline constexpr std::string_view kToolVersion = "0.1.0";

enum ExitCode : int {
  kExitOk = 0,
  kExitParse = 2,
  kExitOutputSafety = 3,
  kExitTraining = 4,
  kExitPartialCompare = 5,
};

/// Git blob object id: SHA-1 of "blob <size>\0" followed by the bytes.
std::string git_blob_sha1(std::string_view bytes);

int cmd_gen_data(const std::filesystem::path& config_file, const std::filesystem::path& out_dir, bool force);
int cmd_train(const std::filesystem::path& config_file, const std::filesystem::path& out_dir, bool force);
int cmd_compare(const std::filesystem::path& config_file, const std::vector<std::string>& variants,
                const std::vector<std::uint64_t>& seeds, const std::filesystem::path& out_dir, bool force,
                unsigned jobs);

/// Runs one experiment and writes every artifact into `out_dir`, which must
/// exist. Throws on failure.
trainloop::ExperimentResult train_into(const trainloop::ExperimentConfig& config,
                                       const std::filesystem::path& out_dir);

int run_cli(int argc, char** argv);

}  // namespace btw::cli
