// Copyright 2026 The btw Authors
// SPDX-License-Identifier: Apache-2.0
//
// Versioned binary model container:
//   "BTWM" | u32 version | config block | u32 tensor count |
//   per tensor: u64 rows, u64 cols, rows*cols little-endian f64 (row-major)
// Tensors appear in ParamTensors::views() order.

#pragma once

#include <filesystem>
#include <iosfwd>

#include "btw/tinymoe.hpp"

namespace btw::tinymoe {

inline constexpr std::uint32_t kCheckpointVersion = 1;

void write_checkpoint(std::ostream& os, const ModelParams& params);
ModelParams read_checkpoint(std::istream& is);

void save_checkpoint(const std::filesystem::path& path, const ModelParams& params);
ModelParams load_checkpoint(const std::filesystem::path& path);

}  // namespace btw::tinymoe
