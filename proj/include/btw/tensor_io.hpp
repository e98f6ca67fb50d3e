// Copyright 2026 The btw Authors
// SPDX-License-Identifier: Apache-2.0
//
// Little-endian binary primitives shared by the checkpoint and dataset
// containers.

#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string_view>

namespace btw::io {

void write_u32(std::ostream& os, std::uint32_t v);
void write_u64(std::ostream& os, std::uint64_t v);
void write_f64(std::ostream& os, double v);
std::uint32_t read_u32(std::istream& is);
std::uint64_t read_u64(std::istream& is);
double read_f64(std::istream& is);

void write_magic(std::ostream& os, std::string_view magic);
/// Throws InvalidInputError if the next bytes are not `magic`.
void expect_magic(std::istream& is, std::string_view magic);

/// u64 rows, u64 cols, then rows*cols f64 in row-major order.
void write_matrix_body(std::ostream& os, const Eigen::MatrixXd& m);
Eigen::MatrixXd read_matrix_body(std::istream& is);

/// Standalone matrix file: "BTWX", u32 version, then the matrix body.
void save_matrix(const std::filesystem::path& path, const Eigen::MatrixXd& m);
Eigen::MatrixXd load_matrix(const std::filesystem::path& path);

}  // namespace btw::io
