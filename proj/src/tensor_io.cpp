// Copyright 2026 The btw Authors
// SPDX-License-Identifier: Apache-2.0

#include "btw/tensor_io.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <string>

#include "btw/errors.hpp"

namespace btw::io {

namespace {

constexpr std::uint32_t kMatrixVersion = 1;

template <typename T>
void write_le(std::ostream& os, T v) {
  std::array<char, sizeof(T)> bytes;
  std::memcpy(bytes.data(), &v, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes.begin(), bytes.end());
  os.write(bytes.data(), sizeof(T));
}

template <typename T>
T read_le(std::istream& is) {
  std::array<char, sizeof(T)> bytes;
  if (!is.read(bytes.data(), sizeof(T))) throw InvalidInputError("unexpected end of binary data");
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes.begin(), bytes.end());
  T v;
  std::memcpy(&v, bytes.data(), sizeof(T));
  return v;
}

}  // namespace

void write_u32(std::ostream& os, std::uint32_t v) { write_le(os, v); }
void write_u64(std::ostream& os, std::uint64_t v) { write_le(os, v); }
void write_f64(std::ostream& os, double v) { write_le(os, v); }
std::uint32_t read_u32(std::istream& is) { return read_le<std::uint32_t>(is); }
std::uint64_t read_u64(std::istream& is) { return read_le<std::uint64_t>(is); }
double read_f64(std::istream& is) { return read_le<double>(is); }

void write_magic(std::ostream& os, std::string_view magic) {
  os.write(magic.data(), static_cast<std::streamsize>(magic.size()));
}

void expect_magic(std::istream& is, std::string_view magic) {
  std::string got(magic.size(), '\0');
  if (!is.read(got.data(), static_cast<std::streamsize>(got.size())) || got != magic) {
    throw InvalidInputError("bad magic: expected '" + std::string(magic) + "'");
  }
}

void write_matrix_body(std::ostream& os, const Eigen::MatrixXd& m) {
  write_u64(os, static_cast<std::uint64_t>(m.rows()));
  write_u64(os, static_cast<std::uint64_t>(m.cols()));
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) write_f64(os, m(r, c));
  }
}

Eigen::MatrixXd read_matrix_body(std::istream& is) {
  const auto rows = read_u64(is);
  const auto cols = read_u64(is);
  if (rows > (1ULL << 32) || cols > (1ULL << 32)) throw InvalidInputError("implausible matrix shape");
  Eigen::MatrixXd m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = read_f64(is);
  }
  return m;
}

void save_matrix(const std::filesystem::path& path, const Eigen::MatrixXd& m) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw InvalidInputError("cannot write " + path.string());
  write_magic(os, "BTWX");
  write_u32(os, kMatrixVersion);
  write_matrix_body(os, m);
  if (!os) throw InvalidInputError("write failed for " + path.string());
}

Eigen::MatrixXd load_matrix(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw InvalidInputError("cannot read " + path.string());
  expect_magic(is, "BTWX");
  if (const auto v = read_u32(is); v != kMatrixVersion) {
    throw InvalidInputError("unsupported matrix file version " + std::to_string(v));
  }
  return read_matrix_body(is);
}

}  // namespace btw::io
