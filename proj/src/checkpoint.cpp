// Copyright 2026 The btw Authors
// SPDX-License-Identifier: Apache-2.0

#include "btw/checkpoint.hpp"

#include <fstream>
#include <string>

#include "btw/errors.hpp"
#include "btw/tensor_io.hpp"

namespace btw::tinymoe {

void write_checkpoint(std::ostream& os, const ModelParams& params) {
  const MoeConfig& c = params.config;
  io::write_magic(os, "BTWM");
  io::write_u32(os, kCheckpointVersion);

  io::write_u32(os, static_cast<std::uint32_t>(c.n_modalities()));
  for (auto d : c.input_dims) io::write_u64(os, static_cast<std::uint64_t>(d));
  io::write_u64(os, static_cast<std::uint64_t>(c.embed_dim));
  io::write_u64(os, static_cast<std::uint64_t>(c.n_experts));
  io::write_u64(os, static_cast<std::uint64_t>(c.top_k));
  io::write_u64(os, static_cast<std::uint64_t>(c.expert_hidden));
  io::write_u64(os, static_cast<std::uint64_t>(c.n_moe_layers));
  io::write_u32(os, c.task == Task::kRegression ? 0U : 1U);
  io::write_u64(os, static_cast<std::uint64_t>(c.n_classes));
  io::write_u32(os, 0U);  // gelu

  const auto views = params.tensors.views();
  io::write_u32(os, static_cast<std::uint32_t>(views.size()));
  for (const auto& v : views) {
    io::write_matrix_body(os, Eigen::Map<const Eigen::MatrixXd>(v.data, v.rows, v.cols));
  }
}

ModelParams read_checkpoint(std::istream& is) {
  io::expect_magic(is, "BTWM");
  if (const auto v = io::read_u32(is); v != kCheckpointVersion) {
    throw InvalidInputError("unsupported checkpoint version " + std::to_string(v));
  }
  MoeConfig c;
  const auto n_mod = io::read_u32(is);
  if (n_mod == 0 || n_mod > 1024) throw InvalidInputError("implausible modality count in checkpoint");
  for (std::uint32_t m = 0; m < n_mod; ++m) c.input_dims.push_back(static_cast<Eigen::Index>(io::read_u64(is)));
  c.embed_dim = static_cast<Eigen::Index>(io::read_u64(is));
  c.n_experts = static_cast<Eigen::Index>(io::read_u64(is));
  c.top_k = static_cast<Eigen::Index>(io::read_u64(is));
  c.expert_hidden = static_cast<Eigen::Index>(io::read_u64(is));
  c.n_moe_layers = static_cast<Eigen::Index>(io::read_u64(is));
  const auto task = io::read_u32(is);
  if (task > 1) throw InvalidInputError("unknown task code in checkpoint");
  c.task = task == 0 ? Task::kRegression : Task::kClassification;
  c.n_classes = static_cast<Eigen::Index>(io::read_u64(is));
  if (io::read_u32(is) != 0U) throw InvalidInputError("unknown activation code in checkpoint");

  ModelParams p;
  p.config = c;
  p.tensors = ParamTensors::zeros(c);
  auto views = p.tensors.views();
  if (io::read_u32(is) != views.size()) throw InvalidInputError("checkpoint tensor count mismatch");
  for (auto& v : views) {
    const Eigen::MatrixXd m = io::read_matrix_body(is);
    if (m.rows() != v.rows || m.cols() != v.cols) {
      throw InvalidInputError("checkpoint tensor " + v.name + " has the wrong shape");
    }
    Eigen::Map<Eigen::MatrixXd>(v.data, v.rows, v.cols) = m;
  }
  return p;
}

void save_checkpoint(const std::filesystem::path& path, const ModelParams& params) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw InvalidInputError("cannot write " + path.string());
  write_checkpoint(os, params);
}

ModelParams load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw InvalidInputError("cannot read " + path.string());
  return read_checkpoint(is);
}

}  // namespace btw::tinymoe
