// Copyright 2026 The btw Authors
// SPDX-License-Identifier: Apache-2.0
//
// Synthetic multimodal data with per-modality informativeness. A scalar
// latent signal drives the target; modality m observes
//   z = informativeness_m * signal + (1 - informativeness_m) * noise_m
// through a seeded random projection, an optional tanh, and observation noise.

#pragma once

#include <Eigen/Dense>
#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "btw/predictions.hpp"
#include "btw/tinymoe.hpp"

namespace btw::synthdata {

enum class Nonlinearity { kLinear, kTanhMixed };

enum class Split : std::uint8_t { kTrain = 0, kVal = 1, kTest = 2 };

std::string_view to_string(Nonlinearity n);
std::optional<Nonlinearity> parse_nonlinearity(std::string_view s);

struct SyntheticSpec {
  std::size_t n_instances = 2000;
  std::vector<Eigen::Index> modality_dims{16, 16, 16};
  std::vector<double> informativeness{0.9, 0.5, 0.0};
  double noise_sigma = 0.1;
  Task task = Task::kRegression;
  int n_classes = 4;
  Nonlinearity nonlinearity = Nonlinearity::kLinear;
  std::uint64_t seed = 0;
  /// Per-modality projection seeds; derived from `seed` when empty.
  std::vector<std::uint64_t> projection_seeds;
  /// Dirichlet concentration for class priors; 0 keeps classes balanced.
  double class_imbalance = 0.0;

  /// Throws InvalidSpecError.
  void validate() const;
};

struct Dataset {
  Task task = Task::kRegression;
  int n_classes = 0;
  std::vector<Eigen::MatrixXd> modalities;  // N x dim_m
  std::vector<double> targets;              // values, or class indices
  std::vector<Split> splits;                // all kTrain until split()

  std::size_t n_instances() const noexcept { return targets.size(); }
  std::size_t n_modalities() const noexcept { return modalities.size(); }
  std::vector<std::size_t> indices(Split s) const;
};

/// Rows `rows` of the dataset as a model batch plus aligned targets.
struct SplitData {
  tinymoe::DataBatch batch;
  std::vector<double> targets;
  std::vector<std::size_t> rows;
};

SplitData gather(const Dataset& data, std::span<const std::size_t> rows);
SplitData gather(const Dataset& data, Split s);

Dataset generate(const SyntheticSpec& spec);

/// Seeded permutation followed by contiguous train/val/test assignment.
Dataset split(Dataset data, const std::array<double, 3>& fractions, std::uint64_t seed);

/// Directory layout: meta.json, modality_<m>.bin, targets.bin, splits.bin.
void save_dataset(const std::filesystem::path& dir, const Dataset& data,
                  const SyntheticSpec* spec = nullptr);
Dataset load_dataset(const std::filesystem::path& dir);

}  // namespace btw::synthdata
