// Copyright 2026 The btw Authors
// SPDX-License-Identifier: Apache-2.0
//
// Combination of per-instance KL divergences and per-modality mutual
// information into row-stochastic modality weights, and the adaptive
// exponential smoothing that carries weights across epochs.

#pragma once

#include <Eigen/Dense>
#include <cstddef>
#include <iosfwd>
#include <optional>
#include <utility>
#include <vector>

namespace btw {
struct PredictionSet;
}

namespace btw::weights {

/// N x M non-negative divergences, one per (instance, modality).
class RawKlMatrix {
 public:
  RawKlMatrix() = default;
  explicit RawKlMatrix(Eigen::MatrixXd values);

  const Eigen::MatrixXd& values() const noexcept { return values_; }
  Eigen::Index n_instances() const noexcept { return values_.rows(); }
  Eigen::Index n_modalities() const noexcept { return values_.cols(); }

 private:
  Eigen::MatrixXd values_;
};

/// N x M weights whose rows each sum to one.
class WeightMatrix {
 public:
  WeightMatrix() = default;
  /// Validates non-negativity, finiteness and row sums (1e-9).
  explicit WeightMatrix(Eigen::MatrixXd values);

  /// Rows each filled with 1/M.
  static WeightMatrix uniform(Eigen::Index n, Eigen::Index m);

  const Eigen::MatrixXd& values() const noexcept { return values_; }
  Eigen::Index n_instances() const noexcept { return values_.rows(); }
  Eigen::Index n_modalities() const noexcept { return values_.cols(); }

  /// Column means; these sum to one.
  Eigen::VectorXd modality_means() const;

 private:
  Eigen::MatrixXd values_;
};

/// Per-modality MI in nats.
class ModalityMI {
 public:
  ModalityMI() = default;
  explicit ModalityMI(Eigen::VectorXd values);
  explicit ModalityMI(const std::vector<double>& values);

  const Eigen::VectorXd& values() const noexcept { return values_; }
  Eigen::Index size() const noexcept { return values_.size(); }

 private:
  Eigen::VectorXd values_;
};

/// How the raw KL values enter the bi-level product.
enum class BilevelMode {
  kLiteral,        // raw KL times MI, normalized once
  kPreNormalized,  // KL rows L1-normalized first, then times MI, normalized again
};

enum class Direction { kLowerIsBetter, kHigherIsBetter };

struct AlphaSchedule {
  double initial = 0.5;
  double step = 0.1;
  double min = 0.1;
  double max = 0.9;
};

struct SmoothingState {
  double alpha = 0.5;
  std::optional<WeightMatrix> prev_weights;
  std::optional<double> prev_metric;
  std::size_t epoch = 0;

  static SmoothingState initial(const AlphaSchedule& schedule);
};

/// Entry (i, m) is KL(unimodal_i^m || multimodal_i).
RawKlMatrix instance_kl_weights(const PredictionSet& preds);

WeightMatrix combine_local(const RawKlMatrix& raw);
WeightMatrix combine_bilevel(const RawKlMatrix& raw, const ModalityMI& mi,
                             BilevelMode mode = BilevelMode::kLiteral);
/// Every row is the L1-normalized vector of column means of `raw`.
WeightMatrix combine_global_kl(const RawKlMatrix& raw);
/// `n` identical rows equal to the L1-normalized MI vector.
WeightMatrix combine_global_mi(const ModalityMI& mi, Eigen::Index n);

/// alpha * fresh + (1 - alpha) * prev, without renormalization.
Eigen::MatrixXd blend(double alpha, const WeightMatrix& fresh, const WeightMatrix& prev);

/// One epoch of adaptive smoothing. Alpha moves by +step when
/// `current_metric` strictly improves on the previous metric and by -step
/// otherwise, clamped to the schedule bounds; no move on the first call.
std::pair<WeightMatrix, SmoothingState> smooth_update(const SmoothingState& state,
                                                      const WeightMatrix& fresh,
                                                      double current_metric,
                                                      Direction improves_when,
                                                      const AlphaSchedule& schedule);

/// Appends `epoch,instance,modality,weight` rows.
void write_weight_rows(std::ostream& os, std::size_t epoch, const WeightMatrix& w);

}  // namespace btw::weights
