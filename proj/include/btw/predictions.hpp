// Copyright 2026 The btw Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <Eigen/Dense>
#include <span>
#include <vector>

namespace btw {

enum class Task { kRegression, kClassification };

/// One model's outputs over a split.
struct ModalityPredictions {
  Eigen::MatrixXd output;          // N x 1 means, or N x C class probabilities
  std::vector<double> variances;   // regression: floored squared residuals
  std::vector<int> labels;         // classification: argmax of output rows

  Eigen::Index size() const noexcept { return output.rows(); }
};

/// Frozen unimodal predictions and current multimodal predictions for one
/// split, aligned on instance order.
struct PredictionSet {
  Task task = Task::kRegression;
  std::vector<ModalityPredictions> unimodal;
  ModalityPredictions multimodal;
  std::vector<double> targets;
};

/// Fills residual variances from the ground truth.
ModalityPredictions regression_predictions(Eigen::MatrixXd means, std::span<const double> targets);
/// Fills argmax labels; ties go to the lower class index.
ModalityPredictions classification_predictions(Eigen::MatrixXd probs);

}  // namespace btw
