// Copyright 2026 The btw Authors
// SPDX-License-Identifier: Apache-2.0
//
// Sentiment-regression and classification metrics. Accuracies and F1 scores
// are fractions in [0, 1].
//
// Conventions:
//   Acc-7 / Acc-5   round half-to-even, then clamp to [-3, 3] / [-2, 2]
//   Acc-2 incl-zero sign agreement over all instances, zero is non-positive
//   Acc-2 non-zero  sign agreement over instances with a non-zero target
//   Weighted-F1     on the binary labels of the matching Acc-2 convention

#pragma once

#include <span>

namespace btw::metrics {

double mae(std::span<const double> preds, std::span<const double> targets);

struct Correlation {
  double value = 0.0;
  bool degenerate = false;  // a series had zero variance; value is 0
};

Correlation pearson(std::span<const double> preds, std::span<const double> targets);

enum class AccMode { kSeven, kFive, kTwoIncludeZero, kTwoNonZero };

/// Acc-7 / Acc-5 class of a continuous score.
double sentiment_bin(double v, AccMode mode);

double acc_k(std::span<const double> preds, std::span<const double> targets, AccMode mode);

struct F1Scores {
  double macro_f1 = 0.0;
  double weighted_f1 = 0.0;
  double accuracy = 0.0;
};

/// Per-class F1 over the classes present in `truth`; macro is their plain
/// mean, weighted uses class support.
F1Scores f1_scores(std::span<const int> preds, std::span<const int> truth);

struct RegressionReport {
  double mae = 0.0;
  Correlation corr;
  double acc7 = 0.0;
  double acc5 = 0.0;
  double acc2_include_zero = 0.0;
  double acc2_non_zero = 0.0;
  double weighted_f1_include_zero = 0.0;
  double weighted_f1_non_zero = 0.0;
};

RegressionReport regression_report(std::span<const double> preds, std::span<const double> targets);

}  // namespace btw::metrics
