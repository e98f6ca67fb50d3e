// Copyright 2026 The btw Authors
// SPDX-License-Identifier: Apache-2.0

#include "btw/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "btw/errors.hpp"

namespace btw::metrics {

namespace {

void check_regression(std::span<const double> p, std::span<const double> t) {
  if (p.size() != t.size()) throw ShapeError("predictions and targets differ in length");
  if (p.size() < 2) throw InvalidInputError("regression metrics need at least 2 instances");
}

bool positive(double v) { return v > 0.0; }

}  // namespace

double mae(std::span<const double> preds, std::span<const double> targets) {
  check_regression(preds, targets);
  double s = 0.0;
  for (std::size_t i = 0; i < preds.size(); ++i) s += std::abs(preds[i] - targets[i]);
  return s / static_cast<double>(preds.size());
}

Correlation pearson(std::span<const double> preds, std::span<const double> targets) {
  check_regression(preds, targets);
  const double n = static_cast<double>(preds.size());
  double mp = 0.0;
  double mt = 0.0;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    mp += preds[i];
    mt += targets[i];
  }
  mp /= n;
  mt /= n;
  double spp = 0.0;
  double stt = 0.0;
  double spt = 0.0;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    const double a = preds[i] - mp;
    const double b = targets[i] - mt;
    spp += a * a;
    stt += b * b;
    spt += a * b;
  }
  if (spp == 0.0 || stt == 0.0) return {0.0, true};
  return {std::clamp(spt / std::sqrt(spp * stt), -1.0, 1.0), false};
}

double sentiment_bin(double v, AccMode mode) {
  const double bound = mode == AccMode::kSeven ? 3.0 : 2.0;
  return std::clamp(std::nearbyint(v), -bound, bound);
}

double acc_k(std::span<const double> preds, std::span<const double> targets, AccMode mode) {
  check_regression(preds, targets);
  std::size_t hits = 0;
  std::size_t total = 0;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    switch (mode) {
      case AccMode::kSeven:
      case AccMode::kFive:
        hits += sentiment_bin(preds[i], mode) == sentiment_bin(targets[i], mode);
        ++total;
        break;
      case AccMode::kTwoIncludeZero:
        hits += positive(preds[i]) == positive(targets[i]);
        ++total;
        break;
      case AccMode::kTwoNonZero:
        if (targets[i] == 0.0) break;
        hits += positive(preds[i]) == positive(targets[i]);
        ++total;
        break;
    }
  }
  return total == 0 ? 0.0 : static_cast<double>(hits) / static_cast<double>(total);
}

F1Scores f1_scores(std::span<const int> preds, std::span<const int> truth) {
  if (preds.size() != truth.size()) throw ShapeError("predicted and true labels differ in length");
  if (preds.empty()) throw InvalidInputError("f1_scores needs at least one instance");

  std::map<int, std::size_t> support;
  std::map<int, std::size_t> predicted;
  std::map<int, std::size_t> true_pos;
  std::size_t correct = 0;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    ++support[truth[i]];
    ++predicted[preds[i]];
    if (preds[i] == truth[i]) {
      ++true_pos[truth[i]];
      ++correct;
    }
  }
  F1Scores out;
  const double n = static_cast<double>(preds.size());
  for (const auto& [cls, sup] : support) {
    const double tp = static_cast<double>(true_pos[cls]);
    // F1 = 2TP / (2TP + FP + FN) = 2TP / (predicted + support)
    const double f1 = tp == 0.0 ? 0.0 : 2.0 * tp / static_cast<double>(predicted[cls] + sup);
    out.macro_f1 += f1;
    out.weighted_f1 += f1 * static_cast<double>(sup) / n;
  }
  out.macro_f1 /= static_cast<double>(support.size());
  out.accuracy = static_cast<double>(correct) / n;
  return out;
}

RegressionReport regression_report(std::span<const double> preds, std::span<const double> targets) {
  check_regression(preds, targets);
  RegressionReport r;
  r.mae = mae(preds, targets);
  r.corr = pearson(preds, targets);
  r.acc7 = acc_k(preds, targets, AccMode::kSeven);
  r.acc5 = acc_k(preds, targets, AccMode::kFive);
  r.acc2_include_zero = acc_k(preds, targets, AccMode::kTwoIncludeZero);
  r.acc2_non_zero = acc_k(preds, targets, AccMode::kTwoNonZero);

  std::vector<int> p_all;
  std::vector<int> t_all;
  std::vector<int> p_nz;
  std::vector<int> t_nz;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    p_all.push_back(positive(preds[i]));
    t_all.push_back(positive(targets[i]));
    if (targets[i] != 0.0) {
      p_nz.push_back(positive(preds[i]));
      t_nz.push_back(positive(targets[i]));
    }
  }
  r.weighted_f1_include_zero = f1_scores(p_all, t_all).weighted_f1;
  r.weighted_f1_non_zero = t_nz.empty() ? 0.0 : f1_scores(p_nz, t_nz).weighted_f1;
  return r;
}

}  // namespace btw::metrics
