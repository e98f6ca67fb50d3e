// Copyright 2026 The btw Authors
// SPDX-License-Identifier: Apache-2.0
//
// Scalar Gaussian and categorical distributions plus the exact KL divergences
// used for instance-level modality weights. All logarithms are natural (nats).

#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace btw::distkl {

inline constexpr double kVarianceFloor = 1e-6;
inline constexpr double kCategoricalClamp = 1e-9;

struct GaussianParams {
  double mean = 0.0;
  double variance = 1.0;
};

/// Throws InvalidInputError unless mean is finite and variance is finite
/// and at least kVarianceFloor.
void validate(const GaussianParams& g);

/// Squared residual used as the conditional-variance estimate, floored.
double residual_variance(double y_true, double mu);

double gaussian_kl(const GaussianParams& p, const GaussianParams& q);

/// Trapezoidal quadrature of the Gaussian KL integral. Test oracle only; the
/// grid spans mean +/- 12 sd of both distributions.
double kl_quadrature_oracle(const GaussianParams& p, const GaussianParams& q,
                            std::size_t grid_points);

class CategoricalDist {
 public:
  /// Validates entries in [0, 1], at least two classes and a sum of one
  /// within 1e-9.
  explicit CategoricalDist(std::vector<double> probs);

  std::span<const double> probs() const noexcept { return probs_; }
  std::size_t size() const noexcept { return probs_.size(); }

  /// Entries clamped to [kCategoricalClamp, 1]; renormalized only if a
  /// clamp actually fired.
  CategoricalDist clamped() const;

 private:
  struct Unchecked {};
  CategoricalDist(std::vector<double> probs, Unchecked) : probs_(std::move(probs)) {}

  std::vector<double> probs_;
};

/// KL(p || q) with q clamped before evaluation; 0 * log(0 / q) = 0.
double categorical_kl(const CategoricalDist& p, const CategoricalDist& q);

}  // namespace btw::distkl
