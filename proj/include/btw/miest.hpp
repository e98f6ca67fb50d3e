// Copyright 2026 The btw Authors
// SPDX-License-Identifier: Apache-2.0
//
// Mutual information between prediction series: a contingency-table estimator
// for hard class labels and the Kraskov-Stoegbauer-Grassberger kNN estimator
// (variant 1, max-norm) for continuous scores. Results are in nats.

#pragma once

#include <cstdint>
#include <span>

namespace btw::miest {

inline constexpr int kDefaultNeighbors = 3;

/// Digamma function for x > 0, absolute error below 1e-12 for x >= 1.
double digamma(double x);

/// Empirical Shannon entropy of a label series.
double discrete_entropy(std::span<const int> labels);

/// Plug-in MI from the joint contingency table of two label series.
double discrete_mi(std::span<const int> a, std::span<const int> b);

/// KSG estimator. A uniform jitter of amplitude 1e-10 * max(1, mean|v|) is
/// added to each series from a stream seeded by `jitter_seed` (the same stream
/// for both series, so the estimate is exactly symmetric). Clamped below at 0.
double ksg_mi(std::span<const double> x, std::span<const double> y,
              int k = kDefaultNeighbors, std::uint64_t jitter_seed = 0);

/// -0.5 * ln(1 - rho^2): MI of a bivariate normal with correlation rho.
double gaussian_mi_analytic(double rho);

}  // namespace btw::miest
