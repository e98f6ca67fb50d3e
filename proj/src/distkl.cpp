// Copyright 2026 The btw Authors
// SPDX-License-Identifier: Apache-2.0

#include "btw/distkl.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "btw/errors.hpp"

namespace btw::distkl {

void validate(const GaussianParams& g) {
  if (!std::isfinite(g.mean)) throw InvalidInputError("gaussian mean is not finite");
  if (!std::isfinite(g.variance)) throw InvalidInputError("gaussian variance is not finite");
  if (g.variance < kVarianceFloor) {
    throw InvalidInputError("gaussian variance " + std::to_string(g.variance) +
                            " is below the variance floor");
  }
}

double residual_variance(double y_true, double mu) {
  if (!std::isfinite(y_true) || !std::isfinite(mu)) {
    throw InvalidInputError("residual_variance: non-finite input");
  }
  const double r = y_true - mu;
  return std::max(r * r, kVarianceFloor);
}

double gaussian_kl(const GaussianParams& p, const GaussianParams& q) {
  validate(p);
  validate(q);
  // log(sd_q / sd_p) written on variances so that KL(p||p) is exactly zero.
  const double d = p.mean - q.mean;
  const double kl =
      0.5 * std::log(q.variance / p.variance) + (p.variance + d * d) / (2.0 * q.variance) - 0.5;
  return std::max(kl, 0.0);
}

namespace {

double log_density(const GaussianParams& g, double x) {
  const double d = x - g.mean;
  return -0.5 * std::log(2.0 * std::numbers::pi * g.variance) - d * d / (2.0 * g.variance);
}

}  // namespace

double kl_quadrature_oracle(const GaussianParams& p, const GaussianParams& q,
                            std::size_t grid_points) {
  validate(p);
  validate(q);
  if (grid_points < 10000) throw InvalidInputError("kl_quadrature_oracle needs >= 1e4 points");

  const double sp = std::sqrt(p.variance);
  const double sq = std::sqrt(q.variance);
  const double lo = std::min(p.mean - 12.0 * sp, q.mean - 12.0 * sq);
  const double hi = std::max(p.mean + 12.0 * sp, q.mean + 12.0 * sq);
  const double h = (hi - lo) / static_cast<double>(grid_points - 1);

  // Neumaier-compensated trapezoid.
  double sum = 0.0;
  double comp = 0.0;
  for (std::size_t k = 0; k < grid_points; ++k) {
    const double x = lo + h * static_cast<double>(k);
    const double lp = log_density(p, x);
    const double density = std::exp(lp);
    double term = density == 0.0 ? 0.0 : density * (lp - log_density(q, x));
    if (k == 0 || k + 1 == grid_points) term *= 0.5;
    const double t = sum + term;
    if (std::abs(sum) >= std::abs(term)) {
      comp += (sum - t) + term;
    } else {
      comp += (term - t) + sum;
    }
    sum = t;
  }
  return (sum + comp) * h;
}

CategoricalDist::CategoricalDist(std::vector<double> probs) : probs_(std::move(probs)) {
  if (probs_.size() < 2) throw InvalidInputError("categorical distribution needs >= 2 classes");
  double total = 0.0;
  for (double v : probs_) {
    if (!(v >= 0.0 && v <= 1.0)) throw InvalidInputError("categorical entry outside [0, 1]");
    total += v;
  }
  if (std::abs(total - 1.0) > 1e-9) {
    throw InvalidInputError("categorical entries sum to " + std::to_string(total));
  }
}

CategoricalDist CategoricalDist::clamped() const {
  std::vector<double> out(probs_);
  bool fired = false;
  for (double& v : out) {
    if (v < kCategoricalClamp) {
      v = kCategoricalClamp;
      fired = true;
    }
  }
  if (fired) {
    double total = 0.0;
    for (double v : out) total += v;
    for (double& v : out) v /= total;
  }
  return CategoricalDist(std::move(out), Unchecked{});
}

double categorical_kl(const CategoricalDist& p, const CategoricalDist& q) {
  if (p.size() != q.size()) {
    throw ShapeError("categorical_kl: " + std::to_string(p.size()) + " vs " +
                     std::to_string(q.size()) + " classes");
  }
  if (std::ranges::equal(p.probs(), q.probs())) return 0.0;
  const CategoricalDist qc = q.clamped();
  const auto pp = p.probs();
  const auto qq = qc.probs();
  double kl = 0.0;
  for (std::size_t c = 0; c < pp.size(); ++c) {
    if (pp[c] > 0.0) kl += pp[c] * std::log(pp[c] / qq[c]);
  }
  return std::max(kl, 0.0);
}

}  // namespace btw::distkl
