// Copyright 2026 The btw Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "btw/distkl.hpp"
#include "btw/errors.hpp"

namespace {

using btw::distkl::CategoricalDist;
using btw::distkl::GaussianParams;
using btw::distkl::categorical_kl;
using btw::distkl::gaussian_kl;
using btw::distkl::kl_quadrature_oracle;

// Independent check: composite Simpson over a fixed window.
double simpson_kl(GaussianParams p, GaussianParams q, double lo, double hi, int n) {
  auto logpdf = [](double x, GaussianParams g) {
    const double d = x - g.mean;
    return -0.5 * std::log(2.0 * std::numbers::pi * g.variance) - d * d / (2.0 * g.variance);
  };
  auto f = [&](double x) {
    const double lp = logpdf(x, p);
    return std::exp(lp) * (lp - logpdf(x, q));
  };
  const double h = (hi - lo) / n;
  double s = f(lo) + f(hi);
  for (int i = 1; i < n; ++i) s += f(lo + i * h) * (i % 2 ? 4.0 : 2.0);
  return s * h / 3.0;
}

TEST(ResidualVariance, SquaredResidualWithFloor) {
  EXPECT_DOUBLE_EQ(btw::distkl::residual_variance(2.0, 0.5), 2.25);
  EXPECT_DOUBLE_EQ(btw::distkl::residual_variance(1.0, 1.0), btw::distkl::kVarianceFloor);
  EXPECT_DOUBLE_EQ(btw::distkl::residual_variance(-3.0, 3.0), 36.0);
  EXPECT_THROW(btw::distkl::residual_variance(NAN, 0.0), btw::InvalidInputError);
  EXPECT_THROW(btw::distkl::residual_variance(0.0, INFINITY), btw::InvalidInputError);
}

TEST(GaussianKl, IdenticalIsExactlyZero) {
  EXPECT_EQ(gaussian_kl({0.0, 1.0}, {0.0, 1.0}), 0.0);
  EXPECT_EQ(gaussian_kl({5.0, 2.0}, {5.0, 2.0}), 0.0);
}

TEST(GaussianKl, UnitVersusShiftedWide) {
  const double simpson = simpson_kl({0.0, 1.0}, {1.0, 4.0}, -12.0, 13.0, 200000);
  EXPECT_NEAR(gaussian_kl({0.0, 1.0}, {1.0, 4.0}), simpson, 1e-9);
  EXPECT_NEAR(gaussian_kl({0.0, 1.0}, {1.0, 4.0}), 0.44314718, 1e-7);
}

TEST(GaussianKl, RejectsInvalidParams) {
  EXPECT_THROW(gaussian_kl({0.0, 0.0}, {0.0, 1.0}), btw::InvalidInputError);
  EXPECT_THROW(gaussian_kl({0.0, 1.0}, {NAN, 1.0}), btw::InvalidInputError);
  EXPECT_THROW(gaussian_kl({0.0, 1.0}, {0.0, INFINITY}), btw::InvalidInputError);
}

TEST(QuadratureOracle, AgreesWithClosedForm) {
  EXPECT_LT(std::abs(kl_quadrature_oracle({0.0, 1.0}, {0.0, 1.0}, 100000)), 1e-8);
  EXPECT_NEAR(kl_quadrature_oracle({0.0, 1.0}, {1.0, 4.0}, 100000), gaussian_kl({0.0, 1.0}, {1.0, 4.0}), 1e-6);
  EXPECT_NEAR(kl_quadrature_oracle({2.0, 0.5}, {-1.0, 3.0}, 100000), gaussian_kl({2.0, 0.5}, {-1.0, 3.0}), 1e-6);
  EXPECT_THROW(kl_quadrature_oracle({0.0, 1.0}, {0.0, 1.0}, 100), btw::InvalidInputError);
}

TEST(GaussianKl, NonNegativeOverRandomPairs) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> mean(-10.0, 10.0);
  std::uniform_real_distribution<double> logvar(std::log(1e-3), std::log(1e3));
  for (int i = 0; i < 1000; ++i) {
    const GaussianParams p{mean(rng), std::exp(logvar(rng))};
    const GaussianParams q{mean(rng), std::exp(logvar(rng))};
    EXPECT_GE(gaussian_kl(p, q), -1e-12);
  }
}

TEST(CategoricalKl, HandComputedCases) {
  EXPECT_EQ(categorical_kl(CategoricalDist({0.5, 0.5}), CategoricalDist({0.5, 0.5})), 0.0);
  EXPECT_NEAR(categorical_kl(CategoricalDist({1.0, 0.0}), CategoricalDist({0.5, 0.5})), std::log(2.0), 1e-12);
  const double expected = 0.25 * std::log(0.5) + 0.5 * std::log(2.0);
  EXPECT_NEAR(categorical_kl(CategoricalDist({0.25, 0.25, 0.5}), CategoricalDist({0.5, 0.25, 0.25})), expected, 1e-12);
  EXPECT_NEAR(expected, 0.17328680, 1e-8);
}

TEST(CategoricalKl, AsymmetryWitness) {
  const CategoricalDist p({1.0, 0.0});
  const CategoricalDist q({0.5, 0.5});
  EXPECT_GT(std::abs(categorical_kl(p, q) - categorical_kl(q, p)), 0.1);
}

TEST(CategoricalKl, ZeroSupportInQIsClampedFinite) {
  const double kl = categorical_kl(CategoricalDist({0.5, 0.5}), CategoricalDist({1.0, 0.0}));
  EXPECT_TRUE(std::isfinite(kl));
  EXPECT_GT(kl, 5.0);
}

TEST(CategoricalKl, ShapeAndValidation) {
  EXPECT_THROW(categorical_kl(CategoricalDist({0.5, 0.5}), CategoricalDist({0.2, 0.3, 0.5})), btw::ShapeError);
  EXPECT_THROW(CategoricalDist({1.0}), btw::InvalidInputError);
  EXPECT_THROW(CategoricalDist({0.7, 0.7}), btw::InvalidInputError);
  EXPECT_THROW(CategoricalDist({1.2, -0.2}), btw::InvalidInputError);
}

TEST(CategoricalKl, NonNegativeAndSelfZeroOverRandomDists) {
  std::mt19937_64 rng(3);
  std::gamma_distribution<double> g(0.5, 1.0);
  for (int i = 0; i < 1000; ++i) {
    std::vector<double> a(4);
    std::vector<double> b(4);
    double sa = 0.0;
    double sb = 0.0;
    for (int c = 0; c < 4; ++c) {
      sa += a[c] = g(rng) + 1e-12;
      sb += b[c] = g(rng) + 1e-12;
    }
    for (int c = 0; c < 4; ++c) {
      a[c] /= sa;
      b[c] /= sb;
    }
    const CategoricalDist p(a);
    const CategoricalDist q(b);
    EXPECT_GE(categorical_kl(p, q), -1e-12);
    EXPECT_EQ(categorical_kl(p, p), 0.0);
  }
}

}  // namespace
