// Copyright 2026 The btw Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <random>
#include <vector>

#include "btw/errors.hpp"
#include "btw/miest.hpp"

namespace {

using namespace btw::miest;

struct Pair {
  std::vector<double> x;
  std::vector<double> y;
};

Pair bivariate(std::size_t n, double rho, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> z;
  Pair p;
  for (std::size_t i = 0; i < n; ++i) {
    const double a = z(rng);
    const double b = z(rng);
    p.x.push_back(a);
    p.y.push_back(rho * a + std::sqrt(1.0 - rho * rho) * b);
  }
  return p;
}

// Brute-force KSG (variant 1) on distinct values; O(N^2) oracle.
double ksg_bruteforce(const std::vector<double>& x, const std::vector<double>& y, int k) {
  const std::size_t n = x.size();
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> d;
    for (std::size_t j = 0; j < n; ++j) {
      if (j != i) d.push_back(std::max(std::abs(x[i] - x[j]), std::abs(y[i] - y[j])));
    }
    std::nth_element(d.begin(), d.begin() + (k - 1), d.end());
    const double eps = d[static_cast<std::size_t>(k - 1)];
    int nx = 0;
    int ny = 0;
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      nx += std::abs(x[i] - x[j]) < eps;
      ny += std::abs(y[i] - y[j]) < eps;
    }
    acc += digamma(nx + 1) + digamma(ny + 1);
  }
  return std::max(0.0, digamma(k) + digamma(static_cast<double>(n)) - acc / static_cast<double>(n));
}

TEST(Digamma, ReferenceValues) {
  EXPECT_NEAR(digamma(1.0), -0.5772156649015329, 1e-12);
  EXPECT_NEAR(digamma(0.5), -1.9635100260214235, 1e-12);
  EXPECT_NEAR(digamma(10.0), 2.251752589066721, 1e-12);
}

TEST(Digamma, RecurrenceHolds) {
  for (double x : {0.3, 1.7, 4.2, 9.9, 25.0, 1e4}) {
    EXPECT_NEAR(digamma(x + 1.0), digamma(x) + 1.0 / x, 1e-11) << x;
  }
}

TEST(DiscreteMi, HandComputedCases) {
  const std::vector<int> a{0, 0, 1, 1};
  EXPECT_NEAR(discrete_mi(a, a), std::log(2.0), 1e-12);
  EXPECT_NEAR(discrete_mi(a, std::vector<int>{0, 1, 0, 1}), 0.0, 1e-15);
  EXPECT_NEAR(discrete_mi(std::vector<int>{0, 1, 2, 0, 1, 2}, std::vector<int>{2, 0, 1, 2, 0, 1}), std::log(3.0),
              1e-12);
  EXPECT_THROW(discrete_mi(a, std::vector<int>{0, 1}), btw::ShapeError);
}

TEST(DiscreteMi, SymmetricNonNegativeAndSelfEntropy) {
  std::mt19937_64 rng(5);
  for (int t = 0; t < 50; ++t) {
    std::uniform_int_distribution<int> ca(0, 1 + t % 5);
    std::uniform_int_distribution<int> cb(0, 2 + t % 3);
    std::vector<int> a(200);
    std::vector<int> b(200);
    for (auto& v : a) v = ca(rng);
    for (std::size_t i = 0; i < b.size(); ++i) b[i] = (i % 3 == 0) ? a[i] : cb(rng);
    EXPECT_EQ(discrete_mi(a, b), discrete_mi(b, a));
    EXPECT_GE(discrete_mi(a, b), 0.0);
    EXPECT_NEAR(discrete_mi(a, a), discrete_entropy(a), 1e-12);
  }
}

TEST(KsgMi, MatchesBruteForceOracle) {
  const Pair p = bivariate(400, 0.7, 21);
  EXPECT_NEAR(ksg_mi(p.x, p.y, 3, 0), ksg_bruteforce(p.x, p.y, 3), 1e-9);
  EXPECT_NEAR(ksg_mi(p.x, p.y, 5, 0), ksg_bruteforce(p.x, p.y, 5), 1e-9);
}

TEST(KsgMi, CorrelatedGaussianCloseToAnalytic) {
  const Pair p = bivariate(10000, 0.9, 1);
  EXPECT_NEAR(ksg_mi(p.x, p.y, 3, 7), gaussian_mi_analytic(0.9), 0.05);
}

TEST(KsgMi, IndependentNearZero) {
  const Pair p = bivariate(5000, 0.0, 2);
  EXPECT_LE(std::abs(ksg_mi(p.x, p.y, 3, 7)), 0.02);
}

TEST(KsgMi, DeterministicDependenceIsLarge) {
  const Pair p = bivariate(1000, 0.0, 3);
  EXPECT_GT(ksg_mi(p.x, p.x, 3, 9), 2.0);
}

TEST(KsgMi, SymmetricForFixedJitterSeed) {
  const Pair p = bivariate(2000, 0.5, 4);
  EXPECT_LE(std::abs(ksg_mi(p.x, p.y, 3, 13) - ksg_mi(p.y, p.x, 3, 13)), 1e-9);
}

TEST(KsgMi, HandlesHeavyTies) {
  std::vector<double> x(500);
  std::vector<double> y(500);
  for (std::size_t i = 0; i < x.size(); ++i) {
    x[i] = static_cast<double>(i % 4);
    y[i] = static_cast<double>((i % 4) / 2);
  }
  const double mi = ksg_mi(x, y, 3, 1);
  EXPECT_TRUE(std::isfinite(mi));
  EXPECT_GE(mi, 0.0);
}

TEST(KsgMi, PermutationDestroysDependence) {
  Pair p = bivariate(5000, 0.9, 6);
  std::mt19937_64 rng(6);
  std::shuffle(p.y.begin(), p.y.end(), rng);
  EXPECT_LT(ksg_mi(p.x, p.y, 3, 1), 0.05);
}

TEST(KsgMi, LargerSampleIsCloser) {
  double err_small = 0.0;
  double err_large = 0.0;
  for (std::uint64_t s = 0; s < 10; ++s) {
    const Pair a = bivariate(500, 0.9, 100 + s);
    const Pair b = bivariate(10000, 0.9, 200 + s);
    err_small += std::abs(ksg_mi(a.x, a.y, 3, s) - gaussian_mi_analytic(0.9));
    err_large += std::abs(ksg_mi(b.x, b.y, 3, s) - gaussian_mi_analytic(0.9));
  }
  EXPECT_LT(err_large, err_small);
}

TEST(KsgMi, Preconditions) {
  const std::vector<double> four{1, 2, 3, 4};
  EXPECT_THROW(ksg_mi(four, four, 3, 0), btw::InsufficientDataError);
  EXPECT_THROW(ksg_mi(four, std::vector<double>{1, 2, 3}, 1, 0), btw::ShapeError);
  EXPECT_THROW(ksg_mi(four, four, 0, 0), btw::InvalidInputError);
  EXPECT_THROW(ksg_mi(std::vector<double>{1, 2, NAN, 4, 5, 6}, std::vector<double>{1, 2, 3, 4, 5, 6}, 1, 0),
               btw::InvalidInputError);
}

TEST(GaussianMiAnalytic, Values) {
  EXPECT_EQ(gaussian_mi_analytic(0.0), 0.0);
  EXPECT_NEAR(gaussian_mi_analytic(0.9), -0.5 * std::log(1.0 - 0.81), 1e-14);
  EXPECT_NEAR(gaussian_mi_analytic(0.9), 0.83037, 1e-5);
  EXPECT_EQ(gaussian_mi_analytic(-0.9), gaussian_mi_analytic(0.9));
  EXPECT_THROW(gaussian_mi_analytic(1.0), btw::InvalidInputError);
}

}  // namespace
