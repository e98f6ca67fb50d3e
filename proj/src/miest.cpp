// Copyright 2026 The btw Authors
// SPDX-License-Identifier: Apache-2.0

#include "btw/miest.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <queue>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "btw/errors.hpp"

namespace btw::miest {

double digamma(double x) {
  if (!(x > 0.0) || !std::isfinite(x)) throw InvalidInputError("digamma needs a finite x > 0");
  double shift = 0.0;
  while (x < 10.0) {
    shift -= 1.0 / x;
    x += 1.0;
  }
  const double inv = 1.0 / x;
  const double inv2 = inv * inv;
  const double series =
      inv2 * (1.0 / 12 - inv2 * (1.0 / 120 - inv2 * (1.0 / 252 - inv2 * (1.0 / 240 - inv2 / 132))));
  return shift + std::log(x) - 0.5 * inv - series;
}

namespace {

void check_labels(std::span<const int> labels) {
  if (labels.size() < 2) throw InvalidInputError("label series needs length >= 2");
  for (int v : labels) {
    if (v < 0) throw InvalidInputError("label index " + std::to_string(v) + " is negative");
  }
}

// Sorting before summation makes the result independent of cell visiting order.
double sorted_sum(std::vector<double> terms) {
  std::sort(terms.begin(), terms.end());
  double s = 0.0;
  for (double t : terms) s += t;
  return s;
}

}  // namespace

double discrete_entropy(std::span<const int> labels) {
  check_labels(labels);
  std::map<int, std::size_t> counts;
  for (int v : labels) ++counts[v];
  const double n = static_cast<double>(labels.size());
  std::vector<double> terms;
  terms.reserve(counts.size());
  for (const auto& [label, c] : counts) {
    const double p = static_cast<double>(c) / n;
    terms.push_back(-p * std::log(p));
  }
  return sorted_sum(std::move(terms));
}

double discrete_mi(std::span<const int> a, std::span<const int> b) {
  if (a.size() != b.size()) {
    throw ShapeError("discrete_mi: lengths " + std::to_string(a.size()) + " and " +
                     std::to_string(b.size()));
  }
  check_labels(a);
  check_labels(b);

  std::map<int, std::size_t> ca;
  std::map<int, std::size_t> cb;
  std::map<std::pair<int, int>, std::size_t> joint;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ++ca[a[i]];
    ++cb[b[i]];
    ++joint[{a[i], b[i]}];
  }
  const double n = static_cast<double>(a.size());
  std::vector<double> terms;
  terms.reserve(joint.size());
  for (const auto& [cell, c] : joint) {
    const double nuv = static_cast<double>(c);
    const double nu = static_cast<double>(ca[cell.first]);
    const double nv = static_cast<double>(cb[cell.second]);
    terms.push_back(nuv / n * std::log(n * nuv / (nu * nv)));
  }
  return std::max(sorted_sum(std::move(terms)), 0.0);
}

namespace {

std::vector<double> jittered(std::span<const double> v, std::uint64_t seed) {
  double mean_abs = 0.0;
  for (double x : v) mean_abs += std::abs(x);
  mean_abs /= static_cast<double>(v.size());
  const double amplitude = 1e-10 * std::max(1.0, mean_abs);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<double> out(v.begin(), v.end());
  for (double& x : out) x += amplitude * unit(rng);
  return out;
}

// Number of sorted values v with |v - center| < radius, excluding the center
// point itself. Distances are compared as computed, matching the kNN pass.
std::size_t count_within(const std::vector<double>& sorted, double center, double radius) {
  const auto lo = std::partition_point(sorted.begin(), sorted.end(),
                                       [&](double v) { return v < center && center - v >= radius; });
  const auto hi = std::partition_point(lo, sorted.end(),
                                       [&](double v) { return v <= center || v - center < radius; });
  const auto n = static_cast<std::size_t>(hi - lo);
  return n > 0 ? n - 1 : 0;
}

}  // namespace

double ksg_mi(std::span<const double> x, std::span<const double> y, int k,
              std::uint64_t jitter_seed) {
  if (x.size() != y.size()) {
    throw ShapeError("ksg_mi: lengths " + std::to_string(x.size()) + " and " +
                     std::to_string(y.size()));
  }
  if (k < 1) throw InvalidInputError("ksg_mi: k must be >= 1");
  const std::size_t n = x.size();
  if (n < static_cast<std::size_t>(k) + 2) {
    throw InsufficientDataError("ksg_mi: " + std::to_string(n) + " samples for k=" +
                                std::to_string(k));
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (!std::isfinite(x[i]) || !std::isfinite(y[i])) {
      throw InvalidInputError("ksg_mi: non-finite score at index " + std::to_string(i));
    }
  }

  const std::vector<double> xs = jittered(x, jitter_seed);
  const std::vector<double> ys = jittered(y, jitter_seed);

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return xs[a] < xs[b] || (xs[a] == xs[b] && a < b);
  });

  // Max-norm distance to the k-th neighbour, found by walking outwards in
  // x-order until the x gap alone exceeds the current k-th best.
  std::vector<double> radius(n);
  const auto kk = static_cast<std::size_t>(k);
  for (std::size_t p = 0; p < n; ++p) {
    const std::size_t i = order[p];
    std::priority_queue<double> best;
    auto visit = [&](std::size_t j) {
      const double dx = std::abs(xs[i] - xs[j]);
      if (best.size() == kk && dx >= best.top()) return false;
      const double d = std::max(dx, std::abs(ys[i] - ys[j]));
      if (best.size() < kk) {
        best.push(d);
      } else if (d < best.top()) {
        best.pop();
        best.push(d);
      }
      return true;
    };
    std::size_t left = p;
    std::size_t right = p + 1;
    bool left_open = left > 0;
    bool right_open = right < n;
    while (left_open || right_open) {
      if (left_open) {
        left_open = visit(order[left - 1]);
        --left;
        if (left == 0) left_open = false;
      }
      if (right_open) {
        right_open = visit(order[right]);
        ++right;
        if (right == n) right_open = false;
      }
    }
    radius[i] = best.top();
  }

  std::vector<double> sx(xs);
  std::vector<double> sy(ys);
  std::sort(sx.begin(), sx.end());
  std::sort(sy.begin(), sy.end());

  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const auto nx = count_within(sx, xs[i], radius[i]);
    const auto ny = count_within(sy, ys[i], radius[i]);
    acc += digamma(static_cast<double>(nx) + 1.0) + digamma(static_cast<double>(ny) + 1.0);
  }
  const double mi = digamma(static_cast<double>(k)) + digamma(static_cast<double>(n)) -
                    acc / static_cast<double>(n);
  return std::max(mi, 0.0);
}

double gaussian_mi_analytic(double rho) {
  if (!(std::abs(rho) < 1.0)) throw InvalidInputError("gaussian_mi_analytic needs |rho| < 1");
  return -0.5 * std::log1p(-rho * rho);
}

}  // namespace btw::miest
