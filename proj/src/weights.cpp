// Copyright 2026 The btw Authors
// SPDX-License-Identifier: Apache-2.0

#include "btw/weights.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ostream>
#include <string>

#include "btw/distkl.hpp"
#include "btw/errors.hpp"
#include "btw/predictions.hpp"

namespace btw {

ModalityPredictions regression_predictions(Eigen::MatrixXd means, std::span<const double> targets) {
  if (means.cols() != 1 || static_cast<std::size_t>(means.rows()) != targets.size()) {
    throw ShapeError("regression predictions must be N x 1 and aligned with targets");
  }
  ModalityPredictions out;
  out.variances.resize(targets.size());
  for (Eigen::Index i = 0; i < means.rows(); ++i) {
    out.variances[static_cast<std::size_t>(i)] =
        distkl::residual_variance(targets[static_cast<std::size_t>(i)], means(i, 0));
  }
  out.output = std::move(means);
  return out;
}

ModalityPredictions classification_predictions(Eigen::MatrixXd probs) {
  ModalityPredictions out;
  out.labels.resize(static_cast<std::size_t>(probs.rows()));
  for (Eigen::Index i = 0; i < probs.rows(); ++i) {
    Eigen::Index best = 0;
    for (Eigen::Index c = 1; c < probs.cols(); ++c) {
      if (probs(i, c) > probs(i, best)) best = c;
    }
    out.labels[static_cast<std::size_t>(i)] = static_cast<int>(best);
  }
  out.output = std::move(probs);
  return out;
}

}  // namespace btw

namespace btw::weights {

namespace {

void check_entries(const Eigen::MatrixXd& v, const char* what) {
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    const double x = v.data()[i];
    if (!std::isfinite(x) || x < 0.0) {
      throw InvalidInputError(std::string(what) + " has a negative or non-finite entry");
    }
  }
}

// L1-normalizes `row` in place; an all-zero row becomes uniform.
void normalize_row(Eigen::Ref<Eigen::RowVectorXd, 0, Eigen::InnerStride<>> row) {
  double total = 0.0;
  for (Eigen::Index j = 0; j < row.size(); ++j) total += row(j);
  if (total > 0.0) {
    for (Eigen::Index j = 0; j < row.size(); ++j) row(j) /= total;
  } else {
    row.setConstant(1.0 / static_cast<double>(row.size()));
  }
}

Eigen::MatrixXd normalized_rows(Eigen::MatrixXd m) {
  for (Eigen::Index i = 0; i < m.rows(); ++i) normalize_row(m.row(i));
  return m;
}

Eigen::MatrixXd broadcast(const Eigen::RowVectorXd& row, Eigen::Index n) {
  return row.replicate(n, 1);
}

}  // namespace

RawKlMatrix::RawKlMatrix(Eigen::MatrixXd values) : values_(std::move(values)) {
  check_entries(values_, "raw KL matrix");
}

WeightMatrix::WeightMatrix(Eigen::MatrixXd values) : values_(std::move(values)) {
  check_entries(values_, "weight matrix");
  for (Eigen::Index i = 0; i < values_.rows(); ++i) {
    const double s = values_.row(i).sum();
    if (std::abs(s - 1.0) > 1e-9) {
      throw InvalidInputError("weight matrix row " + std::to_string(i) + " sums to " +
                              std::to_string(s));
    }
  }
}

WeightMatrix WeightMatrix::uniform(Eigen::Index n, Eigen::Index m) {
  return WeightMatrix(Eigen::MatrixXd::Constant(n, m, 1.0 / static_cast<double>(m)));
}

Eigen::VectorXd WeightMatrix::modality_means() const {
  return values_.colwise().mean().transpose();
}

ModalityMI::ModalityMI(Eigen::VectorXd values) : values_(std::move(values)) {
  for (Eigen::Index i = 0; i < values_.size(); ++i) {
    if (!std::isfinite(values_(i)) || values_(i) < 0.0) {
      throw InvalidInputError("modality MI must be finite and non-negative");
    }
  }
}

ModalityMI::ModalityMI(const std::vector<double>& values)
    : ModalityMI(Eigen::Map<const Eigen::VectorXd>(values.data(),
                                                   static_cast<Eigen::Index>(values.size()))) {}

SmoothingState SmoothingState::initial(const AlphaSchedule& schedule) {
  SmoothingState s;
  s.alpha = schedule.initial;
  return s;
}

RawKlMatrix instance_kl_weights(const PredictionSet& preds) {
  const auto m_count = static_cast<Eigen::Index>(preds.unimodal.size());
  const Eigen::Index n = preds.multimodal.size();
  if (m_count == 0) throw IncompleteInputError("no unimodal predictions");
  const bool regression = preds.task == Task::kRegression;
  auto complete = [&](const ModalityPredictions& p) {
    if (p.size() != n || p.size() == 0) return false;
    if (regression) return p.output.cols() == 1 && static_cast<Eigen::Index>(p.variances.size()) == n;
    return p.output.cols() == preds.multimodal.output.cols();
  };
  if (!complete(preds.multimodal)) throw IncompleteInputError("multimodal predictions incomplete");
  for (Eigen::Index m = 0; m < m_count; ++m) {
    if (!complete(preds.unimodal[static_cast<std::size_t>(m)])) {
      throw IncompleteInputError("unimodal predictions for modality " + std::to_string(m) +
                                 " are missing or misaligned");
    }
  }

  Eigen::MatrixXd raw(n, m_count);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto ii = static_cast<std::size_t>(i);
    if (regression) {
      const distkl::GaussianParams q{preds.multimodal.output(i, 0), preds.multimodal.variances[ii]};
      for (Eigen::Index m = 0; m < m_count; ++m) {
        const auto& u = preds.unimodal[static_cast<std::size_t>(m)];
        raw(i, m) = distkl::gaussian_kl({u.output(i, 0), u.variances[ii]}, q);
      }
    } else {
      auto row = [](const Eigen::MatrixXd& probs, Eigen::Index r) {
        std::vector<double> v(static_cast<std::size_t>(probs.cols()));
        for (Eigen::Index c = 0; c < probs.cols(); ++c) v[static_cast<std::size_t>(c)] = probs(r, c);
        return distkl::CategoricalDist(std::move(v));
      };
      const auto q = row(preds.multimodal.output, i);
      for (Eigen::Index m = 0; m < m_count; ++m) {
        raw(i, m) = distkl::categorical_kl(row(preds.unimodal[static_cast<std::size_t>(m)].output, i), q);
      }
    }
  }
  return RawKlMatrix(std::move(raw));
}

WeightMatrix combine_local(const RawKlMatrix& raw) {
  return WeightMatrix(normalized_rows(raw.values()));
}

WeightMatrix combine_bilevel(const RawKlMatrix& raw, const ModalityMI& mi, BilevelMode mode) {
  if (mi.size() != raw.n_modalities()) {
    throw ShapeError("combine_bilevel: " + std::to_string(mi.size()) + " MI values for " +
                     std::to_string(raw.n_modalities()) + " modalities");
  }
  Eigen::MatrixXd w = mode == BilevelMode::kPreNormalized ? normalized_rows(raw.values())
                                                          : raw.values();
  for (Eigen::Index i = 0; i < w.rows(); ++i) {
    for (Eigen::Index m = 0; m < w.cols(); ++m) w(i, m) = w(i, m) * mi.values()(m);
  }
  return WeightMatrix(normalized_rows(std::move(w)));
}

WeightMatrix combine_global_kl(const RawKlMatrix& raw) {
  if (raw.n_instances() == 0) throw InvalidInputError("combine_global_kl: empty matrix");
  Eigen::RowVectorXd means = raw.values().colwise().mean();
  normalize_row(means);
  return WeightMatrix(broadcast(means, raw.n_instances()));
}

WeightMatrix combine_global_mi(const ModalityMI& mi, Eigen::Index n) {
  if (n < 1) throw InvalidInputError("combine_global_mi: n must be >= 1");
  Eigen::RowVectorXd row = mi.values().transpose();
  normalize_row(row);
  return WeightMatrix(broadcast(row, n));
}

Eigen::MatrixXd blend(double alpha, const WeightMatrix& fresh, const WeightMatrix& prev) {
  if (fresh.n_instances() != prev.n_instances() || fresh.n_modalities() != prev.n_modalities()) {
    throw ShapeError("smoothing: weight matrix shape changed between epochs");
  }
  return alpha * fresh.values() + (1.0 - alpha) * prev.values();
}

std::pair<WeightMatrix, SmoothingState> smooth_update(const SmoothingState& state,
                                                      const WeightMatrix& fresh,
                                                      double current_metric,
                                                      Direction improves_when,
                                                      const AlphaSchedule& schedule) {
  SmoothingState next;
  next.alpha = state.alpha;
  if (state.prev_metric) {
    const bool improved = improves_when == Direction::kLowerIsBetter
                              ? current_metric < *state.prev_metric
                              : current_metric > *state.prev_metric;
    const double moved = improved ? state.alpha + schedule.step : state.alpha - schedule.step;
    next.alpha = std::clamp(moved, schedule.min, schedule.max);
  }

  WeightMatrix smoothed = state.prev_weights
                              ? WeightMatrix(normalized_rows(blend(next.alpha, fresh, *state.prev_weights)))
                              : fresh;
  next.prev_weights = smoothed;
  next.prev_metric = current_metric;
  next.epoch = state.epoch + 1;
  return {std::move(smoothed), std::move(next)};
}

void write_weight_rows(std::ostream& os, std::size_t epoch, const WeightMatrix& w) {
  char buf[64];
  for (Eigen::Index i = 0; i < w.n_instances(); ++i) {
    for (Eigen::Index m = 0; m < w.n_modalities(); ++m) {
      std::snprintf(buf, sizeof buf, "%.17g", w.values()(i, m));
      os << epoch << ',' << i << ',' << m << ',' << buf << '\n';
    }
  }
}

}  // namespace btw::weights
