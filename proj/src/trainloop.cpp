// Copyright 2026 The btw Authors
// SPDX-License-Identifier: Apache-2.0

#include "btw/trainloop.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <random>
#include <string>

#include "btw/errors.hpp"
#include "btw/miest.hpp"
#include "btw/seeds.hpp"

namespace btw::trainloop {

namespace {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;
using synthdata::SplitData;
using tinymoe::ModelParams;

constexpr Index kPredictChunk = 256;

SplitData slice(const SplitData& src, std::span<const std::size_t> positions) {
  SplitData out;
  const auto n = static_cast<Index>(positions.size());
  for (const auto& x : src.batch.modalities) {
    MatrixXd sub(n, x.cols());
    for (Index r = 0; r < n; ++r) sub.row(r) = x.row(static_cast<Index>(positions[static_cast<std::size_t>(r)]));
    out.batch.modalities.push_back(std::move(sub));
  }
  for (auto p : positions) {
    out.targets.push_back(src.targets[p]);
    out.rows.push_back(src.rows[p]);
  }
  return out;
}

MatrixXd slice_rows(const MatrixXd& m, std::span<const std::size_t> positions) {
  MatrixXd out(static_cast<Index>(positions.size()), m.cols());
  for (std::size_t r = 0; r < positions.size(); ++r) {
    out.row(static_cast<Index>(r)) = m.row(static_cast<Index>(positions[r]));
  }
  return out;
}

tinymoe::ForwardResult run(const ModelParams& model, const tinymoe::DataBatch& batch,
                           std::optional<Index> unimodal, const MatrixXd* weights) {
  if (unimodal) return tinymoe::unimodal_forward_traced(model, batch, *unimodal);
  if (weights) return tinymoe::forward(model, batch, *weights);
  return tinymoe::forward(model, batch);
}

// One pass over `train` in a freshly shuffled order. Returns the
// instance-weighted mean training loss.
double train_epoch(ModelParams& model, const SplitData& train, std::optional<Index> unimodal,
                   const MatrixXd* weights, const ExperimentConfig& cfg, std::mt19937_64& rng) {
  const std::size_t n = train.targets.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  for (std::size_t i = n - 1; i > 0; --i) {
    std::uniform_int_distribution<std::size_t> pick(0, i);
    std::swap(order[i], order[pick(rng)]);
  }
  double total = 0.0;
  for (std::size_t start = 0; start < n; start += cfg.batch_size) {
    const std::size_t stop = std::min(n, start + cfg.batch_size);
    const std::span<const std::size_t> pos(order.data() + start, stop - start);
    const SplitData mb = slice(train, pos);
    MatrixXd mb_weights;
    if (weights) mb_weights = slice_rows(*weights, pos);
    const auto fwd = run(model, mb.batch, unimodal, weights ? &mb_weights : nullptr);
    const auto l = tinymoe::loss(model.config.task, fwd.predictions, mb.targets);
    if (!std::isfinite(l.value)) throw NumericError("non-finite training loss");
    const auto grads = tinymoe::backward(model, fwd.trace, l.grad);
    tinymoe::sgd_step(model, grads, cfg.lr);
    total += l.value * static_cast<double>(stop - start);
  }
  return n == 0 ? 0.0 : total / static_cast<double>(n);
}

template <typename F>
auto guarded(const char* phase, std::size_t epoch, F&& body) {
  try {
    return body();
  } catch (const NumericError& e) {
    throw TrainingFailure(phase, epoch, e.what());
  }
}

EvalReport report_for(Task task, const ModalityPredictions& p, const SplitData& split) {
  EvalReport r;
  r.task = task;
  r.loss = tinymoe::loss(task, p.output, split.targets).value;
  if (task == Task::kRegression) {
    std::vector<double> preds(p.output.data(), p.output.data() + p.output.rows());
    r.regression = metrics::regression_report(preds, split.targets);
  } else {
    std::vector<int> truth;
    for (double t : split.targets) truth.push_back(static_cast<int>(t));
    r.classification = metrics::f1_scores(p.labels, truth);
  }
  return r;
}

ModalityPredictions wrap(Task task, MatrixXd out, const SplitData& split) {
  return task == Task::kRegression ? regression_predictions(std::move(out), split.targets)
                                   : classification_predictions(std::move(out));
}

VectorXd uniform_means(Index m) { return VectorXd::Constant(m, 1.0 / static_cast<double>(m)); }

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace

std::string_view to_string(Variant v) {
  switch (v) {
    case Variant::kUnweighted: return "unweighted";
    case Variant::kBtwLocal: return "btw_local";
    case Variant::kBtwGlobalKl: return "btw_global_kl";
    case Variant::kBtwGlobalMi: return "btw_global_mi";
    case Variant::kBtw: return "btw";
  }
  return "unknown";
}

std::optional<Variant> parse_variant(std::string_view s) {
  for (Variant v : {Variant::kUnweighted, Variant::kBtwLocal, Variant::kBtwGlobalKl,
                    Variant::kBtwGlobalMi, Variant::kBtw}) {
    if (s == to_string(v)) return v;
  }
  return std::nullopt;
}

void ExperimentConfig::validate() const {
  if (!(lr > 0.0) || !std::isfinite(lr)) throw InvalidInputError("lr must be > 0");
  if (batch_size < 1) throw InvalidInputError("batch_size must be >= 1");
  if (mi_neighbors < 1) throw InvalidInputError("mi.k must be >= 1");
  if (!(alpha.min <= alpha.initial && alpha.initial <= alpha.max) || !(alpha.step >= 0.0) ||
      !(alpha.min >= 0.0 && alpha.max <= 1.0)) {
    throw InvalidInputError("alpha schedule must satisfy 0 <= min <= initial <= max <= 1, step >= 0");
  }
  if (!data_path) data.validate();
}

synthdata::SyntheticSpec ExperimentConfig::resolved_data_spec() const {
  synthdata::SyntheticSpec s = data;
  s.seed = data_seed.value_or(seed);
  return s;
}

tinymoe::MoeConfig ExperimentConfig::model_config(const synthdata::Dataset& d) const {
  tinymoe::MoeConfig c = moe;
  c.input_dims.clear();
  for (const auto& x : d.modalities) c.input_dims.push_back(x.cols());
  c.task = d.task;
  c.n_classes = d.task == Task::kClassification ? d.n_classes : 0;
  c.validate();
  return c;
}

synthdata::Dataset prepare_dataset(const ExperimentConfig& config) {
  config.validate();
  if (config.data_path) {
    synthdata::Dataset d = synthdata::load_dataset(*config.data_path);
    if (d.indices(synthdata::Split::kVal).empty() || d.indices(synthdata::Split::kTest).empty()) {
      d = synthdata::split(std::move(d), config.split_fractions,
                           derive_seed(config.data_seed.value_or(config.seed), SeedStream::kSplit));
    }
    return d;
  }
  const auto spec = config.resolved_data_spec();
  return synthdata::split(synthdata::generate(spec), config.split_fractions,
                          derive_seed(spec.seed, SeedStream::kSplit));
}

double EvalReport::primary() const {
  return task == Task::kRegression ? regression.mae : classification.weighted_f1;
}

weights::Direction primary_direction(Task task) {
  return task == Task::kRegression ? weights::Direction::kLowerIsBetter
                                   : weights::Direction::kHigherIsBetter;
}

ModalityPredictions predict(const ModelParams& model, const SplitData& split,
                            std::optional<Index> unimodal, const MatrixXd* weights) {
  const auto n = static_cast<Index>(split.targets.size());
  if (n == 0) throw InvalidInputError("cannot predict on an empty split");
  MatrixXd out(n, model.config.output_dim());
  for (Index start = 0; start < n; start += kPredictChunk) {
    const Index stop = std::min(n, start + kPredictChunk);
    std::vector<std::size_t> pos(static_cast<std::size_t>(stop - start));
    std::iota(pos.begin(), pos.end(), static_cast<std::size_t>(start));
    const SplitData chunk = slice(split, pos);
    MatrixXd w;
    if (weights) w = slice_rows(*weights, pos);
    out.middleRows(start, stop - start) =
        run(model, chunk.batch, unimodal, weights ? &w : nullptr).predictions;
  }
  return wrap(model.config.task, std::move(out), split);
}

EvalReport evaluate(const ModelParams& model, const SplitData& split, const VectorXd& eval_weights) {
  if (split.targets.empty()) throw InvalidInputError("evaluate: empty split");
  if (eval_weights.size() != model.config.n_modalities()) {
    throw ShapeError("evaluate: one weight per modality required");
  }
  const MatrixXd w = eval_weights.transpose().replicate(static_cast<Index>(split.targets.size()), 1);
  return report_for(model.config.task, predict(model, split, std::nullopt, &w), split);
}

UnimodalResult train_unimodal_all(const ExperimentConfig& config, const synthdata::Dataset& data) {
  const auto mcfg = config.model_config(data);
  const SplitData train = synthdata::gather(data, synthdata::Split::kTrain);
  const SplitData val = synthdata::gather(data, synthdata::Split::kVal);
  UnimodalResult out;
  for (Index m = 0; m < mcfg.n_modalities(); ++m) {
    // Modality m uses seed + m; with one modality this is the multimodal seed.
    const std::uint64_t model_seed = config.seed + static_cast<std::uint64_t>(m);
    ModelParams model = tinymoe::init_params(mcfg, derive_seed(model_seed, SeedStream::kInit));
    std::mt19937_64 rng(derive_seed(model_seed, SeedStream::kTrainShuffle));
    for (std::size_t e = 0; e < config.epochs_unimodal; ++e) {
      guarded("unimodal", e, [&] { return train_epoch(model, train, m, nullptr, config, rng); });
    }
    auto train_pred = predict(model, train, m);
    auto val_pred = predict(model, val, m);
    out.val_reports.push_back(report_for(mcfg.task, val_pred, val));
    out.train.push_back(std::move(train_pred));
    out.val.push_back(std::move(val_pred));
    out.models.push_back(std::move(model));
  }
  return out;
}

WarmResult train_multimodal_warm(const ExperimentConfig& config, const synthdata::Dataset& data) {
  const auto mcfg = config.model_config(data);
  const SplitData train = synthdata::gather(data, synthdata::Split::kTrain);
  const SplitData val = synthdata::gather(data, synthdata::Split::kVal);
  WarmResult out;
  out.model = tinymoe::init_params(mcfg, derive_seed(config.seed, SeedStream::kInit));
  std::mt19937_64 rng(derive_seed(config.seed, SeedStream::kTrainShuffle));
  const VectorXd ones = VectorXd::Ones(mcfg.n_modalities());
  for (std::size_t e = 0; e < config.epochs_warm; ++e) {
    const auto t0 = std::chrono::steady_clock::now();
    EpochRecord rec;
    rec.epoch = e;
    rec.phase = "warm";
    rec.train_loss = guarded("warm", e, [&] { return train_epoch(out.model, train, std::nullopt, nullptr, config, rng); });
    rec.val = evaluate(out.model, val, ones);
    rec.alpha = config.alpha.initial;
    rec.mean_weights = uniform_means(mcfg.n_modalities());
    rec.seconds = seconds_since(t0);
    out.records.push_back(std::move(rec));
  }
  out.train = predict(out.model, train);
  out.val = predict(out.model, val);
  return out;
}

VectorXd modality_mi(const PredictionSet& preds, int k, std::uint64_t jitter_seed) {
  VectorXd mi(static_cast<Index>(preds.unimodal.size()));
  for (std::size_t m = 0; m < preds.unimodal.size(); ++m) {
    const auto& u = preds.unimodal[m];
    if (preds.task == Task::kRegression) {
      mi(static_cast<Index>(m)) = miest::ksg_mi(
          std::span<const double>(u.output.data(), static_cast<std::size_t>(u.output.rows())),
          std::span<const double>(preds.multimodal.output.data(),
                                  static_cast<std::size_t>(preds.multimodal.output.rows())),
          k, jitter_seed);
    } else {
      mi(static_cast<Index>(m)) = miest::discrete_mi(u.labels, preds.multimodal.labels);
    }
  }
  return mi;
}

WeightedResult run_weighted_phase(const ExperimentConfig& config, const synthdata::Dataset& data,
                                  ModelParams model, const UnimodalResult& unimodal,
                                  ModalityPredictions multimodal_train, double warm_val_metric) {
  const auto& mcfg = model.config;
  const Index n_mod = mcfg.n_modalities();
  const SplitData train = synthdata::gather(data, synthdata::Split::kTrain);
  const SplitData val = synthdata::gather(data, synthdata::Split::kVal);
  const auto n_train = static_cast<Index>(train.targets.size());
  const Variant variant = config.variant;
  const bool weighted = variant != Variant::kUnweighted;
  const weights::Direction direction = primary_direction(mcfg.task);
  const std::uint64_t jitter_seed = derive_seed(config.seed, SeedStream::kMiJitter);

  WeightedResult out;
  out.train = std::move(multimodal_train);
  out.eval_weights = VectorXd::Ones(n_mod);
  std::mt19937_64 rng(derive_seed(config.seed, SeedStream::kWeightedShuffle));
  weights::SmoothingState state = weights::SmoothingState::initial(config.alpha);
  double current_metric = warm_val_metric;

  for (std::size_t t = 0; t < config.epochs_weighted; ++t) {
    const std::size_t epoch = config.epochs_warm + t;
    const auto t0 = std::chrono::steady_clock::now();
    EpochRecord rec;
    rec.epoch = epoch;
    rec.phase = "weighted";

    if (!weighted) {
      rec.train_loss = guarded("weighted", epoch, [&] { return train_epoch(model, train, std::nullopt, nullptr, config, rng); });
      rec.val = evaluate(model, val, out.eval_weights);
      rec.alpha = state.alpha;
      rec.mean_weights = uniform_means(n_mod);
      rec.seconds = seconds_since(t0);
      out.records.push_back(std::move(rec));
      continue;
    }

    PredictionSet preds;
    preds.task = mcfg.task;
    preds.unimodal = unimodal.train;
    preds.multimodal = out.train;
    preds.targets = train.targets;
    if (static_cast<Index>(preds.unimodal.size()) != n_mod ||
        preds.multimodal.size() != n_train) {
      throw ConsistencyError("prediction shapes drifted between weighted epochs");
    }

    VectorXd mi = config.hooks.uniform_mi ? VectorXd::Ones(n_mod)
                                          : modality_mi(preds, config.mi_neighbors, jitter_seed);
    rec.modality_mi = mi;
    out.final_mi = mi;

    MatrixXd train_weights;
    if (config.hooks.unit_weights) {
      train_weights = MatrixXd::Ones(n_train, n_mod);
      rec.mean_weights = uniform_means(n_mod);
    } else {
      const weights::ModalityMI mi_vec(mi);
      weights::WeightMatrix fresh;
      switch (variant) {
        case Variant::kBtwLocal:
          fresh = weights::combine_local(weights::instance_kl_weights(preds));
          break;
        case Variant::kBtwGlobalKl:
          fresh = weights::combine_global_kl(weights::instance_kl_weights(preds));
          break;
        case Variant::kBtwGlobalMi:
          fresh = weights::combine_global_mi(mi_vec, n_train);
          break;
        case Variant::kBtw:
          fresh = weights::combine_bilevel(weights::instance_kl_weights(preds), mi_vec,
                                           config.bilevel_mode);
          break;
        case Variant::kUnweighted:
          break;
      }
      auto [smoothed, next] = weights::smooth_update(state, fresh, current_metric, direction, config.alpha);
      state = std::move(next);
      train_weights = smoothed.values();
      rec.mean_weights = smoothed.modality_means();
      out.eval_weights = rec.mean_weights;
      out.trajectory.push_back(std::move(smoothed));
    }
    rec.alpha = state.alpha;
    out.alphas.push_back(state.alpha);

    rec.train_loss = guarded("weighted", epoch, [&] { return train_epoch(model, train, std::nullopt, &train_weights, config, rng); });
    out.train = predict(model, train, std::nullopt, &train_weights);
    rec.val = evaluate(model, val, out.eval_weights);
    current_metric = rec.val.primary();
    rec.seconds = seconds_since(t0);
    out.records.push_back(std::move(rec));
  }
  out.model = std::move(model);
  return out;
}

ExperimentResult run_experiment(const ExperimentConfig& config, const synthdata::Dataset& data) {
  config.validate();
  ExperimentResult out;
  out.unimodal = train_unimodal_all(config, data);
  WarmResult warm = train_multimodal_warm(config, data);
  out.records = std::move(warm.records);
  out.first_weighted_epoch = config.epochs_warm;

  const SplitData val = synthdata::gather(data, synthdata::Split::kVal);
  const double warm_metric = evaluate(warm.model, val, VectorXd::Ones(warm.model.config.n_modalities())).primary();
  WeightedResult wr = run_weighted_phase(config, data, std::move(warm.model), out.unimodal,
                                         std::move(warm.train), warm_metric);
  for (auto& r : wr.records) out.records.push_back(std::move(r));
  out.model = std::move(wr.model);
  out.trajectory = std::move(wr.trajectory);
  out.alphas = std::move(wr.alphas);
  out.eval_weights = wr.eval_weights;

  if (wr.final_mi.size() > 0) {
    out.modality_mi = wr.final_mi;
  } else {
    PredictionSet preds;
    preds.task = out.model.config.task;
    preds.unimodal = out.unimodal.train;
    preds.multimodal = wr.train;
    out.modality_mi = modality_mi(preds, config.mi_neighbors,
                                  derive_seed(config.seed, SeedStream::kMiJitter));
  }

  out.val = evaluate(out.model, val, out.eval_weights);
  out.test = evaluate(out.model, synthdata::gather(data, synthdata::Split::kTest), out.eval_weights);
  return out;
}

ExperimentResult run_experiment(const ExperimentConfig& config) {
  return run_experiment(config, prepare_dataset(config));
}

}  // namespace btw::trainloop
