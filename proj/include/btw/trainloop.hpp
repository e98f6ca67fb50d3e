// Copyright 2026 The btw Authors
// SPDX-License-Identifier: Apache-2.0
//
// Three-phase experiment: independent unimodal models, unweighted multimodal
// warm-up, then epochs where modality embeddings are scaled by smoothed
// KL / MI weights recomputed from the current multimodal predictions.

#pragma once

#include <Eigen/Dense>
#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "btw/metrics.hpp"
#include "btw/predictions.hpp"
#include "btw/synthdata.hpp"
#include "btw/tinymoe.hpp"
#include "btw/weights.hpp"

namespace btw::trainloop {

enum class Variant { kUnweighted, kBtwLocal, kBtwGlobalKl, kBtwGlobalMi, kBtw };

std::string_view to_string(Variant v);
std::optional<Variant> parse_variant(std::string_view s);

struct ExperimentConfig {
  Variant variant = Variant::kBtw;
  std::size_t epochs_unimodal = 10;
  std::size_t epochs_warm = 2;
  std::size_t epochs_weighted = 8;
  double lr = 0.01;
  std::size_t batch_size = 32;
  /// input_dims, task and n_classes are taken from the data.
  tinymoe::MoeConfig moe;
  synthdata::SyntheticSpec data;
  std::optional<std::uint64_t> data_seed;  // defaults to `seed`
  std::optional<std::filesystem::path> data_path;
  std::array<double, 3> split_fractions{0.8, 0.1, 0.1};
  weights::AlphaSchedule alpha;
  weights::BilevelMode bilevel_mode = weights::BilevelMode::kLiteral;
  int mi_neighbors = 3;
  std::uint64_t seed = 0;

  struct Hooks {
    bool uniform_mi = false;    // MI forced to all ones
    bool unit_weights = false;  // training weights forced to all ones
  } hooks;

  void validate() const;
  /// Synthetic spec with the effective data seed applied.
  synthdata::SyntheticSpec resolved_data_spec() const;
  /// Model config completed from a dataset.
  tinymoe::MoeConfig model_config(const synthdata::Dataset& data) const;
};

/// Loads or generates the dataset and assigns splits.
synthdata::Dataset prepare_dataset(const ExperimentConfig& config);

struct EvalReport {
  Task task = Task::kRegression;
  double loss = 0.0;
  metrics::RegressionReport regression;
  metrics::F1Scores classification;

  /// MAE for regression, weighted-F1 for classification.
  double primary() const;
};

weights::Direction primary_direction(Task task);

struct EpochRecord {
  std::size_t epoch = 0;
  std::string phase;  // "warm" or "weighted"
  double train_loss = 0.0;
  EvalReport val;
  double alpha = 0.0;
  Eigen::VectorXd mean_weights;  // sums to one
  Eigen::VectorXd modality_mi;   // empty when not computed
  double seconds = 0.0;
};

/// Predictions of `model` on rows of `data`; `unimodal` restricts the model
/// to one modality, `weights` (rows x M) scales embeddings.
ModalityPredictions predict(const tinymoe::ModelParams& model, const synthdata::SplitData& split,
                            std::optional<Eigen::Index> unimodal = std::nullopt,
                            const Eigen::MatrixXd* weights = nullptr);

EvalReport evaluate(const tinymoe::ModelParams& model, const synthdata::SplitData& split,
                    const Eigen::VectorXd& eval_weights);

struct UnimodalResult {
  std::vector<tinymoe::ModelParams> models;
  std::vector<ModalityPredictions> train;
  std::vector<ModalityPredictions> val;
  std::vector<EvalReport> val_reports;
};

UnimodalResult train_unimodal_all(const ExperimentConfig& config, const synthdata::Dataset& data);

struct WarmResult {
  tinymoe::ModelParams model;
  ModalityPredictions train;
  ModalityPredictions val;
  std::vector<EpochRecord> records;
};

WarmResult train_multimodal_warm(const ExperimentConfig& config, const synthdata::Dataset& data);

struct WeightedResult {
  tinymoe::ModelParams model;
  std::vector<EpochRecord> records;
  std::vector<weights::WeightMatrix> trajectory;  // smoothed train weights per epoch
  std::vector<double> alphas;
  Eigen::VectorXd eval_weights;                   // per-modality, for evaluation
  Eigen::VectorXd final_mi;                       // empty if never computed
  ModalityPredictions train;                      // final multimodal train predictions
};

/// Weighted epochs for every variant; `unweighted` continues plain training
/// so that both arms get the same epoch budget.
WeightedResult run_weighted_phase(const ExperimentConfig& config, const synthdata::Dataset& data,
                                  tinymoe::ModelParams model, const UnimodalResult& unimodal,
                                  ModalityPredictions multimodal_train, double warm_val_metric);

struct ExperimentResult {
  UnimodalResult unimodal;
  tinymoe::ModelParams model;
  std::vector<EpochRecord> records;
  std::vector<weights::WeightMatrix> trajectory;
  std::vector<double> alphas;
  std::size_t first_weighted_epoch = 0;
  Eigen::VectorXd eval_weights;
  Eigen::VectorXd modality_mi;  // per modality, from the last weighted epoch
  EvalReport val;
  EvalReport test;
};

ExperimentResult run_experiment(const ExperimentConfig& config, const synthdata::Dataset& data);
ExperimentResult run_experiment(const ExperimentConfig& config);

/// MI between each unimodal series and the multimodal series.
Eigen::VectorXd modality_mi(const PredictionSet& preds, int k, std::uint64_t jitter_seed);

}  // namespace btw::trainloop
