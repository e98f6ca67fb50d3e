// Copyright 2026 The btw Authors
// SPDX-License-Identifier: Apache-2.0
//
// A desk-scale multimodal mixture-of-experts network. Each modality has its
// own affine encoder; every MoE layer routes each modality embedding through
// the top-k experts of a shared pool using a per-modality router; embeddings
// are mean-pooled across modalities and fed to a regression or softmax head.
//
// Gradients are computed by hand. Top-k selection is treated as a constant
// during backpropagation; the softmax over the selected logits is exact.

#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "btw/predictions.hpp"

namespace btw::tinymoe {

enum class Activation { kGelu };

struct MoeConfig {
  std::vector<Eigen::Index> input_dims;  // one entry per modality
  Eigen::Index embed_dim = 32;
  Eigen::Index n_experts = 4;
  Eigen::Index top_k = 2;
  Eigen::Index expert_hidden = 64;
  Eigen::Index n_moe_layers = 1;
  Task task = Task::kRegression;
  Eigen::Index n_classes = 0;  // classification only
  Activation activation = Activation::kGelu;

  Eigen::Index n_modalities() const noexcept {
    return static_cast<Eigen::Index>(input_dims.size());
  }
  Eigen::Index output_dim() const noexcept {
    return task == Task::kRegression ? 1 : n_classes;
  }
  /// Throws InvalidInputError on inconsistent sizes.
  void validate() const;

  bool operator==(const MoeConfig&) const = default;
};

struct Affine {
  Eigen::MatrixXd weight;  // out x in
  Eigen::VectorXd bias;    // out
};

struct Expert {
  Affine up;    // embed -> hidden
  Affine down;  // hidden -> embed
};

/// View of one parameter tensor's column-major storage.
template <typename T>
struct BasicTensorView {
  std::string name;
  T* data;
  Eigen::Index rows;
  Eigen::Index cols;

  Eigen::Index size() const noexcept { return rows * cols; }
};
using TensorView = BasicTensorView<double>;
using ConstTensorView = BasicTensorView<const double>;

struct ParamTensors {
  std::vector<Affine> encoders;              // [modality]
  std::vector<std::vector<Affine>> routers;  // [layer][modality]
  std::vector<std::vector<Expert>> experts;  // [layer][expert]
  Affine head;

  static ParamTensors zeros(const MoeConfig& config);

  /// Visits every tensor in declaration order: encoders, then per layer the
  /// routers followed by the experts, then the head. Weight before bias.
  std::vector<TensorView> views();
  std::vector<ConstTensorView> views() const;
  Eigen::Index parameter_count() const;
};

struct ModelParams {
  MoeConfig config;
  ParamTensors tensors;
  std::uint64_t version = 0;  // bumped by every in-place update
};

struct ParamGrads {
  ParamTensors tensors;
  std::uint64_t version = 0;  // version of the params these belong to
};

/// Glorot-uniform weights, zero biases.
ModelParams init_params(const MoeConfig& config, std::uint64_t seed);

/// Instances are rows; one matrix per modality.
struct DataBatch {
  std::vector<Eigen::MatrixXd> modalities;

  Eigen::Index size() const noexcept { return modalities.empty() ? 0 : modalities.front().rows(); }
};

struct TokenTrace {
  Eigen::VectorXd input;
  std::vector<Eigen::Index> selected;  // exactly top_k entries
  Eigen::VectorXd gates;               // softmax over the selected logits
  std::vector<Eigen::VectorXd> pre;    // expert hidden pre-activations
  std::vector<Eigen::VectorXd> act;
  std::vector<Eigen::VectorXd> out;    // expert outputs before gating
};

struct ModalityTrace {
  Eigen::Index modality = 0;
  Eigen::VectorXd features;
  double weight = 1.0;
  std::vector<TokenTrace> layers;
};

struct InstanceTrace {
  std::vector<ModalityTrace> modalities;
  Eigen::VectorXd pooled;
  Eigen::VectorXd output;  // mean or class probabilities
};

struct ForwardTrace {
  std::uint64_t params_version = 0;
  std::vector<InstanceTrace> instances;
};

struct ForwardResult {
  Eigen::MatrixXd predictions;  // B x 1 or B x C
  ForwardTrace trace;
};

ForwardResult forward(const ModelParams& params, const DataBatch& batch);
/// `modality_weights` is B x M; row i scales the embeddings of instance i.
ForwardResult forward(const ModelParams& params, const DataBatch& batch,
                      const Eigen::MatrixXd& modality_weights);

/// Single-modality evaluation: the pool is over the one embedding stream.
Eigen::MatrixXd unimodal_forward(const ModelParams& params, const DataBatch& batch,
                                 Eigen::Index modality);
ForwardResult unimodal_forward_traced(const ModelParams& params, const DataBatch& batch,
                                      Eigen::Index modality);

/// Reverse-mode gradients; `params` must be unchanged since the forward that
/// produced `trace`.
ParamGrads backward(const ModelParams& params, const ForwardTrace& trace,
                    const Eigen::MatrixXd& loss_grad);

struct LossValue {
  double value = 0.0;
  Eigen::MatrixXd grad;  // d loss / d predictions
};

/// Mean squared error (regression) or mean cross-entropy (classification;
/// targets hold class indices).
LossValue loss(Task task, const Eigen::MatrixXd& predictions, std::span<const double> targets);

/// params -= lr * grads. Rejects negative lr and non-finite gradients.
void sgd_step(ModelParams& params, const ParamGrads& grads, double lr);

struct ProbeSite {
  std::size_t tensor = 0;
  std::string tensor_name;
  Eigen::Index offset = 0;  // into the tensor's storage
};

struct GradCheckOptions {
  std::size_t n_probes = 50;
  double epsilon = 1e-5;
  std::uint64_t seed = 0;
  /// Optional restriction of the probe population.
  std::function<bool(const ProbeSite&)> filter;
};

/// Largest relative error |a - n| / max(|a|, |n|, 1e-8) between analytic and
/// central-difference gradients of the loss over the sampled probes.
double grad_check(const ModelParams& params, const DataBatch& batch,
                  std::span<const double> targets, const GradCheckOptions& options);

}  // namespace btw::tinymoe
