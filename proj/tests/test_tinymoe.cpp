// Copyright 2026 The btw Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <random>
#include <sstream>

#include "btw/checkpoint.hpp"
#include "btw/errors.hpp"
#include "btw/tinymoe.hpp"

namespace {

using namespace btw::tinymoe;
using btw::Task;
using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

MoeConfig small_config(Task task, Index top_k = 2) {
  MoeConfig c;
  c.input_dims = {5, 3, 4};
  c.embed_dim = 6;
  c.n_experts = 4;
  c.top_k = top_k;
  c.expert_hidden = 7;
  c.n_moe_layers = 2;
  c.task = task;
  c.n_classes = task == Task::kClassification ? 3 : 0;
  return c;
}

DataBatch random_batch(const MoeConfig& c, Index n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> z;
  DataBatch b;
  for (Index d : c.input_dims) {
    MatrixXd x(n, d);
    for (Index i = 0; i < x.size(); ++i) x.data()[i] = z(rng);
    b.modalities.push_back(std::move(x));
  }
  return b;
}

std::vector<double> targets_for(const MoeConfig& c, Index n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> z;
  std::vector<double> t;
  for (Index i = 0; i < n; ++i) {
    t.push_back(c.task == Task::kRegression ? z(rng) : static_cast<double>(i % c.n_classes));
  }
  return t;
}

// Dense reference: every expert evaluated, non-selected experts masked out
// of a full softmax.
MatrixXd reference_forward(const ModelParams& p, const DataBatch& b, const MatrixXd* w) {
  const auto& c = p.config;
  const auto& t = p.tensors;
  auto g = [](double x) { return 0.5 * x * std::erfc(-x / std::sqrt(2.0)); };
  MatrixXd out(b.size(), c.output_dim());
  for (Index i = 0; i < b.size(); ++i) {
    VectorXd pooled = VectorXd::Zero(c.embed_dim);
    for (Index m = 0; m < c.n_modalities(); ++m) {
      const auto mi = static_cast<std::size_t>(m);
      VectorXd h = t.encoders[mi].weight * b.modalities[mi].row(i).transpose() + t.encoders[mi].bias;
      if (w) h *= (*w)(i, m);
      for (Index l = 0; l < c.n_moe_layers; ++l) {
        const auto li = static_cast<std::size_t>(l);
        const VectorXd logits = t.routers[li][mi].weight * h + t.routers[li][mi].bias;
        std::vector<bool> keep(static_cast<std::size_t>(c.n_experts), false);
        for (Index k = 0; k < c.top_k; ++k) {
          Index best = -1;
          for (Index e = 0; e < c.n_experts; ++e) {
            if (!keep[static_cast<std::size_t>(e)] && (best < 0 || logits(e) > logits(best))) best = e;
          }
          keep[static_cast<std::size_t>(best)] = true;
        }
        VectorXd masked(c.n_experts);
        for (Index e = 0; e < c.n_experts; ++e) {
          masked(e) = keep[static_cast<std::size_t>(e)] ? logits(e) : -std::numeric_limits<double>::infinity();
        }
        const VectorXd gates = (masked.array() - masked.maxCoeff()).exp().matrix();
        const double z = gates.sum();
        VectorXd next = h;
        for (Index e = 0; e < c.n_experts; ++e) {
          const auto& ex = t.experts[li][static_cast<std::size_t>(e)];
          const VectorXd hid = (ex.up.weight * h + ex.up.bias).unaryExpr(g);
          next += (gates(e) / z) * (ex.down.weight * hid + ex.down.bias);
        }
        h = next;
      }
      pooled += h;
    }
    pooled /= static_cast<double>(c.n_modalities());
    VectorXd o = t.head.weight * pooled + t.head.bias;
    if (c.task == Task::kClassification) {
      o = (o.array() - o.maxCoeff()).exp().matrix();
      o /= o.sum();
    }
    out.row(i) = o.transpose();
  }
  return out;
}

TEST(Forward, MatchesDenseReference) {
  for (Task task : {Task::kRegression, Task::kClassification}) {
    for (Index k : {Index{1}, Index{2}, Index{4}}) {
      const auto cfg = small_config(task, k);
      const auto p = init_params(cfg, 3);
      const auto b = random_batch(cfg, 9, 4);
      const MatrixXd w = MatrixXd::Constant(9, 3, 0.7);
      EXPECT_LE((forward(p, b).predictions - reference_forward(p, b, nullptr)).cwiseAbs().maxCoeff(), 1e-12);
      EXPECT_LE((forward(p, b, w).predictions - reference_forward(p, b, &w)).cwiseAbs().maxCoeff(), 1e-12);
    }
  }
}

TEST(Forward, UnitWeightsAreBitIdentical) {
  const auto cfg = small_config(Task::kRegression);
  const auto p = init_params(cfg, 1);
  const auto b = random_batch(cfg, 16, 2);
  EXPECT_EQ(forward(p, b).predictions, forward(p, b, MatrixXd::Ones(16, 3)).predictions);
}

TEST(Forward, ZeroInputZeroOutput) {
  const auto cfg = small_config(Task::kRegression);
  auto p = init_params(cfg, 5);
  DataBatch b;
  for (Index d : cfg.input_dims) b.modalities.push_back(MatrixXd::Zero(4, d));
  EXPECT_TRUE(forward(p, b).predictions.isZero(0.0));
  EXPECT_TRUE(unimodal_forward(p, b, 1).isZero(0.0));
}

TEST(Forward, ShapeErrors) {
  const auto cfg = small_config(Task::kRegression);
  const auto p = init_params(cfg, 1);
  auto b = random_batch(cfg, 4, 1);
  EXPECT_THROW(forward(p, b, MatrixXd::Ones(3, 3)), btw::ShapeError);
  b.modalities[1] = MatrixXd::Zero(4, 9);
  EXPECT_THROW(forward(p, b), btw::ShapeError);
  b.modalities.pop_back();
  EXPECT_THROW(forward(p, b), btw::ShapeError);
}

TEST(Forward, NonFiniteNamesLayer) {
  const auto cfg = small_config(Task::kRegression);
  const auto p = init_params(cfg, 1);
  auto b = random_batch(cfg, 2, 1);
  b.modalities[2](0, 0) = std::numeric_limits<double>::infinity();
  try {
    forward(p, b);
    FAIL() << "expected NumericError";
  } catch (const btw::NumericError& e) {
    EXPECT_NE(std::string(e.what()).find("encoder[2]"), std::string::npos);
  }
}

TEST(Forward, GateInvariants) {
  const auto cfg = small_config(Task::kClassification);
  const auto p = init_params(cfg, 8);
  const auto r = forward(p, random_batch(cfg, 12, 8));
  for (const auto& inst : r.trace.instances) {
    std::size_t activations = 0;
    for (const auto& m : inst.modalities) {
      for (const auto& tok : m.layers) {
        ASSERT_EQ(tok.selected.size(), static_cast<std::size_t>(cfg.top_k));
        EXPECT_NEAR(tok.gates.sum(), 1.0, 1e-9);
        EXPECT_TRUE((tok.gates.array() > 0.0).all());
        activations += tok.selected.size();
      }
    }
    EXPECT_LE(activations, static_cast<std::size_t>(cfg.n_modalities() * cfg.top_k * cfg.n_moe_layers));
  }
}

TEST(Forward, TiesPreferLowerExpertIndex) {
  auto cfg = small_config(Task::kRegression, 2);
  auto p = init_params(cfg, 2);
  for (auto& layer : p.tensors.routers)
    for (auto& r : layer) {
      r.weight.setZero();
      r.bias.setZero();
    }
  const auto res = forward(p, random_batch(cfg, 3, 3));
  for (const auto& inst : res.trace.instances)
    for (const auto& m : inst.modalities)
      for (const auto& tok : m.layers) {
        EXPECT_EQ(tok.selected[0], 0);
        EXPECT_EQ(tok.selected[1], 1);
      }
}

TEST(Forward, WeightLocality) {
  const auto cfg = small_config(Task::kRegression);
  const auto p = init_params(cfg, 4);
  const auto b = random_batch(cfg, 6, 4);
  MatrixXd w = MatrixXd::Constant(6, 3, 0.5);
  const auto base = forward(p, b, w);
  w(2, 1) = 0.9;
  const auto moved = forward(p, b, w);
  for (Index i = 0; i < 6; ++i) {
    if (i == 2) continue;
    EXPECT_EQ(base.predictions.row(i), moved.predictions.row(i));
    const auto& a = base.trace.instances[static_cast<std::size_t>(i)];
    const auto& c = moved.trace.instances[static_cast<std::size_t>(i)];
    EXPECT_EQ(a.pooled, c.pooled);
  }
  EXPECT_NE(base.predictions(2, 0), moved.predictions(2, 0));
}

TEST(Unimodal, SingleModalityEqualsMultimodal) {
  MoeConfig cfg = small_config(Task::kRegression);
  cfg.input_dims = {5};
  const auto p = init_params(cfg, 6);
  const auto b = random_batch(cfg, 10, 6);
  EXPECT_EQ(forward(p, b).predictions, unimodal_forward(p, b, 0));
}

TEST(Unimodal, IgnoresOtherModalities) {
  const auto cfg = small_config(Task::kRegression);
  const auto p = init_params(cfg, 6);
  auto b = random_batch(cfg, 10, 6);
  const MatrixXd before = unimodal_forward(p, b, 0);
  b.modalities[1].array() += 3.0;
  EXPECT_EQ(before, unimodal_forward(p, b, 0));
  EXPECT_THROW(unimodal_forward(p, b, 3), btw::RangeError);
  EXPECT_THROW(unimodal_forward(p, b, -1), btw::RangeError);
}

TEST(Backward, ZeroLossGradGivesZeroGrads) {
  const auto cfg = small_config(Task::kRegression);
  const auto p = init_params(cfg, 1);
  const auto r = forward(p, random_batch(cfg, 5, 1));
  const auto g = backward(p, r.trace, MatrixXd::Zero(5, 1));
  for (const auto& v : g.tensors.views())
    for (Index k = 0; k < v.size(); ++k) EXPECT_EQ(v.data[k], 0.0) << v.name;
}

TEST(Backward, StaleTraceRejected) {
  const auto cfg = small_config(Task::kRegression);
  auto p = init_params(cfg, 1);
  const auto b = random_batch(cfg, 5, 1);
  const auto r = forward(p, b);
  const auto l = loss(cfg.task, r.predictions, targets_for(cfg, 5, 1));
  const auto g = backward(p, r.trace, l.grad);
  sgd_step(p, g, 0.01);
  EXPECT_THROW(backward(p, r.trace, l.grad), btw::InvalidStateError);
}

TEST(Backward, UnselectedExpertHasZeroGradient) {
  auto cfg = small_config(Task::kRegression, 1);
  cfg.n_moe_layers = 1;
  auto p = init_params(cfg, 2);
  // Route every token to expert 0 by bias.
  for (auto& r : p.tensors.routers[0]) {
    r.weight.setZero();
    r.bias << 5.0, 0.0, 0.0, 0.0;
  }
  const auto b = random_batch(cfg, 8, 2);
  const auto r = forward(p, b);
  const auto g = backward(p, r.trace, loss(cfg.task, r.predictions, targets_for(cfg, 8, 2)).grad);
  for (std::size_t e = 1; e < 4; ++e) {
    EXPECT_TRUE(g.tensors.experts[0][e].up.weight.isZero(0.0));
    EXPECT_TRUE(g.tensors.experts[0][e].down.bias.isZero(0.0));
  }
  GradCheckOptions opt;
  opt.filter = [](const ProbeSite& s) { return s.tensor_name.starts_with("layer0.expert3"); };
  EXPECT_EQ(grad_check(p, b, targets_for(cfg, 8, 2), opt), 0.0);
}

TEST(GradCheck, BothHeadsAgreeWithFiniteDifferences) {
  for (Task task : {Task::kRegression, Task::kClassification}) {
    const auto cfg = small_config(task);
    const auto p = init_params(cfg, 0);
    const auto b = random_batch(cfg, 8, 0);
    GradCheckOptions opt;
    EXPECT_LT(grad_check(p, b, targets_for(cfg, 8, 0), opt), 1e-4);
  }
}

TEST(GradCheck, WeightedForwardGradients) {
  // Finite differences through the weighted path, probing encoder weights.
  const auto cfg = small_config(Task::kRegression);
  auto p = init_params(cfg, 11);
  const auto b = random_batch(cfg, 6, 11);
  const auto y = targets_for(cfg, 6, 11);
  MatrixXd w(6, 3);
  w.setConstant(0.3);
  w.col(0).setConstant(0.5);
  const auto r = forward(p, b, w);
  const auto g = backward(p, r.trace, loss(cfg.task, r.predictions, y).grad);
  const double eps = 1e-6;
  for (Index k = 0; k < 10; ++k) {
    double& slot = p.tensors.encoders[1].weight.data()[k];
    const double saved = slot;
    slot = saved + eps;
    const double up = loss(cfg.task, forward(p, b, w).predictions, y).value;
    slot = saved - eps;
    const double down = loss(cfg.task, forward(p, b, w).predictions, y).value;
    slot = saved;
    const double numeric = (up - down) / (2 * eps);
    EXPECT_NEAR(g.tensors.encoders[1].weight.data()[k], numeric, 1e-6 * std::max(1.0, std::abs(numeric)));
  }
}

TEST(Loss, MseAndCrossEntropy) {
  MatrixXd pred(2, 1);
  pred << 1.0, 3.0;
  const auto l = loss(Task::kRegression, pred, std::vector<double>{0.0, 1.0});
  EXPECT_DOUBLE_EQ(l.value, (1.0 + 4.0) / 2.0);
  EXPECT_DOUBLE_EQ(l.grad(1, 0), 2.0 * 2.0 / 2.0);
  MatrixXd probs(1, 2);
  probs << 0.25, 0.75;
  EXPECT_DOUBLE_EQ(loss(Task::kClassification, probs, std::vector<double>{1.0}).value, -std::log(0.75));
}

TEST(Sgd, Arithmetic) {
  MoeConfig cfg = small_config(Task::kRegression);
  auto p = init_params(cfg, 1);
  ParamGrads g{ParamTensors::zeros(cfg), p.version};
  const auto before = p.tensors.head.weight;
  sgd_step(p, g, 0.5);
  EXPECT_EQ(before, p.tensors.head.weight);
  g.tensors.head.bias(0) = 2.0;
  p.tensors.head.bias(0) = 1.0;
  sgd_step(p, g, 0.1);
  EXPECT_DOUBLE_EQ(p.tensors.head.bias(0), 0.8);
  const auto snapshot = p.tensors.head.bias;
  sgd_step(p, g, 0.0);
  EXPECT_EQ(snapshot, p.tensors.head.bias);
  EXPECT_THROW(sgd_step(p, g, -1.0), btw::InvalidInputError);
  g.tensors.head.bias(0) = NAN;
  EXPECT_THROW(sgd_step(p, g, 0.1), btw::NumericError);
}

TEST(Training, LinearlySolvableBatchLossDrops) {
  MoeConfig cfg;
  cfg.input_dims = {4, 4};
  cfg.task = Task::kRegression;
  auto p = init_params(cfg, 0);
  const auto b = random_batch(cfg, 64, 1);
  std::vector<double> y;
  for (Index i = 0; i < 64; ++i) y.push_back(0.5 * b.modalities[0](i, 0) - 0.3 * b.modalities[1](i, 2));
  const double initial = loss(cfg.task, forward(p, b).predictions, y).value;
  for (int s = 0; s < 200; ++s) {
    const auto r = forward(p, b);
    sgd_step(p, backward(p, r.trace, loss(cfg.task, r.predictions, y).grad), 0.05);
  }
  EXPECT_LE(loss(cfg.task, forward(p, b).predictions, y).value, 0.1 * initial);
}

TEST(Determinism, SameSeedSameEverything) {
  const auto cfg = small_config(Task::kClassification);
  const auto a = init_params(cfg, 42);
  const auto b = init_params(cfg, 42);
  const auto batch = random_batch(cfg, 7, 42);
  const auto ra = forward(a, batch);
  const auto rb = forward(b, batch);
  EXPECT_EQ(ra.predictions, rb.predictions);
  const auto y = targets_for(cfg, 7, 1);
  const auto ga = backward(a, ra.trace, loss(cfg.task, ra.predictions, y).grad);
  const auto gb = backward(b, rb.trace, loss(cfg.task, rb.predictions, y).grad);
  const auto va = ga.tensors.views();
  const auto vb = gb.tensors.views();
  for (std::size_t k = 0; k < va.size(); ++k)
    for (Index j = 0; j < va[k].size(); ++j) ASSERT_EQ(va[k].data[j], vb[k].data[j]);
}

TEST(Checkpoint, RoundTripIsExact) {
  const auto cfg = small_config(Task::kClassification);
  const auto p = init_params(cfg, 9);
  std::stringstream ss;
  write_checkpoint(ss, p);
  EXPECT_EQ(ss.str().substr(0, 4), "BTWM");
  const auto q = read_checkpoint(ss);
  EXPECT_EQ(q.config, p.config);
  const auto va = p.tensors.views();
  const auto vb = q.tensors.views();
  ASSERT_EQ(va.size(), vb.size());
  for (std::size_t k = 0; k < va.size(); ++k) {
    ASSERT_EQ(va[k].name, vb[k].name);
    for (Index j = 0; j < va[k].size(); ++j) ASSERT_EQ(va[k].data[j], vb[k].data[j]);
  }
}

TEST(Checkpoint, RejectsCorruptInput) {
  std::stringstream bad("NOPE");
  EXPECT_ANY_THROW(read_checkpoint(bad));
  const auto p = init_params(small_config(Task::kRegression), 1);
  std::stringstream ss;
  write_checkpoint(ss, p);
  std::string bytes = ss.str();
  bytes.resize(bytes.size() / 2);
  std::stringstream truncated(bytes);
  EXPECT_ANY_THROW(read_checkpoint(truncated));
}

}  // namespace
