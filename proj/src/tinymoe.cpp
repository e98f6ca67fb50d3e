// Copyright 2026 The btw Authors
// SPDX-License-Identifier: Apache-2.0

#include "btw/tinymoe.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <random>
#include <string>

#include "btw/errors.hpp"

namespace btw::tinymoe {

namespace {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

constexpr double kInvSqrt2 = 0.70710678118654752440;

double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x * kInvSqrt2)); }

double gelu_grad(double x) {
  const double cdf = 0.5 * (1.0 + std::erf(x * kInvSqrt2));
  const double pdf = std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
  return cdf + x * pdf;
}

Affine zero_affine(Index in, Index out) {
  return Affine{MatrixXd::Zero(out, in), VectorXd::Zero(out)};
}

void require_finite(const VectorXd& v, const std::string& layer) {
  if (!v.allFinite()) throw NumericError("non-finite activation in " + layer);
}

// Indices of the k largest logits; equal logits prefer the lower index.
std::vector<Index> top_k(const VectorXd& logits, Index k) {
  std::vector<Index> idx(static_cast<std::size_t>(logits.size()));
  std::iota(idx.begin(), idx.end(), Index{0});
  std::partial_sort(idx.begin(), idx.begin() + k, idx.end(), [&](Index a, Index b) {
    return logits(a) > logits(b) || (logits(a) == logits(b) && a < b);
  });
  idx.resize(static_cast<std::size_t>(k));
  return idx;
}

VectorXd softmax(const VectorXd& z) {
  const double top = z.maxCoeff();
  VectorXd e = (z.array() - top).exp().matrix();
  return e / e.sum();
}

void check_batch(const MoeConfig& config, const DataBatch& batch) {
  if (static_cast<Index>(batch.modalities.size()) != config.n_modalities()) {
    throw ShapeError("batch has " + std::to_string(batch.modalities.size()) +
                     " modalities, model expects " + std::to_string(config.n_modalities()));
  }
  for (Index m = 0; m < config.n_modalities(); ++m) {
    const auto& x = batch.modalities[static_cast<std::size_t>(m)];
    if (x.rows() != batch.size()) throw ShapeError("batch modalities disagree on instance count");
    if (x.cols() != config.input_dims[static_cast<std::size_t>(m)]) {
      throw ShapeError("modality " + std::to_string(m) + " has " + std::to_string(x.cols()) +
                       " features, model expects " +
                       std::to_string(config.input_dims[static_cast<std::size_t>(m)]));
    }
  }
}

// Shared forward over an explicit set of active modalities.
ForwardResult run_forward(const ModelParams& params, const DataBatch& batch,
                          const std::vector<Index>& active, const MatrixXd* weights) {
  const MoeConfig& cfg = params.config;
  const ParamTensors& t = params.tensors;
  const Index n = batch.size();
  const double pool_count = static_cast<double>(active.size());

  ForwardResult result;
  result.predictions.resize(n, cfg.output_dim());
  result.trace.params_version = params.version;
  result.trace.instances.resize(static_cast<std::size_t>(n));

  for (Index i = 0; i < n; ++i) {
    InstanceTrace& inst = result.trace.instances[static_cast<std::size_t>(i)];
    VectorXd pooled = VectorXd::Zero(cfg.embed_dim);
    for (Index m : active) {
      const auto mi = static_cast<std::size_t>(m);
      ModalityTrace mt;
      mt.modality = m;
      mt.features = batch.modalities[mi].row(i).transpose();
      mt.weight = weights ? (*weights)(i, m) : 1.0;

      VectorXd h = t.encoders[mi].weight * mt.features + t.encoders[mi].bias;
      if (weights) h *= mt.weight;
      require_finite(h, "encoder[" + std::to_string(m) + "]");

      for (Index l = 0; l < cfg.n_moe_layers; ++l) {
        const auto li = static_cast<std::size_t>(l);
        const Affine& router = t.routers[li][mi];
        TokenTrace tok;
        tok.input = h;
        const VectorXd logits = router.weight * h + router.bias;
        tok.selected = top_k(logits, cfg.top_k);
        VectorXd chosen(cfg.top_k);
        for (Index k = 0; k < cfg.top_k; ++k) chosen(k) = logits(tok.selected[static_cast<std::size_t>(k)]);
        tok.gates = softmax(chosen);

        VectorXd next = h;
        for (Index k = 0; k < cfg.top_k; ++k) {
          const Expert& ex = t.experts[li][static_cast<std::size_t>(tok.selected[static_cast<std::size_t>(k)])];
          VectorXd pre = ex.up.weight * h + ex.up.bias;
          VectorXd act = pre.unaryExpr(&gelu);
          VectorXd out = ex.down.weight * act + ex.down.bias;
          next += tok.gates(k) * out;
          tok.pre.push_back(std::move(pre));
          tok.act.push_back(std::move(act));
          tok.out.push_back(std::move(out));
        }
        require_finite(next, "moe_layer[" + std::to_string(l) + "]");
        h = std::move(next);
        mt.layers.push_back(std::move(tok));
      }
      pooled += h;
      inst.modalities.push_back(std::move(mt));
    }
    pooled /= pool_count;

    VectorXd logits = t.head.weight * pooled + t.head.bias;
    require_finite(logits, "head");
    inst.output = cfg.task == Task::kRegression ? logits : softmax(logits);
    inst.pooled = std::move(pooled);
    result.predictions.row(i) = inst.output.transpose();
  }
  return result;
}

std::vector<Index> all_modalities(const MoeConfig& cfg) {
  std::vector<Index> v(static_cast<std::size_t>(cfg.n_modalities()));
  std::iota(v.begin(), v.end(), Index{0});
  return v;
}

void accumulate_affine(Affine& g, const VectorXd& d_out, const VectorXd& input) {
  g.weight.noalias() += d_out * input.transpose();
  g.bias += d_out;
}

template <typename Tensors, typename View>
std::vector<View> collect_views(Tensors& t) {
  std::vector<View> out;
  auto add = [&](const std::string& name, auto& a) {
    out.push_back(View{name + ".weight", a.weight.data(), a.weight.rows(), a.weight.cols()});
    out.push_back(View{name + ".bias", a.bias.data(), a.bias.rows(), 1});
  };
  for (std::size_t m = 0; m < t.encoders.size(); ++m) add("encoder" + std::to_string(m), t.encoders[m]);
  for (std::size_t l = 0; l < t.routers.size(); ++l) {
    const std::string layer = "layer" + std::to_string(l);
    for (std::size_t m = 0; m < t.routers[l].size(); ++m) {
      add(layer + ".router" + std::to_string(m), t.routers[l][m]);
    }
    for (std::size_t e = 0; e < t.experts[l].size(); ++e) {
      const std::string ex = layer + ".expert" + std::to_string(e);
      add(ex + ".up", t.experts[l][e].up);
      add(ex + ".down", t.experts[l][e].down);
    }
  }
  add(std::string("head"), t.head);
  return out;
}

}  // namespace

void MoeConfig::validate() const {
  if (input_dims.empty()) throw InvalidInputError("moe config needs at least one modality");
  for (Index d : input_dims) {
    if (d < 1) throw InvalidInputError("modality input dims must be >= 1");
  }
  if (embed_dim < 1) throw InvalidInputError("embed_dim must be >= 1");
  if (expert_hidden < 1) throw InvalidInputError("expert_hidden must be >= 1");
  if (n_experts < 1) throw InvalidInputError("n_experts must be >= 1");
  if (top_k < 1 || top_k > n_experts) throw InvalidInputError("top_k must be in [1, n_experts]");
  if (n_moe_layers < 1) throw InvalidInputError("n_moe_layers must be >= 1");
  if (task == Task::kClassification && n_classes < 2) {
    throw InvalidInputError("classification needs n_classes >= 2");
  }
}

ParamTensors ParamTensors::zeros(const MoeConfig& cfg) {
  cfg.validate();
  ParamTensors t;
  for (Index d : cfg.input_dims) t.encoders.push_back(zero_affine(d, cfg.embed_dim));
  t.routers.resize(static_cast<std::size_t>(cfg.n_moe_layers));
  t.experts.resize(static_cast<std::size_t>(cfg.n_moe_layers));
  for (std::size_t l = 0; l < t.routers.size(); ++l) {
    for (Index m = 0; m < cfg.n_modalities(); ++m) {
      t.routers[l].push_back(zero_affine(cfg.embed_dim, cfg.n_experts));
    }
    for (Index e = 0; e < cfg.n_experts; ++e) {
      t.experts[l].push_back(Expert{zero_affine(cfg.embed_dim, cfg.expert_hidden),
                                    zero_affine(cfg.expert_hidden, cfg.embed_dim)});
    }
  }
  t.head = zero_affine(cfg.embed_dim, cfg.output_dim());
  return t;
}

std::vector<TensorView> ParamTensors::views() {
  return collect_views<ParamTensors, TensorView>(*this);
}

std::vector<ConstTensorView> ParamTensors::views() const {
  return collect_views<const ParamTensors, ConstTensorView>(*this);
}

Index ParamTensors::parameter_count() const {
  Index n = 0;
  for (const auto& v : views()) n += v.size();
  return n;
}

ModelParams init_params(const MoeConfig& config, std::uint64_t seed) {
  ModelParams p;
  p.config = config;
  p.tensors = ParamTensors::zeros(config);
  std::mt19937_64 rng(seed);
  for (auto& v : p.tensors.views()) {
    if (v.name.ends_with(".bias")) continue;
    const double a = std::sqrt(6.0 / static_cast<double>(v.rows + v.cols));
    std::uniform_real_distribution<double> dist(-a, a);
    for (Index k = 0; k < v.size(); ++k) v.data[k] = dist(rng);
  }
  return p;
}

ForwardResult forward(const ModelParams& params, const DataBatch& batch) {
  check_batch(params.config, batch);
  return run_forward(params, batch, all_modalities(params.config), nullptr);
}

ForwardResult forward(const ModelParams& params, const DataBatch& batch,
                      const MatrixXd& modality_weights) {
  check_batch(params.config, batch);
  if (modality_weights.rows() != batch.size() ||
      modality_weights.cols() != params.config.n_modalities()) {
    throw ShapeError("modality weights must be " + std::to_string(batch.size()) + " x " +
                     std::to_string(params.config.n_modalities()));
  }
  return run_forward(params, batch, all_modalities(params.config), &modality_weights);
}

ForwardResult unimodal_forward_traced(const ModelParams& params, const DataBatch& batch,
                                      Index modality) {
  if (modality < 0 || modality >= params.config.n_modalities()) {
    throw RangeError("modality index " + std::to_string(modality) + " out of range");
  }
  check_batch(params.config, batch);
  return run_forward(params, batch, {modality}, nullptr);
}

MatrixXd unimodal_forward(const ModelParams& params, const DataBatch& batch, Index modality) {
  return unimodal_forward_traced(params, batch, modality).predictions;
}

ParamGrads backward(const ModelParams& params, const ForwardTrace& trace, const MatrixXd& loss_grad) {
  if (trace.params_version != params.version) {
    throw InvalidStateError("forward trace is stale: parameters changed since the forward pass");
  }
  const MoeConfig& cfg = params.config;
  const ParamTensors& t = params.tensors;
  if (loss_grad.rows() != static_cast<Index>(trace.instances.size()) ||
      loss_grad.cols() != cfg.output_dim()) {
    throw ShapeError("loss gradient shape does not match predictions");
  }

  ParamGrads g;
  g.tensors = ParamTensors::zeros(cfg);
  g.version = params.version;

  for (std::size_t i = 0; i < trace.instances.size(); ++i) {
    const InstanceTrace& inst = trace.instances[i];
    const VectorXd d_out = loss_grad.row(static_cast<Index>(i)).transpose();
    VectorXd d_logits;
    if (cfg.task == Task::kRegression) {
      d_logits = d_out;
    } else {
      const VectorXd& p = inst.output;
      d_logits = p.cwiseProduct((d_out.array() - p.dot(d_out)).matrix());
    }
    accumulate_affine(g.tensors.head, d_logits, inst.pooled);
    const VectorXd d_pooled =
        (t.head.weight.transpose() * d_logits) / static_cast<double>(inst.modalities.size());

    for (const ModalityTrace& mt : inst.modalities) {
      const auto mi = static_cast<std::size_t>(mt.modality);
      VectorXd dh = d_pooled;
      for (Index l = cfg.n_moe_layers - 1; l >= 0; --l) {
        const auto li = static_cast<std::size_t>(l);
        const TokenTrace& tok = mt.layers[li];
        VectorXd d_in = dh;  // residual path
        VectorXd d_gates(cfg.top_k);
        for (Index k = 0; k < cfg.top_k; ++k) {
          const auto ki = static_cast<std::size_t>(k);
          const auto e = static_cast<std::size_t>(tok.selected[ki]);
          const Expert& ex = t.experts[li][e];
          Expert& gex = g.tensors.experts[li][e];
          d_gates(k) = dh.dot(tok.out[ki]);
          const VectorXd d_expert_out = tok.gates(k) * dh;
          accumulate_affine(gex.down, d_expert_out, tok.act[ki]);
          const VectorXd d_act = ex.down.weight.transpose() * d_expert_out;
          const VectorXd d_pre = d_act.cwiseProduct(tok.pre[ki].unaryExpr(&gelu_grad));
          accumulate_affine(gex.up, d_pre, tok.input);
          d_in.noalias() += ex.up.weight.transpose() * d_pre;
        }
        // Softmax over the selected logits only.
        const double mix = tok.gates.dot(d_gates);
        const Affine& router = t.routers[li][mi];
        Affine& grouter = g.tensors.routers[li][mi];
        for (Index k = 0; k < cfg.top_k; ++k) {
          const Index e = tok.selected[static_cast<std::size_t>(k)];
          const double d_logit = tok.gates(k) * (d_gates(k) - mix);
          grouter.weight.row(e).noalias() += d_logit * tok.input.transpose();
          grouter.bias(e) += d_logit;
          d_in.noalias() += d_logit * router.weight.row(e).transpose();
        }
        dh = std::move(d_in);
      }
      if (mt.weight != 1.0) dh *= mt.weight;
      accumulate_affine(g.tensors.encoders[mi], dh, mt.features);
    }
  }
  return g;
}

LossValue loss(Task task, const MatrixXd& predictions, std::span<const double> targets) {
  const Index n = predictions.rows();
  if (static_cast<std::size_t>(n) != targets.size() || n == 0) {
    throw ShapeError("loss: predictions and targets are misaligned");
  }
  LossValue out;
  out.grad = MatrixXd::Zero(n, predictions.cols());
  const double inv_n = 1.0 / static_cast<double>(n);
  for (Index i = 0; i < n; ++i) {
    const double y = targets[static_cast<std::size_t>(i)];
    if (task == Task::kRegression) {
      const double r = predictions(i, 0) - y;
      out.value += r * r * inv_n;
      out.grad(i, 0) = 2.0 * r * inv_n;
    } else {
      const auto c = static_cast<Index>(y);
      if (c < 0 || c >= predictions.cols()) throw RangeError("class target out of range");
      const double p = std::max(predictions(i, c), 1e-300);
      out.value -= std::log(p) * inv_n;
      out.grad(i, c) = -inv_n / p;
    }
  }
  return out;
}

void sgd_step(ModelParams& params, const ParamGrads& grads, double lr) {
  if (!(lr >= 0.0) || !std::isfinite(lr)) throw InvalidInputError("learning rate must be >= 0");
  auto pv = params.tensors.views();
  const auto gv = grads.tensors.views();
  if (pv.size() != gv.size()) throw ShapeError("gradient layout does not match parameters");
  for (std::size_t k = 0; k < gv.size(); ++k) {
    if (pv[k].size() != gv[k].size()) throw ShapeError("gradient shape mismatch in " + pv[k].name);
    for (Index j = 0; j < gv[k].size(); ++j) {
      if (!std::isfinite(gv[k].data[j])) throw NumericError("non-finite gradient in " + gv[k].name);
    }
  }
  for (std::size_t k = 0; k < gv.size(); ++k) {
    for (Index j = 0; j < gv[k].size(); ++j) pv[k].data[j] -= lr * gv[k].data[j];
  }
  ++params.version;
}

double grad_check(const ModelParams& params, const DataBatch& batch,
                  std::span<const double> targets, const GradCheckOptions& options) {
  if (options.n_probes < 1) throw InvalidInputError("grad_check needs n_probes >= 1");
  const Task task = params.config.task;
  const ForwardResult base = forward(params, batch);
  const ParamGrads analytic = backward(params, base.trace, loss(task, base.predictions, targets).grad);
  const auto gviews = analytic.tensors.views();

  ModelParams probe = params;
  auto pviews = probe.tensors.views();
  std::vector<ProbeSite> sites;
  for (std::size_t k = 0; k < pviews.size(); ++k) {
    for (Index j = 0; j < pviews[k].size(); ++j) {
      ProbeSite s{k, pviews[k].name, j};
      if (!options.filter || options.filter(s)) sites.push_back(std::move(s));
    }
  }
  if (sites.empty()) throw InvalidInputError("grad_check: filter excludes every parameter");

  std::mt19937_64 rng(options.seed);
  std::uniform_int_distribution<std::size_t> pick(0, sites.size() - 1);
  double worst = 0.0;
  for (std::size_t p = 0; p < options.n_probes; ++p) {
    const ProbeSite& s = sites[pick(rng)];
    double& slot = pviews[s.tensor].data[s.offset];
    const double saved = slot;
    slot = saved + options.epsilon;
    const double up = loss(task, forward(probe, batch).predictions, targets).value;
    slot = saved - options.epsilon;
    const double down = loss(task, forward(probe, batch).predictions, targets).value;
    slot = saved;
    const double numeric = (up - down) / (2.0 * options.epsilon);
    const double exact = gviews[s.tensor].data[s.offset];
    const double denom = std::max({std::abs(exact), std::abs(numeric), 1e-8});
    worst = std::max(worst, std::abs(exact - numeric) / denom);
  }
  return worst;
}

}  // namespace btw::tinymoe
