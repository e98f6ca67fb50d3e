// Copyright 2026 The btw Authors
// SPDX-License-Identifier: Apache-2.0

#include "btw/synthdata.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <string>

#include <json.hpp>

#include "btw/errors.hpp"
#include "btw/seeds.hpp"
#include "btw/tensor_io.hpp"

namespace btw::synthdata {

namespace {

constexpr double kSignalScale = 1.5;
constexpr double kTargetBound = 3.0;

std::vector<double> class_priors(const SyntheticSpec& spec) {
  const auto c = static_cast<std::size_t>(spec.n_classes);
  std::vector<double> priors(c, 1.0 / static_cast<double>(c));
  if (spec.class_imbalance > 0.0) {
    std::mt19937_64 rng(derive_seed(spec.seed, SeedStream::kClassPriors));
    std::gamma_distribution<double> gamma(spec.class_imbalance, 1.0);
    double total = 0.0;
    for (double& p : priors) total += (p = gamma(rng));
    for (double& p : priors) p /= total;
  }
  return priors;
}

// Rank-based binning: the r-th smallest signal goes to the class whose
// cumulative prior interval contains r.
std::vector<double> bin_targets(const std::vector<double>& signal, const std::vector<double>& priors) {
  const std::size_t n = signal.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return signal[a] < signal[b]; });
  std::vector<std::size_t> bounds;
  double cum = 0.0;
  for (std::size_t k = 0; k + 1 < priors.size(); ++k) {
    cum += priors[k];
    bounds.push_back(static_cast<std::size_t>(std::llround(cum * static_cast<double>(n))));
  }
  bounds.push_back(n);
  std::vector<double> labels(n);
  std::size_t cls = 0;
  for (std::size_t r = 0; r < n; ++r) {
    while (r >= bounds[cls]) ++cls;
    labels[order[r]] = static_cast<double>(cls);
  }
  return labels;
}

}  // namespace

std::string_view to_string(Nonlinearity n) {
  return n == Nonlinearity::kLinear ? "linear" : "tanh-mixed";
}

std::optional<Nonlinearity> parse_nonlinearity(std::string_view s) {
  if (s == "linear") return Nonlinearity::kLinear;
  if (s == "tanh-mixed") return Nonlinearity::kTanhMixed;
  return std::nullopt;
}

void SyntheticSpec::validate() const {
  if (n_instances < 4) throw InvalidSpecError("n_instances must be >= 4");
  if (modality_dims.empty()) throw InvalidSpecError("modality_dims must not be empty");
  for (auto d : modality_dims) {
    if (d < 1) throw InvalidSpecError("modality_dims entries must be >= 1");
  }
  if (informativeness.size() != modality_dims.size()) {
    throw InvalidSpecError("informativeness has " + std::to_string(informativeness.size()) +
                           " entries for " + std::to_string(modality_dims.size()) + " modalities");
  }
  bool any = false;
  for (double v : informativeness) {
    if (!(v >= 0.0 && v <= 1.0)) throw InvalidSpecError("informativeness entries must be in [0, 1]");
    any = any || v > 0.0;
  }
  if (!any) throw InvalidSpecError("at least one modality must be informative");
  if (!(noise_sigma >= 0.0) || !std::isfinite(noise_sigma)) {
    throw InvalidSpecError("noise_sigma must be finite and >= 0");
  }
  if (task == Task::kClassification && n_classes < 2) {
    throw InvalidSpecError("classification needs n_classes >= 2");
  }
  if (!projection_seeds.empty() && projection_seeds.size() != modality_dims.size()) {
    throw InvalidSpecError("projection_seeds must have one entry per modality");
  }
  if (!(class_imbalance >= 0.0) || !std::isfinite(class_imbalance)) {
    throw InvalidSpecError("class_imbalance must be finite and >= 0");
  }
}

std::vector<std::size_t> Dataset::indices(Split s) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < splits.size(); ++i) {
    if (splits[i] == s) out.push_back(i);
  }
  return out;
}

SplitData gather(const Dataset& data, std::span<const std::size_t> rows) {
  SplitData out;
  out.rows.assign(rows.begin(), rows.end());
  const auto n = static_cast<Eigen::Index>(rows.size());
  for (const auto& x : data.modalities) {
    Eigen::MatrixXd sub(n, x.cols());
    for (Eigen::Index r = 0; r < n; ++r) sub.row(r) = x.row(static_cast<Eigen::Index>(rows[static_cast<std::size_t>(r)]));
    out.batch.modalities.push_back(std::move(sub));
  }
  out.targets.reserve(rows.size());
  for (auto r : rows) out.targets.push_back(data.targets[r]);
  return out;
}

SplitData gather(const Dataset& data, Split s) {
  const auto rows = data.indices(s);
  return gather(data, rows);
}

Dataset generate(const SyntheticSpec& spec) {
  spec.validate();
  const std::size_t n = spec.n_instances;
  const std::size_t n_mod = spec.modality_dims.size();

  std::mt19937_64 signal_rng(derive_seed(spec.seed, SeedStream::kSignal));
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> signal(n);
  for (double& s : signal) s = std::clamp(kSignalScale * normal(signal_rng), -kTargetBound, kTargetBound);

  Dataset data;
  data.task = spec.task;
  data.n_classes = spec.task == Task::kClassification ? spec.n_classes : 0;
  data.splits.assign(n, Split::kTrain);
  data.targets = spec.task == Task::kRegression ? signal : bin_targets(signal, class_priors(spec));

  for (std::size_t m = 0; m < n_mod; ++m) {
    const Eigen::Index dim = spec.modality_dims[m];
    const double inf = spec.informativeness[m];
    const std::uint64_t proj_seed = spec.projection_seeds.empty()
                                        ? derive_seed(spec.seed, SeedStream::kProjection, m)
                                        : spec.projection_seeds[m];
    // One distribution object per engine: normal_distribution caches draws.
    std::mt19937_64 proj_rng(proj_seed);
    std::normal_distribution<double> proj_normal(0.0, 1.0);
    std::uniform_real_distribution<double> uniform(-0.5, 0.5);
    Eigen::VectorXd scale(dim);
    Eigen::VectorXd offset(dim);
    for (Eigen::Index j = 0; j < dim; ++j) {
      scale(j) = proj_normal(proj_rng);
      offset(j) = uniform(proj_rng);
    }

    std::mt19937_64 latent_rng(derive_seed(spec.seed, SeedStream::kModalityNoise, m));
    std::mt19937_64 obs_rng(derive_seed(spec.seed, SeedStream::kObservationNoise, m));
    std::normal_distribution<double> latent_normal(0.0, 1.0);
    std::normal_distribution<double> obs_normal(0.0, 1.0);
    Eigen::MatrixXd x(static_cast<Eigen::Index>(n), dim);
    for (std::size_t i = 0; i < n; ++i) {
      const double eps = latent_normal(latent_rng);
      const double z = inf * (signal[i] / kSignalScale) + (1.0 - inf) * eps;
      for (Eigen::Index j = 0; j < dim; ++j) {
        const double clean = spec.nonlinearity == Nonlinearity::kLinear
                                 ? scale(j) * z
                                 : std::tanh(scale(j) * z + offset(j));
        const double obs = spec.noise_sigma > 0.0 ? spec.noise_sigma * obs_normal(obs_rng) : 0.0;
        x(static_cast<Eigen::Index>(i), j) = clean + obs;
      }
    }
    data.modalities.push_back(std::move(x));
  }
  return data;
}

Dataset split(Dataset data, const std::array<double, 3>& fractions, std::uint64_t seed) {
  double total = 0.0;
  for (double f : fractions) {
    if (!(f > 0.0)) throw InvalidInputError("split fractions must all be positive");
    total += f;
  }
  if (std::abs(total - 1.0) > 1e-9) throw InvalidInputError("split fractions must sum to 1");
  const std::size_t n = data.n_instances();
  const auto n_train = static_cast<std::size_t>(std::llround(fractions[0] * static_cast<double>(n)));
  const auto n_val = static_cast<std::size_t>(std::llround(fractions[1] * static_cast<double>(n)));
  if (n_train == 0 || n_val == 0 || n_train + n_val >= n) {
    throw InvalidInputError("split fractions leave an empty partition for n=" + std::to_string(n));
  }

  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  std::mt19937_64 rng(seed);
  for (std::size_t i = n - 1; i > 0; --i) {
    std::uniform_int_distribution<std::size_t> pick(0, i);
    std::swap(perm[i], perm[pick(rng)]);
  }
  data.splits.assign(n, Split::kTest);
  for (std::size_t k = 0; k < n_train; ++k) data.splits[perm[k]] = Split::kTrain;
  for (std::size_t k = n_train; k < n_train + n_val; ++k) data.splits[perm[k]] = Split::kVal;
  return data;
}

void save_dataset(const std::filesystem::path& dir, const Dataset& data, const SyntheticSpec* spec) {
  std::filesystem::create_directories(dir);
  nlohmann::ordered_json meta;
  meta["format"] = "btw-dataset";
  meta["version"] = 1;
  meta["task"] = data.task == Task::kRegression ? "regression" : "classification";
  meta["n_classes"] = data.n_classes;
  meta["n_instances"] = data.n_instances();
  meta["n_modalities"] = data.n_modalities();
  std::vector<Eigen::Index> dims;
  for (const auto& x : data.modalities) dims.push_back(x.cols());
  meta["modality_dims"] = dims;
  meta["split_counts"] = {{"train", data.indices(Split::kTrain).size()},
                          {"val", data.indices(Split::kVal).size()},
                          {"test", data.indices(Split::kTest).size()}};
  if (spec) {
    meta["seed"] = spec->seed;
    meta["spec"] = {{"n_instances", spec->n_instances},
                    {"modality_dims", spec->modality_dims},
                    {"informativeness", spec->informativeness},
                    {"noise_sigma", spec->noise_sigma},
                    {"task", spec->task == Task::kRegression ? "regression" : "classification"},
                    {"n_classes", spec->n_classes},
                    {"nonlinearity", std::string(to_string(spec->nonlinearity))},
                    {"projection_seeds", spec->projection_seeds},
                    {"class_imbalance", spec->class_imbalance}};
  }
  std::ofstream(dir / "meta.json") << meta.dump(2) << '\n';

  for (std::size_t m = 0; m < data.modalities.size(); ++m) {
    io::save_matrix(dir / ("modality_" + std::to_string(m) + ".bin"), data.modalities[m]);
  }
  io::save_matrix(dir / "targets.bin",
                  Eigen::Map<const Eigen::VectorXd>(data.targets.data(),
                                                    static_cast<Eigen::Index>(data.targets.size())));
  Eigen::VectorXd tags(static_cast<Eigen::Index>(data.splits.size()));
  for (std::size_t i = 0; i < data.splits.size(); ++i) {
    tags(static_cast<Eigen::Index>(i)) = static_cast<double>(data.splits[i]);
  }
  io::save_matrix(dir / "splits.bin", tags);
}

Dataset load_dataset(const std::filesystem::path& dir) {
  std::ifstream meta_in(dir / "meta.json");
  if (!meta_in) throw InvalidInputError("missing meta.json in " + dir.string());
  nlohmann::json meta;
  try {
    meta = nlohmann::json::parse(meta_in);
  } catch (const nlohmann::json::exception& e) {
    throw InvalidInputError(std::string("meta.json: ") + e.what());
  }
  Dataset data;
  const std::string task = meta.at("task").get<std::string>();
  if (task != "regression" && task != "classification") throw InvalidInputError("meta.json: bad task");
  data.task = task == "regression" ? Task::kRegression : Task::kClassification;
  data.n_classes = meta.at("n_classes").get<int>();
  const auto n_mod = meta.at("n_modalities").get<std::size_t>();
  const auto n = meta.at("n_instances").get<std::size_t>();
  for (std::size_t m = 0; m < n_mod; ++m) {
    data.modalities.push_back(io::load_matrix(dir / ("modality_" + std::to_string(m) + ".bin")));
    if (static_cast<std::size_t>(data.modalities.back().rows()) != n) {
      throw InvalidInputError("modality " + std::to_string(m) + " row count disagrees with meta.json");
    }
  }
  const Eigen::MatrixXd targets = io::load_matrix(dir / "targets.bin");
  const Eigen::MatrixXd tags = io::load_matrix(dir / "splits.bin");
  if (static_cast<std::size_t>(targets.rows()) != n || static_cast<std::size_t>(tags.rows()) != n) {
    throw InvalidInputError("targets/splits row count disagrees with meta.json");
  }
  data.targets.assign(targets.data(), targets.data() + n);
  for (std::size_t i = 0; i < n; ++i) {
    const double t = tags(static_cast<Eigen::Index>(i), 0);
    if (t != 0.0 && t != 1.0 && t != 2.0) throw InvalidInputError("splits.bin holds an unknown tag");
    data.splits.push_back(static_cast<Split>(static_cast<int>(t)));
  }
  return data;
}

}  // namespace btw::synthdata
