// Copyright 2026 The btw Authors
// SPDX-License-Identifier: Apache-2.0

#include "btw/cli.hpp"

#include <openssl/evp.h>

#include <CLI11.hpp>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <json.hpp>
#include <mutex>
#include <sstream>
#include <thread>

#include "btw/checkpoint.hpp"
#include "btw/config.hpp"
#include "btw/errors.hpp"
#include "btw/synthdata.hpp"

namespace btw::cli {

namespace fs = std::filesystem;
using nlohmann::ordered_json;
using trainloop::EvalReport;
using trainloop::ExperimentConfig;

namespace {

struct OutputNotEmpty : Error {
  using Error::Error;
};

std::string g17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void write_file(const fs::path& p, std::string_view text) {
  std::ofstream out(p, std::ios::binary);
  out << text;
  if (!out) throw Error("failed writing '" + p.string() + "'");
}

void prepare_out_dir(const fs::path& dir, bool force) {
  if (fs::exists(dir) && !fs::is_empty(dir) && !force) {
    throw OutputNotEmpty("output directory '" + dir.string() + "' is not empty (use --force)");
  }
  fs::create_directories(dir);
}

std::vector<std::string> metric_names(Task task) {
  if (task == Task::kRegression) {
    return {"mae", "corr", "acc7", "acc5", "acc2_include_zero", "acc2_non_zero",
            "weighted_f1_include_zero", "weighted_f1_non_zero"};
  }
  return {"accuracy", "macro_f1", "weighted_f1"};
}

std::vector<double> metric_values(const EvalReport& r) {
  if (r.task == Task::kRegression) {
    const auto& g = r.regression;
    return {g.mae, g.corr.value, g.acc7, g.acc5, g.acc2_include_zero, g.acc2_non_zero,
            g.weighted_f1_include_zero, g.weighted_f1_non_zero};
  }
  return {r.classification.accuracy, r.classification.macro_f1, r.classification.weighted_f1};
}

ordered_json report_json(const EvalReport& r) {
  ordered_json j;
  j["loss"] = r.loss;
  const auto names = metric_names(r.task);
  const auto values = metric_values(r);
  for (std::size_t i = 0; i < names.size(); ++i) j[names[i]] = values[i];
  if (r.task == Task::kRegression) j["corr_degenerate"] = r.regression.corr.degenerate;
  return j;
}

std::vector<double> to_vec(const Eigen::VectorXd& v) { return {v.data(), v.data() + v.size()}; }

std::string records_csv(const trainloop::ExperimentResult& res, Task task, Eigen::Index n_mod) {
  std::ostringstream os;
  os << "epoch,phase,train_loss,val_loss";
  for (const auto& n : metric_names(task)) os << ",val_" << n;
  os << ",alpha";
  for (Eigen::Index m = 0; m < n_mod; ++m) os << ",weight_" << m;
  for (Eigen::Index m = 0; m < n_mod; ++m) os << ",mi_" << m;
  os << '\n';
  for (const auto& r : res.records) {
    os << r.epoch << ',' << r.phase << ',' << g17(r.train_loss) << ',' << g17(r.val.loss);
    for (double v : metric_values(r.val)) os << ',' << g17(v);
    os << ',' << g17(r.alpha);
    for (Eigen::Index m = 0; m < n_mod; ++m) os << ',' << g17(r.mean_weights(m));
    for (Eigen::Index m = 0; m < n_mod; ++m) {
      os << ',';
      if (r.modality_mi.size() == n_mod) os << g17(r.modality_mi(m));
    }
    os << '\n';
  }
  return os.str();
}

ordered_json manifest(const std::string& config_text, std::uint64_t seed, const std::vector<std::string>& layout) {
  ordered_json j;
  j["tool"] = "btw";
  j["tool_version"] = std::string(kToolVersion);
  j["config"] = config_text;
  j["config_sha1"] = git_blob_sha1(config_text);
  j["seed"] = seed;
  j["layout"] = layout;
  return j;
}

}  // namespace

std::string git_blob_sha1(std::string_view bytes) {
  std::string payload = "blob " + std::to_string(bytes.size());
  payload.push_back('\0');
  payload.append(bytes);
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(payload.data(), payload.size(), md, &len, EVP_sha1(), nullptr) != 1) {
    throw Error("SHA-1 digest failed");
  }
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(kHex[md[i] >> 4]);
    out.push_back(kHex[md[i] & 0xF]);
  }
  return out;
}

trainloop::ExperimentResult train_into(const ExperimentConfig& cfg, const fs::path& out) {
  const std::string config_text = config::render_experiment_config(cfg);
  const synthdata::Dataset data = trainloop::prepare_dataset(cfg);
  auto res = trainloop::run_experiment(cfg, data);
  const Task task = res.model.config.task;
  const Eigen::Index n_mod = res.model.config.n_modalities();

  write_file(out / "config.txt", config_text);
  write_file(out / "records.csv", records_csv(res, task, n_mod));
  {
    std::ostringstream os;
    os << "epoch,phase,seconds\n";
    for (const auto& r : res.records) os << r.epoch << ',' << r.phase << ',' << g17(r.seconds) << '\n';
    write_file(out / "timings.csv", os.str());
  }
  {
    std::ofstream os(out / "weights_trajectory.csv", std::ios::binary);
    os << "epoch,instance,modality,weight\n";
    for (std::size_t t = 0; t < res.trajectory.size(); ++t) {
      weights::write_weight_rows(os, res.first_weighted_epoch + t, res.trajectory[t]);
    }
  }
  {
    std::ostringstream os;
    os << "epoch,alpha\n";
    for (std::size_t t = 0; t < res.alphas.size(); ++t) {
      os << res.first_weighted_epoch + t << ',' << g17(res.alphas[t]) << '\n';
    }
    write_file(out / "alpha_trajectory.csv", os.str());
  }
  {
    ordered_json j;
    j["variant"] = std::string(trainloop::to_string(cfg.variant));
    j["seed"] = cfg.seed;
    j["task"] = task == Task::kRegression ? "regression" : "classification";
    j["test"] = report_json(res.test);
    j["val"] = report_json(res.val);
    const Eigen::VectorXd mi = res.modality_mi;
    j["modality_mi"] = to_vec(mi);
    const double total = mi.sum();
    Eigen::VectorXd mi_w = total > 0.0 ? Eigen::VectorXd(mi / total)
                                        : Eigen::VectorXd::Constant(mi.size(), 1.0 / static_cast<double>(mi.size()));
    j["modality_mi_weights"] = to_vec(mi_w);
    Eigen::Index argmin = 0;
    mi_w.minCoeff(&argmin);
    j["min_mi_modality"] = argmin;
    j["eval_weights"] = to_vec(res.eval_weights);
    ordered_json uni = ordered_json::array();
    for (const auto& r : res.unimodal.val_reports) uni.push_back(report_json(r));
    j["unimodal_val"] = uni;
    if (task == Task::kRegression) {
      j["notes"]["acc2_include_zero"] = "a value of exactly 0 counts as non-positive";
      j["notes"]["acc2_non_zero"] = "instances whose target is exactly 0 are excluded";
    }
    write_file(out / "metrics.json", j.dump(2) + "\n");
  }
  fs::create_directories(out / "checkpoints");
  for (std::size_t m = 0; m < res.unimodal.models.size(); ++m) {
    tinymoe::save_checkpoint(out / "checkpoints" / ("unimodal_" + std::to_string(m) + ".btwm"),
                                res.unimodal.models[m]);
  }
  tinymoe::save_checkpoint(out / "checkpoints" / "final.btwm", res.model);

  write_file(out / "manifest.json",
             manifest(config_text, cfg.seed,
                      {"config.txt", "manifest.json", "records.csv", "timings.csv", "weights_trajectory.csv",
                       "alpha_trajectory.csv", "metrics.json", "checkpoints/"})
                     .dump(2) +
                 "\n");
  return res;
}

namespace {

template <typename F>
int guarded_command(F&& body) {
  try {
    return body();
  } catch (const config::ParseError& e) {
    std::cerr << "parse error: " << e.what() << '\n';
    return kExitParse;
  } catch (const OutputNotEmpty& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitOutputSafety;
  } catch (const TrainingFailure& e) {
    std::cerr << "training failure in phase '" << e.phase() << "' at epoch " << e.epoch() << ": " << e.what()
              << '\n';
    return kExitTraining;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitTraining;
  }
}

}  // namespace

int cmd_gen_data(const fs::path& config_file, const fs::path& out_dir, bool force) {
  return guarded_command([&] {
    const ExperimentConfig cfg = config::parse_experiment_config_file(config_file.string());
    if (cfg.data_path) throw config::ParseError("data.path", 0, "gen-data needs a synthetic spec, not a path");
    prepare_out_dir(out_dir, force);
    const auto spec = cfg.resolved_data_spec();
    const synthdata::Dataset data = trainloop::prepare_dataset(cfg);
    synthdata::save_dataset(out_dir, data, &spec);
    const std::string text = config::render_experiment_config(cfg);
    write_file(out_dir / "config.txt", text);
    write_file(out_dir / "manifest.json",
               manifest(text, spec.seed, {"config.txt", "manifest.json", "meta.json", "modality_<m>.bin",
                                          "targets.bin", "splits.bin"})
                       .dump(2) +
                   "\n");
    return static_cast<int>(kExitOk);
  });
}

int cmd_train(const fs::path& config_file, const fs::path& out_dir, bool force) {
  return guarded_command([&] {
    const ExperimentConfig cfg = config::parse_experiment_config_file(config_file.string());
    prepare_out_dir(out_dir, force);
    train_into(cfg, out_dir);
    return static_cast<int>(kExitOk);
  });
}

int cmd_compare(const fs::path& config_file, const std::vector<std::string>& variant_names,
                const std::vector<std::uint64_t>& seeds, const fs::path& out_dir, bool force, unsigned jobs) {
  return guarded_command([&] {
    const ExperimentConfig base = config::parse_experiment_config_file(config_file.string());
    if (variant_names.empty()) throw config::ParseError("--variants", 0, "at least one variant required");
    if (seeds.empty()) throw config::ParseError("--seeds", 0, "at least one seed required");
    std::vector<trainloop::Variant> variants;
    for (const auto& name : variant_names) {
      auto v = trainloop::parse_variant(name);
      if (!v) throw config::ParseError("--variants", 0, "unknown variant '" + name + "'");
      variants.push_back(*v);
    }
    prepare_out_dir(out_dir, force);

    struct Cell {
      std::size_t variant;
      std::uint64_t seed;
      fs::path dir;
      std::optional<EvalReport> test;
      std::string error;
    };
    std::vector<Cell> cells;
    for (std::size_t v = 0; v < variants.size(); ++v) {
      for (auto s : seeds) {
        cells.push_back({v, s, out_dir / variant_names[v] / ("seed_" + std::to_string(s)), std::nullopt, {}});
      }
    }

    std::atomic<std::size_t> next{0};
    auto worker = [&] {
      for (std::size_t i = next++; i < cells.size(); i = next++) {
        Cell& c = cells[i];
        try {
          ExperimentConfig cfg = base;
          cfg.variant = variants[c.variant];
          cfg.seed = c.seed;
          fs::create_directories(c.dir);
          c.test = train_into(cfg, c.dir).test;
        } catch (const TrainingFailure& e) {
          c.error = "phase " + e.phase() + ", epoch " + std::to_string(e.epoch()) + ": " + e.what();
        } catch (const std::exception& e) {
          c.error = e.what();
        }
      }
    };
    {
      std::vector<std::jthread> pool;
      const unsigned n = std::max(1u, std::min<unsigned>(jobs, static_cast<unsigned>(cells.size())));
      for (unsigned t = 0; t < n; ++t) pool.emplace_back(worker);
    }

    const Task task = base.data_path ? synthdata::load_dataset(*base.data_path).task : base.data.task;
    const auto names = metric_names(task);
    std::ostringstream os;
    os << "variant,n_runs";
    for (const auto& n : names) os << ',' << n << "_mean," << n << "_std";
    os << '\n';
    std::vector<std::string> failures;
    for (std::size_t v = 0; v < variants.size(); ++v) {
      std::vector<std::vector<double>> values(names.size());
      for (const auto& c : cells) {
        if (c.variant != v) continue;
        if (!c.test) {
          failures.push_back(variant_names[v] + " seed " + std::to_string(c.seed) + ": " + c.error);
          continue;
        }
        const auto mv = metric_values(*c.test);
        for (std::size_t k = 0; k < names.size(); ++k) values[k].push_back(mv[k]);
      }
      const std::size_t n = values.empty() ? 0 : values[0].size();
      os << variant_names[v] << ',' << n;
      for (const auto& xs : values) {
        if (xs.empty()) {
          os << ",,";
          continue;
        }
        double mean = 0.0;
        for (double x : xs) mean += x;
        mean /= static_cast<double>(xs.size());
        double ss = 0.0;
        for (double x : xs) ss += (x - mean) * (x - mean);
        const double sd = xs.size() > 1 ? std::sqrt(ss / static_cast<double>(xs.size() - 1)) : 0.0;
        os << ',' << g17(mean) << ',' << g17(sd);
      }
      os << '\n';
    }
    write_file(out_dir / "summary.csv", os.str());
    if (!failures.empty()) {
      std::ostringstream fl;
      for (const auto& f : failures) {
        std::cerr << "failed: " << f << '\n';
        fl << f << '\n';
      }
      write_file(out_dir / "failures.txt", fl.str());
      return static_cast<int>(kExitPartialCompare);
    }
    return static_cast<int>(kExitOk);
  });
}

int run_cli(int argc, char** argv) {
  CLI::App app{"btw: bi-level KL/MI modality weighting on a small mixture-of-experts model"};
  app.require_subcommand(1);
  std::string config_path;
  std::string out;
  bool force = false;
  std::vector<std::string> variants;
  std::vector<std::uint64_t> seeds;
  unsigned jobs = 1;

  auto* gen = app.add_subcommand("gen-data", "Generate a synthetic dataset");
  auto* train = app.add_subcommand("train", "Run one experiment");
  auto* compare = app.add_subcommand("compare", "Run variants x seeds and summarize test metrics");
  for (auto* sub : {gen, train, compare}) {
    sub->add_option("--config", config_path, "Config file (key=value)")->required();
    sub->add_option("--out", out, "Output directory")->required();
    sub->add_flag("--force", force, "Allow a non-empty output directory");
  }
  compare->add_option("--variants", variants, "Variants to run")->delimiter(',')->required();
  compare->add_option("--seeds", seeds, "Seeds to run")->delimiter(',')->required();
  compare->add_option("--jobs", jobs, "Concurrent cells")->check(CLI::PositiveNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitParse;
  }
  if (*gen) return cmd_gen_data(config_path, out, force);
  if (*train) return cmd_train(config_path, out, force);
  return cmd_compare(config_path, variants, seeds, out, force, jobs);
}

}  // namespace btw::cli
