// Copyright 2026 The btw Authors
// SPDX-License-Identifier: Apache-2.0

#include "btw/config.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

namespace btw::config {

namespace {

using trainloop::ExperimentConfig;

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

[[noreturn]] void fail(const Entry& e, const std::string& what) {
  throw ParseError(e.key, e.line, what);
}

template <typename T>
T parse_number(const Entry& e, std::string_view text) {
  T v{};
  const auto* first = text.data();
  const auto* last = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc{} || ptr != last || text.empty()) {
    fail(e, "expected a number, got '" + std::string(text) + "'");
  }
  return v;
}

template <typename T>
std::vector<T> parse_list(const Entry& e) {
  std::vector<T> out;
  std::string_view rest = e.value;
  while (true) {
    const auto comma = rest.find(',');
    out.push_back(parse_number<T>(e, trim(rest.substr(0, comma))));
    if (comma == std::string_view::npos) break;
    rest.remove_prefix(comma + 1);
  }
  return out;
}

bool parse_bool(const Entry& e) {
  if (e.value == "true" || e.value == "1") return true;
  if (e.value == "false" || e.value == "0") return false;
  fail(e, "expected true or false");
}

std::size_t parse_count(const Entry& e) {
  const auto v = parse_number<long long>(e, e.value);
  if (v < 0) fail(e, "must be >= 0");
  return static_cast<std::size_t>(v);
}

double parse_real(const Entry& e) {
  const double v = parse_number<double>(e, e.value);
  if (!std::isfinite(v)) fail(e, "must be finite");
  return v;
}

using Setter = std::function<void(ExperimentConfig&, const Entry&)>;

const std::map<std::string, Setter, std::less<>>& setters() {
  static const std::map<std::string, Setter, std::less<>> table = {
      {"variant",
       [](ExperimentConfig& c, const Entry& e) {
         auto v = trainloop::parse_variant(e.value);
         if (!v) fail(e, "unknown variant '" + e.value + "'");
         c.variant = *v;
       }},
      {"seed", [](ExperimentConfig& c, const Entry& e) { c.seed = parse_number<std::uint64_t>(e, e.value); }},
      {"epochs.unimodal", [](ExperimentConfig& c, const Entry& e) { c.epochs_unimodal = parse_count(e); }},
      {"epochs.warm", [](ExperimentConfig& c, const Entry& e) { c.epochs_warm = parse_count(e); }},
      {"epochs.weighted", [](ExperimentConfig& c, const Entry& e) { c.epochs_weighted = parse_count(e); }},
      {"train.lr", [](ExperimentConfig& c, const Entry& e) { c.lr = parse_real(e); }},
      {"train.batch_size", [](ExperimentConfig& c, const Entry& e) { c.batch_size = parse_count(e); }},
      {"alpha.init", [](ExperimentConfig& c, const Entry& e) { c.alpha.initial = parse_real(e); }},
      {"alpha.step", [](ExperimentConfig& c, const Entry& e) { c.alpha.step = parse_real(e); }},
      {"alpha.min", [](ExperimentConfig& c, const Entry& e) { c.alpha.min = parse_real(e); }},
      {"alpha.max", [](ExperimentConfig& c, const Entry& e) { c.alpha.max = parse_real(e); }},
      {"weights.bilevel_prenormalize",
       [](ExperimentConfig& c, const Entry& e) {
         c.bilevel_mode = parse_bool(e) ? weights::BilevelMode::kPreNormalized : weights::BilevelMode::kLiteral;
       }},
      {"mi.k", [](ExperimentConfig& c, const Entry& e) { c.mi_neighbors = parse_number<int>(e, e.value); }},
      {"moe.embed_dim", [](ExperimentConfig& c, const Entry& e) { c.moe.embed_dim = static_cast<Eigen::Index>(parse_count(e)); }},
      {"moe.n_experts", [](ExperimentConfig& c, const Entry& e) { c.moe.n_experts = static_cast<Eigen::Index>(parse_count(e)); }},
      {"moe.top_k", [](ExperimentConfig& c, const Entry& e) { c.moe.top_k = static_cast<Eigen::Index>(parse_count(e)); }},
      {"moe.expert_hidden", [](ExperimentConfig& c, const Entry& e) { c.moe.expert_hidden = static_cast<Eigen::Index>(parse_count(e)); }},
      {"moe.n_moe_layers", [](ExperimentConfig& c, const Entry& e) { c.moe.n_moe_layers = static_cast<Eigen::Index>(parse_count(e)); }},
      {"moe.activation",
       [](ExperimentConfig&, const Entry& e) {
         if (e.value != "gelu") fail(e, "only gelu is supported");
       }},
      {"data.n_instances", [](ExperimentConfig& c, const Entry& e) { c.data.n_instances = parse_count(e); }},
      {"data.modality_dims", [](ExperimentConfig& c, const Entry& e) { c.data.modality_dims = parse_list<Eigen::Index>(e); }},
      {"data.informativeness", [](ExperimentConfig& c, const Entry& e) { c.data.informativeness = parse_list<double>(e); }},
      {"data.noise_sigma", [](ExperimentConfig& c, const Entry& e) { c.data.noise_sigma = parse_real(e); }},
      {"data.task",
       [](ExperimentConfig& c, const Entry& e) {
         if (e.value == "regression") {
           c.data.task = Task::kRegression;
         } else if (e.value == "classification") {
           c.data.task = Task::kClassification;
         } else {
           fail(e, "expected regression or classification");
         }
       }},
      {"data.n_classes", [](ExperimentConfig& c, const Entry& e) { c.data.n_classes = parse_number<int>(e, e.value); }},
      {"data.nonlinearity",
       [](ExperimentConfig& c, const Entry& e) {
         auto n = synthdata::parse_nonlinearity(e.value);
         if (!n) fail(e, "expected linear or tanh-mixed");
         c.data.nonlinearity = *n;
       }},
      {"data.seed", [](ExperimentConfig& c, const Entry& e) { c.data_seed = parse_number<std::uint64_t>(e, e.value); }},
      {"data.split",
       [](ExperimentConfig& c, const Entry& e) {
         const auto f = parse_list<double>(e);
         if (f.size() != 3) fail(e, "expected three fractions");
         c.split_fractions = {f[0], f[1], f[2]};
       }},
      {"data.path", [](ExperimentConfig& c, const Entry& e) { c.data_path = e.value; }},
      {"data.projection_seeds",
       [](ExperimentConfig& c, const Entry& e) { c.data.projection_seeds = parse_list<std::uint64_t>(e); }},
      {"data.class_imbalance", [](ExperimentConfig& c, const Entry& e) { c.data.class_imbalance = parse_real(e); }},
      {"hooks.uniform_mi", [](ExperimentConfig& c, const Entry& e) { c.hooks.uniform_mi = parse_bool(e); }},
      {"hooks.unit_weights", [](ExperimentConfig& c, const Entry& e) { c.hooks.unit_weights = parse_bool(e); }},
  };
  return table;
}

std::string fmt_real(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

template <typename T, typename F>
std::string join(const std::vector<T>& xs, F&& f) {
  std::string out;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (i) out += ',';
    out += f(xs[i]);
  }
  return out;
}

}  // namespace

ParseError::ParseError(std::string field, std::size_t line, const std::string& what)
    : Error("line " + std::to_string(line) + (field.empty() ? "" : ", field '" + field + "'") + ": " + what),
      field_(std::move(field)),
      line_(line) {}

std::vector<Entry> parse_entries(std::istream& in) {
  std::vector<Entry> out;
  std::map<std::string, std::size_t, std::less<>> seen;
  std::string raw;
  std::size_t line = 0;
  while (std::getline(in, raw)) {
    ++line;
    const auto hash = raw.find('#');
    const std::string text = trim(std::string_view(raw).substr(0, hash));
    if (text.empty()) continue;
    const auto eq = text.find('=');
    if (eq == std::string::npos) throw ParseError(text, line, "expected key=value");
    Entry e{trim(std::string_view(text).substr(0, eq)), trim(std::string_view(text).substr(eq + 1)), line};
    if (e.key.empty()) throw ParseError("", line, "empty key");
    if (auto it = seen.find(e.key); it != seen.end()) {
      throw ParseError(e.key, line, "duplicate key (first set on line " + std::to_string(it->second) + ")");
    }
    seen.emplace(e.key, line);
    out.push_back(std::move(e));
  }
  return out;
}

ExperimentConfig parse_experiment_config(std::istream& in) {
  ExperimentConfig cfg;
  for (const Entry& e : parse_entries(in)) {
    const auto it = setters().find(e.key);
    if (it == setters().end()) fail(e, "unknown key");
    it->second(cfg, e);
  }
  try {
    cfg.validate();
    cfg.moe.input_dims = cfg.data.modality_dims;
    cfg.moe.task = cfg.data.task;
    cfg.moe.n_classes = cfg.data.task == Task::kClassification ? cfg.data.n_classes : 0;
    if (!cfg.data_path) cfg.moe.validate();
  } catch (const ParseError&) {
    throw;
  } catch (const Error& err) {
    throw ParseError("", 0, std::string("invalid configuration: ") + err.what());
  }
  return cfg;
}

ExperimentConfig parse_experiment_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("", 0, "cannot open config file '" + path + "'");
  return parse_experiment_config(in);
}

ExperimentConfig parse_experiment_config_text(std::string_view text) {
  std::istringstream in{std::string(text)};
  return parse_experiment_config(in);
}

std::string render_experiment_config(const ExperimentConfig& c) {
  std::ostringstream os;
  os << "variant=" << trainloop::to_string(c.variant) << '\n'
     << "seed=" << c.seed << '\n'
     << "epochs.unimodal=" << c.epochs_unimodal << '\n'
     << "epochs.warm=" << c.epochs_warm << '\n'
     << "epochs.weighted=" << c.epochs_weighted << '\n'
     << "train.lr=" << fmt_real(c.lr) << '\n'
     << "train.batch_size=" << c.batch_size << '\n'
     << "alpha.init=" << fmt_real(c.alpha.initial) << '\n'
     << "alpha.step=" << fmt_real(c.alpha.step) << '\n'
     << "alpha.min=" << fmt_real(c.alpha.min) << '\n'
     << "alpha.max=" << fmt_real(c.alpha.max) << '\n'
     << "weights.bilevel_prenormalize="
     << (c.bilevel_mode == weights::BilevelMode::kPreNormalized ? "true" : "false") << '\n'
     << "mi.k=" << c.mi_neighbors << '\n'
     << "moe.embed_dim=" << c.moe.embed_dim << '\n'
     << "moe.n_experts=" << c.moe.n_experts << '\n'
     << "moe.top_k=" << c.moe.top_k << '\n'
     << "moe.expert_hidden=" << c.moe.expert_hidden << '\n'
     << "moe.n_moe_layers=" << c.moe.n_moe_layers << '\n'
     << "moe.activation=gelu\n";
  if (c.data_path) {
    os << "data.path=" << c.data_path->string() << '\n';
  } else {
    os << "data.n_instances=" << c.data.n_instances << '\n'
       << "data.modality_dims=" << join(c.data.modality_dims, [](auto v) { return std::to_string(v); }) << '\n'
       << "data.informativeness=" << join(c.data.informativeness, fmt_real) << '\n'
       << "data.noise_sigma=" << fmt_real(c.data.noise_sigma) << '\n'
       << "data.task=" << (c.data.task == Task::kRegression ? "regression" : "classification") << '\n'
       << "data.n_classes=" << c.data.n_classes << '\n'
       << "data.nonlinearity=" << synthdata::to_string(c.data.nonlinearity) << '\n'
       << "data.class_imbalance=" << fmt_real(c.data.class_imbalance) << '\n';
    if (!c.data.projection_seeds.empty()) {
      os << "data.projection_seeds=" << join(c.data.projection_seeds, [](auto v) { return std::to_string(v); }) << '\n';
    }
  }
  if (c.data_seed) os << "data.seed=" << *c.data_seed << '\n';
  os << "data.split=" << fmt_real(c.split_fractions[0]) << ',' << fmt_real(c.split_fractions[1]) << ','
     << fmt_real(c.split_fractions[2]) << '\n'
     << "hooks.uniform_mi=" << (c.hooks.uniform_mi ? "true" : "false") << '\n'
     << "hooks.unit_weights=" << (c.hooks.unit_weights ? "true" : "false") << '\n';
  return os.str();
}

}  // namespace btw::config
