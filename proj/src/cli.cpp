// Copyright 2026 The adasketch Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "adasketch/cli.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <ostream>
#include <sstream>

#include "adasketch/metrics.hpp"

namespace adasketch {

const char kFmeCsvHeader[] =
    "run_id,seed,protocol,n,d,epsilon,delta,beta,rounds_used,halt_index,"
    "norm_or_error_estimate,first_scalars,second_scalars,compression_rate,mse";
const char kFedoptCsvHeader[] =
    "run_id,seed,round,protocol,noise_multiplier,c0,C_j,first_scalars,"
    "second_scalars,norm_or_error_estimate,train_metric,val_metric,"
    "cum_compression_rate";
const char kSweepCsvHeader[] =
    "group_id,seed,protocol,noise_multiplier,c0,fixed_rate,rounds,"
    "final_train_metric,final_val_metric,compression_rate,genie_selected";

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

namespace {

const char* protocol_name(Protocol p) {
  switch (p) {
    case Protocol::kAdaptNormFme: return "adapt-norm";
    case Protocol::kAdaptTailFme: return "adapt-tail-unbiased";
    case Protocol::kAdaptTailTopkFme: return "adapt-tail-topk";
  }
  return "unknown";
}

Protocol parse_protocol(const std::string& name,
                        std::vector<std::string>* issues) {
  if (name == "adapt-norm") return Protocol::kAdaptNormFme;
  if (name == "adapt-tail-unbiased" || name == "adapt-tail") {
    return Protocol::kAdaptTailFme;
  }
  if (name == "adapt-tail-topk") return Protocol::kAdaptTailTopkFme;
  issues->push_back("fme.protocol");
  return Protocol::kAdaptNormFme;
}

MeanEstimator parse_estimator(const std::string& name,
                              std::vector<std::string>* issues) {
  if (name == "exact") return MeanEstimator::kExact;
  if (name == "dp-uncompressed") return MeanEstimator::kDpUncompressed;
  if (name == "fixed-sketch") return MeanEstimator::kFixedSketch;
  if (name == "adapt-norm-fl" || name == "adapt-norm") {
    return MeanEstimator::kAdaptNorm;
  }
  if (name == "two-stage-fl" || name == "two-stage") {
    return MeanEstimator::kTwoStage;
  }
  if (name == "adapt-tail-fl" || name == "adapt-tail") {
    return MeanEstimator::kAdaptTail;
  }
  issues->push_back("fedopt.estimator");
  return MeanEstimator::kExact;
}

SecAggMode parse_secagg(const std::string& name, const std::string& where,
                        std::vector<std::string>* issues) {
  if (name == "ideal") return SecAggMode::kIdeal;
  if (name == "masked") return SecAggMode::kMasked;
  issues->push_back(where);
  return SecAggMode::kIdeal;
}

const std::map<std::string, std::vector<std::string>>& schema() {
  static const std::map<std::string, std::vector<std::string>> kSchema = {
      {"experiment", {"mode", "seeds", "output"}},
      {"fme",
       {"protocol", "n", "d", "data_bound", "epsilon", "delta", "beta",
        "gamma_sparse", "p_mult", "gamma_mult", "secagg", "modulus_bits",
        "scale_bits", "debug_checks"}},
      {"instance",
       {"kind", "mean_norm", "sparsity", "pool", "spread", "data_seed"}},
      {"fedopt",
       {"estimator", "rounds", "clients_per_round", "noise_multiplier",
        "clip_bound", "c0", "warmup_rounds", "eta", "tail_rule", "server_lr",
        "server_momentum", "client_lr", "local_steps", "initial_cols",
        "fixed_rate", "l1_zero_threshold", "secagg", "modulus_bits",
        "scale_bits"}},
      {"task",
       {"kind", "clients", "samples", "dim", "sparsity", "target_norm",
        "label_noise", "data_seed"}},
      {"sweep", {"c0", "noise_multiplier", "genie", "delta", "rates"}},
  };
  return kSchema;
}

bool parse_bool(const ConfigFile& file, const std::string& section,
                const std::string& key, bool fallback,
                std::vector<std::string>* issues) {
  if (!file.has(section, key)) return fallback;
  const std::string v = file.get_string(section, key, "");
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  issues->push_back(section + "." + key);
  return fallback;
}

}  // namespace

ExperimentConfig parse_experiment(const ConfigFile& file) {
  std::vector<std::string> issues = file.unknown_keys(schema());
  ExperimentConfig cfg;

  const std::string mode = file.get_string("experiment", "mode", "");
  if (mode == "fme") {
    cfg.mode = ExperimentConfig::Mode::kFme;
  } else if (mode == "fedopt") {
    cfg.mode = ExperimentConfig::Mode::kFedopt;
  } else if (mode == "sweep") {
    cfg.mode = ExperimentConfig::Mode::kSweep;
  } else {
    issues.push_back("experiment.mode");
  }
  if (file.has("experiment", "seeds")) {
    cfg.seeds = file.get_u64_list("experiment", "seeds");
    if (cfg.seeds.empty()) issues.push_back("experiment.seeds");
  }
  cfg.output_path = file.get_string("experiment", "output", "");

  if (cfg.mode == ExperimentConfig::Mode::kFme) {
    if (!file.sections().count("fme")) {
      issues.push_back("[fme] (required for mode = fme)");
    }
    cfg.fme.protocol =
        parse_protocol(file.get_string("fme", "protocol", "adapt-norm"),
                       &issues);
    cfg.fme.n = static_cast<int>(file.get_long("fme", "n", 10));
    cfg.fme.dim = static_cast<int>(file.get_long("fme", "d", 16));
    cfg.fme.data_bound = file.get_double("fme", "data_bound", 1.0);
    cfg.fme.budget.epsilon = file.get_double("fme", "epsilon", 1.0);
    cfg.fme.budget.delta = file.get_double("fme", "delta", 1e-6);
    cfg.fme.beta = file.get_double("fme", "beta", 0.05);
    if (file.has("fme", "gamma_sparse")) {
      cfg.fme.gamma_sparse = file.get_double("fme", "gamma_sparse", 0.0);
    }
    cfg.fme.p_mult = file.get_double("fme", "p_mult", 1.0);
    cfg.fme.gamma_mult = file.get_double("fme", "gamma_mult", 1.0);
    cfg.fme.secagg_mode = parse_secagg(
        file.get_string("fme", "secagg", "ideal"), "fme.secagg", &issues);
    cfg.fme.field.modulus_bits =
        static_cast<int>(file.get_long("fme", "modulus_bits", 64));
    cfg.fme.field.scale_bits =
        static_cast<int>(file.get_long("fme", "scale_bits", 20));
    cfg.fme.debug_checks =
        parse_bool(file, "fme", "debug_checks", false, &issues);

    cfg.instance.kind = file.get_string("instance", "kind", "constant");
    if (cfg.instance.kind != "constant" && cfg.instance.kind != "perturbed") {
      issues.push_back("instance.kind");
    }
    cfg.instance.mean_norm = file.get_double("instance", "mean_norm", 0.5);
    cfg.instance.sparsity =
        static_cast<int>(file.get_long("instance", "sparsity", 0));
    cfg.instance.pool = static_cast<int>(file.get_long("instance", "pool", 0));
    cfg.instance.spread = file.get_double("instance", "spread", 0.0);
    cfg.instance.data_seed = file.get_u64("instance", "data_seed", 1);
  }

  if (cfg.mode == ExperimentConfig::Mode::kFedopt ||
      cfg.mode == ExperimentConfig::Mode::kSweep) {
    if (!file.sections().count("fedopt")) {
      issues.push_back("[fedopt] (required for mode = " + mode + ")");
    }
    cfg.fl.estimator = parse_estimator(
        file.get_string("fedopt", "estimator", "adapt-norm-fl"), &issues);
    cfg.fl.rounds = static_cast<int>(file.get_long("fedopt", "rounds", 300));
    cfg.fl.clients_per_round =
        static_cast<int>(file.get_long("fedopt", "clients_per_round", 50));
    cfg.fl.noise_multiplier =
        file.get_double("fedopt", "noise_multiplier", 0.2);
    cfg.fl.clip_bound = file.get_double("fedopt", "clip_bound", 1.0);
    cfg.fl.c0 = file.get_double("fedopt", "c0", 0.1);
    cfg.fl.warmup_rounds =
        static_cast<int>(file.get_long("fedopt", "warmup_rounds", 75));
    cfg.fl.eta = file.get_double("fedopt", "eta", 0.2);
    const std::string rule =
        file.get_string("fedopt", "tail_rule", "mult-sign");
    if (rule == "mult-sign") {
      cfg.fl.tail_rule = TailUpdateRule::kMultSign;
    } else if (rule == "mult-error") {
      cfg.fl.tail_rule = TailUpdateRule::kMultError;
    } else if (rule == "linear") {
      cfg.fl.tail_rule = TailUpdateRule::kLinear;
    } else {
      issues.push_back("fedopt.tail_rule");
    }
    cfg.fl.server_lr = file.get_double("fedopt", "server_lr", 1.0);
    cfg.fl.server_momentum =
        file.get_double("fedopt", "server_momentum", 0.9);
    cfg.fl.client_lr = file.get_double("fedopt", "client_lr", 0.1);
    cfg.fl.local_steps =
        static_cast<int>(file.get_long("fedopt", "local_steps", 5));
    cfg.fl.initial_cols =
        static_cast<int>(file.get_long("fedopt", "initial_cols", 2));
    cfg.fl.fixed_rate = file.get_double("fedopt", "fixed_rate", 8.0);
    cfg.fl.l1_zero_threshold =
        file.get_double("fedopt", "l1_zero_threshold", 0.0);
    cfg.fl.secagg_mode =
        parse_secagg(file.get_string("fedopt", "secagg", "ideal"),
                     "fedopt.secagg", &issues);
    cfg.fl.field.modulus_bits =
        static_cast<int>(file.get_long("fedopt", "modulus_bits", 64));
    cfg.fl.field.scale_bits =
        static_cast<int>(file.get_long("fedopt", "scale_bits", 20));

    if (!file.sections().count("task")) {
      issues.push_back("[task] (required for mode = " + mode + ")");
    }
    cfg.task.kind = file.get_string("task", "kind", "sparse-logistic");
    if (cfg.task.kind != "sparse-logistic" && cfg.task.kind != "linear") {
      issues.push_back("task.kind");
    }
    cfg.task.clients = static_cast<int>(file.get_long("task", "clients", 300));
    cfg.task.samples = static_cast<int>(file.get_long("task", "samples", 40));
    cfg.task.dim = static_cast<int>(file.get_long("task", "dim", 200));
    cfg.task.sparsity =
        static_cast<int>(file.get_long("task", "sparsity", 10));
    cfg.task.target_norm = file.get_double("task", "target_norm", 3.0);
    cfg.task.label_noise = file.get_double("task", "label_noise", 0.25);
    cfg.task.data_seed = file.get_u64("task", "data_seed", 1);
  }

  if (cfg.mode == ExperimentConfig::Mode::kSweep) {
    cfg.sweep_c0 = file.get_double_list("sweep", "c0");
    cfg.sweep_noise = file.get_double_list("sweep", "noise_multiplier");
    cfg.genie = parse_bool(file, "sweep", "genie", false, &issues);
    cfg.genie_delta = file.get_double("sweep", "delta", 0.01);
    cfg.genie_rates = file.get_double_list("sweep", "rates");
    if (cfg.genie && cfg.genie_rates.empty()) {
      for (int i = 0; i <= 13; ++i) {
        cfg.genie_rates.push_back(static_cast<double>(1 << i));
      }
    }
    if (cfg.genie && !cfg.sweep_c0.empty()) {
      issues.push_back("sweep.c0 (not valid with genie = true)");
    }
  }

  if (!issues.empty()) {
    std::string what = "config: invalid or missing keys:";
    for (const std::string& k : issues) what += " " + k;
    throw ConfigError(what, issues);
  }
  return cfg;
}

std::vector<std::vector<double>> build_fme_pool(
    const FmeInstanceSpec& spec, const FmeConfig& cfg,
    std::vector<double>* pool_mean) {
  std::size_t pool_size = spec.pool;
  if (pool_size == 0) {
    if (cfg.protocol == Protocol::kAdaptNormFme) {
      pool_size = 2 * static_cast<std::size_t>(cfg.n);
    } else {
      int k = 0;
      while (cfg.dim >> (k + 1)) ++k;
      pool_size = static_cast<std::size_t>(cfg.n) * std::max(k, 1);
    }
  }
  Stream dir_stream(spec.data_seed, 0, StreamTag::kData);
  std::vector<double> mean(cfg.dim, 0.0);
  if (spec.sparsity > 0) {
    const int k = std::min(spec.sparsity, cfg.dim);
    const double mag = spec.mean_norm / std::sqrt(static_cast<double>(k));
    int placed = 0;
    while (placed < k) {
      const int idx = static_cast<int>(dir_stream.below(cfg.dim));
      if (mean[idx] != 0.0) continue;
      mean[idx] = dir_stream.uniform() < 0.5 ? mag : -mag;
      ++placed;
    }
  } else {
    for (double& v : mean) v = dir_stream.gaussian();
    const double norm = l2_norm(mean);
    for (double& v : mean) v *= spec.mean_norm / norm;
  }

  std::vector<std::vector<double>> pool(pool_size);
  for (std::size_t c = 0; c < pool_size; ++c) {
    pool[c] = mean;
    if (spec.kind == "perturbed" && spec.spread > 0.0) {
      Stream s(spec.data_seed, c + 1, StreamTag::kData);
      for (double& v : pool[c]) {
        v += spec.spread * cfg.data_bound * s.gaussian() /
             std::sqrt(static_cast<double>(cfg.dim));
      }
    }
    clip_in_place(pool[c], cfg.data_bound);
  }
  if (pool_mean) {
    pool_mean->assign(cfg.dim, 0.0);
    for (const auto& z : pool) {
      for (int j = 0; j < cfg.dim; ++j) (*pool_mean)[j] += z[j];
    }
    for (double& v : *pool_mean) v /= static_cast<double>(pool_size);
  }
  return pool;
}

Task build_task(const TaskSpec& spec) {
  if (spec.kind == "linear") {
    return Task::synthetic_linear(spec.clients, spec.samples, spec.dim,
                                  spec.label_noise, spec.data_seed);
  }
  return Task::synthetic_sparse_logistic(spec.clients, spec.samples, spec.dim,
                                         spec.sparsity, spec.target_norm,
                                         spec.data_seed);
}

namespace {

std::string fme_row(const std::string& run_id, std::uint64_t seed,
                    const ExperimentConfig& cfg, const FmeOutcome& out,
                    double mse_value) {
  long first = 0;
  long second = 0;
  for (const auto& [a, b] : out.scalars_per_round) {
    first += a;
    second += b;
  }
  const double rate = static_cast<double>(cfg.fme.dim) * out.rounds_used /
                      static_cast<double>(first + second);
  std::ostringstream row;
  row << run_id << ',' << seed << ',' << protocol_name(cfg.fme.protocol) << ','
      << cfg.fme.n << ',' << cfg.fme.dim << ','
      << format_double(cfg.fme.budget.epsilon) << ','
      << format_double(cfg.fme.budget.delta) << ','
      << format_double(cfg.fme.beta) << ',' << out.rounds_used << ','
      << (out.halt_index ? std::to_string(*out.halt_index) : std::string())
      << ','
      << (out.norm_estimate ? format_double(*out.norm_estimate)
                            : std::string("nan"))
      << ',' << first << ',' << second << ',' << format_double(rate) << ','
      << format_double(mse_value) << '\n';
  return row.str();
}

std::string fedopt_rows(const std::string& run_id, std::uint64_t seed,
                        const FlConfig& fl, const FlResult& result, int dim) {
  std::ostringstream rows;
  long cumulative = 0;
  for (const RoundLog& log : result.logs) {
    cumulative += log.first_scalars + log.second_scalars;
    const double cum_rate =
        static_cast<double>(dim) * log.round / static_cast<double>(cumulative);
    rows << run_id << ',' << seed << ',' << log.round << ','
         << estimator_name(fl.estimator) << ','
         << format_double(fl.noise_multiplier) << ',' << format_double(fl.c0)
         << ',' << log.cols << ',' << log.first_scalars << ','
         << log.second_scalars << ',' << format_double(log.stat_estimate)
         << ',' << format_double(log.train_metric) << ','
         << format_double(log.val_metric) << ',' << format_double(cum_rate)
         << '\n';
  }
  return rows.str();
}

struct SweepOutcome {
  std::string row;
  double final_val = 0.0;
  double measured_rate = 1.0;
  bool diverged = false;
};

SweepOutcome sweep_run(const std::string& group_id, const Task& task,
                       FlConfig fl, std::uint64_t seed) {
  const FlResult result = fedavg_run(task, fl, seed);
  SweepOutcome out;
  out.diverged = result.diverged;
  CommLedger ledger;
  ledger.dim = task.dim;
  for (const RoundLog& log : result.logs) {
    ledger.add_round(log.first_scalars, log.second_scalars);
  }
  const double rate =
      result.logs.empty() ? 1.0 : compression_rate(ledger);
  const double final_train =
      result.logs.empty() ? 0.0 : result.logs.back().train_metric;
  const double final_val =
      result.logs.empty() ? 0.0 : result.logs.back().val_metric;
  out.final_val = final_val;
  out.measured_rate = rate;
  std::ostringstream row;
  row << group_id << ',' << seed << ',' << estimator_name(fl.estimator) << ','
      << format_double(fl.noise_multiplier) << ',' << format_double(fl.c0)
      << ',' << format_double(fl.fixed_rate) << ',' << result.logs.size()
      << ',' << format_double(final_train) << ',' << format_double(final_val)
      << ',' << format_double(rate) << ",0\n";
  out.row = row.str();
  return out;
}

}  // namespace

GenieSelection genie_select(std::span<const double> rates,
                            std::span<const double> accuracies,
                            double baseline, double delta) {
  if (rates.size() != accuracies.size() || rates.empty()) {
    throw ConfigError("genie: rate and accuracy tables must align");
  }
  if (!std::isfinite(baseline)) {
    throw ConfigError("genie: baseline missing");
  }
  for (std::size_t i = 1; i < rates.size(); ++i) {
    if (rates[i] <= rates[i - 1]) {
      throw ConfigError("genie: rates must be strictly increasing");
    }
  }
  if (std::isinf(delta)) return {rates.back(), true};
  const double threshold = baseline * (1.0 - delta);
  if (accuracies.back() >= threshold) return {rates.back(), true};
  // Walk down to the last grid point still above the threshold, then
  // interpolate in log2(rate) between it and its right neighbor.
  for (std::size_t i = rates.size() - 1; i-- > 0;) {
    if (accuracies[i] >= threshold) {
      const double x0 = std::log2(rates[i]);
      const double x1 = std::log2(rates[i + 1]);
      const double a0 = accuracies[i];
      const double a1 = accuracies[i + 1];
      const double t = (a0 - threshold) / (a0 - a1);
      return {std::exp2(x0 + t * (x1 - x0)), true};
    }
  }
  return {rates.front(), false};
}

void run_fme_mode(const ExperimentConfig& cfg, std::ostream& out) {
  std::vector<double> pool_mean;
  const std::vector<std::vector<double>> pool =
      build_fme_pool(cfg.instance, cfg.fme, &pool_mean);
  out << kFmeCsvHeader << '\n';
  const int num_runs = static_cast<int>(cfg.seeds.size());
  std::vector<std::string> rows(num_runs);
#pragma omp parallel for schedule(dynamic, 1)
  for (int i = 0; i < num_runs; ++i) {
    const std::uint64_t seed = cfg.seeds[i];
    const FmeOutcome outcome = run_fme(pool, cfg.fme, seed);
    const std::string run_id =
        std::string("fme-") + protocol_name(cfg.fme.protocol) + "-s" +
        std::to_string(seed);
    rows[i] = fme_row(run_id, seed, cfg, outcome,
                      mse(outcome.estimate, pool_mean));
  }
  for (const std::string& row : rows) out << row;
  out.flush();
}

void run_fedopt_mode(const ExperimentConfig& cfg, std::ostream& out) {
  const Task task = build_task(cfg.task);
  out << kFedoptCsvHeader << '\n';
  const int num_runs = static_cast<int>(cfg.seeds.size());
  std::vector<std::string> rows(num_runs);
  std::vector<std::string> failures(num_runs);
#pragma omp parallel for schedule(dynamic, 1)
  for (int i = 0; i < num_runs; ++i) {
    const std::uint64_t seed = cfg.seeds[i];
    const FlResult result = fedavg_run(task, cfg.fl, seed);
    const std::string run_id =
        std::string("fedopt-") + estimator_name(cfg.fl.estimator) + "-s" +
        std::to_string(seed);
    rows[i] = fedopt_rows(run_id, seed, cfg.fl, result, task.dim);
    if (result.diverged) failures[i] = run_id + ": " + result.diagnostic;
  }
  for (const std::string& row : rows) out << row;
  out.flush();
  for (const std::string& failure : failures) {
    if (!failure.empty()) {
      throw std::runtime_error("fedopt: " + failure);
    }
  }
}

void run_sweep_mode(const ExperimentConfig& cfg, std::ostream& out) {
  const Task task = build_task(cfg.task);
  out << kSweepCsvHeader << '\n';

  struct RunSpec {
    std::string group_id;
    FlConfig fl;
    std::uint64_t seed;
  };
  std::vector<RunSpec> runs;
  const std::vector<double> noises =
      cfg.sweep_noise.empty() ? std::vector<double>{cfg.fl.noise_multiplier}
                              : cfg.sweep_noise;
  if (cfg.genie) {
    for (const double z : noises) {
      FlConfig base = cfg.fl;
      base.noise_multiplier = z;
      base.estimator = MeanEstimator::kDpUncompressed;
      for (const std::uint64_t seed : cfg.seeds) {
        runs.push_back({"baseline-z" + format_double(z), base, seed});
      }
      for (const double rate : cfg.genie_rates) {
        FlConfig fixed = cfg.fl;
        fixed.noise_multiplier = z;
        fixed.estimator = MeanEstimator::kFixedSketch;
        fixed.fixed_rate = rate;
        for (const std::uint64_t seed : cfg.seeds) {
          runs.push_back(
              {"genie-z" + format_double(z) + "-r" + format_double(rate),
               fixed, seed});
        }
      }
    }
  } else {
    const std::vector<double> c0s =
        cfg.sweep_c0.empty() ? std::vector<double>{cfg.fl.c0} : cfg.sweep_c0;
    for (const double c0 : c0s) {
      for (const double z : noises) {
        FlConfig fl = cfg.fl;
        fl.c0 = c0;
        fl.noise_multiplier = z;
        for (const std::uint64_t seed : cfg.seeds) {
          runs.push_back({"sweep-z" + format_double(z) + "-c0" +
                              format_double(c0),
                          fl, seed});
        }
      }
    }
  }

  const int num_runs = static_cast<int>(runs.size());
  std::vector<SweepOutcome> results(num_runs);
#pragma omp parallel for schedule(dynamic, 1)
  for (int i = 0; i < num_runs; ++i) {
    results[i] = sweep_run(runs[i].group_id, task, runs[i].fl, runs[i].seed);
  }
  for (const SweepOutcome& r : results) out << r.row;

  if (cfg.genie) {
    // Aggregate per noise multiplier, then select the highest feasible rate.
    for (const double z : noises) {
      double baseline = std::numeric_limits<double>::quiet_NaN();
      std::vector<double> rate_acc(cfg.genie_rates.size(), 0.0);
      std::vector<int> rate_count(cfg.genie_rates.size(), 0);
      double baseline_acc = 0.0;
      int baseline_count = 0;
      for (int i = 0; i < num_runs; ++i) {
        if (runs[i].fl.noise_multiplier != z) continue;
        if (runs[i].fl.estimator == MeanEstimator::kDpUncompressed) {
          baseline_acc += results[i].final_val;
          ++baseline_count;
        } else {
          for (std::size_t r = 0; r < cfg.genie_rates.size(); ++r) {
            if (runs[i].fl.fixed_rate == cfg.genie_rates[r]) {
              rate_acc[r] += results[i].final_val;
              ++rate_count[r];
            }
          }
        }
      }
      if (baseline_count > 0) baseline = baseline_acc / baseline_count;
      std::vector<double> accs(cfg.genie_rates.size());
      for (std::size_t r = 0; r < accs.size(); ++r) {
        if (rate_count[r] == 0) throw ConfigError("genie: rate run missing");
        accs[r] = rate_acc[r] / rate_count[r];
      }
      const GenieSelection sel =
          genie_select(cfg.genie_rates, accs, baseline, cfg.genie_delta);
      out << "genie-z" << format_double(z) << ",0,genie," << format_double(z)
          << ',' << format_double(cfg.fl.c0) << ','
          << format_double(sel.rate) << ",0," << format_double(baseline)
          << ',' << format_double(baseline * (1.0 - cfg.genie_delta)) << ','
          << format_double(sel.rate) << ',' << (sel.feasible ? 1 : 0) << '\n';
    }
  }
  out.flush();
}

void run_experiment(const ExperimentConfig& cfg, std::ostream& out) {
  switch (cfg.mode) {
    case ExperimentConfig::Mode::kFme:
      run_fme_mode(cfg, out);
      return;
    case ExperimentConfig::Mode::kFedopt:
      run_fedopt_mode(cfg, out);
      return;
    case ExperimentConfig::Mode::kSweep:
      run_sweep_mode(cfg, out);
      return;
  }
}

int run_selftest(std::ostream& out) {
  int failures = 0;
  auto check = [&](const char* name, bool ok) {
    out << (ok ? "ok: " : "FAIL: ") << name << '\n';
    if (!ok) ++failures;
  };

  {
    SketchParams params{2, 3, 8, 64};
    SketchOperator op(params, 7);
    Stream s(11);
    std::vector<double> z(64), w(64), combo(64);
    for (int i = 0; i < 64; ++i) {
      z[i] = s.gaussian();
      w[i] = s.gaussian();
      combo[i] = 2.5 * z[i] - 0.75 * w[i];
    }
    const auto sz = op.sketch(z);
    const auto sw = op.sketch(w);
    const auto sc = op.sketch(combo);
    double err = 0.0;
    double norm = 0.0;
    for (std::size_t i = 0; i < sc.data.size(); ++i) {
      const double expect = 2.5 * sz.data[i] - 0.75 * sw.data[i];
      err += std::abs(sc.data[i] - expect);
      norm += std::abs(expect);
    }
    check("sketch linearity", err <= 1e-12 * std::max(norm, 1.0));
  }
  {
    const std::vector<double> v{3.0, -5.0, 1.0};
    const auto t = top_k(v, 2);
    const std::vector<double> c{3.0, 4.0};
    const auto clipped = clip(c, 1.0);
    check("top-k and clip",
          t == std::vector<double>({3.0, -5.0, 0.0}) &&
              std::abs(clipped[0] - 0.6) < 1e-15 &&
              std::abs(clipped[1] - 0.8) < 1e-15);
  }
  {
    CommLedger ledger;
    ledger.dim = 100;
    ledger.add_round(20, 5);
    ledger.add_round(30, 5);
    check("compression rate",
          std::abs(compression_rate(ledger) - 200.0 / 60.0) < 1e-9);
  }
  {
    FieldConfig field;
    const auto masks = pairwise_masks(4, 1, 9, 16, field);
    bool zero = true;
    for (std::size_t i = 0; i < 16; ++i) {
      std::uint64_t acc = 0;
      for (const auto& m : masks) acc += m[i];
      zero = zero && acc == 0;
    }
    check("mask cancellation", zero);
  }
  {
    const NoiseConfig noise =
        calibrate({1.0, 1e-5}, 2.0, 100, Protocol::kAdaptNormFme);
    const double expect = 256.0 * 4.0 * std::log(1e5);
    check("noise calibration",
          std::abs(noise.sigma * noise.sigma - expect) < 1e-9 * expect &&
              std::abs(noise.sigma_tilde - 8.0 / 100.0) < 1e-15);
  }
  {
    AboveThreshold at =
        AboveThreshold::with_noise_scale(1.0, 0.0, Stream(3));
    const bool no_halt = !at.query(2.0);
    const bool halt = at.query(0.5);
    check("above-threshold zero-noise",
          no_halt && halt && at.halt_index() == 2);
  }
  {
    FmeConfig cfg;
    cfg.n = 5;
    cfg.dim = 8;
    cfg.budget = PrivacyBudget::unlimited();
    std::vector<std::vector<double>> pool(10, std::vector<double>(8, 0.1));
    const FmeOutcome a = adapt_norm_fme(pool, cfg, 42);
    const FmeOutcome b = adapt_norm_fme(pool, cfg, 42);
    check("fme determinism", a.estimate == b.estimate &&
                                 a.scalars_per_round == b.scalars_per_round);
  }
  return failures == 0 ? 0 : 3;
}

}  // namespace adasketch
