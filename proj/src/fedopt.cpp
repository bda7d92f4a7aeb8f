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

#include "adasketch/fedopt.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "adasketch/fme.hpp"
#include "adasketch/sketch.hpp"

namespace adasketch {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::vector<double> gaussian_features(int samples, int dim, Stream& s) {
  std::vector<double> x(static_cast<std::size_t>(samples) * dim);
  for (double& v : x) v = s.gaussian();
  return x;
}

double dot_row(const ClientData& data, int row, std::span<const double> w) {
  const double* x = data.features.data() + static_cast<std::size_t>(row) * w.size();
  double acc = 0.0;
  for (std::size_t j = 0; j < w.size(); ++j) acc += x[j] * w[j];
  return acc;
}

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

}  // namespace

Task Task::synthetic_linear(int num_clients, int samples_per_client, int dim,
                            double label_noise, std::uint64_t seed) {
  Task task;
  task.kind = TaskKind::kLinearRegression;
  task.dim = dim;
  Stream target_stream(seed, 0, StreamTag::kData);
  std::vector<double> target(dim);
  for (double& v : target) v = target_stream.gaussian();
  const double norm = l2_norm(target);
  for (double& v : target) v /= norm;

  auto make = [&](int id, int samples) {
    ClientData data;
    data.samples = samples;
    Stream s(seed, static_cast<std::uint64_t>(id) + 1, StreamTag::kData);
    data.features = gaussian_features(samples, dim, s);
    data.labels.resize(samples);
    for (int i = 0; i < samples; ++i) {
      double z = 0.0;
      for (int j = 0; j < dim; ++j) {
        z += data.features[static_cast<std::size_t>(i) * dim + j] * target[j];
      }
      data.labels[i] = z + label_noise * s.gaussian();
    }
    return data;
  };
  task.clients.reserve(num_clients);
  for (int c = 0; c < num_clients; ++c) {
    task.clients.push_back(make(c, samples_per_client));
  }
  task.validation = make(num_clients, 4000);
  return task;
}

Task Task::synthetic_sparse_logistic(int num_clients, int samples_per_client,
                                     int dim, int sparsity, double target_norm,
                                     std::uint64_t seed) {
  Task task;
  task.kind = TaskKind::kLogisticRegression;
  task.dim = dim;
  Stream target_stream(seed, 0, StreamTag::kData);
  std::vector<double> target(dim, 0.0);
  const double mag = target_norm / std::sqrt(static_cast<double>(sparsity));
  int placed = 0;
  while (placed < sparsity) {
    const int idx = static_cast<int>(target_stream.below(dim));
    if (target[idx] != 0.0) continue;
    target[idx] = target_stream.uniform() < 0.5 ? mag : -mag;
    ++placed;
  }

  auto make = [&](int id, int samples) {
    ClientData data;
    data.samples = samples;
    Stream s(seed, static_cast<std::uint64_t>(id) + 1, StreamTag::kData);
    data.features = gaussian_features(samples, dim, s);
    data.labels.resize(samples);
    for (int i = 0; i < samples; ++i) {
      double z = 0.0;
      for (int j = 0; j < dim; ++j) {
        z += data.features[static_cast<std::size_t>(i) * dim + j] * target[j];
      }
      data.labels[i] = s.uniform() < sigmoid(z) ? 1.0 : 0.0;
    }
    return data;
  };
  task.clients.reserve(num_clients);
  for (int c = 0; c < num_clients; ++c) {
    task.clients.push_back(make(c, samples_per_client));
  }
  task.validation = make(num_clients, 4000);
  return task;
}

double loss(const Task& task, const ClientData& data,
            std::span<const double> model) {
  double acc = 0.0;
  for (int i = 0; i < data.samples; ++i) {
    const double z = dot_row(data, i, model);
    if (task.kind == TaskKind::kLinearRegression) {
      const double r = z - data.labels[i];
      acc += 0.5 * r * r;
    } else {
      // log(1 + exp(-s)) with s = (2y-1) z, stable form.
      const double s = (data.labels[i] > 0.5 ? 1.0 : -1.0) * z;
      acc += s > 0 ? std::log1p(std::exp(-s)) : -s + std::log1p(std::exp(s));
    }
  }
  return acc / data.samples;
}

double evaluate(const Task& task, const ClientData& data,
                std::span<const double> model) {
  if (task.kind == TaskKind::kLinearRegression) {
    double acc = 0.0;
    for (int i = 0; i < data.samples; ++i) {
      const double r = dot_row(data, i, model) - data.labels[i];
      acc += r * r;
    }
    return acc / data.samples;  // MSE, lower is better
  }
  int correct = 0;
  for (int i = 0; i < data.samples; ++i) {
    const bool positive = dot_row(data, i, model) >= 0.0;
    if (positive == (data.labels[i] > 0.5)) ++correct;
  }
  return static_cast<double>(correct) / data.samples;  // accuracy
}

std::vector<double> local_update(const Task& task, const ClientData& client,
                                 std::span<const double> model,
                                 double client_lr, int steps) {
  const int dim = static_cast<int>(model.size());
  std::vector<double> w(model.begin(), model.end());
  std::vector<double> grad(dim);
  for (int step = 0; step < steps; ++step) {
    std::fill(grad.begin(), grad.end(), 0.0);
    for (int i = 0; i < client.samples; ++i) {
      const double* x =
          client.features.data() + static_cast<std::size_t>(i) * dim;
      double z = 0.0;
      for (int j = 0; j < dim; ++j) z += x[j] * w[j];
      const double resid = task.kind == TaskKind::kLinearRegression
                               ? z - client.labels[i]
                               : sigmoid(z) - client.labels[i];
      for (int j = 0; j < dim; ++j) grad[j] += resid * x[j];
    }
    const double scale = client_lr / client.samples;
    for (int j = 0; j < dim; ++j) w[j] -= scale * grad[j];
  }
  for (int j = 0; j < dim; ++j) w[j] -= model[j];
  return w;
}

void FlConfig::validate(int dim) const {
  if (rounds < 0) throw std::invalid_argument("FlConfig: rounds must be >= 0");
  if (clients_per_round < 1) {
    throw std::invalid_argument("FlConfig: clients_per_round must be >= 1");
  }
  if (noise_multiplier < 0.0) {
    throw std::invalid_argument("FlConfig: noise multiplier must be >= 0");
  }
  if (!(clip_bound > 0.0)) {
    throw std::invalid_argument("FlConfig: clip bound must be > 0");
  }
  if (!(c0 > 0.0)) throw std::invalid_argument("FlConfig: c0 must be > 0");
  if (!(eta > 0.0 && eta <= 1.0)) {
    throw std::invalid_argument("FlConfig: eta must be in (0, 1]");
  }
  if (warmup_rounds < 0) {
    throw std::invalid_argument("FlConfig: warmup must be >= 0");
  }
  if (initial_cols < 1) {
    throw std::invalid_argument("FlConfig: initial cols must be >= 1");
  }
  if (dim < 1) throw std::invalid_argument("FlConfig: task dim must be >= 1");
}

FlSketchShape fl_sketch_shape(int dim) {
  FlSketchShape shape;
  const int log_d =
      std::max(1, static_cast<int>(std::ceil(std::log(static_cast<double>(dim)))));
  shape.rows = log_d;
  shape.pads = log_d;
  shape.second_pads = log_d;
  shape.second_cols = 2;
  shape.max_cols = std::max(2, dim / (shape.rows * shape.pads));
  return shape;
}

long fl_cols_from_norm(double norm_estimate, const FlConfig& cfg,
                       const FlSketchShape& shape) {
  const double sigma = cfg.noise_multiplier;
  const double b = cfg.clip_bound;
  const double gamma =
      std::sqrt(20.0) * sigma * b / cfg.clients_per_round;
  const double v = std::max(norm_estimate, 0.0) + gamma;
  const double raw = v * v / (cfg.c0 * shape.pads * b * b * sigma * sigma);
  const long cols = static_cast<long>(std::ceil(raw));
  return std::clamp(cols, 2L, static_cast<long>(shape.max_cols));
}

namespace {

struct EstimatorState {
  long next_cols = 2;         // adapt-norm: stale size for the coming round
  double tail_shadow = 2.0;   // adapt-tail: continuous size
  std::vector<double> warmup_norms;
  long two_stage_cols = -1;
};

std::vector<double> exact_mean(std::span<const std::vector<double>> updates) {
  std::vector<double> mean(updates[0].size(), 0.0);
  for (const auto& u : updates) {
    for (std::size_t j = 0; j < mean.size(); ++j) mean[j] += u[j];
  }
  for (double& v : mean) v /= static_cast<double>(updates.size());
  return mean;
}

// Sketch + per-row clip + aggregate, mirroring the FME client boundary.
std::vector<double> sketch_aggregate_fl(
    const SketchOperator& op, std::span<const std::vector<double>> updates,
    const FlConfig& cfg, std::uint64_t secagg_round, std::uint64_t seed) {
  const int n = static_cast<int>(updates.size());
  const std::size_t row_len = op.params().row_len();
  std::vector<std::vector<double>> messages(n);
#pragma omp parallel for schedule(dynamic, 1)
  for (int i = 0; i < n; ++i) {
    messages[i] = op.sketch(updates[i]).data;
    for (int r = 0; r < op.params().rows; ++r) {
      clip_in_place(
          std::span<double>(messages[i]).subspan(r * row_len, row_len),
          cfg.clip_bound);
    }
  }
  return secagg_sum(messages, cfg.secagg_mode, cfg.field, secagg_round, seed);
}

std::vector<int> sample_cohort(int num_clients, int n, std::uint64_t seed,
                               int round) {
  if (n > num_clients) {
    throw std::invalid_argument("fedavg: cohort larger than client count");
  }
  std::vector<int> idx(num_clients);
  for (int i = 0; i < num_clients; ++i) idx[i] = i;
  Stream s(seed, static_cast<std::uint64_t>(round), StreamTag::kCohort);
  for (int i = 0; i < n; ++i) {
    const int j = i + static_cast<int>(s.below(num_clients - i));
    std::swap(idx[i], idx[j]);
  }
  idx.resize(n);
  return idx;
}

}  // namespace

const char* estimator_name(MeanEstimator estimator) {
  switch (estimator) {
    case MeanEstimator::kExact: return "exact";
    case MeanEstimator::kDpUncompressed: return "dp-uncompressed";
    case MeanEstimator::kFixedSketch: return "fixed-sketch";
    case MeanEstimator::kAdaptNorm: return "adapt-norm-fl";
    case MeanEstimator::kTwoStage: return "two-stage-fl";
    case MeanEstimator::kAdaptTail: return "adapt-tail-fl";
  }
  return "unknown";
}

FlResult fedavg_run(const Task& task, const FlConfig& cfg,
                    std::uint64_t seed) {
  cfg.validate(task.dim);
  const int d = task.dim;
  const int n = cfg.clients_per_round;
  const double b = cfg.clip_bound;
  const double sigma = cfg.noise_multiplier;
  const FlSketchShape shape = fl_sketch_shape(d);
  const FlNoise split_noise = calibrate_fl(sigma, b, n, FlProtocol::kAdaptNorm);
  const FlNoise full_noise = calibrate_fl(sigma, b, n, FlProtocol::kTwoStage);

  // Probe set for the train metric: a fixed prefix of clients.
  const int probe_clients =
      std::min<int>(5, static_cast<int>(task.clients.size()));

  EstimatorState state;
  state.next_cols = cfg.initial_cols;
  state.tail_shadow = cfg.initial_cols;

  FlResult result;
  result.model.assign(d, 0.0);
  std::vector<double> velocity(d, 0.0);
  std::vector<std::vector<double>> updates(n);

  for (int round = 1; round <= cfg.rounds; ++round) {
    const std::vector<int> cohort =
        sample_cohort(static_cast<int>(task.clients.size()), n, seed, round);
#pragma omp parallel for schedule(dynamic, 1)
    for (int i = 0; i < n; ++i) {
      updates[i] = local_update(task, task.clients[cohort[i]], result.model,
                                cfg.client_lr, cfg.local_steps);
      if (cfg.l1_zero_threshold > 0.0) {
        double l1 = 0.0;
        for (const double v : updates[i]) l1 += std::abs(v);
        if (l1 >= cfg.l1_zero_threshold) {
          std::fill(updates[i].begin(), updates[i].end(), 0.0);
        }
      }
      clip_in_place(updates[i], b);
    }

    RoundLog log;
    log.round = round;
    log.stat_estimate = kNaN;
    std::vector<double> mu_bar;
    Stream sketch_noise(seed, round, StreamTag::kSketchNoise);
    Stream scalar_noise(seed, round, StreamTag::kScalarNoise);

    switch (cfg.estimator) {
      case MeanEstimator::kExact: {
        mu_bar = exact_mean(updates);
        log.first_scalars = d;
        break;
      }
      case MeanEstimator::kDpUncompressed: {
        mu_bar = exact_mean(updates);
        add_gaussian(mu_bar, full_noise.sketch_std, sketch_noise);
        log.first_scalars = d;
        log.sketch_noise_std = full_noise.sketch_std;
        break;
      }
      case MeanEstimator::kFixedSketch: {
        const long raw_cols = std::lround(
            d / (cfg.fixed_rate * shape.rows * shape.pads));
        const long cols =
            std::clamp(raw_cols, 1L, static_cast<long>(shape.max_cols));
        if (static_cast<long>(shape.rows) * shape.pads * cols >= d) {
          mu_bar = exact_mean(updates);
          add_gaussian(mu_bar, full_noise.sketch_std, sketch_noise);
          log.first_scalars = d;
        } else {
          SketchParams params{shape.rows, shape.pads, static_cast<int>(cols), d};
          const SketchOperator op(
              params, derive_seed(seed, round, StreamTag::kFirstSketch));
          std::vector<double> nu =
              sketch_aggregate_fl(op, updates, cfg, 2 * round, seed);
          add_gaussian(nu, full_noise.sketch_std, sketch_noise);
          mu_bar = op.unsketch_median(nu);
          log.cols = static_cast<int>(cols);
          log.first_scalars = static_cast<long>(shape.rows) * shape.pads * cols;
        }
        log.sketch_noise_std = full_noise.sketch_std;
        break;
      }
      case MeanEstimator::kAdaptNorm: {
        const long cols = std::clamp(state.next_cols, 2L,
                                     static_cast<long>(shape.max_cols));
        SketchParams first{shape.rows, shape.pads, static_cast<int>(cols), d};
        SketchParams second{1, shape.second_pads, shape.second_cols, d};
        const SketchOperator first_op(
            first, derive_seed(seed, round, StreamTag::kFirstSketch));
        const SketchOperator second_op(
            second, derive_seed(seed, round, StreamTag::kSecondSketch));
        std::vector<double> nu =
            sketch_aggregate_fl(first_op, updates, cfg, 2 * round, seed);
        add_gaussian(nu, split_noise.sketch_std, sketch_noise);
        const std::vector<double> nu_tilde =
            sketch_aggregate_fl(second_op, updates, cfg, 2 * round + 1, seed);
        mu_bar = first_op.unsketch_median(nu);
        const double norm_estimate =
            std::min(l2_norm(nu_tilde), b) +
            scalar_noise.gaussian(split_noise.scalar_std);
        if (sigma > 0.0) {
          state.next_cols = fl_cols_from_norm(norm_estimate, cfg, shape);
        }
        log.cols = static_cast<int>(cols);
        log.first_scalars = static_cast<long>(shape.rows) * shape.pads * cols;
        log.second_scalars =
            static_cast<long>(shape.second_pads) * shape.second_cols;
        log.stat_estimate = norm_estimate;
        log.sketch_noise_std = split_noise.sketch_std;
        log.scalar_noise_std = split_noise.scalar_std;
        break;
      }
      case MeanEstimator::kTwoStage: {
        if (round <= cfg.warmup_rounds || state.two_stage_cols < 0) {
          mu_bar = exact_mean(updates);
          const double norm_estimate =
              std::min(l2_norm(mu_bar), b) +
              scalar_noise.gaussian(split_noise.scalar_std);
          state.warmup_norms.push_back(norm_estimate);
          add_gaussian(mu_bar, split_noise.sketch_std, sketch_noise);
          log.first_scalars = d;
          log.stat_estimate = norm_estimate;
          log.sketch_noise_std = split_noise.sketch_std;
          log.scalar_noise_std = split_noise.scalar_std;
          if (round == cfg.warmup_rounds && sigma > 0.0) {
            double mean_norm = 0.0;
            for (const double v : state.warmup_norms) mean_norm += v;
            mean_norm /= static_cast<double>(state.warmup_norms.size());
            state.two_stage_cols = fl_cols_from_norm(mean_norm, cfg, shape);
          }
        } else {
          const long cols = state.two_stage_cols;
          SketchParams params{shape.rows, shape.pads, static_cast<int>(cols), d};
          const SketchOperator op(
              params, derive_seed(seed, round, StreamTag::kFirstSketch));
          std::vector<double> nu =
              sketch_aggregate_fl(op, updates, cfg, 2 * round, seed);
          add_gaussian(nu, full_noise.sketch_std, sketch_noise);
          mu_bar = op.unsketch_median(nu);
          log.cols = static_cast<int>(cols);
          log.first_scalars = static_cast<long>(shape.rows) * shape.pads * cols;
          log.sketch_noise_std = full_noise.sketch_std;
        }
        break;
      }
      case MeanEstimator::kAdaptTail: {
        const long cols =
            std::clamp(std::lround(state.tail_shadow), 2L,
                       static_cast<long>(shape.max_cols));
        SketchParams first{shape.rows, shape.pads, static_cast<int>(cols), d};
        SketchParams second{1, shape.second_pads, shape.second_cols, d};
        const SketchOperator first_op(
            first, derive_seed(seed, round, StreamTag::kFirstSketch));
        const SketchOperator second_op(
            second, derive_seed(seed, round, StreamTag::kSecondSketch));
        std::vector<double> nu =
            sketch_aggregate_fl(first_op, updates, cfg, 2 * round, seed);
        add_gaussian(nu, split_noise.sketch_std, sketch_noise);
        const std::vector<double> nu_tilde =
            sketch_aggregate_fl(second_op, updates, cfg, 2 * round + 1, seed);
        mu_bar = first_op.unsketch_median(nu);
        const double err =
            resketch_error(second_op, mu_bar, nu_tilde) +
            scalar_noise.gaussian(split_noise.scalar_std);
        const double gamma =
            cfg.c0 * std::sqrt(static_cast<double>(d)) * sigma * b /
                (std::sqrt(0.9) * n) +
            2.0 * sigma * b / (std::sqrt(0.1) * n);
        const double gap = err - gamma;
        switch (cfg.tail_rule) {
          case TailUpdateRule::kMultSign: {
            const double sgn = gap > 0.0 ? 1.0 : (gap < 0.0 ? -1.0 : 0.0);
            state.tail_shadow *= 1.0 + cfg.eta * sgn;
            break;
          }
          case TailUpdateRule::kMultError: {
            const double factor =
                std::clamp(1.0 + cfg.eta * gap, 0.2, 5.0);
            state.tail_shadow *= factor;
            break;
          }
          case TailUpdateRule::kLinear: {
            state.tail_shadow += std::floor(cfg.eta * gap);
            break;
          }
        }
        state.tail_shadow = std::clamp(
            state.tail_shadow, 2.0, static_cast<double>(shape.max_cols));
        log.cols = static_cast<int>(cols);
        log.first_scalars = static_cast<long>(shape.rows) * shape.pads * cols;
        log.second_scalars =
            static_cast<long>(shape.second_pads) * shape.second_cols;
        log.stat_estimate = err;
        log.sketch_noise_std = split_noise.sketch_std;
        log.scalar_noise_std = split_noise.scalar_std;
        break;
      }
    }

    for (int j = 0; j < d; ++j) {
      velocity[j] = cfg.server_momentum * velocity[j] + mu_bar[j];
      result.model[j] += cfg.server_lr * velocity[j];
    }

    log.update_norm = l2_norm(mu_bar);
    double train_loss = 0.0;
    double train_metric = 0.0;
    for (int c = 0; c < probe_clients; ++c) {
      train_loss += loss(task, task.clients[c], result.model);
      train_metric += evaluate(task, task.clients[c], result.model);
    }
    log.train_metric = train_metric / probe_clients;
    log.val_metric = evaluate(task, task.validation, result.model);
    result.logs.push_back(log);

    if (!std::isfinite(train_loss / probe_clients) ||
        !std::isfinite(log.val_metric)) {
      result.diverged = true;
      result.diagnostic =
          "diverged (non-finite loss) at round " + std::to_string(round);
      return result;
    }
  }
  return result;
}

}  // namespace adasketch
