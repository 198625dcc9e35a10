// Copyright 2026 The seqrec Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
#pragma once

#include <cmath>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "seqrec/dataset.hpp"
#include "seqrec/models.hpp"
#include "seqrec/ranking.hpp"

namespace seqrec {

struct TrainConfig {
  int max_epochs = 800;
  int batch_size = 128;
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  int patience = 20;  // epochs without validation improvement before stopping
  std::uint64_t seed = 1;
  MetricSpec selection_metric{MetricKind::HitRate, 10};
  Strategy val_strategy = Strategy::Full;
  int val_eta = 100;
  std::vector<MetricSpec> tracked_metrics;  // extra metrics recorded each epoch
};

struct EpochRecord {
  int epoch = 0;
  double mean_loss = 0.0;
  std::vector<std::pair<std::string, double>> val_metrics;

  double value(const std::string& label) const {
    for (const auto& [l, v] : val_metrics) {
      if (l == label) return v;
    }
    throw std::invalid_argument("no recorded metric " + label);
  }
};

struct TrainState {
  int epochs_run = 0;
  int best_epoch = -1;
  double best_value = -std::numeric_limits<double>::infinity();
  std::vector<ad::Tensor> best_params;
  std::vector<EpochRecord> history;
  bool diverged = false;
  ad::AdamState adam;
};

inline double evaluate_validation(const ScoreFunction& model,
                                  std::span<const EvaluationInstance> instances, int n_items,
                                  std::span<const std::int64_t> counts, Strategy strategy, int eta,
                                  std::uint64_t seed, std::uint64_t run_index,
                                  const MetricSpec& metric) {
  const ScoreFunction* m = &model;
  TargetSetSpec spec{strategy, eta, seed};
  auto run = evaluate_run({&m, 1}, instances, n_items, counts, spec, run_index, metric);
  return run.model_means[0];
}

// Mini-batch Adam training with per-epoch validation. The best checkpoint by
// the selection metric is retained and restored into the model on return.
// Fixed seed and data give a bit-identical TrainState.
inline TrainState train(TrainableModel& model, const LeaveOneOutSplit& split, int n_items,
                        const TrainConfig& cfg, std::span<const std::int64_t> counts = {},
                        std::vector<std::string>* warnings = nullptr) {
  if (cfg.max_epochs < 0) throw std::invalid_argument("train: max_epochs must be >= 0");
  if (cfg.batch_size < 1) throw std::invalid_argument("train: batch_size must be >= 1");
  if (cfg.patience < 1) throw std::invalid_argument("train: patience must be >= 1");
  if (cfg.val_strategy == Strategy::Popularity &&
      counts.size() != static_cast<std::size_t>(n_items)) {
    throw std::invalid_argument("train: popularity validation needs per-item counts");
  }

  TrainState state;
  auto params = model.parameters();

  std::vector<std::size_t> trainable;
  for (std::size_t i = 0; i < split.train_sequences.size(); ++i) {
    if (split.train_sequences[i].size() >= 2) trainable.push_back(i);
  }
  if (trainable.empty() && cfg.max_epochs > 0) {
    throw std::invalid_argument("train: no training sequence has at least two items");
  }

  auto snapshot = [&]() {
    std::vector<ad::Tensor> copy;
    copy.reserve(params.size());
    for (const ad::Param* p : params) copy.push_back(p->value);
    return copy;
  };
  auto restore = [&](const std::vector<ad::Tensor>& saved) {
    for (std::size_t i = 0; i < params.size(); ++i) params[i]->value = saved[i];
  };

  auto validate = [&](std::uint64_t epoch, EpochRecord& rec) {
    double selection = evaluate_validation(model, split.validation_instances, n_items, counts,
                                           cfg.val_strategy, cfg.val_eta, cfg.seed, epoch,
                                           cfg.selection_metric);
    rec.val_metrics.emplace_back(cfg.selection_metric.label(), selection);
    for (const auto& extra : cfg.tracked_metrics) {
      if (extra == cfg.selection_metric) continue;
      rec.val_metrics.emplace_back(
          extra.label(), evaluate_validation(model, split.validation_instances, n_items, counts,
                                             cfg.val_strategy, cfg.val_eta, cfg.seed, epoch, extra));
    }
    return selection;
  };

  for (int epoch = 0; epoch < cfg.max_epochs; ++epoch) {
    Rng shuffle_rng = Rng::stream(cfg.seed, {0x73687566ULL, static_cast<std::uint64_t>(epoch)});
    std::vector<std::size_t> order = trainable;
    shuffle_rng.shuffle(order);

    double loss_sum = 0.0;
    int batch_count = 0;
    bool aborted = false;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch_size)) {
      std::size_t stop = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
      std::vector<std::vector<int>> batch;
      batch.reserve(stop - start);
      for (std::size_t i = start; i < stop; ++i) batch.push_back(split.train_sequences[order[i]]);

      Rng loss_rng = Rng::stream(cfg.seed, {0x6c6f7373ULL, static_cast<std::uint64_t>(epoch),
                                            static_cast<std::uint64_t>(batch_count)});
      for (ad::Param* p : params) p->zero_grad();
      double loss_value = 0.0;
      try {
        ad::Graph g;
        auto loss = model.build_loss(g, batch, loss_rng);
        loss_value = g.value(loss).at(0, 0);
        if (!std::isfinite(loss_value)) {
          throw std::runtime_error("non-finite loss in epoch " + std::to_string(epoch));
        }
        g.backward(loss);
        ad::adam_step(params, state.adam, cfg.lr, cfg.beta1, cfg.beta2, cfg.eps);
      } catch (const std::runtime_error& e) {
        // numeric failure: stop at the last finite state
        state.diverged = true;
        if (warnings != nullptr) warnings->push_back(std::string("train: ") + e.what());
        aborted = true;
        break;
      }
      loss_sum += loss_value;
      ++batch_count;
    }
    if (aborted) break;

    EpochRecord rec;
    rec.epoch = epoch;
    rec.mean_loss = batch_count > 0 ? loss_sum / batch_count : 0.0;
    double selection = validate(static_cast<std::uint64_t>(epoch), rec);
    state.history.push_back(std::move(rec));
    state.epochs_run = epoch + 1;

    if (selection > state.best_value) {
      state.best_value = selection;
      state.best_epoch = epoch;
      state.best_params = snapshot();
    } else if (epoch - state.best_epoch >= cfg.patience) {
      break;
    }
  }

  if (!state.best_params.empty()) restore(state.best_params);
  return state;
}

}  // namespace seqrec
