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

#include <atomic>
#include <cmath>
#include <cstdlib>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "seqrec/metrics.hpp"
#include "seqrec/scorer.hpp"
#include "seqrec/targetset.hpp"

namespace seqrec {

// ---------------------------------------------------------------------------
// Model rankings and rank agreement
// ---------------------------------------------------------------------------

struct ModelRankingEntry {
  std::string model;
  double mean = 0.0;
  int rank = 0;
};

// Models ordered by mean metric value; rank 1 is the best. Exact mean ties
// are broken by model name so downstream Tau-a always sees a strict ranking.
struct ModelRanking {
  std::vector<ModelRankingEntry> entries;
  std::string metric;
  std::string strategy;

  int rank_of(const std::string& model) const {
    for (const auto& e : entries) {
      if (e.model == model) return e.rank;
    }
    throw std::invalid_argument("model not in ranking: " + model);
  }
};

inline ModelRanking rank_models(std::span<const std::pair<std::string, double>> means,
                                std::vector<std::string>* warnings = nullptr) {
  if (means.size() < 2) throw std::invalid_argument("rank_models: need at least 2 models");
  for (const auto& [name, mean] : means) {
    if (!std::isfinite(mean)) {
      throw std::invalid_argument("rank_models: non-finite mean for model " + name);
    }
  }
  ModelRanking out;
  out.entries.reserve(means.size());
  for (const auto& [name, mean] : means) out.entries.push_back({name, mean, 0});
  std::sort(out.entries.begin(), out.entries.end(), [](const auto& a, const auto& b) {
    if (a.mean != b.mean) return a.mean > b.mean;
    return a.model < b.model;
  });
  for (std::size_t i = 0; i < out.entries.size(); ++i) {
    out.entries[i].rank = static_cast<int>(i) + 1;
    if (i > 0 && out.entries[i].mean == out.entries[i - 1].mean && warnings != nullptr) {
      warnings->push_back("rank_models: exact mean tie between " + out.entries[i - 1].model +
                          " and " + out.entries[i].model + "; broken by name");
    }
  }
  return out;
}

// Kendall's Tau-a over two strict rankings of the same models:
// tau = 2(c - d) / (m(m-1)). The integer pair counts are kept so callers can
// verify tau in exact rational arithmetic.
struct TauResult {
  double tau = 0.0;
  std::int64_t concordant = 0;
  std::int64_t discordant = 0;
  int models = 0;
};

namespace detail {
inline std::vector<std::pair<int, int>> aligned_ranks(const ModelRanking& a, const ModelRanking& b) {
  if (a.entries.size() != b.entries.size()) {
    throw std::invalid_argument("rankings cover different model sets");
  }
  std::vector<std::pair<int, int>> ranks;
  ranks.reserve(a.entries.size());
  for (const auto& e : a.entries) ranks.emplace_back(e.rank, b.rank_of(e.model));
  return ranks;
}

inline void require_no_ties(const std::vector<std::pair<int, int>>& ranks) {
  for (std::size_t i = 0; i < ranks.size(); ++i) {
    for (std::size_t j = i + 1; j < ranks.size(); ++j) {
      if (ranks[i].first == ranks[j].first || ranks[i].second == ranks[j].second) {
        throw std::invalid_argument("kendall_tau_a: tied ranks are not allowed");
      }
    }
  }
}
}  // namespace detail

inline TauResult kendall_tau_a(const ModelRanking& a, const ModelRanking& b) {
  auto ranks = detail::aligned_ranks(a, b);
  detail::require_no_ties(ranks);
  TauResult r;
  r.models = static_cast<int>(ranks.size());
  for (std::size_t i = 0; i < ranks.size(); ++i) {
    for (std::size_t j = i + 1; j < ranks.size(); ++j) {
      std::int64_t dx = ranks[i].first - ranks[j].first;
      std::int64_t dy = ranks[i].second - ranks[j].second;
      if (dx * dy > 0) {
        ++r.concordant;
      } else {
        ++r.discordant;
      }
    }
  }
  std::int64_t m = r.models;
  r.tau = 2.0 * static_cast<double>(r.concordant - r.discordant) / static_cast<double>(m * (m - 1));
  return r;
}

// Two rankings are consistent iff every model holds the same rank in both;
// the mean values behind the ranks may differ.
struct ConsistencyVerdict {
  bool consistent = false;
  struct RankPair {
    std::string model;
    int rank_a = 0;
    int rank_b = 0;
  };
  std::vector<RankPair> pairs;
};

inline ConsistencyVerdict consistency(const ModelRanking& a, const ModelRanking& b) {
  if (a.entries.size() != b.entries.size()) {
    throw std::invalid_argument("rankings cover different model sets");
  }
  ConsistencyVerdict v;
  v.consistent = true;
  for (const auto& e : a.entries) {
    int rb = b.rank_of(e.model);
    v.pairs.push_back({e.model, e.rank, rb});
    if (e.rank != rb) v.consistent = false;
  }
  return v;
}

// ---------------------------------------------------------------------------
// Evaluation driver
// ---------------------------------------------------------------------------

inline int worker_count_from_env() {
  const char* s = std::getenv("SEQREC_WORKERS");
  if (s == nullptr) return 1;
  int v = std::atoi(s);
  return v >= 1 ? v : 1;
}

namespace detail {
template <typename Fn>
void parallel_for(std::size_t n, int workers, Fn&& fn) {
  if (workers <= 1 || n < 2) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  auto body = [&] {
    for (;;) {
      std::size_t i = next.fetch_add(1);
      if (i >= n) return;
      fn(i);
    }
  };
  std::vector<std::thread> pool;
  int spawn = std::min<int>(workers, static_cast<int>(n));
  pool.reserve(static_cast<std::size_t>(spawn));
  for (int t = 0; t < spawn; ++t) pool.emplace_back(body);
  for (auto& th : pool) th.join();
}
}  // namespace detail

// One evaluation pass of all models over all instances. Within a run every
// model sees the same target set per instance; the per-instance RNG stream is
// derived from (seed, run, instance), so results do not depend on worker
// scheduling.
struct RunResult {
  std::vector<double> model_means;   // aligned with the models argument
  std::size_t skipped = 0;           // degenerate instances (empty pool)
  std::size_t short_sets = 0;        // instances whose pool was smaller than eta
  // per-model per-instance metric values (NaN = skipped); filled on request
  std::vector<std::vector<double>> instance_values;
};

inline RunResult evaluate_run(std::span<const ScoreFunction* const> models,
                              std::span<const EvaluationInstance> instances, int n_items,
                              std::span<const std::int64_t> counts, const TargetSetSpec& spec,
                              std::uint64_t run_index, const MetricSpec& metric,
                              bool full_excludes_seen = false, int workers = 0,
                              bool keep_instance_values = false) {
  if (models.empty()) throw std::invalid_argument("evaluate_run: no models");
  if (instances.empty()) throw std::invalid_argument("evaluate_run: no instances");
  if (spec.strategy == Strategy::Popularity && counts.size() != static_cast<std::size_t>(n_items)) {
    throw std::invalid_argument("evaluate_run: popularity sampling needs one count per item");
  }
  if (workers <= 0) workers = worker_count_from_env();

  const std::size_t m = models.size();
  const std::size_t n = instances.size();
  // values[model][instance]; NaN marks skipped instances
  std::vector<std::vector<double>> values(m, std::vector<double>(n, std::nan("")));
  std::vector<unsigned char> skipped_flags(n, 0);
  std::vector<unsigned char> short_flags(n, 0);

  detail::parallel_for(n, workers, [&](std::size_t i) {
    const auto& inst = instances[i];
    Rng rng = Rng::stream(spec.seed, {run_index, static_cast<std::uint64_t>(i)});
    TargetSet ts;
    try {
      ts = build_target_set(inst, n_items, counts, spec, rng, nullptr, full_excludes_seen);
    } catch (const DegenerateInstanceError&) {
      skipped_flags[i] = 1;
      return;
    }
    if (spec.sampled() && ts.candidates.size() < static_cast<std::size_t>(spec.eta) + 1) {
      short_flags[i] = 1;
    }
    for (std::size_t mi = 0; mi < m; ++mi) {
      auto scores = models[mi]->score(inst.prefix, ts.candidates);
      RankedList ranked = rank_target_set(scores, ts.candidates);
      values[mi][i] = metric_value(metric, ranked, ts.relevant);
    }
  });

  RunResult out;
  for (unsigned char f : skipped_flags) out.skipped += f;
  for (unsigned char f : short_flags) out.short_sets += f;
  if (out.skipped == n) throw std::runtime_error("evaluate_run: every instance was degenerate");

  out.model_means.reserve(m);
  for (std::size_t mi = 0; mi < m; ++mi) {
    std::vector<double> kept;
    kept.reserve(n - out.skipped);
    for (std::size_t i = 0; i < n; ++i) {
      if (!skipped_flags[i]) kept.push_back(values[mi][i]);
    }
    out.model_means.push_back(mean_value(kept));
  }
  if (keep_instance_values) out.instance_values = std::move(values);
  return out;
}

// Mean and spread of per-run mean metrics over repeated sampling runs.
struct RepeatedStats {
  std::string model;
  std::vector<double> run_means;
  double mean_of_means = 0.0;
  double std_of_means = 0.0;  // sample standard deviation; 0 for a single run
};

inline std::vector<RepeatedStats> repeated_sampled_evaluation(
    std::span<const ScoreFunction* const> models, std::span<const EvaluationInstance> instances,
    int n_items, std::span<const std::int64_t> counts, const TargetSetSpec& spec, int runs,
    const MetricSpec& metric, std::vector<std::string>* warnings = nullptr, int workers = 0) {
  if (!spec.sampled()) {
    throw std::invalid_argument("repeated_sampled_evaluation: full strategy has no sampling noise");
  }
  if (runs < 1) throw std::invalid_argument("repeated_sampled_evaluation: runs must be >= 1");

  std::vector<RepeatedStats> stats(models.size());
  for (std::size_t mi = 0; mi < models.size(); ++mi) {
    stats[mi].model = models[mi]->name();
    stats[mi].run_means.reserve(static_cast<std::size_t>(runs));
  }
  std::size_t short_sets = 0;
  for (int r = 0; r < runs; ++r) {
    RunResult run = evaluate_run(models, instances, n_items, counts, spec,
                                 static_cast<std::uint64_t>(r), metric, false, workers);
    short_sets += run.short_sets;
    for (std::size_t mi = 0; mi < models.size(); ++mi) {
      stats[mi].run_means.push_back(run.model_means[mi]);
    }
  }
  if (short_sets > 0 && warnings != nullptr) {
    warnings->push_back("sampling: " + std::to_string(short_sets) +
                        " instance evaluations had a negative pool smaller than eta");
  }
  for (auto& s : stats) {
    s.mean_of_means = mean_value(s.run_means);
    bool all_equal = true;
    for (double v : s.run_means) all_equal = all_equal && v == s.run_means[0];
    if (!all_equal && s.run_means.size() > 1) {
      double acc = 0.0;
      for (double v : s.run_means) acc += (v - s.mean_of_means) * (v - s.mean_of_means);
      s.std_of_means = std::sqrt(acc / static_cast<double>(s.run_means.size() - 1));
    }
  }
  return stats;
}

// ---------------------------------------------------------------------------
// Sample-size sweep
// ---------------------------------------------------------------------------

// Sentinel-bearing eta value: nullopt means "full item set".
using EtaValue = std::optional<int>;

struct SweepPoint {
  EtaValue eta;
  ModelRanking ranking;
  TauResult tau_vs_full;
  bool consistent_with_full = false;
  std::vector<double> means;  // aligned with the models argument
};

struct SweepResult {
  ModelRanking full_ranking;
  std::vector<SweepPoint> points;
};

// Evaluates one ranking per eta (each averaged over `runs` sampling runs) and
// compares it against the full ranking. eta = nullopt reproduces the full
// ranking exactly (the boundary case of a sweep).
inline SweepResult sample_size_sweep(std::span<const ScoreFunction* const> models,
                                     std::span<const EvaluationInstance> instances, int n_items,
                                     std::span<const std::int64_t> counts, Strategy strategy,
                                     std::span<const EtaValue> eta_list, int runs,
                                     std::uint64_t seed, const MetricSpec& metric,
                                     std::vector<std::string>* warnings = nullptr, int workers = 0) {
  if (strategy == Strategy::Full) {
    throw std::invalid_argument("sample_size_sweep: pick uniform or popularity; full is the eta=FULL point");
  }
  if (eta_list.empty()) throw std::invalid_argument("sample_size_sweep: empty eta list");
  for (const auto& e : eta_list) {
    if (e.has_value() && *e < 1) throw std::invalid_argument("sample_size_sweep: eta must be >= 1");
  }

  SweepResult out;
  TargetSetSpec full_spec{Strategy::Full, 0, seed};
  RunResult full = evaluate_run(models, instances, n_items, counts, full_spec, 0, metric, false, workers);
  std::vector<std::pair<std::string, double>> full_means;
  for (std::size_t mi = 0; mi < models.size(); ++mi) {
    full_means.emplace_back(models[mi]->name(), full.model_means[mi]);
  }
  out.full_ranking = rank_models(full_means, warnings);
  out.full_ranking.metric = metric.label();
  out.full_ranking.strategy = "full";

  for (const auto& eta : eta_list) {
    SweepPoint point;
    point.eta = eta;
    if (!eta.has_value()) {
      point.means = full.model_means;
      point.ranking = out.full_ranking;
    } else {
      int e = *eta;
      if (e > n_items && warnings != nullptr) {
        warnings->push_back("sample_size_sweep: eta=" + std::to_string(e) +
                            " exceeds catalog size; clamped to " + std::to_string(n_items));
      }
      e = std::min(e, n_items);
      TargetSetSpec spec{strategy, e, seed};
      auto stats = repeated_sampled_evaluation(models, instances, n_items, counts, spec, runs,
                                               metric, warnings, workers);
      std::vector<std::pair<std::string, double>> means;
      for (std::size_t mi = 0; mi < models.size(); ++mi) {
        means.emplace_back(models[mi]->name(), stats[mi].mean_of_means);
        point.means.push_back(stats[mi].mean_of_means);
      }
      point.ranking = rank_models(means, warnings);
      point.ranking.metric = metric.label();
      point.ranking.strategy = strategy_label(strategy);
    }
    point.tau_vs_full = kendall_tau_a(point.ranking, out.full_ranking);
    point.consistent_with_full = consistency(point.ranking, out.full_ranking).consistent;
    out.points.push_back(std::move(point));
  }
  return out;
}

}  // namespace seqrec
