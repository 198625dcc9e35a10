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
//
// Acceptance suite. Each criterion prints one PASS/FAIL line; the process
// exits with the number of failures. Run a single criterion by passing its
// number. Criterion 3 needs the raw MovieLens ML-1m ratings file and reports
// SKIP when SEQREC_ML1M is unset.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "fixtures.hpp"
#include "gradcheck.hpp"
#include "model_oracles.hpp"
#include "seqrec/harness.hpp"
#include "seqrec/training.hpp"
#include "stat_support.hpp"

using namespace seqrec;

namespace {

struct Outcome {
  bool pass = false;
  bool skipped = false;
  std::string detail;
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(const char* pattern, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof(buf), pattern, args...);
  return std::string(buf);
}

// --- criterion 1: metric oracle equivalence --------------------------------

Outcome criterion_1() {
  auto t0 = std::chrono::steady_clock::now();
  Rng rng(20260101);
  const int cases = 10000;
  double max_ndcg_err = 0.0;
  for (int trial = 0; trial < cases; ++trial) {
    int n = 1 + static_cast<int>(rng.next_below(1000));
    std::vector<int> items(static_cast<std::size_t>(n));
    std::iota(items.begin(), items.end(), 0);
    rng.shuffle(items);
    int relevant = static_cast<int>(rng.next_below(static_cast<std::uint64_t>(n)));
    int k = 1 + static_cast<int>(rng.next_below(1000));

    // independent linear-scan oracle
    int position = 0;
    for (int i = 0; i < n; ++i) {
      if (items[static_cast<std::size_t>(i)] == relevant) {
        position = i + 1;
        break;
      }
    }
    double oracle_hr = position <= k ? 1.0 : 0.0;
    double oracle_ndcg = position <= k ? std::log(2.0) / std::log(position + 1.0) : 0.0;

    RankedList list(items);
    double hr = hit_rate_at_k(list, relevant, k);
    double nd = ndcg_at_k(list, relevant, k);
    if (hr != oracle_hr) {
      return {false, false, fmt("HR mismatch at case %d (pos %d, k %d)", trial, position, k)};
    }
    max_ndcg_err = std::max(max_ndcg_err, std::abs(nd - oracle_ndcg));
  }
  double secs = seconds_since(t0);
  if (max_ndcg_err >= 1e-12) return {false, false, fmt("max NDCG error %.3e", max_ndcg_err)};
  if (secs >= 10.0) return {false, false, fmt("too slow: %.1fs", secs)};
  return {true, false, fmt("%d cases, max NDCG err %.2e, %.1fs", cases, max_ndcg_err, secs)};
}

// --- criterion 2: published Kendall tau values ------------------------------

Outcome criterion_2() {
  auto make = [](std::vector<std::pair<std::string, int>> ranks) {
    ModelRanking r;
    for (auto& [m, k] : ranks) r.entries.push_back({m, 1.0 / k, k});
    return r;
  };
  struct Case {
    const char* label;
    ModelRanking a, b;
    std::int64_t num;  // expected tau as num/den, checked in exact integers
    std::int64_t den;
  };
  std::vector<Case> cases;
  cases.push_back({"ML-1m popularity vs full",
                   make({{"GRU", 1}, {"NARM", 2}, {"SASRec", 3}, {"BERT4Rec", 4}}),
                   make({{"GRU", 3}, {"NARM", 4}, {"SASRec", 2}, {"BERT4Rec", 1}}), -2, 3});
  cases.push_back({"Beauty uniform vs full",
                   make({{"GRU", 3}, {"NARM", 2}, {"SASRec", 1}, {"BERT4Rec", 4}}),
                   make({{"GRU", 4}, {"NARM", 3}, {"SASRec", 2}, {"BERT4Rec", 1}}), 0, 1});
  cases.push_back({"Games popularity vs full",
                   make({{"GRU", 4}, {"NARM", 1}, {"SASRec", 3}, {"BERT4Rec", 2}}),
                   make({{"GRU", 4}, {"NARM", 2}, {"SASRec", 3}, {"BERT4Rec", 1}}), 2, 3});
  cases.push_back({"Games uniform vs full",
                   make({{"GRU", 4}, {"NARM", 1}, {"SASRec", 3}, {"BERT4Rec", 2}}),
                   make({{"GRU", 4}, {"NARM", 2}, {"SASRec", 3}, {"BERT4Rec", 1}}), 2, 3});
  for (const auto& c : cases) {
    TauResult t = kendall_tau_a(c.a, c.b);
    std::int64_t m = t.models;
    // exact rational identity: 2(c-d)/ (m(m-1)) == num/den
    if (c.den * 2 * (t.concordant - t.discordant) != c.num * m * (m - 1)) {
      return {false, false, fmt("%s: got 2(%lld-%lld)/%lld, want %lld/%lld", c.label,
                                static_cast<long long>(t.concordant),
                                static_cast<long long>(t.discordant), static_cast<long long>(m * (m - 1)),
                                static_cast<long long>(c.num), static_cast<long long>(c.den))};
    }
  }
  return {true, false, "tau = -2/3, 0, +2/3 reproduced in exact integer arithmetic"};
}

// --- criterion 3: ML-1m preprocessing (external data, optional) -------------

Outcome criterion_3() {
  const char* path = std::getenv("SEQREC_ML1M");
  if (path == nullptr) {
    return {true, true, "set SEQREC_ML1M=/path/to/ml-1m/ratings.dat to run this check"};
  }
  auto t0 = std::chrono::steady_clock::now();
  ColumnFormat fmt_ml;
  fmt_ml.delimiter = "::";
  fmt_ml.user_col = 0;
  fmt_ml.item_col = 1;
  fmt_ml.time_col = 3;
  auto log = ingest(path, fmt_ml);
  if (log.size() != 1000209) {
    return {false, false, fmt("expected 1,000,209 interactions, parsed %zu", log.size())};
  }
  auto ds = preprocess(log);
  double secs = seconds_since(t0);
  double avg = ds.average_length();
  double density_pp = 100.0 * ds.density();
  if (ds.n_users() != 6040) return {false, false, fmt("users %d != 6040", ds.n_users())};
  if (ds.n_items() != 3416) return {false, false, fmt("items %d != 3416", ds.n_items())};
  if (std::abs(avg - 165.50) > 0.01) return {false, false, fmt("avg length %.4f != 165.50", avg)};
  if (std::abs(density_pp - 4.84) > 0.01) {
    return {false, false, fmt("density %.4f%% != 4.84%%", density_pp)};
  }
  if (secs >= 60.0) return {false, false, fmt("too slow: %.1fs", secs)};
  return {true, false, fmt("6040 users, 3416 items, avg 165.50, density 4.84%%, %.1fs", secs)};
}

// --- criterion 4: sampler goodness of fit -----------------------------------

Outcome criterion_4() {
  auto t0 = std::chrono::steady_clock::now();
  const int trials = 100000;
  // (a) uniform inclusion over a 10-item pool with eta = 3: expected 0.3 each
  {
    auto inst = EvaluationInstance::make({}, 10);
    std::vector<double> included(10, 0.0);
    for (int t = 0; t < trials; ++t) {
      Rng rng = Rng::stream(41, {static_cast<std::uint64_t>(t)});
      auto ts = build_uniform(inst, 11, 3, rng);
      for (int c : ts.candidates) {
        if (c != 10) included[static_cast<std::size_t>(c)] += 1.0;
      }
    }
    std::vector<double> expected(10, trials * 0.3);
    double stat = testsup::chi_square_statistic_fpc(included, expected, 10, 3);
    if (stat >= testsup::chi_square_critical_99(9)) {
      return {false, false, fmt("uniform inclusion chi2 %.2f >= %.2f", stat,
                                testsup::chi_square_critical_99(9))};
    }
  }
  // (b) popularity single draws on a 5-item pool follow normalized counts
  double stat_pop;
  {
    std::vector<std::int64_t> counts{10, 20, 30, 15, 25};
    auto inst = EvaluationInstance::make({}, 5);
    std::vector<double> drawn(5, 0.0);
    for (int t = 0; t < trials; ++t) {
      Rng rng = Rng::stream(43, {static_cast<std::uint64_t>(t)});
      auto ts = build_popularity(inst, counts, 1, rng);
      drawn[static_cast<std::size_t>(ts.candidates[1])] += 1.0;
    }
    std::vector<double> expected;
    for (auto c : counts) expected.push_back(trials * static_cast<double>(c) / 100.0);
    stat_pop = testsup::chi_square_statistic(drawn, expected);
    if (stat_pop >= testsup::chi_square_critical_99(4)) {
      return {false, false, fmt("popularity chi2 %.2f >= %.2f", stat_pop,
                                testsup::chi_square_critical_99(4))};
    }
  }
  double secs = seconds_since(t0);
  if (secs >= 10.0) return {false, false, fmt("too slow: %.1fs", secs)};
  return {true, false, fmt("chi-square below the alpha=0.01 critical values, %.1fs", secs)};
}

// --- criterion 5: model gradient checks at the stated toy dimensions --------

Outcome criterion_5() {
  auto t0 = std::chrono::steady_clock::now();
  // |I| = 20, e = d = 8, L = 2, H = 2, T = 8, batch of 4 sequences
  std::vector<std::vector<int>> batch{
      {3, 7, 12, 5, 19, 0, 8, 2}, {15, 4, 9, 11, 6}, {1, 18, 13, 10, 16, 14}, {2, 5, 17, 3}};
  std::string detail;
  auto check = [&](TrainableModel& model, const char* name) {
    auto params = model.parameters();
    for (ad::Param* p : params) p->zero_grad();
    {
      Rng rng(777);
      ad::Graph g;
      g.backward(model.build_loss(g, batch, rng));
    }
    auto forward = [&]() {
      Rng rng(777);
      ad::Graph g;
      return g.value(model.build_loss(g, batch, rng)).at(0, 0);
    };
    auto report = testsup::finite_difference_check(params, forward);
    detail += fmt("%s %.2e  ", name, report.max_rel_err);
    return report.max_rel_err < 1e-4;
  };

  GruModel gru({.n_items = 20, .embedding = 8, .hidden = 8}, 1001);
  if (!check(gru, "gru")) return {false, false, "gru gradient check failed: " + detail};
  NarmModel narm({.n_items = 20, .embedding = 8, .hidden = 8}, 1002);
  if (!check(narm, "narm")) return {false, false, "narm gradient check failed: " + detail};
  SasRecModel sas(
      {.n_items = 20, .d = 8, .max_len = 8, .layers = 2, .heads = 2, .dropout = 0.0}, 1003);
  if (!check(sas, "sasrec")) return {false, false, "sasrec gradient check failed: " + detail};
  Bert4RecModel bert({.n_items = 20,
                      .d = 8,
                      .max_len = 8,
                      .layers = 2,
                      .heads = 2,
                      .dropout = 0.0,
                      .mask_prob = 0.3,
                      .last_mask_prob = 0.2},
                     1004);
  if (!check(bert, "bert4rec")) return {false, false, "bert4rec gradient check failed: " + detail};

  double secs = seconds_since(t0);
  if (secs >= 300.0) return {false, false, fmt("too slow: %.1fs", secs)};
  return {true, false, fmt("max rel err: %s(%.1fs)", detail.c_str(), secs)};
}

// --- criterion 6: trainability on the deterministic cycle -------------------

Outcome criterion_6() {
  auto t0 = std::chrono::steady_clock::now();
  auto ds = testsup::cycle_dataset(20, 200, 12);
  auto sp = split(ds);

  TrainConfig tc;
  tc.max_epochs = 50;
  tc.batch_size = 32;
  tc.lr = 5e-3;
  tc.patience = 50;
  tc.seed = 7;
  tc.selection_metric = {MetricKind::HitRate, 10};
  tc.tracked_metrics = {{MetricKind::HitRate, 1}};

  std::string detail;
  auto run_one = [&](TrainableModel& model, const char* name) {
    auto state = train(model, sp, 20, tc);
    double best = 0.0;
    int best_epoch = -1;
    for (const auto& rec : state.history) {
      double v = rec.value("HR@1");
      if (v > best) {
        best = v;
        best_epoch = rec.epoch;
      }
    }
    detail += fmt("%s %.2f@ep%d  ", name, best, best_epoch);
    return best >= 0.9;
  };

  GruModel gru({.n_items = 20, .embedding = 32, .hidden = 32}, 1);
  if (!run_one(gru, "gru")) return {false, false, "gru below 0.9: " + detail};
  NarmModel narm({.n_items = 20, .embedding = 32, .hidden = 32}, 2);
  if (!run_one(narm, "narm")) return {false, false, "narm below 0.9: " + detail};
  SasRecModel sas({.n_items = 20,
                   .d = 32,
                   .max_len = 12,
                   .layers = 2,
                   .heads = 2,
                   .dropout = 0.1,
                   .per_step_negative_only = true},
                  3);
  if (!run_one(sas, "sasrec")) return {false, false, "sasrec below 0.9: " + detail};
  Bert4RecModel bert({.n_items = 20,
                      .d = 32,
                      .max_len = 12,
                      .layers = 2,
                      .heads = 2,
                      .dropout = 0.1,
                      .mask_prob = 0.3,
                      .last_mask_prob = 0.3},
                     4);
  if (!run_one(bert, "bert4rec")) return {false, false, "bert4rec below 0.9: " + detail};

  MarkovScorer markov(sp.train_sequences, 20);
  double markov_hr1 = evaluate_validation(markov, sp.test_instances, 20, {}, Strategy::Full, 0, 1, 0,
                                          {MetricKind::HitRate, 1});
  detail += fmt("markov %.2f", markov_hr1);
  if (markov_hr1 != 1.0) return {false, false, "markov test HR@1 != 1.0: " + detail};

  double secs = seconds_since(t0);
  if (secs >= 900.0) return {false, false, fmt("too slow: %.1fs", secs)};
  return {true, false, fmt("best val HR@1: %s(%.0fs)", detail.c_str(), secs)};
}

// --- criteria 7 and 8: sampled-vs-full phenomenon on a fixed synthetic pair -

// Catalog of 1000 items with a Zipf(1.0) popularity profile; item index i has
// count round(1e6/(i+1)), so items 0..49 are the 50 most popular. Instances
// carry the relevant item as their one-element prefix, so scorers can read it
// and the negative pool is always the other 999 items.
struct PhenomenonFixture {
  static constexpr int kItems = 1000;
  static constexpr int kTop = 50;
  static constexpr int kInstances = 2000;
  static constexpr int kEta = 100;

  std::vector<std::int64_t> counts;
  std::vector<EvaluationInstance> instances;

  PhenomenonFixture() {
    for (int i = 0; i < kItems; ++i) {
      counts.push_back(static_cast<std::int64_t>(std::llround(1e6 / (i + 1))));
    }
    // 5% of targets fall in the popular head, the rest cycle the tail
    for (int j = 0; j < kInstances / 20; ++j) instances.push_back(make_instance(j % kTop));
    for (int j = kInstances / 20; j < kInstances; ++j) {
      instances.push_back(make_instance(kTop + (j % (kItems - kTop))));
    }
  }

  static EvaluationInstance make_instance(int target) {
    return EvaluationInstance::make({target}, target);
  }
};

// Scorer A: ranks the relevant item first whenever it is one of the top-50
// popular items; otherwise scores every candidate by a fixed hash, which
// places the relevant item uniformly at random.
class HeadSpecialistScorer final : public ScoreFunction {
 public:
  explicit HeadSpecialistScorer(std::uint64_t seed) : seed_(seed) {}
  const std::string& name() const override { return name_; }
  std::vector<double> score(std::span<const int> prefix,
                            std::span<const int> candidates) const override {
    int target = prefix.back();
    std::vector<double> out;
    out.reserve(candidates.size());
    for (int c : candidates) {
      if (target < PhenomenonFixture::kTop) {
        out.push_back(c == target ? 2.0 : hash01(target, c));
      } else {
        out.push_back(hash01(target, c));
      }
    }
    return out;
  }

 private:
  double hash01(int target, int item) const {
    Rng r = Rng::stream(seed_, {static_cast<std::uint64_t>(target), static_cast<std::uint64_t>(item)});
    return r.next_double();
  }
  std::string name_ = "head_specialist";
  std::uint64_t seed_;
};

// Scorer B: a fixed strength order over items, with the relevant item pinned
// between the 59th and 60th strongest others: its full-catalog rank is
// exactly 60 for every instance.
class ConstantRankScorer final : public ScoreFunction {
 public:
  ConstantRankScorer(std::uint64_t seed, int rank) : rank_(rank) {
    position_.resize(PhenomenonFixture::kItems);
    std::iota(position_.begin(), position_.end(), 0);
    Rng rng(seed);
    rng.shuffle(position_);
  }
  const std::string& name() const override { return name_; }
  std::vector<double> score(std::span<const int> prefix,
                            std::span<const int> candidates) const override {
    int target = prefix.back();
    int tpos = position_[static_cast<std::size_t>(target)];
    std::vector<double> out;
    out.reserve(candidates.size());
    for (int c : candidates) {
      if (c == target) {
        out.push_back(-(static_cast<double>(rank_) - 1.5));  // between rank_-1 others
      } else {
        int pos = position_[static_cast<std::size_t>(c)];
        if (pos > tpos) --pos;  // strength order with the target removed
        out.push_back(-static_cast<double>(pos));
      }
    }
    return out;
  }
  int outscorers() const { return rank_ - 1; }

 private:
  std::string name_ = "constant_rank";
  std::vector<int> position_;
  int rank_;
};

Outcome criterion_7() {
  auto t0 = std::chrono::steady_clock::now();
  PhenomenonFixture fx;
  HeadSpecialistScorer a(2024);
  ConstantRankScorer b(4048, 60);
  std::vector<const ScoreFunction*> models{&a, &b};
  MetricSpec hr10{MetricKind::HitRate, 10};

  // full ranking, checked against an instance-by-instance brute force
  TargetSetSpec full_spec{Strategy::Full, 0, 9000};
  auto full = evaluate_run(models, fx.instances, fx.kItems, fx.counts, full_spec, 0, hr10);
  double brute_a = 0.0, brute_b = 0.0;
  for (const auto& inst : fx.instances) {
    for (int mi = 0; mi < 2; ++mi) {
      std::vector<int> cands(fx.kItems);
      std::iota(cands.begin(), cands.end(), 0);
      auto scores = models[static_cast<std::size_t>(mi)]->score(inst.prefix, cands);
      double target_score = scores[static_cast<std::size_t>(inst.relevant)];
      int better = 0;
      for (int c = 0; c < fx.kItems; ++c) {
        if (scores[static_cast<std::size_t>(c)] > target_score ||
            (scores[static_cast<std::size_t>(c)] == target_score && c < inst.relevant)) {
          ++better;
        }
      }
      double hit = better + 1 <= 10 ? 1.0 : 0.0;
      (mi == 0 ? brute_a : brute_b) += hit;
    }
  }
  brute_a /= fx.instances.size();
  brute_b /= fx.instances.size();
  if (std::abs(full.model_means[0] - brute_a) > 1e-12 ||
      std::abs(full.model_means[1] - brute_b) > 1e-12) {
    return {false, false, fmt("full evaluation disagrees with brute force: %.6f/%.6f vs %.6f/%.6f",
                              full.model_means[0], full.model_means[1], brute_a, brute_b)};
  }
  // closed-form expectations, fixed before the run:
  //   full A ~ 0.05 + 0.95 * 10/1000; full B = 0 (rank 60 > 10)
  if (!(full.model_means[0] > 0.04 && full.model_means[0] < 0.08)) {
    return {false, false, fmt("full HR@10 of A out of range: %.4f", full.model_means[0])};
  }
  if (full.model_means[1] != 0.0) {
    return {false, false, fmt("full HR@10 of B should be exactly 0, got %.6f", full.model_means[1])};
  }

  // sampled evaluation, 20 runs at eta = 100
  TargetSetSpec spec{Strategy::Uniform, fx.kEta, 9000};
  auto stats = repeated_sampled_evaluation(models, fx.instances, fx.kItems, fx.counts, spec, 20, hr10);

  // pre-registered expected sampled HR@10:
  //   A: 0.05 * 1 + 0.95 * 10/101           (target uniform among 101 candidates)
  //   B: P[Hypergeom(999, 59, 100) <= 9]    (at most 9 of the 59 outscorers drawn)
  double expect_a = 0.05 + 0.95 * (10.0 / 101.0);
  double expect_b = testsup::hypergeom_cdf(999, b.outscorers(), fx.kEta, 9);
  if (std::abs(stats[0].mean_of_means - expect_a) > 0.015) {
    return {false, false, fmt("sampled A %.4f vs expected %.4f", stats[0].mean_of_means, expect_a)};
  }
  if (std::abs(stats[1].mean_of_means - expect_b) > 0.01) {
    return {false, false, fmt("sampled B %.4f vs expected %.4f", stats[1].mean_of_means, expect_b)};
  }

  // the phenomenon: full prefers A, uniform sampling inverts the pair
  auto full_rank = rank_models(std::vector<std::pair<std::string, double>>{
      {a.name(), full.model_means[0]}, {b.name(), full.model_means[1]}});
  auto sampled_rank = rank_models(std::vector<std::pair<std::string, double>>{
      {a.name(), stats[0].mean_of_means}, {b.name(), stats[1].mean_of_means}});
  if (full_rank.rank_of(a.name()) != 1) return {false, false, "full ranking must prefer A"};
  if (sampled_rank.rank_of(b.name()) != 1) return {false, false, "sampled ranking must prefer B"};
  auto tau = kendall_tau_a(sampled_rank, full_rank);
  if (tau.tau != -1.0) return {false, false, fmt("tau %.3f != -1", tau.tau)};

  double secs = seconds_since(t0);
  return {true, false,
          fmt("full A=%.4f B=0; sampled A=%.4f (exp %.4f) B=%.4f (exp %.4f); tau=-1 (%.0fs)",
              full.model_means[0], stats[0].mean_of_means, expect_a, stats[1].mean_of_means,
              expect_b, secs)};
}

Outcome criterion_8() {
  auto t0 = std::chrono::steady_clock::now();
  PhenomenonFixture fx;
  HeadSpecialistScorer a(2024);
  ConstantRankScorer b(4048, 60);
  std::vector<const ScoreFunction*> models{&a, &b};
  MetricSpec hr10{MetricKind::HitRate, 10};

  TargetSetSpec spec{Strategy::Uniform, fx.kEta, 9000};
  auto stats = repeated_sampled_evaluation(models, fx.instances, fx.kItems, fx.counts, spec, 20, hr10);
  for (const auto& s : stats) {
    if (s.std_of_means >= 0.01) {
      return {false, false, fmt("%s run std %.5f >= 0.01", s.model.c_str(), s.std_of_means)};
    }
  }

  // eta equals the pool size (999 for every instance): sampling exhausts the
  // pool, every run is identical, the spread is exactly zero
  TargetSetSpec all{Strategy::Uniform, fx.kItems - 1, 9000};
  auto degenerate = repeated_sampled_evaluation(models, fx.instances, fx.kItems, fx.counts, all, 20,
                                                hr10);
  for (const auto& s : degenerate) {
    if (s.std_of_means != 0.0) {
      return {false, false, fmt("%s exhausted-pool std %.3e != 0", s.model.c_str(), s.std_of_means)};
    }
  }
  double secs = seconds_since(t0);
  return {true, false, fmt("run std %.4f / %.4f < 0.01; exhausted-pool std exactly 0 (%.0fs)",
                           stats[0].std_of_means, stats[1].std_of_means, secs)};
}

// --- criterion 9: sweep boundary --------------------------------------------

Outcome criterion_9() {
  PhenomenonFixture fx;
  HeadSpecialistScorer a(2024);
  ConstantRankScorer b(4048, 60);
  PopularityScorer pop(fx.counts);
  std::vector<const ScoreFunction*> models{&a, &b, &pop};
  MetricSpec hr10{MetricKind::HitRate, 10};

  std::vector<EtaValue> etas{EtaValue(50), std::nullopt};
  auto sweep = sample_size_sweep(models, fx.instances, fx.kItems, fx.counts, Strategy::Uniform,
                                 etas, 2, 31, hr10);
  const auto& full_point = sweep.points.back();
  if (full_point.eta.has_value()) return {false, false, "last sweep point should be FULL"};
  if (full_point.tau_vs_full.tau != 1.0) {
    return {false, false, fmt("FULL point tau %.3f != 1", full_point.tau_vs_full.tau)};
  }
  if (!full_point.consistent_with_full) return {false, false, "FULL point must be consistent"};
  for (const auto& e : sweep.full_ranking.entries) {
    if (full_point.ranking.rank_of(e.model) != e.rank) {
      return {false, false, "FULL point ranking differs from the full evaluation"};
    }
  }
  return {true, false, "eta=FULL reproduces the full ranking: tau=1, consistent"};
}

// --- criterion 10: end-to-end determinism ------------------------------------

Outcome criterion_10() {
  namespace fs = std::filesystem;
  auto t0 = std::chrono::steady_clock::now();
  fs::path base = fs::temp_directory_path() / ("seqrec_acc10_" + std::to_string(::getpid()));
  fs::remove_all(base);
  fs::create_directories(base);
  auto ds = testsup::cycle_dataset(12, 60, 8);
  save_dataset(ds, (base / "bundle").string());

  auto config_for = [&](const std::string& out) {
    return "[dataset]\n"
           "name = cycle\n"
           "bundle = " + (base / "bundle").string() + "\n"
           "[experiment]\n"
           "metrics = HR@10,NDCG@10\n"
           "strategies = full,uniform,popularity\n"
           "eta = 5\n"
           "runs = 4\n"
           "seed = 99\n"
           "output = " + out + "\n"
           "[model gru]\n"
           "arch = gru\n"
           "embedding = 8\n"
           "hidden = 8\n"
           "epochs = 3\n"
           "batch = 16\n"
           "lr = 0.005\n"
           "[model popularity]\n"
           "arch = popularity\n"
           "[model markov]\n"
           "arch = markov\n";
  };
  auto read = [](const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>());
  };

  run_experiment(ExperimentConfig::from(KvConfig::parse_string(config_for((base / "a").string()))));
  run_experiment(ExperimentConfig::from(KvConfig::parse_string(config_for((base / "b").string()))));
  for (const char* f : {"report.json", "results_long.csv", "summary.txt", "sweep_long.csv"}) {
    std::string ba = read(base / "a" / f);
    std::string bb = read(base / "b" / f);
    if (ba.empty() || ba != bb) {
      return {false, false, fmt("%s differs between identical runs", f)};
    }
  }
  fs::remove_all(base);
  double secs = seconds_since(t0);
  return {true, false, fmt("report bodies byte-identical across independent runs (%.0fs)", secs)};
}

using CriterionFn = Outcome (*)();

struct Criterion {
  int number;
  const char* title;
  CriterionFn fn;
};

const Criterion kCriteria[] = {
    {1, "metric oracle equivalence", criterion_1},
    {2, "Kendall tau reproduction from published rank vectors", criterion_2},
    {3, "ML-1m preprocessing statistics (external data)", criterion_3},
    {4, "sampling goodness of fit", criterion_4},
    {5, "model gradient checks vs central differences", criterion_5},
    {6, "trainability on the deterministic cycle", criterion_6},
    {7, "sampled-vs-full ranking inversion", criterion_7},
    {8, "repeated-run stability", criterion_8},
    {9, "sweep boundary at eta = FULL", criterion_9},
    {10, "end-to-end determinism", criterion_10},
};

}  // namespace

int main(int argc, char** argv) {
  int only = argc > 1 ? std::atoi(argv[1]) : 0;
  int failures = 0;
  for (const auto& c : kCriteria) {
    if (only != 0 && c.number != only) continue;
    Outcome out;
    try {
      out = c.fn();
    } catch (const std::exception& e) {
      out = {false, false, std::string("exception: ") + e.what()};
    }
    const char* tag = out.pass ? (out.skipped ? "SKIP" : "PASS") : "FAIL";
    std::printf("[%s] criterion %2d: %s — %s\n", tag, c.number, c.title, out.detail.c_str());
    std::fflush(stdout);
    if (!out.pass) ++failures;
  }
  return failures;
}
