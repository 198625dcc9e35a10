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
#include "seqrec/targetset.hpp"

#include <algorithm>
#include <map>
#include <set>

#include "doctest.h"
#include "stat_support.hpp"

using namespace seqrec;

namespace {

std::set<int> as_set(const std::vector<int>& xs) { return std::set<int>(xs.begin(), xs.end()); }

}  // namespace

TEST_CASE("full target set is the whole catalog and ignores the seed") {
  auto inst = EvaluationInstance::make({1, 2, 3}, 4);
  auto ts = build_full(inst, 10);
  CHECK(ts.candidates.size() == 10);
  CHECK(as_set(ts.candidates).count(4) == 1);

  auto single = EvaluationInstance::make({0}, 0);
  auto ts1 = build_full(single, 1);
  CHECK(ts1.candidates == std::vector<int>{0});

  // optional exclusion variant drops prefix items but keeps the relevant one
  auto ts2 = build_full(inst, 10, /*exclude_seen=*/true);
  CHECK(ts2.candidates.size() == 7);
  CHECK(as_set(ts2.candidates).count(4) == 1);
  CHECK(as_set(ts2.candidates).count(1) == 0);
}

TEST_CASE("uniform sampling takes min(eta, pool) negatives plus the relevant item") {
  auto inst = EvaluationInstance::make({}, 0);
  Rng rng(1);
  auto ts = build_uniform(inst, 201, 100, rng);  // pool = 200
  CHECK(ts.candidates.size() == 101);

  std::vector<std::string> warnings;
  Rng rng2(1);
  auto small = build_uniform(inst, 51, 100, rng2, &warnings);  // pool = 50
  CHECK(small.candidates.size() == 51);
  CHECK(warnings.size() == 1);
}

TEST_CASE("sampled negatives never include the relevant item or prefix items") {
  auto inst = EvaluationInstance::make({3, 5, 7}, 11);
  std::vector<std::int64_t> counts(50, 1);
  for (std::uint64_t run = 0; run < 200; ++run) {
    Rng rng = Rng::stream(99, {run});
    auto ts = build_uniform(inst, 50, 10, rng);
    auto got = as_set(ts.candidates);
    CHECK(got.count(11) == 1);
    CHECK(got.count(3) == 0);
    CHECK(got.count(5) == 0);
    CHECK(got.count(7) == 0);
    CHECK(got.size() == ts.candidates.size());  // no duplicates
    Rng rng_p = Rng::stream(99, {run});
    auto tp = build_popularity(inst, counts, 10, rng_p);
    auto gp = as_set(tp.candidates);
    CHECK(gp.count(11) == 1);
    CHECK(gp.count(3) == 0);
  }
}

TEST_CASE("sampling is reproducible for a fixed seed") {
  auto inst = EvaluationInstance::make({2}, 9);
  std::vector<std::int64_t> counts{5, 4, 3, 9, 1, 1, 2, 7, 8, 6, 2, 2};
  Rng a = Rng::stream(7, {3, 14});
  Rng b = Rng::stream(7, {3, 14});
  auto ta = build_uniform(inst, 12, 5, a);
  auto tb = build_uniform(inst, 12, 5, b);
  CHECK(ta.candidates == tb.candidates);
  Rng c = Rng::stream(7, {3, 14});
  Rng d = Rng::stream(7, {3, 14});
  auto tc = build_popularity(inst, counts, 5, c);
  auto td = build_popularity(inst, counts, 5, d);
  CHECK(tc.candidates == td.candidates);
}

TEST_CASE("empty negative pool raises a degenerate-instance error") {
  auto inst = EvaluationInstance::make({0, 1, 2}, 3);
  Rng rng(1);
  CHECK_THROWS_AS(build_uniform(inst, 4, 5, rng), DegenerateInstanceError);
  std::vector<std::int64_t> counts{1, 1, 1, 1};
  CHECK_THROWS_AS(build_popularity(inst, counts, 5, rng), DegenerateInstanceError);
}

TEST_CASE("uniform inclusion frequencies are 3/10 on a 10-item pool with eta 3") {
  // 100k trials; chi-square goodness of fit at alpha = 0.01 with the
  // finite-population correction for without-replacement draws.
  const int trials = 100000;
  auto inst = EvaluationInstance::make({}, 10);  // items 0..9 form the pool
  std::vector<double> included(10, 0.0);
  for (int t = 0; t < trials; ++t) {
    Rng rng = Rng::stream(2024, {static_cast<std::uint64_t>(t)});
    auto ts = build_uniform(inst, 11, 3, rng);
    for (int c : ts.candidates) {
      if (c != 10) included[static_cast<std::size_t>(c)] += 1.0;
    }
  }
  std::vector<double> expected(10, trials * 0.3);
  double stat = testsup::chi_square_statistic_fpc(included, expected, 10, 3);
  CHECK(stat < testsup::chi_square_critical_99(9));
}

TEST_CASE("popularity single draws follow normalized counts") {
  const int trials = 100000;
  std::vector<std::int64_t> counts{10, 20, 30, 15, 25};
  auto inst = EvaluationInstance::make({}, 5);
  std::vector<double> drawn(5, 0.0);
  for (int t = 0; t < trials; ++t) {
    Rng rng = Rng::stream(77, {static_cast<std::uint64_t>(t)});
    auto ts = build_popularity(inst, counts, 1, rng);
    REQUIRE(ts.candidates.size() == 2);
    drawn[static_cast<std::size_t>(ts.candidates[1])] += 1.0;
  }
  std::vector<double> expected;
  for (auto c : counts) expected.push_back(trials * static_cast<double>(c) / 100.0);
  double stat = testsup::chi_square_statistic(drawn, expected);
  CHECK(stat < testsup::chi_square_critical_99(4));
}

TEST_CASE("popularity pair probabilities match the analytic renormalized draws") {
  // N = {a,b,c} with weights {2,1,1}, eta = 2:
  // P({a,b}) = P(a then b) + P(b then a) = (2/4)(1/2) + (1/4)(2/3) = 5/12.
  const int trials = 200000;
  std::vector<std::int64_t> counts{2, 1, 1};
  auto inst = EvaluationInstance::make({}, 3);
  int ab = 0;
  for (int t = 0; t < trials; ++t) {
    Rng rng = Rng::stream(5150, {static_cast<std::uint64_t>(t)});
    auto ts = build_popularity(inst, counts, 2, rng);
    auto got = as_set(ts.candidates);
    if (got.count(0) && got.count(1)) ++ab;
  }
  double p = static_cast<double>(ab) / trials;
  CHECK(p == doctest::Approx(5.0 / 12.0).epsilon(0.02));
}

TEST_CASE("popularity with equal counts behaves like uniform sampling") {
  const int trials = 50000;
  std::vector<std::int64_t> counts(8, 3);
  auto inst = EvaluationInstance::make({}, 8);
  std::vector<double> inc_pop(8, 0.0), inc_uni(8, 0.0);
  for (int t = 0; t < trials; ++t) {
    Rng a = Rng::stream(31, {static_cast<std::uint64_t>(t)});
    Rng b = Rng::stream(32, {static_cast<std::uint64_t>(t)});
    for (int c : build_popularity(inst, counts, 2, a).candidates) {
      if (c != 8) inc_pop[static_cast<std::size_t>(c)] += 1.0;
    }
    for (int c : build_uniform(inst, 9, 2, b).candidates) {
      if (c != 8) inc_uni[static_cast<std::size_t>(c)] += 1.0;
    }
  }
  // both should match the analytic inclusion probability 2/8
  std::vector<double> expected(8, trials * 0.25);
  CHECK(testsup::chi_square_statistic_fpc(inc_pop, expected, 8, 2) <
        testsup::chi_square_critical_99(5 + 2));
  CHECK(testsup::chi_square_statistic_fpc(inc_uni, expected, 8, 2) <
        testsup::chi_square_critical_99(5 + 2));
}

TEST_CASE("zero-count items are excluded unless smoothing is on") {
  std::vector<std::int64_t> counts{0, 5, 0, 5, 5};
  auto inst = EvaluationInstance::make({}, 5);
  for (int t = 0; t < 200; ++t) {
    Rng rng = Rng::stream(4, {static_cast<std::uint64_t>(t)});
    auto ts = build_popularity(inst, counts, 3, rng);
    auto got = as_set(ts.candidates);
    CHECK(got.count(0) == 0);
    CHECK(got.count(2) == 0);
  }
  bool saw_zero_count_item = false;
  for (int t = 0; t < 200; ++t) {
    Rng rng = Rng::stream(4, {static_cast<std::uint64_t>(t)});
    PopularityOptions opts;
    opts.add_one_smoothing = true;
    auto ts = build_popularity(inst, counts, 3, rng, opts);
    if (as_set(ts.candidates).count(0) || as_set(ts.candidates).count(2)) {
      saw_zero_count_item = true;
    }
  }
  CHECK(saw_zero_count_item);
}

TEST_CASE("all-zero counts fall back to uniform with a warning") {
  std::vector<std::int64_t> counts{0, 0, 0, 0};
  auto inst = EvaluationInstance::make({}, 0);
  std::vector<std::string> warnings;
  Rng rng(8);
  auto ts = build_popularity(inst, counts, 2, rng, {}, &warnings);
  CHECK(ts.candidates.size() == 3);
  REQUIRE(!warnings.empty());
  CHECK(warnings[0].find("uniform") != std::string::npos);
}

TEST_CASE("rank_target_set sorts by score with index tie-break") {
  std::vector<int> candidates{7, 3};
  std::vector<double> scores{0.9, 0.1};
  auto ranked = rank_target_set(scores, candidates);
  CHECK(ranked.items() == std::vector<int>{7, 3});

  std::vector<int> tied{9, 4};
  std::vector<double> same{0.5, 0.5};
  CHECK(rank_target_set(same, tied).items() == std::vector<int>{4, 9});
}

TEST_CASE("rank_target_set matches an independent comparison sort on random scores") {
  Rng rng(11);
  std::vector<int> candidates(1000);
  std::iota(candidates.begin(), candidates.end(), 0);
  std::vector<double> scores;
  scores.reserve(candidates.size());
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    scores.push_back(rng.next_double());
  }
  auto ranked = rank_target_set(scores, candidates);

  std::vector<std::pair<double, int>> oracle;
  for (std::size_t i = 0; i < candidates.size(); ++i) oracle.push_back({-scores[i], candidates[i]});
  std::sort(oracle.begin(), oracle.end());
  for (std::size_t i = 0; i < oracle.size(); ++i) CHECK(ranked.items()[i] == oracle[i].second);
}

TEST_CASE("rank_target_set rejects non-finite scores naming the item") {
  std::vector<int> candidates{1, 42};
  std::vector<double> scores{0.5, std::nan("")};
  try {
    rank_target_set(scores, candidates);
    FAIL("expected invalid_argument");
  } catch (const std::invalid_argument& e) {
    CHECK(std::string(e.what()).find("42") != std::string::npos);
  }
}
