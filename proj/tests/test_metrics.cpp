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
#include "seqrec/metrics.hpp"

#include <cmath>
#include <numeric>
#include <vector>

#include "doctest.h"
#include "seqrec/rng.hpp"

using namespace seqrec;

namespace {

// Independent linear-scan oracle: walks the list counting positions, then
// applies the closed forms directly. Kept free of RankedList internals.
double oracle_hr(const std::vector<int>& items, int relevant, int k) {
  int pos = 0;
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (items[i] == relevant) {
      pos = static_cast<int>(i) + 1;
      break;
    }
  }
  REQUIRE(pos > 0);
  return pos <= k ? 1.0 : 0.0;
}

double oracle_ndcg(const std::vector<int>& items, int relevant, int k) {
  int pos = 0;
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (items[i] == relevant) {
      pos = static_cast<int>(i) + 1;
      break;
    }
  }
  REQUIRE(pos > 0);
  if (pos > k) return 0.0;
  return std::log(2.0) / std::log(static_cast<double>(pos) + 1.0);
}

RankedList identity_list(int n) {
  std::vector<int> items(static_cast<std::size_t>(n));
  std::iota(items.begin(), items.end(), 0);
  return RankedList(std::move(items));
}

}  // namespace

TEST_CASE("hit rate boundary positions") {
  RankedList list = identity_list(20);
  CHECK(hit_rate_at_k(list, 0, 10) == 1.0);    // rank 1
  CHECK(hit_rate_at_k(list, 10, 10) == 0.0);   // rank 11, just outside
  CHECK(hit_rate_at_k(list, 9, 10) == 1.0);    // rank 10, inclusive cutoff
}

TEST_CASE("ndcg closed forms") {
  RankedList list = identity_list(20);
  CHECK(ndcg_at_k(list, 0, 10) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(ndcg_at_k(list, 2, 10) == doctest::Approx(0.5).epsilon(1e-15));  // rank 3: 1/log2(4)
  CHECK(ndcg_at_k(list, 6, 5) == 0.0);                                   // rank 7 > k=5
  // literal unnormalized form with natural log
  CHECK(ndcg_at_k(list, 0, 10, NdcgConvention::RawNaturalLog) ==
        doctest::Approx(1.0 / std::log(2.0)).epsilon(1e-15));
}

TEST_CASE("relevant item missing from the target set is a contract violation") {
  RankedList list = identity_list(5);
  CHECK_THROWS_AS(hit_rate_at_k(list, 99, 3), std::logic_error);
  CHECK_THROWS_AS(ndcg_at_k(list, 99, 3), std::logic_error);
}

TEST_CASE("ranked list rejects duplicates") {
  CHECK_THROWS_AS(RankedList({1, 2, 1}), std::invalid_argument);
}

TEST_CASE("mean metric basics") {
  MetricSpec hr10{MetricKind::HitRate, 10};
  std::vector<std::pair<RankedList, int>> two{{identity_list(20), 0}, {identity_list(20), 15}};
  CHECK(mean_metric(two, hr10) == doctest::Approx(0.5));
  std::vector<std::pair<RankedList, int>> none;
  CHECK_THROWS_AS(mean_metric(none, hr10), std::invalid_argument);
}

TEST_CASE("metrics match the linear-scan oracle on random rankings") {
  Rng rng(2024);
  std::vector<double> hr_vals, hr_oracle_vals;
  for (int trial = 0; trial < 1000; ++trial) {
    int n = 1 + static_cast<int>(rng.next_below(200));
    std::vector<int> items(static_cast<std::size_t>(n));
    std::iota(items.begin(), items.end(), 0);
    rng.shuffle(items);
    int relevant = static_cast<int>(rng.next_below(static_cast<std::uint64_t>(n)));
    int k = 1 + static_cast<int>(rng.next_below(static_cast<std::uint64_t>(n)));
    RankedList list(items);
    double hr = hit_rate_at_k(list, relevant, k);
    double nd = ndcg_at_k(list, relevant, k);
    CHECK(hr == oracle_hr(items, relevant, k));
    CHECK(nd == doctest::Approx(oracle_ndcg(items, relevant, k)).epsilon(1e-12));
    // invariants
    CHECK((hr == 0.0 || hr == 1.0));
    CHECK(nd >= 0.0);
    CHECK(nd <= 1.0);
    CHECK((nd > 0.0) == (hr == 1.0));
    hr_vals.push_back(hr);
    hr_oracle_vals.push_back(oracle_hr(items, relevant, k));
  }
  CHECK(mean_value(hr_vals) ==
        doctest::Approx(std::accumulate(hr_oracle_vals.begin(), hr_oracle_vals.end(), 0.0) /
                        static_cast<double>(hr_oracle_vals.size()))
            .epsilon(1e-12));
}

TEST_CASE("metrics are monotone in k and blind to permutations below the hit") {
  Rng rng(7);
  for (int trial = 0; trial < 50; ++trial) {
    int n = 20;
    std::vector<int> items(static_cast<std::size_t>(n));
    std::iota(items.begin(), items.end(), 0);
    rng.shuffle(items);
    RankedList list(items);
    int relevant = items[5];  // rank 6
    double prev_hr = 0.0, prev_nd = 0.0;
    for (int k = 1; k <= n; ++k) {
      double hr = hit_rate_at_k(list, relevant, k);
      double nd = ndcg_at_k(list, relevant, k);
      CHECK(hr >= prev_hr);
      CHECK(nd >= prev_nd);
      prev_hr = hr;
      prev_nd = nd;
    }
    // shuffle strictly-below-the-hit tail
    std::vector<int> tail(items.begin() + 6, items.end());
    rng.shuffle(tail);
    std::vector<int> permuted(items.begin(), items.begin() + 6);
    permuted.insert(permuted.end(), tail.begin(), tail.end());
    RankedList plist(permuted);
    for (int k : {1, 3, 6, 10, 20}) {
      CHECK(hit_rate_at_k(plist, relevant, k) == hit_rate_at_k(list, relevant, k));
      CHECK(ndcg_at_k(plist, relevant, k) == ndcg_at_k(list, relevant, k));
    }
  }
}

TEST_CASE("metric spec labels parse and print") {
  CHECK(MetricSpec::parse("HR@10").label() == "HR@10");
  CHECK(MetricSpec::parse("NDCG@5").label() == "NDCG@5");
  CHECK(MetricSpec::parse("ndcg@5").kind == MetricKind::Ndcg);
  CHECK_THROWS_AS(MetricSpec::parse("MRR@10"), std::invalid_argument);
  CHECK_THROWS_AS(MetricSpec::parse("HR@0"), std::invalid_argument);
}

TEST_CASE("pairwise sum is order-robust") {
  std::vector<double> xs(10001);
  for (std::size_t i = 0; i < xs.size(); ++i) xs[i] = 1.0 / static_cast<double>(i + 1);
  double forward = pairwise_sum(xs);
  std::vector<double> rev(xs.rbegin(), xs.rend());
  double backward = pairwise_sum(rev);
  CHECK(forward == doctest::Approx(backward).epsilon(1e-13));
}
