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
#include <cstddef>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

namespace seqrec {

enum class MetricKind { HitRate, Ndcg };

// A ranking cutoff metric, e.g. HR@10 or NDCG@10.
struct MetricSpec {
  MetricKind kind = MetricKind::HitRate;
  int k = 10;

  std::string label() const {
    return (kind == MetricKind::HitRate ? "HR@" : "NDCG@") + std::to_string(k);
  }

  // Parses labels of the form "HR@10" / "NDCG@5".
  static MetricSpec parse(const std::string& s) {
    auto at = s.find('@');
    if (at == std::string::npos) throw std::invalid_argument("bad metric label: " + s);
    std::string head = s.substr(0, at);
    int k = std::stoi(s.substr(at + 1));
    if (k < 1) throw std::invalid_argument("metric cutoff must be >= 1: " + s);
    if (head == "HR" || head == "hr") return {MetricKind::HitRate, k};
    if (head == "NDCG" || head == "ndcg") return {MetricKind::Ndcg, k};
    throw std::invalid_argument("unknown metric kind: " + s);
  }

  bool operator==(const MetricSpec&) const = default;
};

// Items in descending score order. Positions are 1-based.
class RankedList {
 public:
  explicit RankedList(std::vector<int> items) : items_(std::move(items)) {
    std::unordered_set<int> seen;
    seen.reserve(items_.size());
    for (int it : items_) {
      if (!seen.insert(it).second) {
        throw std::invalid_argument("RankedList: duplicate item " + std::to_string(it));
      }
    }
  }

  // 1-based rank of `item`, or 0 when absent.
  int rank_of(int item) const {
    for (std::size_t i = 0; i < items_.size(); ++i) {
      if (items_[i] == item) return static_cast<int>(i) + 1;
    }
    return 0;
  }

  const std::vector<int>& items() const { return items_; }
  std::size_t size() const { return items_.size(); }

 private:
  std::vector<int> items_;
};

namespace detail {
inline int require_rank(const RankedList& ranking, int relevant) {
  int p = ranking.rank_of(relevant);
  if (p == 0) {
    throw std::logic_error("relevant item " + std::to_string(relevant) +
                           " is not in the ranked target set");
  }
  return p;
}
}  // namespace detail

// 1 iff the relevant item is ranked within the top k. With a single relevant
// item this coincides with Recall@k.
inline double hit_rate_at_k(const RankedList& ranking, int relevant, int k) {
  if (k < 1) throw std::invalid_argument("k must be >= 1");
  return detail::require_rank(ranking, relevant) <= k ? 1.0 : 0.0;
}

enum class NdcgConvention {
  // 1/log2(p+1), normalized by the single-item ideal DCG; values in [0, 1].
  // This is the convention used by the common sequential-recommender suites.
  NormalizedBase2,
  // The literal discounted gain 1/ln(p+1) with no normalization. Kept for
  // comparison runs; note 1/ln(2) > 1 at rank 1.
  RawNaturalLog,
};

// Position-discounted gain of the single relevant item.
inline double ndcg_at_k(const RankedList& ranking, int relevant, int k,
                        NdcgConvention convention = NdcgConvention::NormalizedBase2) {
  if (k < 1) throw std::invalid_argument("k must be >= 1");
  int p = detail::require_rank(ranking, relevant);
  if (p > k) return 0.0;
  double pos = static_cast<double>(p);
  if (convention == NdcgConvention::RawNaturalLog) return 1.0 / std::log(pos + 1.0);
  return 1.0 / std::log2(pos + 1.0);
}

inline double metric_value(const MetricSpec& spec, const RankedList& ranking, int relevant) {
  return spec.kind == MetricKind::HitRate ? hit_rate_at_k(ranking, relevant, spec.k)
                                          : ndcg_at_k(ranking, relevant, spec.k);
}

// Pairwise summation. Used for every metric aggregation so that results do
// not depend on how instances were distributed over evaluation workers.
inline double pairwise_sum(std::span<const double> xs) {
  if (xs.size() <= 16) {
    double s = 0.0;
    for (double x : xs) s += x;
    return s;
  }
  std::size_t half = xs.size() / 2;
  return pairwise_sum(xs.subspan(0, half)) + pairwise_sum(xs.subspan(half));
}

inline double mean_value(std::span<const double> xs) {
  if (xs.empty()) throw std::invalid_argument("mean over empty collection");
  return pairwise_sum(xs) / static_cast<double>(xs.size());
}

// Mean metric over (ranking, relevant) instances.
inline double mean_metric(std::span<const std::pair<RankedList, int>> instances,
                          const MetricSpec& spec) {
  if (instances.empty()) throw std::invalid_argument("mean_metric: no instances");
  std::vector<double> values;
  values.reserve(instances.size());
  for (const auto& [ranking, relevant] : instances) {
    values.push_back(metric_value(spec, ranking, relevant));
  }
  return mean_value(values);
}

}  // namespace seqrec
