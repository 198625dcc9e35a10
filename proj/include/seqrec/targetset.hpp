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

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "seqrec/dataset.hpp"
#include "seqrec/metrics.hpp"
#include "seqrec/rng.hpp"

namespace seqrec {

enum class Strategy { Full, Uniform, Popularity };

inline std::string strategy_label(Strategy s) {
  switch (s) {
    case Strategy::Full: return "full";
    case Strategy::Uniform: return "uniform";
    case Strategy::Popularity: return "popularity";
  }
  return "?";
}

inline Strategy parse_strategy(const std::string& s) {
  if (s == "full") return Strategy::Full;
  if (s == "uniform") return Strategy::Uniform;
  if (s == "popularity") return Strategy::Popularity;
  throw std::invalid_argument("unknown strategy: " + s);
}

// How to build the candidate set a model must rank for one instance.
struct TargetSetSpec {
  Strategy strategy = Strategy::Uniform;
  int eta = 100;              // number of negative samples; ignored for full
  std::uint64_t seed = 0;     // base seed; streams derived per (run, instance)

  bool sampled() const { return strategy != Strategy::Full; }
};

// The candidate list for one instance: the relevant item exactly once plus
// negatives. Candidate order carries no meaning.
struct TargetSet {
  std::vector<int> candidates;
  int relevant = -1;
};

// Raised when the eligible negative pool N = I \ {relevant} \ set(prefix) is
// empty; such instances are skipped and counted by the evaluation driver.
struct DegenerateInstanceError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct PopularityOptions {
  // Items with zero count are normally excluded from the pool; with add-one
  // smoothing every eligible item gets weight count+1 instead.
  bool add_one_smoothing = false;
};

// The full strategy ranks the entire catalog. No exclusion of seen items by
// default; pass exclude_seen to drop prefix items (the relevant item stays).
inline TargetSet build_full(const EvaluationInstance& inst, int n_items, bool exclude_seen = false) {
  if (n_items < 1) throw std::invalid_argument("build_full: empty catalog");
  TargetSet ts;
  ts.relevant = inst.relevant;
  ts.candidates.reserve(static_cast<std::size_t>(n_items));
  for (int i = 0; i < n_items; ++i) {
    if (exclude_seen && i != inst.relevant && inst.seen.count(i)) continue;
    ts.candidates.push_back(i);
  }
  return ts;
}

namespace detail {

inline bool eligible_negative(const EvaluationInstance& inst, int item) {
  return item != inst.relevant && inst.seen.count(item) == 0;
}

// Fenwick tree over non-negative integer weights; supports O(log n) draw of
// an index with probability weight/total, using exact integer arithmetic.
class WeightedIndex {
 public:
  explicit WeightedIndex(std::span<const std::int64_t> weights)
      : n_(weights.size()), tree_(weights.size() + 1, 0), weight_(weights.begin(), weights.end()) {
    for (std::size_t i = 0; i < n_; ++i) tree_[i + 1] = weights[i];
    for (std::size_t i = 1; i <= n_; ++i) {
      std::size_t parent = i + (i & (~i + 1));
      if (parent <= n_) tree_[parent] += tree_[i];
    }
    total_ = 0;
    for (std::size_t i = 0; i < n_; ++i) total_ += weights[i];
  }

  std::int64_t total() const { return total_; }

  // Index of the item whose cumulative-weight interval contains r, r in [0, total).
  std::size_t find(std::int64_t r) const {
    std::size_t idx = 0;
    std::size_t mask = std::bit_floor(n_);
    while (mask > 0) {
      std::size_t next = idx + mask;
      if (next <= n_ && tree_[next] <= r) {
        idx = next;
        r -= tree_[next];
      }
      mask >>= 1;
    }
    return idx;  // 0-based
  }

  void remove(std::size_t idx) {
    std::int64_t w = weight_[idx];
    weight_[idx] = 0;
    total_ -= w;
    for (std::size_t i = idx + 1; i <= n_; i += i & (~i + 1)) tree_[i] -= w;
  }

 private:
  std::size_t n_;
  std::vector<std::int64_t> tree_;
  std::vector<std::int64_t> weight_;
  std::int64_t total_ = 0;
};

}  // namespace detail

// Uniform sampling without replacement from N = I \ {relevant} \ set(prefix).
// Selection sampling over the implicit pool: every size-eta subset of N is
// equally likely, with integer-exact inclusion probabilities.
inline TargetSet build_uniform(const EvaluationInstance& inst, int n_items, int eta, Rng& rng,
                               std::vector<std::string>* warnings = nullptr) {
  if (eta < 1) throw std::invalid_argument("build_uniform: eta must be >= 1");
  std::int64_t pool = 0;
  for (int i = 0; i < n_items; ++i) {
    if (detail::eligible_negative(inst, i)) ++pool;
  }
  if (pool == 0) {
    throw DegenerateInstanceError("empty negative pool for relevant item " +
                                  std::to_string(inst.relevant));
  }
  std::int64_t take = std::min<std::int64_t>(eta, pool);
  if (take < eta && warnings != nullptr) {
    warnings->push_back("build_uniform: negative pool has only " + std::to_string(pool) +
                        " items, requested eta=" + std::to_string(eta));
  }
  TargetSet ts;
  ts.relevant = inst.relevant;
  ts.candidates.reserve(static_cast<std::size_t>(take) + 1);
  ts.candidates.push_back(inst.relevant);
  std::int64_t remaining_pool = pool;
  std::int64_t remaining_take = take;
  for (int i = 0; i < n_items && remaining_take > 0; ++i) {
    if (!detail::eligible_negative(inst, i)) continue;
    if (static_cast<std::int64_t>(rng.next_below(static_cast<std::uint64_t>(remaining_pool))) <
        remaining_take) {
      ts.candidates.push_back(i);
      --remaining_take;
    }
    --remaining_pool;
  }
  return ts;
}

// Popularity-weighted sampling without replacement: sequential draws where at
// each step P(item) = count / (sum of counts of items still in the pool).
// Implemented over a Fenwick tree, so each draw is exact in integer
// arithmetic and O(log n).
inline TargetSet build_popularity(const EvaluationInstance& inst, std::span<const std::int64_t> counts,
                                  int eta, Rng& rng, const PopularityOptions& opts = {},
                                  std::vector<std::string>* warnings = nullptr) {
  if (eta < 1) throw std::invalid_argument("build_popularity: eta must be >= 1");
  int n_items = static_cast<int>(counts.size());

  std::vector<int> ids;
  std::vector<std::int64_t> weights;
  std::int64_t pool_any = 0;
  for (int i = 0; i < n_items; ++i) {
    if (!detail::eligible_negative(inst, i)) continue;
    ++pool_any;
    if (counts[static_cast<std::size_t>(i)] < 0) {
      throw std::invalid_argument("build_popularity: negative count for item " + std::to_string(i));
    }
    std::int64_t w = counts[static_cast<std::size_t>(i)] + (opts.add_one_smoothing ? 1 : 0);
    if (w > 0) {
      ids.push_back(i);
      weights.push_back(w);
    }
  }
  if (pool_any == 0) {
    throw DegenerateInstanceError("empty negative pool for relevant item " +
                                  std::to_string(inst.relevant));
  }
  if (ids.empty()) {
    if (warnings != nullptr) {
      warnings->push_back("build_popularity: all eligible counts are zero; falling back to uniform");
    }
    return build_uniform(inst, n_items, eta, rng, warnings);
  }

  std::int64_t take = std::min<std::int64_t>(eta, static_cast<std::int64_t>(ids.size()));
  if (take < eta && warnings != nullptr) {
    warnings->push_back("build_popularity: positive-count pool has only " +
                        std::to_string(ids.size()) + " items, requested eta=" + std::to_string(eta));
  }

  TargetSet ts;
  ts.relevant = inst.relevant;
  ts.candidates.reserve(static_cast<std::size_t>(take) + 1);
  ts.candidates.push_back(inst.relevant);
  detail::WeightedIndex index(weights);
  for (std::int64_t d = 0; d < take; ++d) {
    std::int64_t r = static_cast<std::int64_t>(rng.next_below(static_cast<std::uint64_t>(index.total())));
    std::size_t idx = index.find(r);
    ts.candidates.push_back(ids[idx]);
    index.remove(idx);
  }
  return ts;
}

inline TargetSet build_target_set(const EvaluationInstance& inst, int n_items,
                                  std::span<const std::int64_t> counts, const TargetSetSpec& spec,
                                  Rng& rng, std::vector<std::string>* warnings = nullptr,
                                  bool full_excludes_seen = false) {
  switch (spec.strategy) {
    case Strategy::Full: return build_full(inst, n_items, full_excludes_seen);
    case Strategy::Uniform: return build_uniform(inst, n_items, spec.eta, rng, warnings);
    case Strategy::Popularity: return build_popularity(inst, counts, spec.eta, rng, {}, warnings);
  }
  throw std::logic_error("unreachable");
}

// Sorts candidates by descending score; ties broken by ascending item index
// so rankings are deterministic.
inline RankedList rank_target_set(std::span<const double> scores, std::span<const int> candidates) {
  if (scores.size() != candidates.size()) {
    throw std::invalid_argument("rank_target_set: " + std::to_string(scores.size()) + " scores for " +
                                std::to_string(candidates.size()) + " candidates");
  }
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (!std::isfinite(scores[i])) {
      throw std::invalid_argument("rank_target_set: non-finite score for item " +
                                  std::to_string(candidates[i]));
    }
  }
  std::vector<std::size_t> order(candidates.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (scores[a] != scores[b]) return scores[a] > scores[b];
    return candidates[a] < candidates[b];
  });
  std::vector<int> items;
  items.reserve(order.size());
  for (std::size_t i : order) items.push_back(candidates[i]);
  return RankedList(std::move(items));
}

}  // namespace seqrec
