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
// Shared synthetic datasets for the unit and acceptance suites.
#pragma once

#include <string>
#include <vector>

#include "seqrec/dataset.hpp"

namespace testsup {

// Deterministic cycle: user u interacts with (u, u+1, ..., u+len-1) mod
// n_items, so item i is always followed by i+1. Perfectly learnable: a
// first-order Markov model solves it exactly.
inline seqrec::SequenceDataset cycle_dataset(int n_items = 20, int n_users = 200, int len = 12) {
  seqrec::SequenceDataset ds;
  for (int i = 0; i < n_items; ++i) ds.catalog.push_back("i" + std::to_string(i));
  ds.popularity.assign(static_cast<std::size_t>(n_items), 0);
  for (int u = 0; u < n_users; ++u) {
    ds.users.push_back("u" + std::to_string(u));
    std::vector<int> seq;
    seq.reserve(static_cast<std::size_t>(len));
    for (int j = 0; j < len; ++j) {
      int item = (u + j) % n_items;
      seq.push_back(item);
      ds.popularity[static_cast<std::size_t>(item)]++;
    }
    ds.sequences.push_back(std::move(seq));
  }
  return ds;
}

}  // namespace testsup
