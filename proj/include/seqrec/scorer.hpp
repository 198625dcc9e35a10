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

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace seqrec {

// The uniform interface every model exposes: one real score per candidate
// given an interaction prefix. Scoring must be deterministic for fixed
// parameters (evaluation mode) and is safe to call from parallel workers.
class ScoreFunction {
 public:
  virtual ~ScoreFunction() = default;

  virtual const std::string& name() const = 0;
  virtual std::size_t parameter_count() const { return 0; }
  virtual std::vector<double> score(std::span<const int> prefix,
                                    std::span<const int> candidates) const = 0;
};

}  // namespace seqrec
