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
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#ifdef SEQREC_HAVE_ZLIB
#include <zlib.h>
#endif

namespace seqrec {

struct ParseError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct EmptyInputError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct SplitError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// One raw (user, item, timestamp) event.
struct Interaction {
  std::string user;
  std::string item;
  std::int64_t timestamp = 0;
};

using InteractionLog = std::vector<Interaction>;

// Column mapping for TSV/CSV-like inputs. The delimiter may be multi-byte
// (MovieLens ML-1m uses "::").
struct ColumnFormat {
  std::string delimiter = "\t";
  int user_col = 0;
  int item_col = 1;
  int time_col = 2;
};

struct PreprocessOptions {
  int min_count = 5;
  bool skip_filtering = false;
  // When set, item and user statistics are both computed on the raw log and
  // removed in a single pass. Default is the two-pass scheme: items first,
  // then users on the remaining interactions.
  bool one_pass = false;
};

// Items mapped to dense indices plus per-user item-index sequences ordered by
// timestamp. Immutable after construction; safe to share across threads.
struct SequenceDataset {
  std::vector<std::string> catalog;            // dense index -> item id
  std::vector<std::string> users;              // aligned with sequences
  std::vector<std::vector<int>> sequences;     // item indices per user
  std::vector<std::int64_t> popularity;        // occurrences per item
  PreprocessOptions options;

  int n_items() const { return static_cast<int>(catalog.size()); }
  int n_users() const { return static_cast<int>(users.size()); }
  std::int64_t n_interactions() const {
    std::int64_t n = 0;
    for (const auto& s : sequences) n += static_cast<std::int64_t>(s.size());
    return n;
  }
  double average_length() const {
    return static_cast<double>(n_interactions()) / static_cast<double>(n_users());
  }
  double density() const {
    return static_cast<double>(n_interactions()) /
           (static_cast<double>(n_users()) * static_cast<double>(n_items()));
  }
};

// One test or validation case: an input prefix and the item the model should
// rank first. `seen` caches set(prefix) for the samplers.
struct EvaluationInstance {
  std::vector<int> prefix;
  int relevant = -1;
  std::unordered_set<int> seen;

  static EvaluationInstance make(std::vector<int> prefix, int relevant) {
    EvaluationInstance inst;
    inst.seen = std::unordered_set<int>(prefix.begin(), prefix.end());
    inst.prefix = std::move(prefix);
    inst.relevant = relevant;
    return inst;
  }
};

struct LeaveOneOutSplit {
  std::vector<std::vector<int>> train_sequences;
  std::vector<EvaluationInstance> validation_instances;
  std::vector<EvaluationInstance> test_instances;
};

namespace detail {

// Reads lines from a plain or gzip file (sniffed via the 0x1f 0x8b magic).
class LineReader {
 public:
  explicit LineReader(const std::string& path) {
    {
      std::ifstream probe(path, std::ios::binary);
      if (!probe) throw ParseError("cannot open file: " + path);
      unsigned char magic[2] = {0, 0};
      probe.read(reinterpret_cast<char*>(magic), 2);
      gzipped_ = probe.gcount() == 2 && magic[0] == 0x1f && magic[1] == 0x8b;
    }
    if (gzipped_) {
#ifdef SEQREC_HAVE_ZLIB
      gz_ = gzopen(path.c_str(), "rb");
      if (!gz_) throw ParseError("cannot open gzip file: " + path);
#else
      throw ParseError("gzip input requires zlib support: " + path);
#endif
    } else {
      plain_.open(path, std::ios::binary);
      if (!plain_) throw ParseError("cannot open file: " + path);
    }
  }

  ~LineReader() {
#ifdef SEQREC_HAVE_ZLIB
    if (gz_) gzclose(static_cast<gzFile>(gz_));
#endif
  }

  LineReader(const LineReader&) = delete;
  LineReader& operator=(const LineReader&) = delete;

  bool next(std::string& line) {
    if (!gzipped_) {
      if (!std::getline(plain_, line)) return false;
    } else {
#ifdef SEQREC_HAVE_ZLIB
      line.clear();
      char buf[4096];
      bool got = false;
      for (;;) {
        if (gzgets(static_cast<gzFile>(gz_), buf, sizeof(buf)) == nullptr) break;
        got = true;
        line += buf;
        if (!line.empty() && line.back() == '\n') {
          line.pop_back();
          break;
        }
      }
      if (!got) return false;
#else
      return false;
#endif
    }
    if (!line.empty() && line.back() == '\r') line.pop_back();
    return true;
  }

 private:
  bool gzipped_ = false;
  std::ifstream plain_;
  void* gz_ = nullptr;
};

inline std::vector<std::string> split_fields(const std::string& line, const std::string& delim) {
  std::vector<std::string> out;
  std::size_t pos = 0;
  for (;;) {
    std::size_t hit = line.find(delim, pos);
    if (hit == std::string::npos) {
      out.push_back(line.substr(pos));
      return out;
    }
    out.push_back(line.substr(pos, hit - pos));
    pos = hit + delim.size();
  }
}

inline bool parse_timestamp(const std::string& s, std::int64_t& out) {
  if (s.empty()) return false;
  std::size_t i = 0;
  errno = 0;
  char* end = nullptr;
  long long v = std::strtoll(s.c_str() + i, &end, 10);
  if (errno != 0 || end != s.c_str() + s.size() || v < 0) return false;
  out = v;
  return true;
}

}  // namespace detail

// Parses an interaction log, preserving row order. Malformed rows raise a
// ParseError naming the 1-based line number.
inline InteractionLog ingest(const std::string& path, const ColumnFormat& fmt = {}) {
  detail::LineReader reader(path);
  InteractionLog log;
  std::string line;
  std::size_t line_no = 0;
  int needed = std::max({fmt.user_col, fmt.item_col, fmt.time_col}) + 1;
  while (reader.next(line)) {
    ++line_no;
    if (line.empty()) continue;
    auto fields = detail::split_fields(line, fmt.delimiter);
    if (static_cast<int>(fields.size()) < needed) {
      throw ParseError("parse error at line " + std::to_string(line_no) + ": expected at least " +
                       std::to_string(needed) + " columns, got " + std::to_string(fields.size()));
    }
    Interaction it;
    it.user = fields[static_cast<std::size_t>(fmt.user_col)];
    it.item = fields[static_cast<std::size_t>(fmt.item_col)];
    if (it.user.empty() || it.item.empty()) {
      throw ParseError("parse error at line " + std::to_string(line_no) + ": empty user or item id");
    }
    if (!detail::parse_timestamp(fields[static_cast<std::size_t>(fmt.time_col)], it.timestamp)) {
      throw ParseError("parse error at line " + std::to_string(line_no) + ": bad timestamp '" +
                       fields[static_cast<std::size_t>(fmt.time_col)] + "'");
    }
    log.push_back(std::move(it));
  }
  if (log.empty()) throw EmptyInputError("empty input: " + path);
  return log;
}

// Groups interactions by user, orders them by timestamp (stable in input
// order on ties), applies min-count filtering and maps items to dense
// indices in first-appearance order.
inline SequenceDataset preprocess(const InteractionLog& log, const PreprocessOptions& opts = {},
                                  std::vector<std::string>* warnings = nullptr) {
  if (opts.min_count < 1) throw std::invalid_argument("min_count must be >= 1");

  std::unordered_set<std::string> kept_items;
  std::unordered_set<std::string> kept_users;
  const bool filter = !opts.skip_filtering;

  if (filter) {
    std::unordered_map<std::string, std::int64_t> item_count;
    std::unordered_map<std::string, std::int64_t> user_count;
    for (const auto& it : log) item_count[it.item]++;
    if (opts.one_pass) {
      for (const auto& it : log) user_count[it.user]++;
    } else {
      // Items below threshold are dropped first; user statistics are then
      // computed on what remains.
      for (const auto& it : log) {
        if (item_count[it.item] >= opts.min_count) user_count[it.user]++;
      }
    }
    for (const auto& [item, c] : item_count) {
      if (c >= opts.min_count) kept_items.insert(item);
    }
    for (const auto& [user, c] : user_count) {
      if (c >= opts.min_count) kept_users.insert(user);
    }
  }

  auto retained = [&](const Interaction& it) {
    if (!filter) return true;
    return kept_items.count(it.item) > 0 && kept_users.count(it.user) > 0;
  };

  SequenceDataset ds;
  ds.options = opts;
  std::unordered_map<std::string, int> item_index;
  std::unordered_map<std::string, int> user_index;
  // events[u] holds (timestamp, input order, item index)
  std::vector<std::vector<std::tuple<std::int64_t, std::size_t, int>>> events;

  for (std::size_t row = 0; row < log.size(); ++row) {
    const auto& it = log[row];
    if (!retained(it)) continue;
    auto [it_item, new_item] = item_index.try_emplace(it.item, static_cast<int>(ds.catalog.size()));
    if (new_item) ds.catalog.push_back(it.item);
    auto [it_user, new_user] = user_index.try_emplace(it.user, static_cast<int>(ds.users.size()));
    if (new_user) {
      ds.users.push_back(it.user);
      events.emplace_back();
    }
    events[static_cast<std::size_t>(it_user->second)].emplace_back(it.timestamp, row, it_item->second);
  }

  if (ds.users.empty()) throw EmptyInputError("empty dataset after preprocessing");

  ds.popularity.assign(ds.catalog.size(), 0);
  ds.sequences.resize(ds.users.size());
  for (std::size_t u = 0; u < events.size(); ++u) {
    auto& ev = events[u];
    std::sort(ev.begin(), ev.end());  // (timestamp, input order) -> stable ties
    auto& seq = ds.sequences[u];
    seq.reserve(ev.size());
    for (const auto& [ts, row, idx] : ev) {
      seq.push_back(idx);
      ds.popularity[static_cast<std::size_t>(idx)]++;
    }
  }

  if (filter && warnings != nullptr) {
    // The two-pass scheme is not a fixed point: dropping users can push item
    // counts back under the threshold.
    for (std::size_t i = 0; i < ds.popularity.size(); ++i) {
      if (ds.popularity[i] < opts.min_count) {
        warnings->push_back("preprocess: item '" + ds.catalog[i] + "' has only " +
                            std::to_string(ds.popularity[i]) +
                            " occurrences after user filtering; output is not a filtering fixed point");
      }
    }
  }
  return ds;
}

// Recovers an interaction log from a dataset (synthetic timestamps in
// sequence order). Mainly useful to re-run preprocessing on its own output.
inline InteractionLog to_interaction_log(const SequenceDataset& ds) {
  InteractionLog log;
  for (std::size_t u = 0; u < ds.sequences.size(); ++u) {
    std::int64_t t = 0;
    for (int idx : ds.sequences[u]) {
      log.push_back({ds.users[u], ds.catalog[static_cast<std::size_t>(idx)], t++});
    }
  }
  return log;
}

// Leave-one-out split: the last item per user is the test target, the
// penultimate one the validation target, the rest is training data.
inline LeaveOneOutSplit split(const SequenceDataset& ds) {
  LeaveOneOutSplit out;
  out.train_sequences.reserve(ds.sequences.size());
  out.validation_instances.reserve(ds.sequences.size());
  out.test_instances.reserve(ds.sequences.size());
  for (std::size_t u = 0; u < ds.sequences.size(); ++u) {
    const auto& s = ds.sequences[u];
    if (s.size() < 3) {
      throw SplitError("cannot split user '" + ds.users[u] + "': sequence length " +
                       std::to_string(s.size()) + " < 3");
    }
    std::size_t l = s.size();
    std::vector<int> train(s.begin(), s.begin() + static_cast<std::ptrdiff_t>(l - 2));
    std::vector<int> val_prefix = train;
    std::vector<int> test_prefix(s.begin(), s.begin() + static_cast<std::ptrdiff_t>(l - 1));
    out.validation_instances.push_back(EvaluationInstance::make(std::move(val_prefix), s[l - 2]));
    out.test_instances.push_back(EvaluationInstance::make(std::move(test_prefix), s[l - 1]));
    out.train_sequences.push_back(std::move(train));
  }
  return out;
}

enum class PopularitySource {
  TrainOnly,  // counts over head(s, l-2) per user; no target leakage
  All,        // counts over the full retained sequences
};

inline std::vector<std::int64_t> popularity_counts(const SequenceDataset& ds,
                                                   PopularitySource source = PopularitySource::TrainOnly) {
  if (ds.sequences.empty()) throw EmptyInputError("popularity_counts: empty dataset");
  std::vector<std::int64_t> counts(ds.catalog.size(), 0);
  for (const auto& s : ds.sequences) {
    std::size_t limit = s.size();
    if (source == PopularitySource::TrainOnly) {
      if (s.size() < 3) continue;  // sequence too short to split; no train part
      limit = s.size() - 2;
    }
    for (std::size_t i = 0; i < limit; ++i) counts[static_cast<std::size_t>(s[i])]++;
  }
  return counts;
}

// ---------------------------------------------------------------------------
// On-disk dataset bundle: catalog.tsv, sequences.tsv, counts.tsv, meta.txt.
// Plain text, one record per line, tab-separated; written deterministically.
// ---------------------------------------------------------------------------

namespace detail {
inline void require_clean_id(const std::string& id) {
  if (id.find('\t') != std::string::npos || id.find('\n') != std::string::npos) {
    throw std::invalid_argument("identifier contains tab or newline: " + id);
  }
}
}  // namespace detail

inline void save_dataset(const SequenceDataset& ds, const std::string& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  {
    std::ofstream f(dir + "/catalog.tsv", std::ios::binary);
    for (std::size_t i = 0; i < ds.catalog.size(); ++i) {
      detail::require_clean_id(ds.catalog[i]);
      f << i << '\t' << ds.catalog[i] << '\n';
    }
  }
  {
    std::ofstream f(dir + "/sequences.tsv", std::ios::binary);
    for (std::size_t u = 0; u < ds.users.size(); ++u) {
      detail::require_clean_id(ds.users[u]);
      f << ds.users[u] << '\t';
      const auto& s = ds.sequences[u];
      for (std::size_t i = 0; i < s.size(); ++i) {
        if (i) f << ' ';
        f << s[i];
      }
      f << '\n';
    }
  }
  {
    std::ofstream f(dir + "/counts.tsv", std::ios::binary);
    for (std::size_t i = 0; i < ds.popularity.size(); ++i) {
      f << i << '\t' << ds.popularity[i] << '\n';
    }
  }
  {
    std::ofstream f(dir + "/meta.txt", std::ios::binary);
    f << "format=1\n";
    f << "min_count=" << ds.options.min_count << '\n';
    f << "skip_filtering=" << (ds.options.skip_filtering ? 1 : 0) << '\n';
    f << "one_pass=" << (ds.options.one_pass ? 1 : 0) << '\n';
    f << "users=" << ds.n_users() << '\n';
    f << "items=" << ds.n_items() << '\n';
    f << "interactions=" << ds.n_interactions() << '\n';
  }
}

inline SequenceDataset load_dataset(const std::string& dir) {
  SequenceDataset ds;
  std::unordered_map<std::string, std::string> meta;
  {
    std::ifstream f(dir + "/meta.txt", std::ios::binary);
    if (!f) throw ParseError("cannot open dataset bundle: " + dir);
    std::string line;
    while (std::getline(f, line)) {
      auto eq = line.find('=');
      if (eq != std::string::npos) meta[line.substr(0, eq)] = line.substr(eq + 1);
    }
    if (meta["format"] != "1") throw ParseError("unsupported dataset bundle format in " + dir);
    ds.options.min_count = std::stoi(meta.at("min_count"));
    ds.options.skip_filtering = meta.at("skip_filtering") == "1";
    ds.options.one_pass = meta.at("one_pass") == "1";
  }
  {
    std::ifstream f(dir + "/catalog.tsv", std::ios::binary);
    if (!f) throw ParseError("missing catalog.tsv in " + dir);
    std::string line;
    while (std::getline(f, line)) {
      if (line.empty()) continue;
      auto tab = line.find('\t');
      ds.catalog.push_back(line.substr(tab + 1));
    }
  }
  {
    std::ifstream f(dir + "/sequences.tsv", std::ios::binary);
    if (!f) throw ParseError("missing sequences.tsv in " + dir);
    std::string line;
    while (std::getline(f, line)) {
      if (line.empty()) continue;
      auto tab = line.find('\t');
      ds.users.push_back(line.substr(0, tab));
      std::istringstream ss(line.substr(tab + 1));
      std::vector<int> seq;
      int idx;
      while (ss >> idx) {
        if (idx < 0 || idx >= static_cast<int>(ds.catalog.size())) {
          throw ParseError("item index out of range in sequences.tsv: " + std::to_string(idx));
        }
        seq.push_back(idx);
      }
      ds.sequences.push_back(std::move(seq));
    }
  }
  {
    std::ifstream f(dir + "/counts.tsv", std::ios::binary);
    if (!f) throw ParseError("missing counts.tsv in " + dir);
    ds.popularity.assign(ds.catalog.size(), 0);
    std::string line;
    while (std::getline(f, line)) {
      if (line.empty()) continue;
      auto tab = line.find('\t');
      std::size_t i = std::stoul(line.substr(0, tab));
      ds.popularity.at(i) = std::stoll(line.substr(tab + 1));
    }
  }
  if (meta.count("users") && std::stoi(meta["users"]) != ds.n_users()) {
    throw ParseError("dataset bundle user count mismatch in " + dir);
  }
  return ds;
}

}  // namespace seqrec
