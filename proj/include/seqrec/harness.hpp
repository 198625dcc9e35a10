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
// Experiment orchestration: flat key-value configs with sections, a cached
// preprocess -> train -> evaluate -> analyze pipeline, and report emission.
// Reports carry no timestamps, so identical configs and seeds produce
// byte-identical files.
#pragma once

#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "seqrec/dataset.hpp"
#include "seqrec/models.hpp"
#include "seqrec/ranking.hpp"
#include "seqrec/training.hpp"

namespace seqrec {

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// A pipeline stage failure; partial artifacts stay on disk.
struct StageError : std::runtime_error {
  std::string stage;
  StageError(std::string stage_, const std::string& msg)
      : std::runtime_error("[" + stage_ + "] " + msg), stage(std::move(stage_)) {}
};

// ---------------------------------------------------------------------------
// Flat key-value config with [sections]
// ---------------------------------------------------------------------------

class KvConfig {
 public:
  using Section = std::vector<std::pair<std::string, std::string>>;

  static KvConfig parse_string(const std::string& text) {
    KvConfig cfg;
    std::istringstream in(text);
    std::string line;
    std::string current;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      std::string s = trim(line);
      if (s.empty() || s[0] == '#') continue;
      if (s.front() == '[') {
        if (s.back() != ']') throw ConfigError("bad section header at line " + std::to_string(line_no));
        current = trim(s.substr(1, s.size() - 2));
        cfg.section_order_.push_back(current);
        cfg.sections_[current];
        continue;
      }
      auto eq = s.find('=');
      if (eq == std::string::npos) {
        throw ConfigError("expected key=value at line " + std::to_string(line_no) + ": " + s);
      }
      cfg.sections_[current].emplace_back(trim(s.substr(0, eq)), trim(s.substr(eq + 1)));
      if (cfg.sections_.size() == 1 && cfg.section_order_.empty()) cfg.section_order_.push_back(current);
    }
    return cfg;
  }

  static KvConfig parse_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw ConfigError("cannot open config file: " + path);
    std::stringstream ss;
    ss << f.rdbuf();
    return parse_string(ss.str());
  }

  bool has_section(const std::string& section) const { return sections_.count(section) > 0; }

  std::vector<std::string> sections_matching(const std::string& prefix) const {
    std::vector<std::string> out;
    for (const auto& name : section_order_) {
      if (name.rfind(prefix, 0) == 0) out.push_back(name);
    }
    return out;
  }

  std::optional<std::string> find(const std::string& section, const std::string& key) const {
    auto it = sections_.find(section);
    if (it == sections_.end()) return std::nullopt;
    for (const auto& [k, v] : it->second) {
      if (k == key) return v;
    }
    return std::nullopt;
  }

  std::string get(const std::string& section, const std::string& key,
                  const std::string& fallback) const {
    auto v = find(section, key);
    return v.has_value() ? *v : fallback;
  }

  std::string require(const std::string& section, const std::string& key) const {
    auto v = find(section, key);
    if (!v.has_value()) throw ConfigError("missing [" + section + "] " + key);
    return *v;
  }

  void set(const std::string& section, const std::string& key, const std::string& value) {
    if (!sections_.count(section)) section_order_.push_back(section);
    auto& sec = sections_[section];
    for (auto& [k, v] : sec) {
      if (k == key) {
        v = value;
        return;
      }
    }
    sec.emplace_back(key, value);
  }

  // Canonical text: sections and keys sorted; used for hashing and provenance.
  std::string canonical() const {
    std::map<std::string, std::map<std::string, std::string>> sorted;
    for (const auto& [name, entries] : sections_) {
      for (const auto& [k, v] : entries) sorted[name][k] = v;
    }
    std::string out;
    for (const auto& [name, entries] : sorted) {
      out += "[" + name + "]\n";
      for (const auto& [k, v] : entries) out += k + "=" + v + "\n";
    }
    return out;
  }

  const Section& section(const std::string& name) const {
    static const Section empty;
    auto it = sections_.find(name);
    return it == sections_.end() ? empty : it->second;
  }

 private:
  static std::string trim(const std::string& s) {
    std::size_t b = s.find_first_not_of(" \t\r");
    std::size_t e = s.find_last_not_of(" \t\r");
    return b == std::string::npos ? "" : s.substr(b, e - b + 1);
  }

  std::map<std::string, Section> sections_;
  std::vector<std::string> section_order_;
};

inline std::uint64_t fnv1a_str(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

// Hash of everything that determines the results. The output location is
// excluded: writing the same experiment elsewhere yields the same numbers.
inline std::uint64_t config_hash(const KvConfig& cfg) {
  std::string canon = cfg.canonical();
  std::string filtered;
  std::istringstream in(canon);
  std::string line;
  bool in_experiment = false;
  while (std::getline(in, line)) {
    if (!line.empty() && line.front() == '[') in_experiment = line == "[experiment]";
    if (in_experiment && line.rfind("output=", 0) == 0) continue;
    filtered += line + "\n";
  }
  return fnv1a_str(filtered);
}

inline std::string hash_hex(std::uint64_t h) {
  static const char* digits = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i) {
    out[static_cast<std::size_t>(i)] = digits[h & 0xf];
    h >>= 4;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Experiment configuration
// ---------------------------------------------------------------------------

struct ModelSpec {
  std::string name;
  std::string arch;
  KvConfig::Section options;

  std::string get(const std::string& key, const std::string& fallback) const {
    for (const auto& [k, v] : options) {
      if (k == key) return v;
    }
    return fallback;
  }
};

struct ExperimentConfig {
  std::string dataset_name = "dataset";
  std::string dataset_bundle;  // pre-built bundle directory
  std::string dataset_input;   // or a raw interaction file
  ColumnFormat format;
  PreprocessOptions prep;
  PopularitySource popularity_source = PopularitySource::TrainOnly;

  std::vector<MetricSpec> metrics{{MetricKind::HitRate, 10}, {MetricKind::Ndcg, 10}};
  std::vector<Strategy> strategies{Strategy::Full, Strategy::Uniform, Strategy::Popularity};
  std::vector<EtaValue> etas{EtaValue(100)};
  int runs = 20;
  std::uint64_t seed = 42;
  bool full_excludes_seen = false;
  bool dump_instances = false;  // per-instance metric CSV for the full evaluation
  Strategy val_strategy = Strategy::Full;
  int val_eta = 100;
  std::string output_dir = "out";
  std::vector<ModelSpec> models;

  KvConfig raw;

  static ExperimentConfig from(const KvConfig& kv) {
    ExperimentConfig cfg;
    cfg.raw = kv;
    const std::string ds = "dataset";
    cfg.dataset_name = kv.get(ds, "name", "dataset");
    cfg.dataset_bundle = kv.get(ds, "bundle", "");
    cfg.dataset_input = kv.get(ds, "input", "");
    if (cfg.dataset_bundle.empty() && cfg.dataset_input.empty()) {
      throw ConfigError("config needs [dataset] bundle= or input=");
    }
    cfg.format.delimiter = kv.get(ds, "delimiter", "\t");
    cfg.format.user_col = std::stoi(kv.get(ds, "user_col", "0"));
    cfg.format.item_col = std::stoi(kv.get(ds, "item_col", "1"));
    cfg.format.time_col = std::stoi(kv.get(ds, "time_col", "2"));
    cfg.prep.min_count = std::stoi(kv.get(ds, "min_count", "5"));
    cfg.prep.skip_filtering = kv.get(ds, "skip_filtering", "0") == "1";
    cfg.prep.one_pass = kv.get(ds, "one_pass", "0") == "1";
    std::string pop = kv.get(ds, "popularity_source", "train");
    if (pop == "train") {
      cfg.popularity_source = PopularitySource::TrainOnly;
    } else if (pop == "all") {
      cfg.popularity_source = PopularitySource::All;
    } else {
      throw ConfigError("popularity_source must be train or all");
    }

    const std::string ex = "experiment";
    cfg.metrics.clear();
    for (const auto& m : split_list(kv.get(ex, "metrics", "HR@10,NDCG@10"))) {
      cfg.metrics.push_back(MetricSpec::parse(m));
    }
    cfg.strategies.clear();
    for (const auto& s : split_list(kv.get(ex, "strategies", "full,uniform,popularity"))) {
      cfg.strategies.push_back(parse_strategy(s));
    }
    cfg.etas.clear();
    for (const auto& e : split_list(kv.get(ex, "eta", "100"))) {
      if (e == "full") {
        cfg.etas.push_back(std::nullopt);
      } else {
        int v = std::stoi(e);
        if (v < 1) throw ConfigError("eta must be >= 1 or 'full'");
        cfg.etas.push_back(v);
      }
    }
    bool any_sampled = false;
    for (Strategy s : cfg.strategies) any_sampled = any_sampled || s != Strategy::Full;
    bool any_finite_eta = false;
    for (const auto& e : cfg.etas) any_finite_eta = any_finite_eta || e.has_value();
    if (any_sampled && !any_finite_eta) {
      throw ConfigError("sampled strategies need at least one finite eta value");
    }
    cfg.runs = std::stoi(kv.get(ex, "runs", "20"));
    if (cfg.runs < 1) throw ConfigError("runs must be >= 1");
    cfg.seed = std::stoull(kv.get(ex, "seed", "42"));
    cfg.full_excludes_seen = kv.get(ex, "full_excludes_seen", "0") == "1";
    cfg.dump_instances = kv.get(ex, "dump_instances", "0") == "1";
    cfg.val_strategy = parse_strategy(kv.get(ex, "val_strategy", "full"));
    cfg.val_eta = std::stoi(kv.get(ex, "val_eta", "100"));
    cfg.output_dir = kv.get(ex, "output", "out");

    for (const auto& section : kv.sections_matching("model ")) {
      ModelSpec spec;
      spec.name = section.substr(6);
      if (spec.name.empty()) throw ConfigError("model section needs a name: [model <name>]");
      spec.options = kv.section(section);
      spec.arch = spec.get("arch", spec.name);
      cfg.models.push_back(std::move(spec));
    }
    if (cfg.models.empty()) throw ConfigError("config defines no [model <name>] sections");
    for (std::size_t i = 0; i < cfg.models.size(); ++i) {
      for (std::size_t j = i + 1; j < cfg.models.size(); ++j) {
        if (cfg.models[i].name == cfg.models[j].name) {
          throw ConfigError("duplicate model name: " + cfg.models[i].name);
        }
      }
    }
    return cfg;
  }

  static std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : s) {
      if (c == ',') {
        if (!cur.empty()) out.push_back(cur);
        cur.clear();
      } else if (!std::isspace(static_cast<unsigned char>(c))) {
        cur.push_back(c);
      }
    }
    if (!cur.empty()) out.push_back(cur);
    return out;
  }
};

// ---------------------------------------------------------------------------
// Model registry
// ---------------------------------------------------------------------------

inline bool is_baseline_arch(const std::string& arch) {
  return arch == "popularity" || arch == "markov";
}

inline std::unique_ptr<TrainableModel> make_model(const ModelSpec& spec, int n_items,
                                                  std::uint64_t init_seed) {
  auto geti = [&](const char* key, int fallback) {
    return std::stoi(spec.get(key, std::to_string(fallback)));
  };
  auto getd = [&](const char* key, double fallback) {
    return std::stod(spec.get(key, std::to_string(fallback)));
  };
  if (spec.arch == "gru") {
    GruConfig cfg;
    cfg.n_items = n_items;
    cfg.embedding = geti("embedding", 64);
    cfg.hidden = geti("hidden", 64);
    if (spec.get("mean_reduction", "0") == "1") cfg.reduction = LossReduction::MeanPerTerm;
    return std::make_unique<GruModel>(cfg, init_seed, spec.name);
  }
  if (spec.arch == "narm") {
    NarmConfig cfg;
    cfg.n_items = n_items;
    cfg.embedding = geti("embedding", 64);
    cfg.hidden = geti("hidden", 64);
    cfg.softmax_attention = spec.get("softmax_attention", "0") == "1";
    if (spec.get("mean_reduction", "0") == "1") cfg.reduction = LossReduction::MeanPerTerm;
    return std::make_unique<NarmModel>(cfg, init_seed, spec.name);
  }
  if (spec.arch == "sasrec") {
    SasRecConfig cfg;
    cfg.n_items = n_items;
    cfg.d = geti("d", 64);
    cfg.max_len = geti("max_len", 50);
    cfg.layers = geti("layers", 2);
    cfg.heads = geti("heads", 2);
    cfg.dropout = getd("dropout", 0.2);
    cfg.per_step_negative_only = spec.get("per_step_negatives", "0") == "1";
    return std::make_unique<SasRecModel>(cfg, init_seed, spec.name);
  }
  if (spec.arch == "bert4rec") {
    Bert4RecConfig cfg;
    cfg.n_items = n_items;
    cfg.d = geti("d", 64);
    cfg.max_len = geti("max_len", 50);
    cfg.layers = geti("layers", 2);
    cfg.heads = geti("heads", 2);
    cfg.dropout = getd("dropout", 0.2);
    cfg.mask_prob = getd("mask_prob", 0.2);
    cfg.last_mask_prob = getd("last_mask_prob", 0.1);
    return std::make_unique<Bert4RecModel>(cfg, init_seed, spec.name);
  }
  throw ConfigError("unknown model architecture: " + spec.arch);
}

inline TrainConfig train_config_from(const ModelSpec& spec, const ExperimentConfig& cfg) {
  TrainConfig tc;
  tc.max_epochs = std::stoi(spec.get("epochs", "800"));
  tc.batch_size = std::stoi(spec.get("batch", "128"));
  tc.lr = std::stod(spec.get("lr", "0.001"));
  tc.patience = std::stoi(spec.get("patience", "20"));
  tc.seed = cfg.seed ^ fnv1a_str(spec.name);
  tc.selection_metric = {MetricKind::HitRate, 10};
  tc.val_strategy = cfg.val_strategy;
  tc.val_eta = cfg.val_eta;
  return tc;
}

// ---------------------------------------------------------------------------
// Ranking report
// ---------------------------------------------------------------------------

struct ModelStats {
  std::string model;
  double mean = 0.0;
  double std_dev = 0.0;
  int rank = 0;

  bool operator==(const ModelStats&) const = default;
};

struct StrategyBlock {
  std::string metric;
  std::string strategy;
  std::optional<int> eta;  // nullopt for the full strategy
  std::vector<ModelStats> stats;  // sorted by rank
  std::optional<TauResult> tau_vs_full;
  std::optional<bool> consistent_with_full;

  bool operator==(const StrategyBlock& o) const {
    auto tau_eq = [](const std::optional<TauResult>& a, const std::optional<TauResult>& b) {
      if (a.has_value() != b.has_value()) return false;
      if (!a.has_value()) return true;
      return a->tau == b->tau && a->concordant == b->concordant && a->discordant == b->discordant &&
             a->models == b->models;
    };
    return metric == o.metric && strategy == o.strategy && eta == o.eta && stats == o.stats &&
           tau_eq(tau_vs_full, o.tau_vs_full) && consistent_with_full == o.consistent_with_full;
  }
};

struct RawRow {
  std::string metric;
  std::string strategy;
  int eta = -1;  // -1 encodes full
  int run = 0;
  std::string model;
  double value = 0.0;

  bool operator==(const RawRow&) const = default;
};

struct RankingReport {
  std::string dataset;
  std::vector<std::string> models;
  std::uint64_t base_seed = 0;
  std::uint64_t config_hash = 0;
  std::string format_version = "1";
  std::vector<StrategyBlock> blocks;
  std::vector<RawRow> raw;
  std::vector<std::string> warnings;

  bool operator==(const RankingReport&) const = default;
};

inline nlohmann::json to_json(const TauResult& t) {
  return {{"tau", t.tau}, {"concordant", t.concordant}, {"discordant", t.discordant},
          {"models", t.models}};
}

inline TauResult tau_from_json(const nlohmann::json& j) {
  TauResult t;
  t.tau = j.at("tau").get<double>();
  t.concordant = j.at("concordant").get<std::int64_t>();
  t.discordant = j.at("discordant").get<std::int64_t>();
  t.models = j.at("models").get<int>();
  return t;
}

inline nlohmann::json to_json(const RankingReport& r) {
  nlohmann::json j;
  j["format_version"] = r.format_version;
  j["dataset"] = r.dataset;
  j["models"] = r.models;
  j["base_seed"] = r.base_seed;
  j["config_hash"] = hash_hex(r.config_hash);
  j["warnings"] = r.warnings;
  j["blocks"] = nlohmann::json::array();
  for (const auto& b : r.blocks) {
    nlohmann::json jb;
    jb["metric"] = b.metric;
    jb["strategy"] = b.strategy;
    if (b.eta.has_value()) {
      jb["eta"] = *b.eta;
    } else {
      jb["eta"] = "full";
    }
    jb["stats"] = nlohmann::json::array();
    for (const auto& s : b.stats) {
      jb["stats"].push_back(
          {{"model", s.model}, {"mean", s.mean}, {"std", s.std_dev}, {"rank", s.rank}});
    }
    if (b.tau_vs_full.has_value()) jb["tau_vs_full"] = to_json(*b.tau_vs_full);
    if (b.consistent_with_full.has_value()) jb["consistent_with_full"] = *b.consistent_with_full;
    j["blocks"].push_back(std::move(jb));
  }
  j["raw"] = nlohmann::json::array();
  for (const auto& row : r.raw) {
    j["raw"].push_back({{"metric", row.metric},
                        {"strategy", row.strategy},
                        {"eta", row.eta},
                        {"run", row.run},
                        {"model", row.model},
                        {"value", row.value}});
  }
  return j;
}

inline RankingReport report_from_json(const nlohmann::json& j) {
  RankingReport r;
  r.format_version = j.at("format_version").get<std::string>();
  r.dataset = j.at("dataset").get<std::string>();
  r.models = j.at("models").get<std::vector<std::string>>();
  r.base_seed = j.at("base_seed").get<std::uint64_t>();
  r.config_hash = std::stoull(j.at("config_hash").get<std::string>(), nullptr, 16);
  r.warnings = j.at("warnings").get<std::vector<std::string>>();
  for (const auto& jb : j.at("blocks")) {
    StrategyBlock b;
    b.metric = jb.at("metric").get<std::string>();
    b.strategy = jb.at("strategy").get<std::string>();
    if (jb.at("eta").is_string()) {
      b.eta = std::nullopt;
    } else {
      b.eta = jb.at("eta").get<int>();
    }
    for (const auto& js : jb.at("stats")) {
      b.stats.push_back({js.at("model").get<std::string>(), js.at("mean").get<double>(),
                         js.at("std").get<double>(), js.at("rank").get<int>()});
    }
    if (jb.contains("tau_vs_full")) b.tau_vs_full = tau_from_json(jb.at("tau_vs_full"));
    if (jb.contains("consistent_with_full")) {
      b.consistent_with_full = jb.at("consistent_with_full").get<bool>();
    }
    r.blocks.push_back(std::move(b));
  }
  for (const auto& jr : j.at("raw")) {
    r.raw.push_back({jr.at("metric").get<std::string>(), jr.at("strategy").get<std::string>(),
                     jr.at("eta").get<int>(), jr.at("run").get<int>(),
                     jr.at("model").get<std::string>(), jr.at("value").get<double>()});
  }
  return r;
}

// ---------------------------------------------------------------------------
// Report emission
// ---------------------------------------------------------------------------

namespace detail {

inline std::string format_double(double v) {
  std::ostringstream ss;
  ss.precision(17);
  ss << v;
  return ss.str();
}

inline const StrategyBlock* find_full_block(const RankingReport& r, const std::string& metric) {
  for (const auto& b : r.blocks) {
    if (b.metric == metric && b.strategy == "full") return &b;
  }
  return nullptr;
}

}  // namespace detail

// Table-style plain-text summary. Ranks are drawn as '#' glyph runs (fewer
// glyphs = better) with best/second annotations, mirroring the usual
// bold/underline typography.
inline std::string render_summary_text(const RankingReport& r) {
  std::ostringstream out;
  out << "dataset: " << r.dataset << "\n";
  out << "seed: " << r.base_seed << "  config: " << hash_hex(r.config_hash) << "\n";
  for (const auto& b : r.blocks) {
    out << "\n== metric " << b.metric << " | strategy " << b.strategy;
    if (b.eta.has_value()) out << " | eta " << *b.eta;
    if (b.tau_vs_full.has_value()) {
      out << " | tau vs full " << detail::format_double(b.tau_vs_full->tau);
      out << " | consistent " << (b.consistent_with_full.value_or(false) ? "yes" : "no");
    }
    out << " ==\n";
    for (const auto& s : b.stats) {
      std::string glyphs(static_cast<std::size_t>(s.rank), '#');
      std::string note = s.rank == 1 ? " (best)" : (s.rank == 2 ? " (second)" : "");
      out << "  " << s.model;
      for (std::size_t pad = s.model.size(); pad < 12; ++pad) out << ' ';
      out << " " << detail::format_double(s.mean);
      if (s.std_dev > 0.0) out << " +- " << detail::format_double(s.std_dev);
      out << "  rank " << s.rank << " " << glyphs << note << "\n";
    }
  }
  return out.str();
}

inline std::string render_results_csv(const RankingReport& r) {
  std::ostringstream out;
  out << "dataset,metric,strategy,eta,run,model,value\n";
  for (const auto& row : r.raw) {
    out << r.dataset << ',' << row.metric << ',' << row.strategy << ','
        << (row.eta < 0 ? std::string("full") : std::to_string(row.eta)) << ',' << row.run << ','
        << row.model << ',' << detail::format_double(row.value) << "\n";
  }
  return out.str();
}

// Long-format rank curves for external plotting: one row per
// (metric, strategy, eta, model).
inline std::string render_sweep_csv(const RankingReport& r) {
  std::ostringstream out;
  out << "dataset,metric,strategy,eta,model,rank,mean\n";
  for (const auto& b : r.blocks) {
    for (const auto& s : b.stats) {
      out << r.dataset << ',' << b.metric << ',' << b.strategy << ','
          << (b.eta.has_value() ? std::to_string(*b.eta) : std::string("full")) << ',' << s.model
          << ',' << s.rank << ',' << detail::format_double(s.mean) << "\n";
    }
  }
  return out.str();
}

struct EmitOptions {
  bool json = true;
  bool csv = true;
  bool text = true;
  bool sweep = true;
};

// Writes report artifacts under dir and returns the manifest body.
inline std::string emit_reports(const RankingReport& r, const std::string& dir,
                                const EmitOptions& opts = {}) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  auto write = [&](const std::string& name, const std::string& body) {
    std::ofstream f(dir + "/" + name, std::ios::binary | std::ios::trunc);
    if (!f) throw StageError("report", "cannot write " + dir + "/" + name);
    f << body;
  };
  std::ostringstream manifest;
  manifest << "config_hash=" << hash_hex(r.config_hash) << "\n";
  manifest << "base_seed=" << r.base_seed << "\n";
  if (opts.json) {
    write("report.json", to_json(r).dump(2) + "\n");
    manifest << "report.json=present\n";
  }
  if (opts.csv) {
    write("results_long.csv", render_results_csv(r));
    manifest << "results_long.csv=present\n";
  }
  if (opts.text) {
    write("summary.txt", render_summary_text(r));
    manifest << "summary.txt=present\n";
  }
  if (opts.sweep) {
    bool any_sampled = false;
    for (const auto& b : r.blocks) any_sampled = any_sampled || b.strategy != "full";
    if (any_sampled) {
      write("sweep_long.csv", render_sweep_csv(r));
      manifest << "sweep_long.csv=present\n";
    } else {
      manifest << "sweep_long.csv=absent (no sampled strategy in report)\n";
    }
  }
  write("manifest.txt", manifest.str());
  return manifest.str();
}

// ---------------------------------------------------------------------------
// Pipeline
// ---------------------------------------------------------------------------

struct ExperimentArtifacts {
  RankingReport report;
  SequenceDataset dataset;
  LeaveOneOutSplit split;
  std::vector<std::int64_t> counts;
  std::vector<std::string> checkpoint_paths;
  std::vector<bool> cache_hits;
};

namespace detail {

inline std::string section_fingerprint(const KvConfig& kv, const std::string& section) {
  std::map<std::string, std::string> sorted;
  for (const auto& [k, v] : kv.section(section)) sorted[k] = v;
  std::string flat = section + "{";
  for (const auto& [k, v] : sorted) flat += k + "=" + v + ";";
  flat += "}";
  return flat;
}

}  // namespace detail

// Stage 1: obtain the dataset (bundle load, or ingest + preprocess with a
// cached bundle under the output directory).
inline SequenceDataset prepare_dataset(const ExperimentConfig& cfg,
                                       std::vector<std::string>* warnings) {
  namespace fs = std::filesystem;
  try {
    if (!cfg.dataset_bundle.empty()) return load_dataset(cfg.dataset_bundle);
    std::uint64_t h = fnv1a_str(detail::section_fingerprint(cfg.raw, "dataset"));
    std::string cache_dir = cfg.output_dir + "/dataset-" + hash_hex(h);
    if (fs::exists(cache_dir + "/meta.txt")) return load_dataset(cache_dir);
    auto log = ingest(cfg.dataset_input, cfg.format);
    auto ds = preprocess(log, cfg.prep, warnings);
    save_dataset(ds, cache_dir);
    return ds;
  } catch (const StageError&) {
    throw;
  } catch (const std::exception& e) {
    throw StageError("dataset", e.what());
  }
}

inline std::uint64_t catalog_fingerprint(const SequenceDataset& ds) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto& item : ds.catalog) {
    for (unsigned char c : item) {
      h ^= c;
      h *= 0x100000001b3ULL;
    }
    h ^= 0xff;
    h *= 0x100000001b3ULL;
  }
  return h;
}

// Stage 2: per-model checkpoint-or-train.
inline std::unique_ptr<ScoreFunction> prepare_model(const ModelSpec& spec,
                                                    const ExperimentConfig& cfg,
                                                    const SequenceDataset& ds,
                                                    const LeaveOneOutSplit& split,
                                                    std::span<const std::int64_t> counts,
                                                    std::vector<std::string>* warnings,
                                                    bool* cache_hit, std::string* ckpt_path) {
  namespace fs = std::filesystem;
  try {
    if (cache_hit != nullptr) *cache_hit = false;
    if (spec.arch == "popularity") return std::make_unique<PopularityScorer>(counts, spec.name);
    if (spec.arch == "markov") {
      return std::make_unique<MarkovScorer>(split.train_sequences, ds.n_items(), spec.name);
    }

    std::uint64_t init_seed = cfg.seed ^ fnv1a_str("init:" + spec.name);
    auto model = make_model(spec, ds.n_items(), init_seed);
    std::string stage_key = detail::section_fingerprint(cfg.raw, "dataset") + "|" +
                            detail::section_fingerprint(cfg.raw, "model " + spec.name) + "|seed=" +
                            std::to_string(cfg.seed) + "|val=" + strategy_label(cfg.val_strategy);
    std::string path = cfg.output_dir + "/checkpoints/" + spec.name + "-" +
                       hash_hex(fnv1a_str(stage_key)) + ".srpb";
    if (ckpt_path != nullptr) *ckpt_path = path;

    if (fs::exists(path)) {
      auto params = model->parameters();
      ad::load_parameters(path, params);
      if (cache_hit != nullptr) *cache_hit = true;
      return model;
    }

    TrainConfig tc = train_config_from(spec, cfg);
    train(*model, split, ds.n_items(), tc, counts, warnings);
    fs::create_directories(cfg.output_dir + "/checkpoints");
    std::vector<const ad::Param*> view;
    for (const ad::Param* p : std::as_const(*model).parameters()) view.push_back(p);
    ad::save_parameters(path, view);
    {
      nlohmann::json manifest;
      manifest["arch"] = spec.arch;
      manifest["name"] = spec.name;
      manifest["items"] = ds.n_items();
      manifest["catalog_fingerprint"] = hash_hex(catalog_fingerprint(ds));
      nlohmann::json jopts;
      for (const auto& [k, v] : spec.options) jopts[k] = v;
      manifest["options"] = jopts;
      std::ofstream mf(path + ".manifest.json", std::ios::binary | std::ios::trunc);
      mf << manifest.dump(2) << "\n";
    }
    return model;
  } catch (const StageError&) {
    throw;
  } catch (const std::exception& e) {
    throw StageError("train:" + spec.name, e.what());
  }
}

// Full pipeline: dataset -> models -> evaluation -> analysis -> emission.
inline ExperimentArtifacts run_experiment(const ExperimentConfig& cfg) {
  ExperimentArtifacts art;
  RankingReport& report = art.report;
  report.dataset = cfg.dataset_name;
  report.base_seed = cfg.seed;
  report.config_hash = config_hash(cfg.raw);
  for (const auto& m : cfg.models) report.models.push_back(m.name);

  art.dataset = prepare_dataset(cfg, &report.warnings);
  try {
    art.split = split(art.dataset);
    art.counts = popularity_counts(art.dataset, cfg.popularity_source);
  } catch (const std::exception& e) {
    throw StageError("split", e.what());
  }

  std::vector<std::unique_ptr<ScoreFunction>> owned;
  std::vector<const ScoreFunction*> models;
  for (const auto& spec : cfg.models) {
    bool hit = false;
    std::string path;
    owned.push_back(prepare_model(spec, cfg, art.dataset, art.split, art.counts, &report.warnings,
                                  &hit, &path));
    art.cache_hits.push_back(hit);
    art.checkpoint_paths.push_back(path);
    models.push_back(owned.back().get());
  }

  try {
    const auto& instances = art.split.test_instances;
    std::ostringstream instance_dump;
    if (cfg.dump_instances) instance_dump << "dataset,metric,model,instance,value\n";
    for (const auto& metric : cfg.metrics) {
      // the full evaluation anchors every tau, so it always runs
      TargetSetSpec full_spec{Strategy::Full, 0, cfg.seed};
      RunResult full = evaluate_run(models, instances, art.dataset.n_items(), art.counts, full_spec,
                                    0, metric, cfg.full_excludes_seen, 0, cfg.dump_instances);
      if (cfg.dump_instances) {
        for (std::size_t mi = 0; mi < models.size(); ++mi) {
          for (std::size_t i = 0; i < full.instance_values[mi].size(); ++i) {
            double v = full.instance_values[mi][i];
            if (std::isnan(v)) continue;  // degenerate instance, skipped
            instance_dump << cfg.dataset_name << ',' << metric.label() << ',' << models[mi]->name()
                          << ',' << i << ',' << detail::format_double(v) << "\n";
          }
        }
      }
      std::vector<std::pair<std::string, double>> full_means;
      for (std::size_t i = 0; i < models.size(); ++i) {
        full_means.emplace_back(models[i]->name(), full.model_means[i]);
        report.raw.push_back({metric.label(), "full", -1, 0, models[i]->name(), full.model_means[i]});
      }
      ModelRanking full_ranking = rank_models(full_means, &report.warnings);
      full_ranking.metric = metric.label();
      full_ranking.strategy = "full";

      bool include_full_block =
          std::find(cfg.strategies.begin(), cfg.strategies.end(), Strategy::Full) !=
          cfg.strategies.end();
      if (include_full_block) {
        StrategyBlock block;
        block.metric = metric.label();
        block.strategy = "full";
        block.eta = std::nullopt;
        for (const auto& e : full_ranking.entries) block.stats.push_back({e.model, e.mean, 0.0, e.rank});
        report.blocks.push_back(std::move(block));
      }

      for (Strategy strategy : cfg.strategies) {
        if (strategy == Strategy::Full) continue;
        for (const auto& eta : cfg.etas) {
          if (!eta.has_value()) continue;  // the full point lives in the full block
          int e = std::min(*eta, art.dataset.n_items());
          if (e < *eta) {
            report.warnings.push_back("eta=" + std::to_string(*eta) + " clamped to catalog size " +
                                      std::to_string(e));
          }
          TargetSetSpec spec{strategy, e, cfg.seed};
          auto stats = repeated_sampled_evaluation(models, instances, art.dataset.n_items(),
                                                   art.counts, spec, cfg.runs, metric,
                                                   &report.warnings);
          std::vector<std::pair<std::string, double>> means;
          for (const auto& s : stats) means.emplace_back(s.model, s.mean_of_means);
          ModelRanking ranking = rank_models(means, &report.warnings);
          ranking.metric = metric.label();
          ranking.strategy = strategy_label(strategy);

          StrategyBlock block;
          block.metric = metric.label();
          block.strategy = strategy_label(strategy);
          block.eta = e;
          for (const auto& entry : ranking.entries) {
            double std_dev = 0.0;
            for (const auto& s : stats) {
              if (s.model == entry.model) std_dev = s.std_of_means;
            }
            block.stats.push_back({entry.model, entry.mean, std_dev, entry.rank});
          }
          block.tau_vs_full = kendall_tau_a(ranking, full_ranking);
          block.consistent_with_full = consistency(ranking, full_ranking).consistent;
          report.blocks.push_back(std::move(block));

          for (std::size_t mi = 0; mi < stats.size(); ++mi) {
            for (std::size_t r = 0; r < stats[mi].run_means.size(); ++r) {
              report.raw.push_back({metric.label(), strategy_label(strategy), e, static_cast<int>(r),
                                    stats[mi].model, stats[mi].run_means[r]});
            }
          }
        }
      }
    }
    if (cfg.dump_instances) {
      std::filesystem::create_directories(cfg.output_dir);
      std::ofstream f(cfg.output_dir + "/instances_full.csv", std::ios::binary | std::ios::trunc);
      f << instance_dump.str();
    }
  } catch (const StageError&) {
    throw;
  } catch (const std::exception& e) {
    throw StageError("evaluate", e.what());
  }

  try {
    emit_reports(report, cfg.output_dir);
  } catch (const StageError&) {
    throw;
  } catch (const std::exception& e) {
    throw StageError("report", e.what());
  }
  return art;
}

}  // namespace seqrec
