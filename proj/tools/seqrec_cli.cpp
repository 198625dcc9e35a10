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
// seqrec command line: preprocess, train, evaluate, sweep, compare, report.
// Exit codes: 0 success, 1 configuration error, 2 stage failure.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "seqrec/harness.hpp"

namespace {

using namespace seqrec;

int cmd_preprocess(const std::string& input, const std::string& output, const ColumnFormat& fmt,
                   const PreprocessOptions& prep) {
  auto log = ingest(input, fmt);
  std::vector<std::string> warnings;
  auto ds = preprocess(log, prep, &warnings);
  save_dataset(ds, output);
  std::printf("users        %d\n", ds.n_users());
  std::printf("items        %d\n", ds.n_items());
  std::printf("interactions %lld\n", static_cast<long long>(ds.n_interactions()));
  std::printf("avg length   %.2f\n", ds.average_length());
  std::printf("density      %.4f%%\n", 100.0 * ds.density());
  std::printf("bundle       %s\n", output.c_str());
  for (const auto& w : warnings) std::fprintf(stderr, "warning: %s\n", w.c_str());
  return 0;
}

int cmd_train(const std::string& config_path, const std::string& only_model) {
  auto cfg = ExperimentConfig::from(KvConfig::parse_file(config_path));
  std::vector<std::string> warnings;
  auto ds = prepare_dataset(cfg, &warnings);
  auto sp = split(ds);
  auto counts = popularity_counts(ds, cfg.popularity_source);
  bool trained_any = false;
  for (const auto& spec : cfg.models) {
    if (!only_model.empty() && spec.name != only_model) continue;
    if (is_baseline_arch(spec.arch)) {
      std::printf("%-12s baseline, nothing to train\n", spec.name.c_str());
      continue;
    }
    bool hit = false;
    std::string path;
    auto model = prepare_model(spec, cfg, ds, sp, counts, &warnings, &hit, &path);
    std::printf("%-12s %s -> %s\n", spec.name.c_str(), hit ? "cached" : "trained", path.c_str());
    trained_any = true;
  }
  if (!only_model.empty() && !trained_any) {
    throw ConfigError("no trainable model named '" + only_model + "' in config");
  }
  for (const auto& w : warnings) std::fprintf(stderr, "warning: %s\n", w.c_str());
  return 0;
}

int cmd_evaluate(const std::string& config_path, const std::string& etas_override) {
  auto kv = KvConfig::parse_file(config_path);
  if (!etas_override.empty()) kv.set("experiment", "eta", etas_override);
  auto cfg = ExperimentConfig::from(kv);
  auto art = run_experiment(cfg);
  std::fputs(render_summary_text(art.report).c_str(), stdout);
  std::printf("\nartifacts written to %s\n", cfg.output_dir.c_str());
  return 0;
}

ModelRanking parse_rank_vector(const std::string& text, const std::string& label) {
  ModelRanking r;
  for (const auto& part : ExperimentConfig::split_list(text)) {
    auto eq = part.find('=');
    if (eq == std::string::npos) throw ConfigError(label + ": expected model=rank, got " + part);
    r.entries.push_back({part.substr(0, eq), 0.0, std::stoi(part.substr(eq + 1))});
  }
  if (r.entries.size() < 2) throw ConfigError(label + ": need at least two models");
  return r;
}

const StrategyBlock& find_block(const RankingReport& rep, const std::string& metric,
                                const std::string& strategy, int eta) {
  for (const auto& b : rep.blocks) {
    if (b.metric != metric || b.strategy != strategy) continue;
    if (strategy == "full" || !b.eta.has_value() || eta < 0 || *b.eta == eta) return b;
  }
  throw ConfigError("report has no block for metric " + metric + ", strategy " + strategy);
}

ModelRanking block_ranking(const StrategyBlock& b) {
  ModelRanking r;
  for (const auto& s : b.stats) r.entries.push_back({s.model, s.mean, s.rank});
  return r;
}

int cmd_compare(const std::string& ranks_a, const std::string& ranks_b, const std::string& report_path,
                const std::string& metric, const std::string& strategy_a,
                const std::string& strategy_b, int eta) {
  ModelRanking a, b;
  if (!ranks_a.empty() || !ranks_b.empty()) {
    if (ranks_a.empty() || ranks_b.empty()) throw ConfigError("--ranks-a and --ranks-b go together");
    a = parse_rank_vector(ranks_a, "--ranks-a");
    b = parse_rank_vector(ranks_b, "--ranks-b");
  } else if (!report_path.empty()) {
    std::ifstream f(report_path);
    if (!f) throw ConfigError("cannot open report: " + report_path);
    auto rep = report_from_json(nlohmann::json::parse(f));
    a = block_ranking(find_block(rep, metric, strategy_a, eta));
    b = block_ranking(find_block(rep, metric, strategy_b, eta));
  } else {
    throw ConfigError("compare needs either --ranks-a/--ranks-b or --report");
  }
  auto tau = kendall_tau_a(a, b);
  auto verdict = consistency(a, b);
  std::printf("models      %d\n", tau.models);
  std::printf("concordant  %lld\n", static_cast<long long>(tau.concordant));
  std::printf("discordant  %lld\n", static_cast<long long>(tau.discordant));
  std::printf("tau         %.6f\n", tau.tau);
  std::printf("consistent  %s\n", verdict.consistent ? "yes" : "no");
  for (const auto& p : verdict.pairs) {
    std::printf("  %-12s rank %d vs %d\n", p.model.c_str(), p.rank_a, p.rank_b);
  }
  return 0;
}

int cmd_report(const std::string& from, const std::string& out, const std::string& formats) {
  std::ifstream f(from);
  if (!f) throw ConfigError("cannot open report: " + from);
  auto rep = report_from_json(nlohmann::json::parse(f));
  EmitOptions opts;
  if (!formats.empty()) {
    opts = {false, false, false, false};
    for (const auto& fmt : ExperimentConfig::split_list(formats)) {
      if (fmt == "json") {
        opts.json = true;
      } else if (fmt == "csv") {
        opts.csv = true;
      } else if (fmt == "text") {
        opts.text = true;
      } else if (fmt == "sweep") {
        opts.sweep = true;
      } else {
        throw ConfigError("unknown format: " + fmt + " (json, csv, text, sweep)");
      }
    }
  }
  emit_reports(rep, out, opts);
  std::printf("re-emitted report to %s\n", out.c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"seqrec: sequential recommender evaluation (full vs sampled rankings)"};
  app.require_subcommand(1);

  auto* pre = app.add_subcommand("preprocess", "ingest a raw interaction log into a dataset bundle");
  std::string pre_input, pre_output, pre_delim = "\t";
  seqrec::ColumnFormat fmt;
  seqrec::PreprocessOptions prep;
  pre->add_option("--input", pre_input, "raw TSV/CSV interaction file (gzip accepted)")->required();
  pre->add_option("--output", pre_output, "bundle directory to write")->required();
  pre->add_option("--delimiter", pre_delim, "column delimiter, may be multi-byte (default tab)");
  pre->add_option("--user-col", fmt.user_col, "user column index (default 0)");
  pre->add_option("--item-col", fmt.item_col, "item column index (default 1)");
  pre->add_option("--time-col", fmt.time_col, "timestamp column index (default 2)");
  pre->add_option("--min-count", prep.min_count, "minimum item/user occurrences (default 5)");
  pre->add_flag("--skip-filtering", prep.skip_filtering, "keep all items and users");
  pre->add_flag("--one-pass", prep.one_pass, "single-pass filtering on raw statistics");

  auto* tr = app.add_subcommand("train", "train (or reuse cached) model checkpoints");
  std::string tr_config, tr_model;
  tr->add_option("--config", tr_config, "experiment config file")->required();
  tr->add_option("--model", tr_model, "train only this model name");

  auto* ev = app.add_subcommand("evaluate", "run the full evaluation pipeline");
  std::string ev_config;
  ev->add_option("--config", ev_config, "experiment config file")->required();

  auto* sw = app.add_subcommand("sweep", "evaluate across a list of negative sample sizes");
  std::string sw_config, sw_etas;
  sw->add_option("--config", sw_config, "experiment config file")->required();
  sw->add_option("--etas", sw_etas, "comma list of sample sizes, e.g. 10,100,1000,full");

  auto* cp = app.add_subcommand("compare", "Kendall tau and consistency between two rankings");
  std::string cp_ranks_a, cp_ranks_b, cp_report, cp_metric = "HR@10", cp_sa = "full", cp_sb = "uniform";
  int cp_eta = -1;
  cp->add_option("--ranks-a", cp_ranks_a, "first rank vector, e.g. GRU=1,NARM=2,SASRec=3");
  cp->add_option("--ranks-b", cp_ranks_b, "second rank vector");
  cp->add_option("--report", cp_report, "report.json to read rankings from");
  cp->add_option("--metric", cp_metric, "metric label inside the report (default HR@10)");
  cp->add_option("--strategy-a", cp_sa, "first strategy in the report (default full)");
  cp->add_option("--strategy-b", cp_sb, "second strategy in the report (default uniform)");
  cp->add_option("--eta", cp_eta, "sample size of the sampled block (default: first match)");

  auto* rp = app.add_subcommand("report", "re-emit artifacts from a stored report.json");
  std::string rp_from, rp_out, rp_formats;
  rp->add_option("--from", rp_from, "stored report.json")->required();
  rp->add_option("--out", rp_out, "output directory")->required();
  rp->add_option("--formats", rp_formats, "subset of json,csv,text,sweep (default all)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    fmt.delimiter = pre_delim;
    if (pre->parsed()) return cmd_preprocess(pre_input, pre_output, fmt, prep);
    if (tr->parsed()) return cmd_train(tr_config, tr_model);
    if (ev->parsed()) return cmd_evaluate(ev_config, "");
    if (sw->parsed()) return cmd_evaluate(sw_config, sw_etas);
    if (cp->parsed()) {
      return cmd_compare(cp_ranks_a, cp_ranks_b, cp_report, cp_metric, cp_sa, cp_sb, cp_eta);
    }
    if (rp->parsed()) return cmd_report(rp_from, rp_out, rp_formats);
  } catch (const seqrec::ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 1;
  } catch (const seqrec::StageError& e) {
    std::fprintf(stderr, "stage failure %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  return 0;
}
