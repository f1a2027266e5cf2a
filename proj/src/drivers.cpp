// Copyright 2026 The simbal-moe Authors
// SPDX-License-Identifier: Apache-2.0

#include "simbal/drivers.hpp"

#include <algorithm>
#include <fstream>
#include <ostream>

#include "simbal/checkpoint.hpp"
#include "simbal/csv.hpp"
#include "simbal/error.hpp"
#include "simbal/metrics.hpp"

namespace simbal {

namespace fs = std::filesystem;

namespace {

template <typename T>
T get(const Json& j, const std::string& key) {
  try {
    return j.get<T>();
  } catch (const Json::exception& e) {
    throw ConfigError("bad value for '" + key + "': " + e.what());
  }
}

std::string seeds_text(const std::vector<std::uint64_t>& seeds) {
  std::string s;
  for (std::size_t i = 0; i < seeds.size(); ++i) s += (i ? ";" : "") + std::to_string(seeds[i]);
  return s;
}

struct Provenance {
  std::string hash;
  std::string seeds;
  std::string line() const { return "config_hash=" + hash + " seed=" + seeds; }
  void stamp(Json& j) const {
    j["config_hash"] = hash;
    j["seed"] = seeds;
  }
};

std::ofstream open_out(const fs::path& p) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw Error("cannot write '" + p.string() + "'");
  return out;
}

void write_json(const fs::path& p, const Json& j) { write_text_file(p.string(), j.dump(2) + "\n"); }

Json comparison_json(const ComparisonResult& r, const Provenance& prov) {
  Json j{{"table", r.table.to_json()}, {"target_loss", r.target_loss}, {"failed_runs", r.failed_runs}};
  for (const auto& [label, tokens] : r.tokens_to_target) j["tokens_to_target"][label] = tokens;
  Json failures = Json::array();
  for (const RunOutcome& o : r.runs) {
    if (o.failed) failures.push_back({{"label", o.strategy}, {"seed", o.seed}, {"reason", o.failure}});
  }
  j["failures"] = failures;
  prov.stamp(j);
  return j;
}

int finish_comparison(const ComparisonResult& r, const ExperimentConfig& cfg, const Provenance& prov,
                      Json extra, std::ostream& log) {
  r.table.write_summary_csv(cfg.out_dir / "summary.csv", prov.line());
  r.table.write_trials_csv(cfg.out_dir / "trials.csv", prov.line());
  Json j = comparison_json(r, prov);
  for (auto& [k, v] : extra.items()) j[k] = v;
  write_json(cfg.out_dir / "summary.json", j);
  for (const auto& label : r.table.labels()) {
    log << label;
    for (const char* m : {"perplexity", "min_pes", "mean_seu", "gram_mse", "min_unique_experts"}) {
      Summary s = r.table.summary(label, m);
      if (s.n) log << "  " << m << "=" << format_double(s.mean);
    }
    log << "\n";
  }
  for (const RunOutcome& o : r.runs) {
    if (o.failed) log << "FAILED " << o.strategy << " seed " << o.seed << ": " << o.failure << "\n";
  }
  return r.failed_runs ? 1 : 0;
}

struct LoadedSource {
  fs::path checkpoint;
  TrainRunConfig run;
  Model model;
};

LoadedSource load_source(const ExperimentConfig& cfg) {
  if (cfg.source.empty()) throw ConfigError(cfg.kind + " needs \"source\" (a run or checkpoint directory)");
  fs::path ckpt = resolve_checkpoint(cfg.source);
  TrainRunConfig run = train_config_from_json(read_checkpoint_meta(ckpt).config);
  return LoadedSource{ckpt, run, load_model(ckpt)};
}

int do_train(const ExperimentConfig& cfg, const Provenance&, std::ostream& log) {
  int code = 0;
  for (std::uint64_t seed : cfg.seeds) {
    TrainRunConfig run = cfg.run;
    run.seed = seed;
    const fs::path dir = cfg.seeds.size() == 1 ? cfg.out_dir : cfg.out_dir / ("seed_" + std::to_string(seed));
    Corpus corpus = load_corpus(run.data, run.seed);
    TrainOptions opts;
    opts.run_dir = dir;
    TrainResult r = train(run, corpus, opts);
    if (r.failed) {
      log << "FAILED seed " << seed << ": " << r.failure << "\n";
      code = 1;
      continue;
    }
    const MetricsReport& m = r.evals.back();
    log << "seed " << seed << ": steps=" << r.steps_done << " perplexity=" << format_double(m.perplexity)
        << " min_pes=" << format_double(m.min_pes) << " mean_seu=" << format_double(m.mean_seu) << " -> "
        << dir.string() << "\n";
  }
  return code;
}

int do_bench(const ExperimentConfig& cfg, const Provenance& prov, std::ostream& log) {
  ResultTable t = bench_orthogonality(cfg.bench);
  t.write_summary_csv(cfg.out_dir / "summary.csv", prov.line());
  t.write_trials_csv(cfg.out_dir / "trials.csv", prov.line());
  Json j{{"config", to_json(cfg.bench)}, {"table", t.to_json()}};
  prov.stamp(j);
  write_json(cfg.out_dir / "summary.json", j);
  for (const auto& label : t.labels()) {
    log << label << "  max_dev=" << format_double(t.summary(label, "max_dev").mean)
        << "  l1_dist=" << format_double(t.summary(label, "l1_dist").mean) << "\n";
  }
  return 0;
}

int do_compare(const ExperimentConfig& cfg, const Provenance& prov, std::ostream& log) {
  ComparisonResult r = run_comparison(cfg.run, cfg.strategies, cfg.seeds, cfg.out_dir / "runs");
  return finish_comparison(r, cfg, prov, Json::object(), log);
}

int do_sweep(const ExperimentConfig& cfg, const Provenance& prov, std::ostream& log) {
  ComparisonResult r = coefficient_sweep(cfg.run, cfg.coefficients, cfg.seeds, cfg.out_dir / "runs");
  auto [gap, sd] = sweep_gap(r);
  log << "perplexity gap=" << format_double(gap) << " mean seed stddev=" << format_double(sd) << "\n";
  return finish_comparison(r, cfg, prov, Json{{"perplexity_gap", gap}, {"seed_stddev", sd}}, log);
}

int do_drop(const ExperimentConfig& cfg, const Provenance& prov, std::ostream& log) {
  LoadedSource src = load_source(cfg);
  auto batches = eval_batches_for(src.run, cfg.eval_batches);
  std::vector<std::size_t> k_list = cfg.k_list;
  if (k_list.empty()) {
    for (std::size_t k = 0; k <= src.run.model.n_experts - src.run.model.top_a; ++k) k_list.push_back(k);
  }
  auto pts = drop_top_experts(src.model, k_list, batches);
  const double base = evaluate(src.model, batches).perplexity;
  auto out = open_out(cfg.out_dir / "drop.csv");
  CsvWriter w(out);
  w.comment(prov.line());
  w.header({"k", "perplexity", "relative_increase", "dropped"});
  Json j{{"source", src.checkpoint.string()}, {"points", Json::array()}};
  for (const DropPoint& p : pts) {
    std::string dropped;
    for (std::size_t l = 0; l < p.dropped.size(); ++l) {
      dropped += (l ? "|" : "") + std::to_string(l) + ":";
      for (std::size_t i = 0; i < p.dropped[l].size(); ++i) dropped += (i ? " " : "") + std::to_string(p.dropped[l][i]);
    }
    const double rel = p.perplexity / base - 1.0;
    w.row({std::to_string(p.k), format_double(p.perplexity), format_double(rel), dropped});
    j["points"].push_back({{"k", p.k}, {"perplexity", p.perplexity}, {"relative_increase", rel}, {"dropped", p.dropped}});
    log << "k=" << p.k << " perplexity=" << format_double(p.perplexity) << "\n";
  }
  prov.stamp(j);
  write_json(cfg.out_dir / "drop.json", j);
  return 0;
}

int do_prune(const ExperimentConfig& cfg, const Provenance& prov, std::ostream& log) {
  LoadedSource src = load_source(cfg);
  auto batches = eval_batches_for(src.run, cfg.eval_batches);
  auto pts = prune_eval(src.model, cfg.thresholds, batches);
  auto out = open_out(cfg.out_dir / "prune.csv");
  CsvWriter w(out);
  w.comment(prov.line());
  w.header({"threshold", "perplexity", "expert_evaluations"});
  Json j{{"source", src.checkpoint.string()}, {"points", Json::array()}};
  Json timing{{"seconds", Json::array()}};
  for (const PrunePoint& p : pts) {
    w.row({format_double(p.threshold), format_double(p.perplexity), std::to_string(p.expert_evaluations)});
    j["points"].push_back({{"threshold", p.threshold}, {"perplexity", p.perplexity},
                           {"expert_evaluations", p.expert_evaluations}});
    timing["seconds"].push_back({{"threshold", p.threshold}, {"seconds", p.seconds}});
    log << "threshold=" << format_double(p.threshold) << " perplexity=" << format_double(p.perplexity)
        << " expert_evaluations=" << p.expert_evaluations << " seconds=" << format_double(p.seconds) << "\n";
  }
  prov.stamp(j);
  prov.stamp(timing);
  write_json(cfg.out_dir / "prune.json", j);
  write_json(cfg.out_dir / "timing.json", timing);
  return 0;
}

int do_pes_series(const ExperimentConfig& cfg, const Provenance& prov, std::ostream& log) {
  if (cfg.source.empty()) throw ConfigError("pes-series needs \"source\" (a run directory)");
  PesSeries s = pes_over_checkpoints(cfg.source);
  auto out = open_out(cfg.out_dir / "pes_series.csv");
  CsvWriter w(out);
  w.comment(prov.line());
  w.header({"step", "layer", "pes", "rate"});
  for (std::size_t i = 0; i < s.steps.size(); ++i) {
    for (std::size_t l = 0; l < s.pes[i].size(); ++l) {
      w.row({std::to_string(s.steps[i]), std::to_string(l), format_double(s.pes[i][l]),
             i ? format_double(s.rate[i - 1][l]) : ""});
    }
    w.row({std::to_string(s.steps[i]), "min", format_double(s.min_pes[i]), i ? format_double(s.min_pes_rate[i - 1]) : ""});
  }
  Json j{{"source", cfg.source.string()}, {"steps", s.steps}, {"pes", s.pes}, {"rate", s.rate},
         {"min_pes", s.min_pes}, {"min_pes_rate", s.min_pes_rate}, {"mean_rate", s.mean_rate},
         {"early_pes_rate", early_pes_rate(s)}};
  prov.stamp(j);
  write_json(cfg.out_dir / "pes_series.json", j);
  log << s.steps.size() << " checkpoints, early PES rate=" << format_double(early_pes_rate(s)) << "\n";
  return 0;
}

int do_flops(const ExperimentConfig& cfg, const Provenance& prov, std::ostream& log) {
  double active = cfg.active_params, embed = cfg.embed_params;
  if (!cfg.source.empty()) {
    LoadedSource src = load_source(cfg);
    active = static_cast<double>(src.model.active_parameter_count());
    embed = static_cast<double>(src.model.embedding_parameter_count());
  }
  const double flops = estimate_flops(active, embed, cfg.tokens);
  auto out = open_out(cfg.out_dir / "flops.csv");
  CsvWriter w(out);
  w.comment(prov.line());
  w.header({"active_params", "embed_params", "tokens", "flops"});
  w.row({format_double(active), format_double(embed), format_double(cfg.tokens), format_double(flops)});
  Json j{{"active_params", active}, {"embed_params", embed}, {"tokens", cfg.tokens}, {"flops", flops}};
  prov.stamp(j);
  write_json(cfg.out_dir / "flops.json", j);
  log << format_double(flops) << "\n";
  return 0;
}

}  // namespace

const std::vector<std::string>& experiment_kinds() {
  static const std::vector<std::string> kinds{"train",        "bench-ortho", "compare",    "sweep",
                                              "drop-experts", "prune-eval",  "pes-series", "flops"};
  return kinds;
}

ExperimentConfig experiment_from_json(const std::string& kind, const Json& j) {
  const auto& kinds = experiment_kinds();
  if (std::find(kinds.begin(), kinds.end(), kind) == kinds.end()) throw ConfigError("unknown experiment '" + kind + "'");
  if (!j.is_object()) throw ConfigError("experiment config must be a JSON object");
  ExperimentConfig c;
  c.kind = kind;
  c.raw = j;
  for (const auto& item : j.items()) {
    const std::string& k = item.key();
    const Json& v = item.value();
    if (k == "experiment") {
      if (get<std::string>(v, k) != kind) throw ConfigError("config is for '" + v.get<std::string>() + "', not '" + kind + "'");
    } else if (k == "out_dir") {
      c.out_dir = get<std::string>(v, k);
    } else if (k == "seeds") {
      c.seeds = get<std::vector<std::uint64_t>>(v, k);
      if (c.seeds.empty()) throw ConfigError("seeds must not be empty");
    } else if (k == "run") {
      c.run = train_config_from_json(v);
    } else if (k == "bench") {
      c.bench = bench_ortho_from_json(v);
    } else if (k == "strategies") {
      c.strategies.clear();
      for (const auto& s : get<std::vector<std::string>>(v, k)) c.strategies.push_back(parse_strategy(s));
    } else if (k == "coefficients") {
      c.coefficients = get<std::vector<double>>(v, k);
    } else if (k == "source") {
      c.source = get<std::string>(v, k);
    } else if (k == "k") {
      c.k_list = get<std::vector<std::size_t>>(v, k);
    } else if (k == "thresholds") {
      c.thresholds = get<std::vector<double>>(v, k);
    } else if (k == "eval_batches") {
      c.eval_batches = get<std::size_t>(v, k);
    } else if (k == "active_params") {
      c.active_params = get<double>(v, k);
    } else if (k == "embed_params") {
      c.embed_params = get<double>(v, k);
    } else if (k == "tokens") {
      c.tokens = get<double>(v, k);
    } else {
      throw ConfigError("unknown key '" + k + "' in experiment config");
    }
  }
  if (kind == "bench-ortho" && c.raw.contains("seeds")) c.bench.seed = c.seeds.front();
  return c;
}

fs::path resolve_checkpoint(const fs::path& source) {
  if (fs::exists(source / "manifest.json")) return source;
  auto all = list_checkpoints(source);
  if (all.empty()) throw DataError("no checkpoints under '" + source.string() + "'");
  return all.back();
}

int run_experiment(const ExperimentConfig& cfg, std::ostream& log) {
  fs::create_directories(cfg.out_dir);
  Json identity = cfg.raw;
  identity.erase("out_dir");
  Provenance prov{config_hash(identity), seeds_text(cfg.kind == "bench-ortho" ? std::vector<std::uint64_t>{cfg.bench.seed}
                                                                             : cfg.seeds)};
  if (cfg.kind == "drop-experts" || cfg.kind == "prune-eval" || cfg.kind == "pes-series" ||
      (cfg.kind == "flops" && !cfg.source.empty())) {
    const fs::path ckpt = cfg.kind == "pes-series" ? list_checkpoints(cfg.source).at(0) : resolve_checkpoint(cfg.source);
    prov.seeds = std::to_string(train_config_from_json(read_checkpoint_meta(ckpt).config).seed);
  }
  Json resolved{{"experiment", cfg.kind}, {"config", cfg.raw}};
  prov.stamp(resolved);
  write_json(cfg.out_dir / "experiment.json", resolved);
  if (cfg.kind == "train") return do_train(cfg, prov, log);
  if (cfg.kind == "bench-ortho") return do_bench(cfg, prov, log);
  if (cfg.kind == "compare") return do_compare(cfg, prov, log);
  if (cfg.kind == "sweep") return do_sweep(cfg, prov, log);
  if (cfg.kind == "drop-experts") return do_drop(cfg, prov, log);
  if (cfg.kind == "prune-eval") return do_prune(cfg, prov, log);
  if (cfg.kind == "pes-series") return do_pes_series(cfg, prov, log);
  return do_flops(cfg, prov, log);
}

}  // namespace simbal
