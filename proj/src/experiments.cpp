// Copyright 2026 The simbal-moe Authors
// SPDX-License-Identifier: Apache-2.0

#include "simbal/experiments.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>

#include "simbal/balancing.hpp"
#include "simbal/checkpoint.hpp"
#include "simbal/csv.hpp"
#include "simbal/error.hpp"
#include "simbal/init.hpp"
#include "simbal/metrics.hpp"
#include "simbal/ops.hpp"
#include "simbal/rng.hpp"

namespace simbal {

namespace fs = std::filesystem;

namespace {

const double kNan = std::numeric_limits<double>::quiet_NaN();

void cast_inplace(Tensor& t, Precision p) {
  if (p == Precision::kF64) return;
  for (double& v : t.mutable_data()) v = round_bf16(v);
}

Tensor cast(const Tensor& t, Precision p) {
  Tensor c = t.clone();
  cast_inplace(c, p);
  return c;
}

std::string label_for(double coefficient) { return "coeff=" + format_double(coefficient); }

std::vector<double> smoothed_ce(const std::vector<StepLog>& log, std::size_t window) {
  std::vector<double> out(log.size());
  double acc = 0.0;
  for (std::size_t i = 0; i < log.size(); ++i) {
    acc += log[i].loss.ce;
    if (i >= window) acc -= log[i - window].loss.ce;
    out[i] = acc / static_cast<double>(std::min(i + 1, window));
  }
  return out;
}

RunOutcome train_one(TrainRunConfig run, const std::string& label, std::uint64_t seed, const fs::path& dir) {
  run.seed = seed;
  RunOutcome out;
  out.strategy = label;
  out.seed = seed;
  out.coefficient = run.balancing.simbal_coeff;
  out.dir = dir;
  Corpus corpus = load_corpus(run.data, run.seed);
  TrainOptions opts;
  opts.run_dir = dir;
  out.result = train(run, corpus, opts);
  out.failed = out.result.failed;
  out.failure = out.result.failure;
  return out;
}

ComparisonResult collect(std::vector<RunOutcome> runs, std::vector<std::string> order) {
  ComparisonResult cr;
  for (RunOutcome& r : runs) {
    if (r.failed) {
      ++cr.failed_runs;
      continue;
    }
    const MetricsReport& final = r.result.evals.back();
    double gram_mse = 0.0;
    std::size_t min_unique = std::numeric_limits<std::size_t>::max();
    for (const LayerMetrics& l : final.layers) {
      gram_mse += l.gram.mse / static_cast<double>(final.layers.size());
      min_unique = std::min(min_unique, l.unique_experts);
    }
    cr.table.add(r.strategy, "perplexity", final.perplexity);
    cr.table.add(r.strategy, "min_pes", final.min_pes);
    cr.table.add(r.strategy, "mean_seu", final.mean_seu);
    cr.table.add(r.strategy, "gram_mse", gram_mse);
    cr.table.add(r.strategy, "min_unique_experts", static_cast<double>(min_unique));
    if (list_checkpoints(r.dir).size() >= 2) {
      PesSeries s = pes_over_checkpoints(r.dir);
      cr.table.add(r.strategy, "early_pes_rate", early_pes_rate(s));
    }
  }

  // Tokens needed to reach the loss the slowest label ends at, using the
  // seed-averaged smoothed training loss.
  std::map<std::string, std::vector<double>> curves;
  std::map<std::string, std::vector<std::size_t>> tokens;
  std::map<std::string, std::size_t> counts;
  for (const RunOutcome& r : runs) {
    if (r.failed || r.result.log.empty()) continue;
    const std::size_t window = std::max<std::size_t>(1, r.result.log.size() / 20);
    std::vector<double> s = smoothed_ce(r.result.log, window);
    auto& c = curves[r.strategy];
    if (c.empty()) {
      c.assign(s.size(), 0.0);
      for (const StepLog& l : r.result.log) tokens[r.strategy].push_back(l.tokens_seen);
    }
    const std::size_t n = std::min(c.size(), s.size());
    c.resize(n);
    for (std::size_t i = 0; i < n; ++i) c[i] += s[i];
    ++counts[r.strategy];
  }
  cr.target_loss = -std::numeric_limits<double>::infinity();
  for (auto& [label, c] : curves) {
    for (double& v : c) v /= static_cast<double>(counts[label]);
    if (!c.empty()) cr.target_loss = std::max(cr.target_loss, c.back());
  }
  for (const auto& label : order) {
    auto it = curves.find(label);
    if (it == curves.end()) continue;
    const auto& c = it->second;
    double reached = kNan;
    for (std::size_t i = 0; i < c.size(); ++i) {
      if (c[i] <= cr.target_loss) {
        reached = static_cast<double>(tokens[label][i]);
        break;
      }
    }
    cr.tokens_to_target[label] = reached;
  }
  cr.runs = std::move(runs);
  return cr;
}

}  // namespace

Summary summarize(const std::vector<double>& values) {
  Summary s;
  s.n = values.size();
  if (values.empty()) {
    s.mean = kNan;
    s.stddev = kNan;
    return s;
  }
  s.mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(s.n);
  if (s.n < 2) {
    s.stddev = kNan;
    return s;
  }
  double ss = 0.0;
  for (double v : values) ss += (v - s.mean) * (v - s.mean);
  s.stddev = std::sqrt(ss / static_cast<double>(s.n - 1));
  return s;
}

void ResultTable::add(const std::string& label, const std::string& metric, double value) {
  if (std::find(labels_.begin(), labels_.end(), label) == labels_.end()) labels_.push_back(label);
  if (std::find(metrics_.begin(), metrics_.end(), metric) == metrics_.end()) metrics_.push_back(metric);
  cells_[{label, metric}].push_back(value);
}

const std::vector<double>& ResultTable::values(const std::string& label, const std::string& metric) const {
  static const std::vector<double> empty;
  auto it = cells_.find({label, metric});
  return it == cells_.end() ? empty : it->second;
}

Summary ResultTable::summary(const std::string& label, const std::string& metric) const {
  return summarize(values(label, metric));
}

void ResultTable::write_summary_csv(const fs::path& path, const std::string& provenance) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write '" + path.string() + "'");
  CsvWriter w(out);
  w.comment(provenance);
  w.header({"label", "metric", "mean", "stddev", "n"});
  for (const auto& l : labels_) {
    for (const auto& m : metrics_) {
      if (values(l, m).empty()) continue;
      Summary s = summary(l, m);
      w.row({l, m, format_double(s.mean), s.n >= 2 ? format_double(s.stddev) : "", std::to_string(s.n)});
    }
  }
}

void ResultTable::write_trials_csv(const fs::path& path, const std::string& provenance) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write '" + path.string() + "'");
  CsvWriter w(out);
  w.comment(provenance);
  w.header({"label", "metric", "trial", "value"});
  for (const auto& l : labels_)
    for (const auto& m : metrics_) {
      const auto& v = values(l, m);
      for (std::size_t i = 0; i < v.size(); ++i) w.row({l, m, std::to_string(i), format_double(v[i])});
    }
}

Json ResultTable::to_json() const {
  Json j = Json::object();
  for (const auto& l : labels_) {
    for (const auto& m : metrics_) {
      if (values(l, m).empty()) continue;
      Summary s = summary(l, m);
      j[l][m] = {{"mean", s.mean}, {"n", s.n}, {"values", values(l, m)}};
      if (s.n >= 2) j[l][m]["stddev"] = s.stddev;
    }
  }
  return j;
}

Json to_json(const BenchOrthoConfig& c) {
  return Json{{"rows", c.rows},
              {"cols", c.cols},
              {"trials", c.trials},
              {"steps", c.steps},
              {"lr_start", c.lr_start},
              {"lr_end", c.lr_end},
              {"precision", c.precision == Precision::kF64 ? "f64" : "bf16"},
              {"start", c.start_orthogonal ? "ortho" : "random"},
              {"include_qr_retract", c.include_qr_retract},
              {"seed", c.seed}};
}

BenchOrthoConfig bench_ortho_from_json(const Json& j) {
  BenchOrthoConfig c;
  for (const auto& item : j.items()) {
    const std::string& k = item.key();
    const Json& v = item.value();
    try {
      if (k == "rows") c.rows = v.get<std::size_t>();
      else if (k == "cols") c.cols = v.get<std::size_t>();
      else if (k == "trials") c.trials = v.get<std::size_t>();
      else if (k == "steps") c.steps = v.get<std::size_t>();
      else if (k == "lr_start") c.lr_start = v.get<double>();
      else if (k == "lr_end") c.lr_end = v.get<double>();
      else if (k == "seed") c.seed = v.get<std::uint64_t>();
      else if (k == "include_qr_retract") c.include_qr_retract = v.get<bool>();
      else if (k == "precision") {
        const auto p = v.get<std::string>();
        if (p != "f64" && p != "bf16") throw ConfigError("precision must be f64 or bf16");
        c.precision = p == "f64" ? Precision::kF64 : Precision::kBf16;
      } else if (k == "start") {
        const auto s = v.get<std::string>();
        if (s != "ortho" && s != "random") throw ConfigError("start must be ortho or random");
        c.start_orthogonal = s == "ortho";
      } else {
        throw ConfigError("unknown key '" + k + "' in bench-ortho config");
      }
    } catch (const Json::exception& e) {
      throw ConfigError("bad value for '" + k + "': " + e.what());
    }
  }
  if (c.rows < c.cols) throw ConfigError("bench-ortho needs rows >= cols");
  if (c.trials == 0 || c.steps == 0) throw ConfigError("bench-ortho needs trials and steps > 0");
  if (!(c.lr_start > 0.0) || !(c.lr_end > 0.0) || c.lr_end > c.lr_start) {
    throw ConfigError("bench-ortho needs 0 < lr_end <= lr_start");
  }
  return c;
}

ResultTable bench_orthogonality(const BenchOrthoConfig& cfg) {
  ResultTable table;
  ScheduleConfig sched{cfg.lr_start, 0, cfg.steps, cfg.lr_end / cfg.lr_start};
  AdamWConfig adam;
  adam.weight_decay = 0.0;
  adam.bf16_params = cfg.precision == Precision::kBf16;

  auto record = [&](const std::string& label, const Tensor& m) {
    GramDeviation d = gram_deviation(cast(m, cfg.precision));
    table.add(label, "max_dev", d.max_dev);
    table.add(label, "l1_dist", d.l1);
  };
  auto optimize = [&](Tensor start, bool retract) {
    Tensor r = cast(start, cfg.precision);
    r.set_requires_grad(true);
    AdamW opt({ParamSlot{"router", r, false}}, adam);
    for (std::size_t step = 0; step < cfg.steps; ++step) {
      Graph g;
      g.backward(simbal_loss(g, r));
      opt.step(lr_at(step, sched));
      opt.zero_grad();
      if (retract) {
        qr_retract(r);
        cast_inplace(r, cfg.precision);
      }
    }
    return r;
  };

  const double random_std = 1.0 / std::sqrt(static_cast<double>(cfg.rows));
  for (std::size_t trial = 0; trial < cfg.trials; ++trial) {
    const std::uint64_t seed = Rng::derive(cfg.seed, trial);
    const Tensor ortho = orthogonal_init(cfg.rows, cfg.cols, seed);
    const Tensor random = normal_init(cfg.rows, cfg.cols, random_std, Rng::derive(seed, 1));
    const Tensor& start = cfg.start_orthogonal ? ortho : random;
    record("Trained", optimize(start, false));
    record("OrthoInit", ortho);
    record("RandomInit", random);
    if (cfg.include_qr_retract) record("QRRetract", optimize(start, true));
  }
  return table;
}

ComparisonResult run_comparison(const TrainRunConfig& base, const std::vector<Strategy>& strategies,
                                 const std::vector<std::uint64_t>& seeds, const fs::path& out_dir) {
  if (strategies.empty() || seeds.empty()) throw ConfigError("comparison needs strategies and seeds");
  std::vector<RunOutcome> runs;
  std::vector<std::string> order;
  for (Strategy s : strategies) {
    TrainRunConfig run = base;
    run.balancing.strategy = s;
    run.model.orthogonal_router_init = run.balancing.uses_simbal();
    order.push_back(to_string(s));
    for (std::uint64_t seed : seeds) {
      runs.push_back(train_one(run, to_string(s), seed, out_dir / to_string(s) / ("seed_" + std::to_string(seed))));
    }
  }
  return collect(std::move(runs), order);
}

ComparisonResult coefficient_sweep(const TrainRunConfig& base, const std::vector<double>& coefficients,
                                   const std::vector<std::uint64_t>& seeds, const fs::path& out_dir) {
  if (coefficients.empty() || seeds.empty()) throw ConfigError("sweep needs coefficients and seeds");
  std::vector<RunOutcome> runs;
  std::vector<std::string> order;
  for (double c : coefficients) {
    TrainRunConfig run = base;
    run.balancing.strategy = Strategy::kSimbal;
    run.balancing.simbal_coeff = c;
    run.model.orthogonal_router_init = true;
    const std::string label = label_for(c);
    order.push_back(label);
    for (std::uint64_t seed : seeds) {
      runs.push_back(train_one(run, label, seed, out_dir / label / ("seed_" + std::to_string(seed))));
    }
  }
  return collect(std::move(runs), order);
}

std::pair<double, double> sweep_gap(const ComparisonResult& sweep) {
  double lo = std::numeric_limits<double>::infinity(), hi = -lo, sd = 0.0;
  std::size_t n = 0;
  for (const auto& label : sweep.table.labels()) {
    Summary s = sweep.table.summary(label, "perplexity");
    if (s.n == 0) continue;
    lo = std::min(lo, s.mean);
    hi = std::max(hi, s.mean);
    if (s.n >= 2) {
      sd += s.stddev;
      ++n;
    }
  }
  return {hi - lo, n ? sd / static_cast<double>(n) : kNan};
}

std::vector<DropPoint> drop_top_experts(const Model& model, const std::vector<std::size_t>& k_list,
                                        const std::vector<Batch>& batches) {
  const ModelConfig& cfg = model.config();
  for (std::size_t k : k_list) {
    if (k >= cfg.n_experts || k > cfg.n_experts - cfg.top_a) {
      throw ConfigError("cannot drop " + std::to_string(k) + " of " + std::to_string(cfg.n_experts) +
                        " experts with top_a=" + std::to_string(cfg.top_a));
    }
  }
  const EvalResult base = evaluate(model, batches);
  std::vector<std::vector<std::uint32_t>> ranked(cfg.depth);
  for (std::size_t l = 0; l < cfg.depth; ++l) {
    ranked[l].resize(cfg.n_experts);
    std::iota(ranked[l].begin(), ranked[l].end(), 0u);
    const auto& counts = base.selection_counts[l];
    std::stable_sort(ranked[l].begin(), ranked[l].end(),
                     [&](std::uint32_t a, std::uint32_t b) { return counts[a] > counts[b]; });
  }
  std::vector<DropPoint> out;
  for (std::size_t k : k_list) {
    DropPoint p;
    p.k = k;
    if (k == 0) {
      p.perplexity = base.perplexity;
      p.dropped.assign(cfg.depth, {});
      out.push_back(p);
      continue;
    }
    ForwardOptions opts;
    for (std::size_t l = 0; l < cfg.depth; ++l) {
      RoutingOverrides ov;
      ov.excluded.assign(cfg.n_experts, false);
      std::vector<std::uint32_t> dropped(ranked[l].begin(), ranked[l].begin() + static_cast<std::ptrdiff_t>(k));
      for (std::uint32_t e : dropped) ov.excluded[e] = true;
      opts.overrides.push_back(ov);
      p.dropped.push_back(dropped);
    }
    p.perplexity = evaluate(model, batches, opts).perplexity;
    out.push_back(p);
  }
  return out;
}

std::vector<PrunePoint> prune_eval(const Model& model, const std::vector<double>& thresholds,
                                   const std::vector<Batch>& batches) {
  std::vector<PrunePoint> out;
  for (double t : thresholds) {
    if (!(t >= 0.0 && t < 1.0)) throw ConfigError("prune thresholds must lie in [0, 1)");
    ForwardOptions opts;
    opts.overrides.assign(model.config().depth, RoutingOverrides{{}, t});
    const auto start = std::chrono::steady_clock::now();
    EvalResult r = evaluate(model, batches, opts);
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    out.push_back(PrunePoint{t, r.perplexity, r.expert_evaluations, secs});
  }
  return out;
}

PesSeries pes_series_from_values(std::vector<std::size_t> steps, std::vector<std::vector<double>> pes) {
  if (steps.size() != pes.size()) throw DimensionError("PES series: steps and values differ in length");
  PesSeries s;
  s.steps = std::move(steps);
  s.pes = std::move(pes);
  for (const auto& layer_values : s.pes) s.min_pes.push_back(*std::min_element(layer_values.begin(), layer_values.end()));
  for (std::size_t i = 1; i < s.steps.size(); ++i) {
    const double dt = static_cast<double>(s.steps[i] - s.steps[i - 1]);
    if (dt <= 0.0) throw DataError("PES series: checkpoint steps must increase");
    std::vector<double> r(s.pes[i].size());
    double mean = 0.0;
    for (std::size_t l = 0; l < r.size(); ++l) {
      r[l] = (s.pes[i][l] - s.pes[i - 1][l]) / dt;
      mean += r[l] / static_cast<double>(r.size());
    }
    s.rate.push_back(r);
    s.mean_rate.push_back(mean);
    s.min_pes_rate.push_back((s.min_pes[i] - s.min_pes[i - 1]) / dt);
  }
  return s;
}

PesSeries pes_over_checkpoints(const fs::path& run_dir) {
  const auto dirs = list_checkpoints(run_dir);
  if (dirs.size() < 2) throw DataError("PES series needs at least two checkpoints in '" + run_dir.string() + "'");
  const TrainRunConfig run = train_config_from_json(read_checkpoint_meta(dirs[0]).config);
  std::vector<Batch> all = eval_batches_for(run, run.eval_batches);
  const std::size_t n_pes = std::min(run.pes_batches == 0 ? all.size() : run.pes_batches, all.size());
  std::vector<Batch> batches(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(n_pes));
  std::vector<std::size_t> steps;
  std::vector<std::vector<double>> pes;
  for (const auto& d : dirs) {
    steps.push_back(read_checkpoint_meta(d).step);
    pes.push_back(layer_pes(load_model(d), batches));
  }
  return pes_series_from_values(std::move(steps), std::move(pes));
}

double early_pes_rate(const PesSeries& s) {
  if (s.mean_rate.empty()) return kNan;
  const std::size_t n = std::max<std::size_t>(1, s.mean_rate.size() / 4);
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) total += s.mean_rate[i];
  return total / static_cast<double>(n);
}

double estimate_flops(double active_params, double embed_params, double tokens) {
  if (active_params < embed_params) throw ConfigError("active parameters must include the embeddings");
  return 6.0 * (active_params - embed_params) * tokens;
}

std::vector<Batch> eval_batches_for(const TrainRunConfig& run, std::size_t max_batches) {
  Corpus corpus = load_corpus(run.data, run.seed);
  return sequential_batches(corpus.validation(), run.batch_size, run.seq_len, max_batches);
}

}  // namespace simbal
