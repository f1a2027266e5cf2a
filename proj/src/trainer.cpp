// Copyright 2026 The simbal-moe Authors
// SPDX-License-Identifier: Apache-2.0

#include "simbal/trainer.hpp"

#include <chrono>
#include <cstdio>
#include <fstream>

#include "simbal/checkpoint.hpp"
#include "simbal/config_io.hpp"
#include "simbal/csv.hpp"
#include "simbal/error.hpp"
#include "simbal/ops.hpp"
#include "simbal/rng.hpp"

namespace simbal {

namespace fs = std::filesystem;

namespace {

enum Stream : std::uint64_t { kDataStream = 1, kCorpusStream = 2, kTrainRng = 3 };

std::string checkpoint_name(std::size_t step) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "step_%06zu", step);
  return buf;
}

std::vector<ParamSlot> optimizer_slots(const Model& model, const TrainRunConfig& run) {
  const bool shield_routers = run.balancing.uses_simbal() && !run.decay_routers;
  std::vector<ParamSlot> slots;
  for (const NamedTensor& p : model.parameters()) {
    slots.push_back(ParamSlot{p.name, p.tensor, p.decay && !(p.is_router && shield_routers)});
  }
  return slots;
}

}  // namespace

void TrainRunConfig::validate() const {
  model.validate();
  schedule.validate();
  if (batch_size == 0 || seq_len == 0) throw ConfigError("batch_size and seq_len must be positive");
  if (seq_len > model.max_seq_len) throw ConfigError("seq_len exceeds model max_seq_len");
  if (model.vocab_size < kByteVocab) throw ConfigError("byte-level data needs vocab_size >= 256");
  if (eval_batches == 0) throw ConfigError("eval_batches must be positive");
  if (balancing.uses_lf() && model.gating == Gating::kSoftmax && balancing.gamma < 0.0) {
    throw ConfigError("gamma must be non-negative");
  }
}

Corpus load_corpus(const DataConfig& data, std::uint64_t seed) {
  if (!data.path.empty()) return Corpus::load(data.path, data.validation_fraction);
  return Corpus::from_tokens(
      make_skewed_synthetic(data.synthetic_tokens, data.synthetic_modes, Rng::derive(seed, kCorpusStream)),
      data.validation_fraction);
}

std::vector<std::string> step_csv_header() {
  return {"step", "lr", "ce", "lbl", "simbal", "zloss", "total", "tokens_seen"};
}

std::vector<std::string> step_csv_row(const StepLog& s) {
  return {std::to_string(s.step),       format_double(s.lr),          format_double(s.loss.ce),
          format_double(s.loss.lbl),    format_double(s.loss.simbal), format_double(s.loss.zloss),
          format_double(s.loss.total_value), std::to_string(s.tokens_seen)};
}

TrainResult train(const TrainRunConfig& run, const Corpus& corpus, const TrainOptions& options) {
  run.validate();
  const auto start = std::chrono::steady_clock::now();
  const Json config = to_json(run);
  const std::string provenance = "config_hash=" + config_hash(config) + " seed=" + std::to_string(run.seed);

  TrainResult result;
  result.model = Model(run.model, run.seed);
  Model& model = result.model;
  AdamW opt(optimizer_slots(model, run), run.optimizer);
  BatchStream stream(corpus.train(), run.batch_size, run.seq_len, Rng::derive(run.seed, kDataStream));
  Rng rng(Rng::derive(run.seed, kTrainRng));
  std::size_t step = 0, tokens_seen = 0;

  if (!options.resume_from.empty()) {
    CheckpointMeta meta = read_checkpoint_meta(options.resume_from);
    if (config_hash(meta.config) != config_hash(config)) {
      throw ConfigError("checkpoint '" + options.resume_from.string() + "' was written by a different config");
    }
    load_model_state(options.resume_from, model);
    load_optimizer_state(options.resume_from, opt);
    stream.seek(meta.data);
    rng.deserialize(meta.rng_state);
    step = meta.step;
    tokens_seen = meta.tokens_seen;
  }

  std::vector<Batch> eval_set, pes_set;
  if (!options.skip_eval) {
    eval_set = sequential_batches(corpus.validation(), run.batch_size, run.seq_len, run.eval_batches);
    const std::size_t n_pes = std::min(run.pes_batches == 0 ? eval_set.size() : run.pes_batches, eval_set.size());
    pes_set.assign(eval_set.begin(), eval_set.begin() + static_cast<std::ptrdiff_t>(n_pes));
  }

  std::ofstream metrics_csv, eval_csv;
  std::unique_ptr<CsvWriter> step_writer, eval_writer;
  const bool on_disk = !options.run_dir.empty();
  if (on_disk) {
    fs::create_directories(options.run_dir);
    write_text_file((options.run_dir / "config.json").string(), config.dump(2) + "\n");
    metrics_csv.open(options.run_dir / "metrics.csv", std::ios::binary);
    step_writer = std::make_unique<CsvWriter>(metrics_csv);
    step_writer->comment(provenance);
    step_writer->header(step_csv_header());
    if (!options.skip_eval) {
      eval_csv.open(options.run_dir / "eval.csv", std::ios::binary);
      eval_writer = std::make_unique<CsvWriter>(eval_csv);
      eval_writer->comment(provenance);
      eval_writer->header(metrics_csv_header());
    }
  }

  auto checkpoint = [&](std::size_t at) {
    if (!on_disk) return;
    const fs::path dir = options.run_dir / "checkpoints" / checkpoint_name(at);
    save_checkpoint(dir, model, &opt, CheckpointMeta{config, at, tokens_seen, stream.position(), rng.serialize()});
    result.checkpoints.push_back(dir);
  };
  auto evaluate_now = [&](std::size_t at) {
    if (options.skip_eval) return;
    result.evals.push_back(measure(model, eval_set, pes_set, at));
    if (eval_writer) {
      for (const auto& row : metrics_csv_rows(result.evals.back())) eval_writer->row(row);
      eval_csv.flush();
    }
  };

  const std::size_t end = options.stop_after ? std::min(run.schedule.total_steps, step + options.stop_after)
                                             : run.schedule.total_steps;
  if (run.checkpoint_every && step == 0) checkpoint(0);
  if (run.eval_every && step == 0) evaluate_now(0);

  std::vector<Tensor> routers;
  for (const MoeBlock& b : model.blocks()) routers.push_back(b.router.weight);

  for (; step < end; ++step) {
    Batch batch = stream.next();
    const double lr = lr_at(step, run.schedule);
    try {
      Graph g;
      ForwardResult fr = model.forward(g, batch.inputs, batch.n_seqs, batch.seq_len);
      Tensor ce = ops::cross_entropy(g, fr.logits, batch.targets);
      LossParts parts = assemble_loss(g, ce, run.balancing, fr.routing, routers, fr.logits);
      g.backward(parts.total);
      opt.step(lr);
      opt.zero_grad();
      if (run.balancing.uses_lf()) {
        for (std::size_t l = 0; l < fr.routing.size(); ++l) {
          lf_update(usage_fractions(fr.routing[l].record), model.blocks()[l].router.lf_bias, run.balancing.gamma);
        }
      }
      tokens_seen += batch.inputs.size();
      result.log.push_back(StepLog{step, lr, parts, tokens_seen});
      if (step_writer) step_writer->row(step_csv_row(result.log.back()));
    } catch (const NumericError& e) {
      result.failed = true;
      result.failure = "step " + std::to_string(step) + ": " + e.what();
      break;
    }
    const std::size_t done = step + 1;
    if (run.checkpoint_every && done % run.checkpoint_every == 0 && done != run.schedule.total_steps) checkpoint(done);
    if (run.eval_every && done % run.eval_every == 0 && done != run.schedule.total_steps) evaluate_now(done);
  }
  result.steps_done = step;

  if (!result.failed) {
    if (step == run.schedule.total_steps) checkpoint(step);
    evaluate_now(step);
  }
  if (on_disk) {
    Json evals = Json::array();
    for (const MetricsReport& r : result.evals) evals.push_back(Json::parse(metrics_json(r)));
    write_text_file((options.run_dir / "eval.json").string(), evals.dump(2) + "\n");
    Json status{{"failed", result.failed}, {"failure", result.failure}, {"steps_done", result.steps_done},
                {"config_hash", config_hash(config)}, {"seed", run.seed}};
    write_text_file((options.run_dir / "status.json").string(), status.dump(2) + "\n");
  }
  result.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  if (on_disk) {
    write_text_file((options.run_dir / "timing.json").string(),
                    Json{{"seconds", result.seconds}}.dump(2) + "\n");
  }
  return result;
}

}  // namespace simbal
