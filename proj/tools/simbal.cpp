// Copyright 2026 The simbal-moe Authors
// SPDX-License-Identifier: Apache-2.0

#include <iostream>
#include <map>
#include <string>

#include <CLI11.hpp>

#include "simbal/drivers.hpp"

int main(int argc, char** argv) {
  using namespace simbal;
  CLI::App app{"simbal: mixture-of-experts load balancing experiments"};
  app.require_subcommand(1);

  const std::map<std::string, std::string> help{
      {"train", "train one model per seed"},
      {"bench-ortho", "router orthogonalization microbenchmark"},
      {"compare", "train every strategy on every seed and compare"},
      {"sweep", "SimBal coefficient sweep"},
      {"drop-experts", "mask the most used experts and re-evaluate"},
      {"prune-eval", "drop low-probability experts at inference"},
      {"pes-series", "expert similarity over a run's checkpoints"},
      {"flops", "training FLOP estimate"}};

  struct Args {
    std::string config, out, source;
    double active = -1, embed = -1, tokens = -1;
  };
  std::map<std::string, Args> args;
  for (const auto& kind : experiment_kinds()) {
    CLI::App* sub = app.add_subcommand(kind, help.at(kind));
    Args& a = args[kind];
    sub->add_option("-c,--config", a.config, "JSON experiment config")->check(CLI::ExistingFile);
    sub->add_option("-o,--out", a.out, "output directory (overrides out_dir)");
    if (kind == "drop-experts" || kind == "prune-eval" || kind == "pes-series" || kind == "flops") {
      sub->add_option("-s,--source", a.source, "run or checkpoint directory (overrides source)");
    }
    if (kind == "flops") {
      sub->add_option("--active", a.active, "active parameters");
      sub->add_option("--embed", a.embed, "embedding parameters");
      sub->add_option("--tokens", a.tokens, "training tokens");
    }
  }
  CLI11_PARSE(app, argc, argv);

  const std::string kind = app.get_subcommands().front()->get_name();
  const Args& a = args[kind];
  try {
    Json j = a.config.empty() ? Json::object() : read_json_file(a.config);
    if (!a.out.empty()) j["out_dir"] = a.out;
    if (!a.source.empty()) j["source"] = a.source;
    if (a.active >= 0) j["active_params"] = a.active;
    if (a.embed >= 0) j["embed_params"] = a.embed;
    if (a.tokens >= 0) j["tokens"] = a.tokens;
    ExperimentConfig cfg = experiment_from_json(kind, j);
    const int code = run_experiment(cfg, std::cout);
    std::cout << "outputs in " << cfg.out_dir.string() << "\n";
    return code;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}
