// Copyright 2026 The simbal-moe Authors
// SPDX-License-Identifier: Apache-2.0

#include "simbal/checkpoint.hpp"

#include <algorithm>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>

#include "simbal/error.hpp"

namespace simbal {

namespace fs = std::filesystem;

namespace {

std::string lf_name(std::size_t layer) { return "layers." + std::to_string(layer) + ".lf_bias"; }

std::uint64_t to_le(std::uint64_t v) {
  if constexpr (std::endian::native == std::endian::little) return v;
  std::uint64_t r = 0;
  for (int i = 0; i < 8; ++i) r |= ((v >> (8 * i)) & 0xFFu) << (8 * (7 - i));
  return r;
}

}  // namespace

void write_f64(const fs::path& path, std::span<const double> values) {
  std::vector<std::uint64_t> raw(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) raw[i] = to_le(std::bit_cast<std::uint64_t>(values[i]));
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write '" + path.string() + "'");
  out.write(reinterpret_cast<const char*>(raw.data()), static_cast<std::streamsize>(raw.size() * 8));
}

std::vector<double> read_f64(const fs::path& path, std::size_t expected) {
  std::ifstream in(path, std::ios::binary | std::ios::ate);
  if (!in) throw DataError("missing checkpoint file '" + path.string() + "'");
  const auto bytes = static_cast<std::size_t>(in.tellg());
  if (bytes != expected * 8) {
    throw DataError("checkpoint file '" + path.string() + "' holds " + std::to_string(bytes / 8) +
                    " values, expected " + std::to_string(expected));
  }
  in.seekg(0);
  std::vector<std::uint64_t> raw(expected);
  in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(bytes));
  std::vector<double> out(expected);
  for (std::size_t i = 0; i < expected; ++i) out[i] = std::bit_cast<double>(to_le(raw[i]));
  return out;
}

void save_checkpoint(const fs::path& dir, const Model& model, const AdamW* optimizer,
                     const CheckpointMeta& meta) {
  fs::create_directories(dir / "params");
  Json manifest;
  manifest["format"] = "float64-le";
  manifest["config"] = meta.config;
  manifest["step"] = meta.step;
  manifest["tokens_seen"] = meta.tokens_seen;
  manifest["data"] = {{"epoch", meta.data.epoch}, {"cursor", meta.data.cursor}};
  manifest["rng"] = meta.rng_state;
  Json tensors = Json::array();
  for (const NamedTensor& p : model.parameters()) {
    write_f64(dir / "params" / (p.name + ".bin"), p.tensor.data());
    tensors.push_back({{"name", p.name}, {"shape", p.tensor.shape()}});
  }
  for (std::size_t l = 0; l < model.blocks().size(); ++l) {
    const auto& b = model.blocks()[l].router.lf_bias;
    write_f64(dir / "params" / (lf_name(l) + ".bin"), b);
    tensors.push_back({{"name", lf_name(l)}, {"shape", {b.size()}}});
  }
  manifest["tensors"] = tensors;
  if (optimizer) {
    fs::create_directories(dir / "optim");
    manifest["optimizer_steps"] = optimizer->steps();
    for (std::size_t i = 0; i < optimizer->params().size(); ++i) {
      const std::string& name = optimizer->params()[i].name;
      write_f64(dir / "optim" / (name + ".m.bin"), optimizer->first_moment(i));
      write_f64(dir / "optim" / (name + ".v.bin"), optimizer->second_moment(i));
    }
  }
  write_text_file((dir / "manifest.json").string(), manifest.dump(2) + "\n");
}

CheckpointMeta read_checkpoint_meta(const fs::path& dir) {
  const Json m = read_json_file((dir / "manifest.json").string());
  CheckpointMeta meta;
  try {
    meta.config = m.at("config");
    meta.step = m.at("step").get<std::size_t>();
    meta.tokens_seen = m.at("tokens_seen").get<std::size_t>();
    meta.data.epoch = m.at("data").at("epoch").get<std::uint64_t>();
    meta.data.cursor = m.at("data").at("cursor").get<std::size_t>();
    meta.rng_state = m.at("rng").get<std::string>();
  } catch (const Json::exception& e) {
    throw DataError("malformed checkpoint manifest in '" + dir.string() + "': " + e.what());
  }
  return meta;
}

void load_model_state(const fs::path& dir, Model& model) {
  for (NamedTensor& p : model.parameters()) {
    const std::vector<double> values = read_f64(dir / "params" / (p.name + ".bin"), p.tensor.size());
    std::copy(values.begin(), values.end(), p.tensor.mutable_data().begin());
  }
  for (std::size_t l = 0; l < model.blocks().size(); ++l) {
    auto& b = model.blocks()[l].router.lf_bias;
    b = read_f64(dir / "params" / (lf_name(l) + ".bin"), b.size());
  }
}

void load_optimizer_state(const fs::path& dir, AdamW& optimizer) {
  const Json m = read_json_file((dir / "manifest.json").string());
  if (!m.contains("optimizer_steps")) throw DataError("checkpoint '" + dir.string() + "' has no optimizer state");
  optimizer.set_steps(m.at("optimizer_steps").get<std::size_t>());
  for (std::size_t i = 0; i < optimizer.params().size(); ++i) {
    const ParamSlot& p = optimizer.params()[i];
    optimizer.first_moment(i) = read_f64(dir / "optim" / (p.name + ".m.bin"), p.tensor.size());
    optimizer.second_moment(i) = read_f64(dir / "optim" / (p.name + ".v.bin"), p.tensor.size());
  }
}

Model load_model(const fs::path& dir) {
  CheckpointMeta meta = read_checkpoint_meta(dir);
  TrainRunConfig run = train_config_from_json(meta.config);
  Model model(run.model, run.seed);
  load_model_state(dir, model);
  return model;
}

std::vector<fs::path> list_checkpoints(const fs::path& run_dir) {
  std::vector<std::pair<std::size_t, fs::path>> found;
  const fs::path root = run_dir / "checkpoints";
  if (!fs::exists(root)) return {};
  for (const auto& entry : fs::directory_iterator(root)) {
    if (!entry.is_directory() || !fs::exists(entry.path() / "manifest.json")) continue;
    found.emplace_back(read_checkpoint_meta(entry.path()).step, entry.path());
  }
  std::sort(found.begin(), found.end());
  std::vector<fs::path> out;
  for (auto& [step, path] : found) out.push_back(path);
  return out;
}

}  // namespace simbal
