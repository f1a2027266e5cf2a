// Copyright 2026 The simbal-moe Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>

#include <json.hpp>

#include "simbal/trainer.hpp"

namespace simbal {

using Json = nlohmann::json;

Json to_json(const ModelConfig& c);
Json to_json(const BalancingSpec& c);
Json to_json(const ScheduleConfig& c);
Json to_json(const AdamWConfig& c);
Json to_json(const DataConfig& c);
Json to_json(const TrainRunConfig& c);

// Missing keys keep their defaults; unknown keys are rejected so typos
// surface as ConfigError.
ModelConfig model_config_from_json(const Json& j);
BalancingSpec balancing_from_json(const Json& j);
ScheduleConfig schedule_from_json(const Json& j);
AdamWConfig optimizer_from_json(const Json& j);
DataConfig data_config_from_json(const Json& j);
// A "preset" key in "model" selects the base; the router is initialized
// orthogonally under SimBal unless "orthogonal_router_init" says otherwise;
// warmup defaults to 5% of short runs.
TrainRunConfig train_config_from_json(const Json& j);

Json read_json_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& text);

// FNV-1a of the canonical dump, as 16 hex digits.
std::string config_hash(const Json& j);

}  // namespace simbal
