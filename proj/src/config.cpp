/*
 *  Copyright 2026 The fseg Authors
 *
 *  Licensed under the Apache License, Version 2.0 (the "License");
 *  you may not use this file except in compliance with the License.
 *  You may obtain a copy of the License at
 *
 *      http://www.apache.org/licenses/LICENSE-2.0
 *
 *  Unless required by applicable law or agreed to in writing, software
 *  distributed under the License is distributed on an "AS IS" BASIS,
 *  WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 *  See the License for the specific language governing permissions and
 *  limitations under the License.
 */

#include "fseg/config.hpp"

#include <functional>
#include <map>

#include <json.hpp>

#include "fseg/binary_io.hpp"

namespace fseg {

namespace {

using Json = nlohmann::json;
using Setter = std::function<void(const Json&)>;

template <typename T>
Setter set(T& field) {
  return [&field](const Json& v) { field = v.get<T>(); };
}

void apply_section(const Json& section, const std::string& name, const std::map<std::string, Setter>& setters) {
  if (!section.is_object()) throw FormatError("config section '" + name + "' must be an object");
  for (const auto& [key, value] : section.items()) {
    const auto it = setters.find(key);
    if (it == setters.end()) throw FormatError("unknown config key '" + name + "." + key + "'");
    try {
      it->second(value);
    } catch (const Json::exception& e) {
      throw FormatError("config key '" + name + "." + key + "': " + e.what());
    } catch (const ValueError& e) {
      throw FormatError("config key '" + name + "." + key + "': " + e.what());
    }
  }
}

std::map<std::string, Setter> policy_setters(InjectionPolicy& p) {
  return {
      {"seed", set(p.seed)},
      {"p_inject", set(p.p_inject)},
      {"magnitude_lo", set(p.magnitude_lo)},
      {"magnitude_hi", set(p.magnitude_hi)},
      {"block_min", set(p.block_min)},
      {"block_max", set(p.block_max)},
      {"geometry_weights", set(p.geometry_weights)},
      {"channel_weights", set(p.channel_weights)},
      {"p_extreme", set(p.p_extreme)},
  };
}

}  // namespace

ExperimentConfig parse_config(const std::string& json_text) {
  Json root;
  try {
    root = Json::parse(json_text);
  } catch (const Json::exception& e) {
    throw FormatError(std::string("config is not valid JSON: ") + e.what());
  }
  if (!root.is_object()) throw FormatError("config root must be an object");

  ExperimentConfig cfg;
  DatasetConfig& d = cfg.dataset;
  ModelConfig& m = cfg.model;
  TrainOptions& t = cfg.train;
  CampaignConfig& c = cfg.campaign;
  std::string activation = to_string(m.activation_kind);
  std::string mode = to_string(c.hardening_mode);
  std::string checkpoint, dataset_path, output_dir = c.output_dir.string();

  const std::map<std::string, std::map<std::string, Setter>> sections{
      {"dataset",
       {{"seed", set(d.seed)},
        {"count_train", set(d.count_train)},
        {"count_val", set(d.count_val)},
        {"height", set(d.height)},
        {"width", set(d.width)}}},
      {"model",
       {{"num_classes", set(m.num_classes)},
        {"base_channels", set(m.base_channels)},
        {"depth", set(m.depth)},
        {"activation_kind", set(activation)},
        {"fault_aware_training", set(m.fault_aware_training)},
        {"fat_probability", set(m.fat_probability)}}},
      {"train",
       {{"epochs", set(t.epochs)},
        {"learning_rate", set(t.learning_rate)},
        {"batch_size", set(t.batch_size)},
        {"momentum", set(t.momentum)},
        {"seed", set(t.seed)}}},
      {"fat_policy", policy_setters(t.fat_policy)},
      {"injection_policy", policy_setters(cfg.injection_policy)},
      {"campaign",
       {{"checkpoint", set(checkpoint)},
        {"dataset", set(dataset_path)},
        {"hardening_mode", set(mode)},
        {"injections_per_image", set(c.injections_per_image)},
        {"max_images", set(c.max_images)},
        {"workers", set(c.workers)},
        {"output_dir", set(output_dir)}}},
  };
  for (const auto& [name, section] : root.items()) {
    const auto it = sections.find(name);
    if (it == sections.end()) throw FormatError("unknown config section '" + name + "'");
    apply_section(section, name, it->second);
  }
  try {
    m.activation_kind = parse_activation_kind(activation);
    c.hardening_mode = parse_hardening_mode(mode);
    m.validate();
    t.fat_policy.validate();
    cfg.injection_policy.validate();
  } catch (const ValueError& e) {
    throw FormatError(std::string("invalid config: ") + e.what());
  }
  if (c.injections_per_image < 1) throw FormatError("invalid config: injections_per_image must be >= 1");
  c.checkpoint = checkpoint;
  c.dataset = dataset_path;
  c.output_dir = output_dir;
  return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path) { return parse_config(read_file(path)); }

}  // namespace fseg
