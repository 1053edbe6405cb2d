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

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "fseg/campaign.hpp"
#include "fseg/faultsim.hpp"
#include "fseg/segnet.hpp"

namespace fseg {

struct DatasetConfig {
  std::uint64_t seed = 0;
  std::size_t count_train = 500;
  std::size_t count_val = 100;
  Index height = 64;
  Index width = 64;
};

struct CampaignConfig {
  std::filesystem::path checkpoint;
  std::filesystem::path dataset;
  HardeningMode hardening_mode = HardeningMode::None;
  int injections_per_image = 10;
  std::size_t max_images = 0;  ///< 0: the whole validation split
  int workers = 1;
  std::filesystem::path output_dir = "campaign";
};

/// Everything a JSON config file can set. Sections: "dataset", "model", "train",
/// "fat_policy", "injection_policy", "campaign"; keys are the snake_case field names.
struct ExperimentConfig {
  DatasetConfig dataset;
  ModelConfig model;
  TrainOptions train;
  InjectionPolicy injection_policy;
  CampaignConfig campaign;
};

/// Unknown sections or keys and ill-typed values throw FormatError.
ExperimentConfig parse_config(const std::string& json_text);
ExperimentConfig load_config(const std::filesystem::path& path);

}  // namespace fseg
