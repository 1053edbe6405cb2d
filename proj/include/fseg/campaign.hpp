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

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fseg/dataset.hpp"
#include "fseg/faultsim.hpp"
#include "fseg/metrics.hpp"
#include "fseg/segnet.hpp"

namespace fseg {

/// Hardening configurations under comparison.
enum class HardeningMode { None, Fat, Relu6, Relu6Fat, Amms, ReluMax };

std::string to_string(HardeningMode mode);
HardeningMode parse_hardening_mode(const std::string& name);

/// Throws StateError naming what the checkpoint lacks for this mode.
void check_mode(const Model& model, HardeningMode mode);
InferenceSettings settings_for(HardeningMode mode);

struct CampaignRow {
  std::size_t image_id = 0;
  FaultDescriptor fault;
  SdcClass sdc = SdcClass::Masked;
  double faulty_miou = 0.0;
};

struct SdcTally {
  std::array<std::uint64_t, 4> counts{};  ///< indexed by SdcClass

  std::uint64_t total() const { return counts[0] + counts[1] + counts[2] + counts[3]; }
  std::uint64_t operator[](SdcClass c) const { return counts[static_cast<std::size_t>(c)]; }
  double percent(SdcClass c) const;
};

/// Everything derivable from the per-injection rows alone.
struct RowAggregate {
  SdcTally tally;
  double fault_injected_miou = 0.0;
};

RowAggregate aggregate_rows(std::span<const CampaignRow> rows);

struct CampaignReport {
  HardeningMode mode = HardeningMode::None;
  std::uint64_t seed = 0;
  std::size_t images = 0;
  int injections_per_image = 1;
  std::vector<CampaignRow> rows;
  RowAggregate aggregate;
  double fault_free_miou = 0.0;
  UncertaintyReport fault_free_uncertainty;
  UncertaintyReport fault_injected_uncertainty;
};

struct CampaignOptions {
  HardeningMode mode = HardeningMode::None;
  InjectionPolicy policy;
  int injections_per_image = 10;
  int workers = 1;
};

/// Per image: one clean inference, then injections_per_image faulty ones drawn from the stream
/// derive_seed(policy.seed, image_id). Each faulty inference is scored against the clean logits
/// (SDC class) and the ground truth (mIoU). The uncertainty threshold comes from the clean pass
/// and is reused for the faulty condition. Results do not depend on the worker count.
CampaignReport run_campaign(const Model& model, const ImageSet& images, const CampaignOptions& options);

inline constexpr const char* kRowsCsvHeader =
    "image_id,layer_slot,geom_kind,y,x,h,w,channel,magnitude,sdc_class,faulty_miou";

std::string rows_to_csv(std::span<const CampaignRow> rows);
std::vector<CampaignRow> rows_from_csv(const std::string& text);
/// key,value lines; a pure function of the rows.
std::string aggregate_to_csv(const RowAggregate& aggregate);
std::string summary_to_json(const CampaignReport& report);

/// Writes rows.csv, then aggregate.csv and summary.json.
void write_report(const CampaignReport& report, const std::filesystem::path& dir);

/// Per-run aggregates plus mean and population std across runs.
std::string multi_run_summary(std::span<const RowAggregate> runs);

// ---------------------------------------------------------------------------
// Map dumps

using Rgb = std::array<std::uint8_t, 3>;

/// Fixed class colour table.
Rgb class_color(std::int32_t cls);
/// Binary PPM (P6) rendering of a class map.
std::string encode_ppm(const ClassMap& map);

/// Index of the row with the lowest faulty mIoU (first one on ties).
std::size_t worst_row(std::span<const CampaignRow> rows);

/// Writes gt_<image>.ppm, clean_<image>.ppm and faulty_<image>_<row>.ppm for the given rows,
/// re-running the recorded faults under the mode's hardening.
std::vector<std::filesystem::path> dump_maps(const Model& model, const ImageSet& images,
                                             std::span<const CampaignRow> rows, std::span<const std::size_t> row_ids,
                                             HardeningMode mode, const std::filesystem::path& dir);

}  // namespace fseg
