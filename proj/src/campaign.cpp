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

#include "fseg/campaign.hpp"

#include <atomic>
#include <cmath>
#include <exception>
#include <mutex>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "fseg/binary_io.hpp"
#include "fseg/format.hpp"

namespace fseg {

namespace {

constexpr std::array<SdcClass, 4> kSdcClasses{SdcClass::Masked, SdcClass::NoImpact, SdcClass::Tolerable,
                                              SdcClass::Critical};

struct ImageResult {
  double clean_miou = 0.0;
  ClassMap clean_pred;
  ValueMap clean_entropy;
  std::vector<CampaignRow> rows;
  std::vector<ClassMap> faulty_preds;
  std::vector<ValueMap> faulty_entropies;
};

ImageResult evaluate_image(const Model& model, const ImageSet& images, std::size_t id, const CampaignOptions& options,
                           const InferenceSettings& settings, std::span<const Shape> slot_shapes) {
  ImageResult out;
  const TensorF& image = images.images[id];
  const ClassMap& gt = images.labels[id];
  const int classes = model.config.num_classes;
  const TensorF clean = forward(model, image, settings);
  out.clean_pred = argmax_map(clean);
  out.clean_entropy = entropy_map(clean);
  out.clean_miou = miou(out.clean_pred, gt, classes).miou;

  RandomStream rng(derive_seed(options.policy.seed, id));
  for (int k = 0; k < options.injections_per_image; ++k) {
    const std::optional<FaultDescriptor> fault = sample_fault(options.policy, slot_shapes, rng);
    // No-fault draws (p_inject < 1) are not injections and produce no row.
    if (!fault) continue;
    const TensorF faulty = forward(model, image, settings, &*fault);
    CampaignRow row;
    row.image_id = id;
    row.fault = *fault;
    row.sdc = classify_sdc(clean, faulty).cls;
    ClassMap pred = argmax_map(faulty);
    row.faulty_miou = miou(pred, gt, classes).miou;
    out.rows.push_back(row);
    out.faulty_preds.push_back(std::move(pred));
    out.faulty_entropies.push_back(entropy_map(faulty));
  }
  return out;
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  std::istringstream in(line);
  while (std::getline(in, field, ',')) fields.push_back(field);
  if (!line.empty() && line.back() == ',') fields.emplace_back();
  return fields;
}

nlohmann::ordered_json optional_json(const std::optional<double>& v) {
  if (!v) return "n/a";
  return *v;
}

nlohmann::ordered_json uncertainty_json(const UncertaintyReport& r) {
  nlohmann::ordered_json j;
  j["n_ac"] = r.confusion.n_ac;
  j["n_au"] = r.confusion.n_au;
  j["n_ic"] = r.confusion.n_ic;
  j["n_iu"] = r.confusion.n_iu;
  j["p_ac"] = optional_json(r.p_ac);
  j["p_ui"] = optional_json(r.p_ui);
  j["pavpu"] = optional_json(r.pavpu);
  j["prr"] = optional_json(r.prr);
  j["u_star"] = r.u_star;
  j["a_star"] = r.a_star;
  j["window"] = r.window;
  return j;
}

}  // namespace

std::string to_string(HardeningMode mode) {
  switch (mode) {
    case HardeningMode::None:
      return "none";
    case HardeningMode::Fat:
      return "fat";
    case HardeningMode::Relu6:
      return "relu6";
    case HardeningMode::Relu6Fat:
      return "relu6+fat";
    case HardeningMode::Amms:
      return "amms";
    case HardeningMode::ReluMax:
      return "relumax";
  }
  return "unknown";
}

HardeningMode parse_hardening_mode(const std::string& name) {
  for (HardeningMode m : {HardeningMode::None, HardeningMode::Fat, HardeningMode::Relu6, HardeningMode::Relu6Fat,
                          HardeningMode::Amms, HardeningMode::ReluMax}) {
    if (to_string(m) == name) return m;
  }
  throw ValueError("unknown hardening mode '" + name + "' (expected none, fat, relu6, relu6+fat, amms or relumax)");
}

void check_mode(const Model& model, HardeningMode mode) {
  const ActivationKind kind = model.config.activation_kind;
  const bool wants_relu6 = mode == HardeningMode::Relu6 || mode == HardeningMode::Relu6Fat;
  const bool wants_fat = mode == HardeningMode::Fat || mode == HardeningMode::Relu6Fat;
  if (wants_relu6 && kind != ActivationKind::ReLU6) {
    throw StateError("mode " + to_string(mode) + " needs a ReLU6 checkpoint, got " + to_string(kind));
  }
  if (!wants_relu6 && kind == ActivationKind::ReLU6) {
    throw StateError("mode " + to_string(mode) + " cannot evaluate a ReLU6 checkpoint");
  }
  if (wants_fat && !model.config.fault_aware_training) {
    throw StateError("mode " + to_string(mode) + " needs a fault-aware-trained checkpoint");
  }
  if (mode == HardeningMode::Amms && !model.amms) {
    throw StateError("mode amms needs AMMS stats in the checkpoint (run calibrate first)");
  }
  if (mode == HardeningMode::ReluMax) {
    if (kind != ActivationKind::ReLUMax) throw StateError("mode relumax needs a ReLUMax checkpoint, got " + to_string(kind));
    for (const HardeningState& s : model.slots) {
      if (!s.calibrated()) throw StateError("mode relumax needs recorded ReLUMax maxima (uncalibrated ReLUMax)");
    }
  }
}

InferenceSettings settings_for(HardeningMode mode) {
  return {mode == HardeningMode::ReluMax, mode == HardeningMode::Amms};
}

double SdcTally::percent(SdcClass c) const {
  const std::uint64_t t = total();
  return t == 0 ? 0.0 : 100.0 * static_cast<double>((*this)[c]) / static_cast<double>(t);
}

RowAggregate aggregate_rows(std::span<const CampaignRow> rows) {
  RowAggregate agg;
  double sum = 0.0;
  for (const CampaignRow& r : rows) {
    ++agg.tally.counts[static_cast<std::size_t>(r.sdc)];
    sum += r.faulty_miou;
  }
  agg.fault_injected_miou = rows.empty() ? 0.0 : sum / static_cast<double>(rows.size());
  return agg;
}

CampaignReport run_campaign(const Model& model, const ImageSet& images, const CampaignOptions& options) {
  if (images.empty()) throw ValueError("campaign: no evaluation images");
  if (options.injections_per_image < 1) throw ValueError("campaign: injections_per_image must be >= 1");
  if (options.workers < 1) throw ValueError("campaign: workers must be >= 1");
  options.policy.validate();
  check_mode(model, options.mode);
  const InferenceSettings settings = settings_for(options.mode);
  const Shape& first = images.images.front().shape();
  const std::vector<Shape> slot_shapes = model.slot_shapes(first.h, first.w);

  std::vector<ImageResult> results(images.size());
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto work = [&] {
    for (std::size_t id = next++; id < images.size(); id = next++) {
      try {
        results[id] = evaluate_image(model, images, id, options, settings, slot_shapes);
      } catch (...) {
        std::lock_guard<std::mutex> lock(failure_mutex);
        if (!failure) failure = std::current_exception();
        next = images.size();
      }
    }
  };
  const auto workers = std::min<std::size_t>(static_cast<std::size_t>(options.workers), images.size());
  if (workers <= 1) {
    work();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t i = 0; i < workers; ++i) pool.emplace_back(work);
  }
  if (failure) std::rethrow_exception(failure);

  CampaignReport report;
  report.mode = options.mode;
  report.seed = options.policy.seed;
  report.images = images.size();
  report.injections_per_image = options.injections_per_image;

  std::vector<ValueMap> clean_entropies;
  double miou_sum = 0.0;
  for (const ImageResult& r : results) {
    clean_entropies.push_back(r.clean_entropy);
    miou_sum += r.clean_miou;
  }
  report.fault_free_miou = miou_sum / static_cast<double>(results.size());
  const double u_star = uncertainty_threshold(clean_entropies);

  UncertaintyAccumulator clean_acc(u_star);
  UncertaintyAccumulator faulty_acc(u_star);
  for (std::size_t id = 0; id < results.size(); ++id) {
    ImageResult& r = results[id];
    clean_acc.add(r.clean_pred, images.labels[id], r.clean_entropy);
    for (std::size_t k = 0; k < r.rows.size(); ++k) {
      faulty_acc.add(r.faulty_preds[k], images.labels[id], r.faulty_entropies[k]);
    }
    report.rows.insert(report.rows.end(), r.rows.begin(), r.rows.end());
    r = ImageResult{};
  }
  report.fault_free_uncertainty = clean_acc.finish();
  report.fault_injected_uncertainty = faulty_acc.finish();
  report.aggregate = aggregate_rows(report.rows);
  return report;
}

std::string rows_to_csv(std::span<const CampaignRow> rows) {
  std::string out = std::string(kRowsCsvHeader) + "\n";
  for (const CampaignRow& r : rows) {
    out += std::to_string(r.image_id) + "," + to_csv(r.fault) + "," + to_string(r.sdc) + "," + shortest(r.faulty_miou) +
           "\n";
  }
  return out;
}

std::vector<CampaignRow> rows_from_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != kRowsCsvHeader) throw FormatError("rows CSV has an unexpected header");
  std::vector<CampaignRow> rows;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const std::vector<std::string> f = split_csv_line(line);
    if (f.size() != 11) throw FormatError("rows CSV line " + std::to_string(line_no) + ": expected 11 fields");
    try {
      CampaignRow row;
      row.image_id = parse_number<std::size_t>(f[0]);
      row.fault = fault_from_csv(std::span<const std::string>(f).subspan(1, 8));
      row.sdc = parse_sdc_class(f[9]);
      row.faulty_miou = parse_number<double>(f[10]);
      rows.push_back(row);
    } catch (const FormatError& e) {
      throw FormatError("rows CSV line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return rows;
}

std::string aggregate_to_csv(const RowAggregate& agg) {
  std::string out = "key,value\n";
  out += "injections," + std::to_string(agg.tally.total()) + "\n";
  for (SdcClass c : kSdcClasses) out += to_string(c) + "," + std::to_string(agg.tally[c]) + "\n";
  for (SdcClass c : kSdcClasses) out += to_string(c) + "_pct," + shortest(agg.tally.percent(c)) + "\n";
  out += "fault_injected_miou," + shortest(agg.fault_injected_miou) + "\n";
  return out;
}

std::string summary_to_json(const CampaignReport& report) {
  nlohmann::ordered_json j;
  j["hardening_mode"] = to_string(report.mode);
  j["seed"] = report.seed;
  j["images"] = report.images;
  j["injections_per_image"] = report.injections_per_image;
  j["injections"] = report.aggregate.tally.total();
  j["fault_free_miou"] = report.fault_free_miou;
  j["fault_injected_miou"] = report.aggregate.fault_injected_miou;
  nlohmann::ordered_json sdc;
  for (SdcClass c : kSdcClasses) sdc[to_string(c) + "_pct"] = report.aggregate.tally.percent(c);
  j["sdc"] = sdc;
  j["uncertainty"]["fault_free"] = uncertainty_json(report.fault_free_uncertainty);
  j["uncertainty"]["fault_injected"] = uncertainty_json(report.fault_injected_uncertainty);
  return j.dump(2) + "\n";
}

void write_report(const CampaignReport& report, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  write_file(dir / "rows.csv", rows_to_csv(report.rows));
  write_file(dir / "aggregate.csv", aggregate_to_csv(report.aggregate));
  write_file(dir / "summary.json", summary_to_json(report));
}

std::string multi_run_summary(std::span<const RowAggregate> runs) {
  if (runs.empty()) throw ValueError("multi_run_summary: no runs");
  std::string out = "run,injections,masked_pct,no_impact_pct,tolerable_pct,critical_pct,fault_injected_miou\n";
  auto row_values = [](const RowAggregate& a) {
    return std::array<double, 5>{a.tally.percent(SdcClass::Masked), a.tally.percent(SdcClass::NoImpact),
                                 a.tally.percent(SdcClass::Tolerable), a.tally.percent(SdcClass::Critical),
                                 a.fault_injected_miou};
  };
  std::array<double, 5> mean{};
  for (std::size_t i = 0; i < runs.size(); ++i) {
    const auto v = row_values(runs[i]);
    out += std::to_string(i) + "," + std::to_string(runs[i].tally.total());
    for (std::size_t k = 0; k < v.size(); ++k) {
      out += "," + shortest(v[k]);
      mean[k] += v[k] / static_cast<double>(runs.size());
    }
    out += "\n";
  }
  std::array<double, 5> var{};
  for (const RowAggregate& a : runs) {
    const auto v = row_values(a);
    for (std::size_t k = 0; k < v.size(); ++k) var[k] += (v[k] - mean[k]) * (v[k] - mean[k]) / static_cast<double>(runs.size());
  }
  out += "mean,";
  for (std::size_t k = 0; k < mean.size(); ++k) out += "," + shortest(mean[k]);
  out += "\nstd,";
  for (std::size_t k = 0; k < var.size(); ++k) out += "," + shortest(std::sqrt(var[k]));
  out += "\n";
  return out;
}

Rgb class_color(std::int32_t cls) {
  static constexpr std::array<Rgb, 8> kPalette{{
      {0, 0, 0},
      {220, 20, 60},
      {0, 142, 0},
      {0, 60, 230},
      {128, 64, 128},
      {250, 170, 30},
      {70, 130, 180},
      {255, 255, 255},
  }};
  if (cls >= 0 && cls < static_cast<std::int32_t>(kPalette.size())) return kPalette[static_cast<std::size_t>(cls)];
  const auto c = static_cast<std::uint32_t>(cls);
  return {static_cast<std::uint8_t>(c * 97u), static_cast<std::uint8_t>(c * 57u), static_cast<std::uint8_t>(c * 17u)};
}

std::string encode_ppm(const ClassMap& map) {
  std::string out = "P6\n" + std::to_string(map.cols()) + " " + std::to_string(map.rows()) + "\n255\n";
  out.reserve(out.size() + static_cast<std::size_t>(map.size()) * 3);
  for (Index i = 0; i < map.size(); ++i) {
    const Rgb rgb = class_color(map.data()[i]);
    out.append(reinterpret_cast<const char*>(rgb.data()), 3);
  }
  return out;
}

std::size_t worst_row(std::span<const CampaignRow> rows) {
  if (rows.empty()) throw ValueError("worst_row: no rows");
  std::size_t best = 0;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    if (rows[i].faulty_miou < rows[best].faulty_miou) best = i;
  }
  return best;
}

std::vector<std::filesystem::path> dump_maps(const Model& model, const ImageSet& images,
                                             std::span<const CampaignRow> rows, std::span<const std::size_t> row_ids,
                                             HardeningMode mode, const std::filesystem::path& dir) {
  check_mode(model, mode);
  const InferenceSettings settings = settings_for(mode);
  std::filesystem::create_directories(dir);
  std::vector<std::filesystem::path> written;
  std::vector<bool> clean_done(images.size(), false);
  for (std::size_t row_id : row_ids) {
    if (row_id >= rows.size()) throw ValueError("dump_maps: row " + std::to_string(row_id) + " does not exist");
    const CampaignRow& row = rows[row_id];
    if (row.image_id >= images.size()) {
      throw ValueError("dump_maps: unknown image id " + std::to_string(row.image_id));
    }
    const TensorF& image = images.images[row.image_id];
    const std::string id = std::to_string(row.image_id);
    if (!clean_done[row.image_id]) {
      const auto gt_path = dir / ("gt_" + id + ".ppm");
      const auto clean_path = dir / ("clean_" + id + ".ppm");
      write_file(gt_path, encode_ppm(images.labels[row.image_id]));
      write_file(clean_path, encode_ppm(argmax_map(forward(model, image, settings))));
      written.push_back(gt_path);
      written.push_back(clean_path);
      clean_done[row.image_id] = true;
    }
    const auto faulty_path = dir / ("faulty_" + id + "_" + std::to_string(row_id) + ".ppm");
    write_file(faulty_path, encode_ppm(argmax_map(forward(model, image, settings, &row.fault))));
    written.push_back(faulty_path);
  }
  return written;
}

}  // namespace fseg
