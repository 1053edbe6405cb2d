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

// Command-line front end: dataset generation, training, calibration, fault campaigns,
// report re-aggregation and segmentation map dumps.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "fseg/binary_io.hpp"
#include "fseg/campaign.hpp"
#include "fseg/checkpoint.hpp"
#include "fseg/config.hpp"
#include "fseg/dataset.hpp"
#include "fseg/format.hpp"
#include "fseg/metrics.hpp"
#include "fseg/segnet.hpp"

namespace fs = std::filesystem;
using namespace fseg;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitData = 2;

struct Globals {
  std::optional<std::uint64_t> seed;
  std::optional<fs::path> config;
  std::optional<fs::path> out;
};

struct GenDataArgs {
  std::optional<std::size_t> train, val;
  std::optional<Index> height, width;
};

struct TrainArgs {
  fs::path data;
  std::optional<std::string> activation;
  bool fat = false;
  std::optional<double> fat_probability;
  std::optional<int> epochs, base_channels;
  std::optional<double> lr;
  std::optional<Index> batch_size;
};

struct CalibrateArgs {
  fs::path checkpoint, data;
};

struct CampaignArgs {
  std::optional<fs::path> checkpoint, data;
  std::optional<std::string> mode;
  std::optional<int> injections, workers;
  std::optional<std::size_t> max_images;
};

struct ReportArgs {
  std::vector<fs::path> rows;
};

struct DumpArgs {
  fs::path checkpoint, data, rows;
  std::string mode = "none";
  std::optional<std::size_t> image_id;
  bool worst = false;
};

void log(const std::string& line) { std::cerr << line << '\n'; }

ExperimentConfig experiment(const Globals& g) { return g.config ? load_config(*g.config) : ExperimentConfig{}; }

fs::path out_dir(const Globals& g, const fs::path& fallback) { return g.out.value_or(fallback); }

int gen_data(const Globals& g, const GenDataArgs& a) {
  DatasetConfig d = experiment(g).dataset;
  if (g.seed) d.seed = *g.seed;
  if (a.train) d.count_train = *a.train;
  if (a.val) d.count_val = *a.val;
  if (a.height) d.height = *a.height;
  if (a.width) d.width = *a.width;
  const ShapesDataset data = generate_dataset(d.seed, d.count_train, d.count_val, d.height, d.width);
  const fs::path dir = out_dir(g, "data");
  save_dataset(data, dir);
  log("wrote " + std::to_string(data.train.size()) + " train / " + std::to_string(data.val.size()) +
      " val images to " + dir.string());
  return kExitOk;
}

int train_cmd(const Globals& g, const TrainArgs& a) {
  ExperimentConfig cfg = experiment(g);
  ModelConfig& m = cfg.model;
  TrainOptions& t = cfg.train;
  if (a.activation) m.activation_kind = parse_activation_kind(*a.activation);
  if (a.fat) m.fault_aware_training = true;
  if (a.fat_probability) m.fat_probability = *a.fat_probability;
  if (a.base_channels) m.base_channels = *a.base_channels;
  if (a.epochs) t.epochs = *a.epochs;
  if (a.lr) t.learning_rate = *a.lr;
  if (a.batch_size) t.batch_size = *a.batch_size;
  if (g.seed) t.seed = *g.seed;

  const ShapesDataset data = load_dataset(a.data);
  Model model = build_model(m, t.seed);
  const fs::path dir = out_dir(g, "run");
  fs::create_directories(dir);
  std::string csv = "epoch,mean_loss,val_miou\n";
  train(model, data.train, &data.val, t, [&](const EpochRecord& r) {
    const std::string line =
        std::to_string(r.epoch) + "," + shortest(r.mean_loss) + "," + format_optional(r.val_miou);
    csv += line + "\n";
    log("epoch " + line);
  });
  write_file(dir / "train_log.csv", csv);
  save_checkpoint(model, dir / "model.ckpt");
  log("wrote " + (dir / "model.ckpt").string());
  return kExitOk;
}

int calibrate_cmd(const Globals& g, const CalibrateArgs& a) {
  Model model = load_checkpoint(a.checkpoint);
  const ShapesDataset data = load_dataset(a.data);
  model.amms.reset();
  std::vector<ValueMap> entropies;
  for (const TensorF& img : data.val.images) entropies.push_back(entropy_map(predict(model, img)));
  model.uncertainty_threshold = uncertainty_threshold(entropies);
  model.amms = amms_calibrate(model, data.train);
  const fs::path target = g.out ? *g.out / a.checkpoint.filename() : a.checkpoint;
  save_checkpoint(model, target);
  log("AMMS stats for " + std::to_string(model.amms->layers.size()) + " slots, u* = " +
      shortest(*model.uncertainty_threshold) + ", wrote " + target.string());
  return kExitOk;
}

int campaign_cmd(const Globals& g, const CampaignArgs& a) {
  const ExperimentConfig cfg = experiment(g);
  CampaignConfig c = cfg.campaign;
  if (a.checkpoint) c.checkpoint = *a.checkpoint;
  if (a.data) c.dataset = *a.data;
  if (a.mode) c.hardening_mode = parse_hardening_mode(*a.mode);
  if (a.injections) c.injections_per_image = *a.injections;
  if (a.workers) c.workers = *a.workers;
  if (a.max_images) c.max_images = *a.max_images;
  if (c.checkpoint.empty()) throw ValueError("campaign needs --checkpoint (or campaign.checkpoint in the config)");
  if (c.dataset.empty()) throw ValueError("campaign needs --data (or campaign.dataset in the config)");

  const Model model = load_checkpoint(c.checkpoint);
  const ShapesDataset data = load_dataset(c.dataset);
  const std::size_t count = c.max_images == 0 ? data.val.size() : std::min(c.max_images, data.val.size());
  CampaignOptions options;
  options.mode = c.hardening_mode;
  options.policy = cfg.injection_policy;
  if (g.seed) options.policy.seed = *g.seed;
  options.injections_per_image = c.injections_per_image;
  options.workers = c.workers;
  const CampaignReport report = run_campaign(model, data.val.subset(0, count), options);
  const fs::path dir = out_dir(g, c.output_dir);
  write_report(report, dir);
  log("mode " + to_string(report.mode) + ": " + std::to_string(report.rows.size()) + " injections, critical " +
      shortest(report.aggregate.tally.percent(SdcClass::Critical)) + "%, wrote " + dir.string());
  return kExitOk;
}

int report_cmd(const Globals& g, const ReportArgs& a) {
  std::vector<RowAggregate> runs;
  for (const fs::path& p : a.rows) runs.push_back(aggregate_rows(rows_from_csv(read_file(p))));
  const bool multi = runs.size() > 1;
  const std::string text = multi ? multi_run_summary(runs) : aggregate_to_csv(runs.front());
  if (g.out) write_file(*g.out / (multi ? "multi_run.csv" : "aggregate.csv"), text);
  std::cout << text;
  return kExitOk;
}

int dump_cmd(const Globals& g, const DumpArgs& a) {
  const Model model = load_checkpoint(a.checkpoint);
  const ShapesDataset data = load_dataset(a.data);
  const std::vector<CampaignRow> rows = rows_from_csv(read_file(a.rows));
  std::vector<std::size_t> ids;
  if (a.worst) {
    ids.push_back(worst_row(rows));
  } else {
    for (std::size_t i = 0; i < rows.size(); ++i) {
      if (rows[i].image_id == *a.image_id) ids.push_back(i);
    }
    if (ids.empty()) throw ValueError("dump-maps: unknown image id " + std::to_string(*a.image_id));
  }
  const auto written = dump_maps(model, data.val, rows, ids, parse_hardening_mode(a.mode), out_dir(g, "maps"));
  for (const fs::path& p : written) std::cout << p.string() << '\n';
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Fault-injection simulator for a toy segmentation network", "fseg"};
  app.require_subcommand(1);
  app.fallthrough();

  Globals g;
  app.add_option("--seed", g.seed, "Seed for the selected step (dataset, training or injection stream)");
  app.add_option("--config", g.config, "JSON experiment config")->check(CLI::ExistingFile);
  app.add_option("--out", g.out, "Output directory");

  GenDataArgs gen;
  auto* gen_cmd = app.add_subcommand("gen-data", "Generate the synthetic shapes dataset");
  gen_cmd->add_option("--train", gen.train, "Training images");
  gen_cmd->add_option("--val", gen.val, "Validation images");
  gen_cmd->add_option("--height", gen.height, "Image height (multiple of 4)");
  gen_cmd->add_option("--width", gen.width, "Image width (multiple of 4)");

  TrainArgs tr;
  auto* train_sub = app.add_subcommand("train", "Train a model; writes model.ckpt and train_log.csv");
  train_sub->add_option("--data", tr.data, "Dataset directory")->required();
  train_sub->add_option("--activation", tr.activation, "relu, relu6 or relumax");
  train_sub->add_flag("--fat", tr.fat, "Fault-aware training");
  train_sub->add_option("--fat-probability", tr.fat_probability, "Per-batch FAT injection probability");
  train_sub->add_option("--epochs", tr.epochs);
  train_sub->add_option("--lr", tr.lr, "Learning rate");
  train_sub->add_option("--batch-size", tr.batch_size);
  train_sub->add_option("--base-channels", tr.base_channels);

  CalibrateArgs cal;
  auto* cal_sub = app.add_subcommand("calibrate", "Store AMMS statistics and the uncertainty threshold u*");
  cal_sub->add_option("--checkpoint", cal.checkpoint)->required();
  cal_sub->add_option("--data", cal.data, "Dataset directory")->required();

  CampaignArgs camp;
  auto* camp_sub = app.add_subcommand("campaign", "Run a fault-injection campaign over the validation split");
  camp_sub->add_option("--checkpoint", camp.checkpoint);
  camp_sub->add_option("--data", camp.data, "Dataset directory");
  camp_sub->add_option("--mode", camp.mode, "none, fat, relu6, relu6+fat, amms or relumax");
  camp_sub->add_option("--injections", camp.injections, "Injections per image");
  camp_sub->add_option("--max-images", camp.max_images, "Use only the first N validation images");
  camp_sub->add_option("--workers", camp.workers, "Worker threads");

  ReportArgs rep;
  auto* rep_sub = app.add_subcommand("report", "Re-aggregate campaign rows (several files: multi-run block)");
  rep_sub->add_option("--rows", rep.rows, "rows.csv files")->required()->check(CLI::ExistingFile);

  DumpArgs dump;
  auto* dump_sub = app.add_subcommand("dump-maps", "Write clean and faulty prediction maps as PPM");
  dump_sub->add_option("--checkpoint", dump.checkpoint)->required();
  dump_sub->add_option("--data", dump.data, "Dataset directory")->required();
  dump_sub->add_option("--rows", dump.rows, "Campaign rows.csv")->required();
  dump_sub->add_option("--mode", dump.mode, "Hardening mode used by the campaign");
  auto* selection = dump_sub->add_option_group("selection", "Which rows to dump");
  selection->add_option("--image-id", dump.image_id, "Dump every row of this image");
  selection->add_flag("--worst", dump.worst, "Dump the row with the lowest faulty mIoU");
  selection->require_option(1);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n\n" << app.help();
    return kExitUsage;
  }

  try {
    if (*gen_cmd) return gen_data(g, gen);
    if (*train_sub) return train_cmd(g, tr);
    if (*cal_sub) return calibrate_cmd(g, cal);
    if (*camp_sub) return campaign_cmd(g, camp);
    if (*rep_sub) return report_cmd(g, rep);
    if (*dump_sub) return dump_cmd(g, dump);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitData;
  }
  return kExitUsage;
}
