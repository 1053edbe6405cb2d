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
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "fseg/dataset.hpp"
#include "fseg/faultsim.hpp"
#include "fseg/hardening.hpp"
#include "fseg/nn.hpp"
#include "fseg/tensor.hpp"

namespace fseg {

struct ModelConfig {
  int num_classes = kShapeClasses;
  int base_channels = 16;
  int depth = 2;
  ActivationKind activation_kind = ActivationKind::ReLU;
  bool fault_aware_training = false;
  double fat_probability = 0.5;

  void validate() const;
  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

enum class LayerKind { Conv2d, UpsampleNearest, Activation, Logits1x1 };

struct LayerSpec {
  LayerKind kind = LayerKind::Conv2d;
  std::string name;
  Conv2d<float> conv;  ///< Conv2d and Logits1x1
  Index factor = 1;    ///< UpsampleNearest
  Index slot = -1;     ///< Activation: index into Model::slots
};

/// Encoder-decoder segmentation network:
///   conv(3->b) act, [conv s2 act] x depth, [upsample x2, conv, act] x depth, 1x1 logits.
/// Encoder stage i has b * 2^i channels.
struct Model {
  ModelConfig config;
  std::vector<LayerSpec> layers;
  std::vector<HardeningState> slots;
  std::optional<AmmsStats> amms;
  std::optional<double> uncertainty_threshold;
  std::uint64_t seed = 0;

  Index slot_count() const { return static_cast<Index>(slots.size()); }

  /// Output shape of every activation slot for a single H x W image.
  std::vector<Shape> slot_shapes(Index height, Index width) const;

  /// Throws unless the batch is N x 3 x H x W with H, W divisible by 2^depth.
  void check_input(const Shape& shape) const;
};

/// Weights drawn U(-sqrt(6 / fan_in), +sqrt(6 / fan_in)), biases zero.
Model build_model(const ModelConfig& config, std::uint64_t seed);

/// Which hardening checks run at evaluation time.
struct InferenceSettings {
  bool relumax_clip = true;   ///< only meaningful for ReLUMax models
  bool amms_masking = false;  ///< requires Model::amms

  /// ReLUMax clipping on, AMMS masking on iff the model carries AMMS stats.
  static InferenceSettings defaults(const Model& model);
  /// No range checks at all: plain rectified activations.
  static InferenceSettings unhardened() { return {false, false}; }
};

/// Called with each activation slot's output, after fault injection and ReLUMax clipping
/// but before AMMS masking.
using SlotObserver = std::function<void(Index slot, const TensorF& output)>;

/// Evaluation forward pass. Images are processed one at a time so AMMS statistics are
/// per image and results do not depend on batch composition.
TensorF forward(const Model& model, const TensorF& images, const InferenceSettings& settings,
                const FaultDescriptor* fault = nullptr, const SlotObserver* observer = nullptr);

/// Logits (N x classes x H x W) with the model's default hardening.
TensorF predict(const Model& model, const TensorF& image);

/// Same as forward() with the fault applied to its activation slot; nullopt is a clean pass.
TensorF run_with_fault(const Model& model, const TensorF& image, const std::optional<FaultDescriptor>& fault,
                       const InferenceSettings& settings);

struct TrainOptions {
  int epochs = 60;
  double learning_rate = 0.02;
  Index batch_size = 8;
  double momentum = 0.9;
  std::uint64_t seed = 0;
  /// Fault model used by fault-aware training; p_inject is ignored (fat_probability decides).
  InjectionPolicy fat_policy{.magnitude_lo = -2.0, .magnitude_hi = 2.0, .p_extreme = 0.0};
};

struct EpochRecord {
  int epoch = 0;
  double mean_loss = 0.0;
  std::optional<double> val_miou;
};

/// SGD with momentum on pixel cross-entropy. With fault-aware training, each batch receives
/// one fault with probability fat_probability; the fault scales its footprint's gradient as
/// a constant factor, and ReLUMax maxima are only updated on fault-free passes. A final
/// clean pass over the training set folds the trained weights' activations into the maxima.
std::vector<EpochRecord> train(Model& model, const ImageSet& train_set, const ImageSet* val_set,
                               const TrainOptions& options,
                               const std::function<void(const EpochRecord&)>& on_epoch = {});

/// Raises every ReLUMax slot's running maximum to cover these images' clean activations.
void record_activation_maxima(Model& model, const ImageSet& images);

/// Mean over images of per-image mIoU.
double evaluate_miou(const Model& model, const ImageSet& images, const InferenceSettings& settings);

/// Per-slot AMMS statistics, one calibration batch per image.
AmmsStats amms_calibrate(const Model& model, const ImageSet& images);

}  // namespace fseg
