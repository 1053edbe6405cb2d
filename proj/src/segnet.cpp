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

#include "fseg/segnet.hpp"

#include <cmath>
#include <numeric>

#include "fseg/metrics.hpp"

namespace fseg {

void ModelConfig::validate() const {
  if (num_classes < 2) throw ValueError("num_classes must be >= 2");
  if (base_channels < 1) throw ValueError("base_channels must be >= 1");
  if (depth < 1) throw ValueError("depth must be >= 1");
  if (!(fat_probability >= 0.0 && fat_probability <= 1.0)) throw ValueError("fat_probability must lie in [0, 1]");
}

std::vector<Shape> Model::slot_shapes(Index height, Index width) const {
  std::vector<Shape> shapes(slots.size());
  Shape s{1, 3, height, width};
  for (const LayerSpec& layer : layers) {
    switch (layer.kind) {
      case LayerKind::Conv2d:
      case LayerKind::Logits1x1:
        s = Shape{1, layer.conv.out_c, layer.conv.out_size(s.h), layer.conv.out_size(s.w)};
        break;
      case LayerKind::UpsampleNearest:
        s.h *= layer.factor;
        s.w *= layer.factor;
        break;
      case LayerKind::Activation:
        shapes[static_cast<std::size_t>(layer.slot)] = s;
        break;
    }
  }
  return shapes;
}

void Model::check_input(const Shape& shape) const {
  const Index step = Index{1} << config.depth;
  if (shape.c != 3) throw ShapeError("model input must have 3 channels, got " + shape.str());
  if (shape.h % step != 0 || shape.w % step != 0) {
    throw ShapeError("model input " + shape.str() + " spatial size must be divisible by " + std::to_string(step));
  }
}

Model build_model(const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  Model model;
  model.config = config;
  model.seed = seed;
  RandomStream rng(seed);

  auto add_conv = [&](LayerKind kind, const std::string& name, Index in_c, Index out_c, Index k, Index stride) {
    LayerSpec layer;
    layer.kind = kind;
    layer.name = name;
    layer.conv = Conv2d<float>(in_c, out_c, k, stride);
    const double bound = std::sqrt(6.0 / static_cast<double>(layer.conv.patch_size()));
    for (float& w : layer.conv.weight.data()) w = static_cast<float>(rng.uniform(-bound, bound));
    model.layers.push_back(std::move(layer));
  };
  auto add_activation = [&] {
    LayerSpec layer;
    layer.kind = LayerKind::Activation;
    layer.slot = static_cast<Index>(model.slots.size());
    layer.name = "act" + std::to_string(layer.slot);
    model.slots.push_back(HardeningState{config.activation_kind, Mode::Eval});
    model.layers.push_back(std::move(layer));
  };

  const Index base = config.base_channels;
  add_conv(LayerKind::Conv2d, "stem", 3, base, 3, 1);
  add_activation();
  for (int i = 1; i <= config.depth; ++i) {
    add_conv(LayerKind::Conv2d, "down" + std::to_string(i), base << (i - 1), base << i, 3, 2);
    add_activation();
  }
  for (int i = config.depth; i >= 1; --i) {
    LayerSpec up;
    up.kind = LayerKind::UpsampleNearest;
    up.factor = 2;
    up.name = "upsample" + std::to_string(i);
    model.layers.push_back(std::move(up));
    add_conv(LayerKind::Conv2d, "up" + std::to_string(i), base << i, base << (i - 1), 3, 1);
    add_activation();
  }
  add_conv(LayerKind::Logits1x1, "logits", base, config.num_classes, 1, 1);
  return model;
}

InferenceSettings InferenceSettings::defaults(const Model& model) { return {true, model.amms.has_value()}; }

TensorF forward(const Model& model, const TensorF& images, const InferenceSettings& settings,
                const FaultDescriptor* fault, const SlotObserver* observer) {
  model.check_input(images.shape());
  if (fault != nullptr && (fault->layer_slot < 0 || fault->layer_slot >= model.slot_count())) {
    throw ValueError("fault layer_slot " + std::to_string(fault->layer_slot) + " out of range [0, " +
                     std::to_string(model.slot_count()) + ")");
  }
  if (settings.amms_masking && !model.amms) throw StateError("AMMS masking requested but the model has no AMMS stats");
  const bool clip = settings.relumax_clip && model.config.activation_kind == ActivationKind::ReLUMax;
  if (clip) {
    for (const HardeningState& s : model.slots) {
      if (!s.calibrated()) throw StateError("uncalibrated ReLUMax");
    }
  }

  std::vector<TensorF> outputs;
  outputs.reserve(static_cast<std::size_t>(images.shape().n));
  for (Index n = 0; n < images.shape().n; ++n) {
    TensorF x = images.slice(n);
    for (const LayerSpec& layer : model.layers) {
      switch (layer.kind) {
        case LayerKind::Conv2d:
        case LayerKind::Logits1x1:
          x = conv2d_forward(x, layer.conv);
          break;
        case LayerKind::UpsampleNearest:
          x = upsample_nearest(x, layer.factor);
          break;
        case LayerKind::Activation: {
          const HardeningState& state = model.slots[static_cast<std::size_t>(layer.slot)];
          x = rectify(x, state.kind);
          if (fault != nullptr && fault->layer_slot == layer.slot) inject_inplace(x, *fault);
          if (clip) relumax_clip(x, state.running_max);
          if (observer != nullptr) (*observer)(layer.slot, x);
          if (settings.amms_masking) amms_apply(x, model.amms->layers[static_cast<std::size_t>(layer.slot)]);
          break;
        }
      }
    }
    outputs.push_back(std::move(x));
  }
  if (outputs.size() == 1) return std::move(outputs.front());
  std::vector<const TensorF*> parts;
  for (const TensorF& t : outputs) parts.push_back(&t);
  return stack(parts);
}

TensorF predict(const Model& model, const TensorF& image) {
  return forward(model, image, InferenceSettings::defaults(model));
}

TensorF run_with_fault(const Model& model, const TensorF& image, const std::optional<FaultDescriptor>& fault,
                       const InferenceSettings& settings) {
  return forward(model, image, settings, fault ? &*fault : nullptr);
}

namespace {

struct ParamGrads {
  Tensor<float> weight;
  Conv2d<float>::Vector bias;
};

// Forward with per-layer caches; ReLUMax maxima update only when no fault is present.
TensorF train_forward(Model& model, const TensorF& batch, const FaultDescriptor* fault,
                      std::vector<LayerTape<float>>& tapes) {
  tapes.assign(model.layers.size(), {});
  TensorF x = batch;
  for (std::size_t i = 0; i < model.layers.size(); ++i) {
    LayerSpec& layer = model.layers[i];
    switch (layer.kind) {
      case LayerKind::Conv2d:
      case LayerKind::Logits1x1:
        x = conv2d_forward(x, layer.conv, &tapes[i]);
        break;
      case LayerKind::UpsampleNearest:
        x = upsample_nearest(x, layer.factor);
        break;
      case LayerKind::Activation: {
        HardeningState& state = model.slots[static_cast<std::size_t>(layer.slot)];
        tapes[i].input = x;
        x = rectify(x, state.kind);
        if (fault != nullptr && fault->layer_slot == layer.slot) {
          inject_inplace(x, *fault);
        } else if (fault == nullptr && state.kind == ActivationKind::ReLUMax) {
          state.running_max = std::max(state.running_max, static_cast<float>(finite_max(x)));
        }
        break;
      }
    }
  }
  return x;
}

void train_backward(const Model& model, TensorF grad, const FaultDescriptor* fault,
                    const std::vector<LayerTape<float>>& tapes, std::vector<ParamGrads>& grads) {
  for (std::size_t i = model.layers.size(); i-- > 0;) {
    const LayerSpec& layer = model.layers[i];
    switch (layer.kind) {
      case LayerKind::Conv2d:
      case LayerKind::Logits1x1: {
        ConvGrads<float> g = conv2d_backward(grad, tapes[i], layer.conv);
        grads[i].weight = std::move(g.weight);
        grads[i].bias = std::move(g.bias);
        grad = std::move(g.input);
        break;
      }
      case LayerKind::UpsampleNearest:
        grad = upsample_nearest_backward(grad, layer.factor);
        break;
      case LayerKind::Activation:
        if (fault != nullptr && fault->layer_slot == layer.slot) inject_inplace(grad, *fault);
        grad = activation_backward(grad, *tapes[i].input, model.slots[static_cast<std::size_t>(layer.slot)].kind);
        break;
    }
  }
}

}  // namespace

std::vector<EpochRecord> train(Model& model, const ImageSet& train_set, const ImageSet* val_set,
                               const TrainOptions& options, const std::function<void(const EpochRecord&)>& on_epoch) {
  if (train_set.empty()) throw ValueError("train: empty training set");
  if (!(options.learning_rate > 0.0)) throw ValueError("train: learning rate must be > 0");
  if (options.batch_size < 1) throw ValueError("train: batch size must be >= 1");
  if (options.epochs < 0) throw ValueError("train: epochs must be >= 0");
  if (model.config.fault_aware_training) {
    options.fat_policy.validate();
    if (options.fat_policy.p_extreme != 0.0) throw ValueError("fault-aware training needs p_extreme = 0");
  }
  for (const TensorF& img : train_set.images) model.check_input(img.shape());

  const std::size_t count = train_set.size();
  const auto batch_size = static_cast<std::size_t>(options.batch_size);
  const auto lr = static_cast<float>(options.learning_rate);
  const auto momentum = static_cast<float>(options.momentum);
  RandomStream rng(options.seed);
  const std::vector<Shape> slot_shapes =
      model.slot_shapes(train_set.images.front().shape().h, train_set.images.front().shape().w);

  std::vector<ParamGrads> grads(model.layers.size());
  std::vector<ParamGrads> velocity(model.layers.size());
  for (std::size_t i = 0; i < model.layers.size(); ++i) {
    const LayerSpec& layer = model.layers[i];
    if (layer.kind != LayerKind::Conv2d && layer.kind != LayerKind::Logits1x1) continue;
    velocity[i] = {Tensor<float>(layer.conv.weight.shape()), Conv2d<float>::Vector::Zero(layer.conv.out_c)};
  }

  std::vector<std::size_t> order(count);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<EpochRecord> history;
  std::vector<LayerTape<float>> tapes;
  for (int epoch = 1; epoch <= options.epochs; ++epoch) {
    for (std::size_t i = count; i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
    double loss_sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < count; start += batch_size) {
      const std::size_t end = std::min(count, start + batch_size);
      std::vector<const TensorF*> parts;
      std::vector<ClassMap> labels;
      for (std::size_t k = start; k < end; ++k) {
        parts.push_back(&train_set.images[order[k]]);
        labels.push_back(train_set.labels[order[k]]);
      }
      const TensorF batch = stack(parts);

      std::optional<FaultDescriptor> fault;
      if (model.config.fault_aware_training && rng.bernoulli(model.config.fat_probability)) {
        InjectionPolicy policy = options.fat_policy;
        policy.p_inject = 1.0;
        fault = sample_fault(policy, slot_shapes, rng);
      }
      const FaultDescriptor* fault_ptr = fault ? &*fault : nullptr;

      const TensorF logits = train_forward(model, batch, fault_ptr, tapes);
      LossResult<float> loss = cross_entropy_loss(logits, std::span<const ClassMap>(labels));
      if (!std::isfinite(loss.loss)) {
        throw NumericError("non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
                           std::to_string(batches + 1));
      }
      train_backward(model, std::move(loss.grad_logits), fault_ptr, tapes, grads);

      for (std::size_t i = 0; i < model.layers.size(); ++i) {
        LayerSpec& layer = model.layers[i];
        if (layer.kind != LayerKind::Conv2d && layer.kind != LayerKind::Logits1x1) continue;
        velocity[i].weight.data() = momentum * velocity[i].weight.data() + grads[i].weight.data();
        velocity[i].bias = momentum * velocity[i].bias + grads[i].bias;
        layer.conv.weight.data() -= lr * velocity[i].weight.data();
        layer.conv.bias -= lr * velocity[i].bias;
      }
      loss_sum += loss.loss;
      ++batches;
    }
    EpochRecord record{epoch, loss_sum / static_cast<double>(batches), std::nullopt};
    if (val_set != nullptr && !val_set->empty()) {
      record.val_miou = evaluate_miou(model, *val_set, InferenceSettings::unhardened());
    }
    history.push_back(record);
    if (on_epoch) on_epoch(record);
  }
  if (model.config.activation_kind == ActivationKind::ReLUMax) record_activation_maxima(model, train_set);
  return history;
}

void record_activation_maxima(Model& model, const ImageSet& images) {
  std::vector<float> maxima(model.slots.size(), -std::numeric_limits<float>::infinity());
  const SlotObserver observe = [&](Index slot, const TensorF& out) {
    auto& m = maxima[static_cast<std::size_t>(slot)];
    m = std::max(m, static_cast<float>(finite_max(out)));
  };
  for (const TensorF& img : images.images) forward(model, img, InferenceSettings::unhardened(), nullptr, &observe);
  for (std::size_t i = 0; i < model.slots.size(); ++i) {
    if (model.slots[i].kind != ActivationKind::ReLUMax) continue;
    model.slots[i].running_max = std::max(model.slots[i].running_max, maxima[i]);
  }
}

double evaluate_miou(const Model& model, const ImageSet& images, const InferenceSettings& settings) {
  if (images.empty()) throw ValueError("evaluate_miou: empty image set");
  double sum = 0.0;
  for (std::size_t i = 0; i < images.size(); ++i) {
    const TensorF logits = forward(model, images.images[i], settings);
    sum += miou(argmax_map(logits), images.labels[i], model.config.num_classes).miou;
  }
  return sum / static_cast<double>(images.size());
}

AmmsStats amms_calibrate(const Model& model, const ImageSet& images) {
  if (images.size() < 2) {
    throw ValueError("AMMS calibration needs at least 2 batches, got " + std::to_string(images.size()));
  }
  std::vector<std::vector<BatchStatistics>> per_slot(model.slots.size());
  const SlotObserver observe = [&](Index slot, const TensorF& out) {
    per_slot[static_cast<std::size_t>(slot)].push_back(batch_statistics(out));
  };
  InferenceSettings settings = InferenceSettings::defaults(model);
  settings.amms_masking = false;
  for (const TensorF& img : images.images) forward(model, img, settings, nullptr, &observe);
  AmmsStats stats;
  for (const auto& batches : per_slot) stats.layers.push_back(summarize_batches(batches));
  return stats;
}

}  // namespace fseg
