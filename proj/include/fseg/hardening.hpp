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

#include <cmath>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "fseg/tensor.hpp"

namespace fseg {

enum class ActivationKind { ReLU, ReLU6, ReLUMax };
enum class Mode { Train, Eval };

std::string to_string(ActivationKind kind);
ActivationKind parse_activation_kind(const std::string& name);

inline constexpr float kRelu6Threshold = 6.0f;

/// State of one activation slot. For ReLUMax, running_max holds the largest output
/// seen while training; -inf means the slot has never been trained.
struct HardeningState {
  ActivationKind kind = ActivationKind::ReLU;
  Mode mode = Mode::Eval;
  float running_max = -std::numeric_limits<float>::infinity();

  bool calibrated() const { return running_max != -std::numeric_limits<float>::infinity(); }
};

/// Rectifying half of every activation: max(x, 0), clamped to 6 for ReLU6.
/// ReLU passes NaN through; ReLU6 maps it to 0 so its output stays inside [0, 6].
template <typename Scalar>
Tensor<Scalar> rectify(const Tensor<Scalar>& x, ActivationKind kind) {
  const auto& d = x.data();
  if (kind == ActivationKind::ReLU6) {
    return Tensor<Scalar>(x.shape(), (d > Scalar(0)).select(d.min(Scalar(kRelu6Threshold)), Scalar(0)));
  }
  return Tensor<Scalar>(x.shape(), (d > Scalar(0) || d.isNaN()).select(d, Scalar(0)));
}

/// Eval-time ReLUMax range check: zero every element outside [0, running_max], NaN included.
/// Equality survives, so a replayed training input is reproduced bitwise. The lower bound
/// only matters for values corrupted after rectification.
template <typename Scalar>
void relumax_clip(Tensor<Scalar>& y, float running_max) {
  const Scalar limit = static_cast<Scalar>(running_max);
  for (Scalar& v : y.data()) {
    if (!(v >= Scalar(0) && v <= limit)) v = Scalar(0);
  }
}

/// Largest finite element, -inf if there is none.
template <typename Scalar>
Scalar finite_max(const Tensor<Scalar>& y) {
  Scalar m = -std::numeric_limits<Scalar>::infinity();
  for (Scalar v : y.data()) {
    if (std::isfinite(v) && v > m) m = v;
  }
  return m;
}

/// Eval-mode activation. Never modifies the state.
template <typename Scalar>
Tensor<Scalar> activate(const Tensor<Scalar>& x, const HardeningState& state) {
  if (state.mode != Mode::Eval) throw StateError("activate: read-only state must be in Eval mode");
  Tensor<Scalar> y = rectify(x, state.kind);
  if (state.kind == ActivationKind::ReLUMax) {
    if (!state.calibrated()) throw StateError("uncalibrated ReLUMax");
    relumax_clip(y, state.running_max);
  }
  return y;
}

/// Activation that, in Train mode, folds this output into the ReLUMax running maximum.
template <typename Scalar>
Tensor<Scalar> activate(const Tensor<Scalar>& x, HardeningState& state) {
  if (state.mode == Mode::Eval) return activate(x, static_cast<const HardeningState&>(state));
  Tensor<Scalar> y = rectify(x, state.kind);
  if (state.kind == ActivationKind::ReLUMax) {
    state.running_max = std::max(state.running_max, static_cast<float>(finite_max(y)));
  }
  return y;
}

/// Gradient of the training-mode activation given its forward input.
template <typename Scalar>
Tensor<Scalar> activation_backward(const Tensor<Scalar>& grad_out, const Tensor<Scalar>& input, ActivationKind kind) {
  if (grad_out.shape() != input.shape()) {
    throw ShapeError("activation_backward: grad " + grad_out.shape().str() + " vs input " + input.shape().str());
  }
  Tensor<Scalar> g(grad_out.shape());
  const auto& x = input.data();
  if (kind == ActivationKind::ReLU6) {
    g.data() = ((x > Scalar(0)) && (x < Scalar(kRelu6Threshold))).select(grad_out.data(), Scalar(0));
  } else {
    g.data() = (x > Scalar(0)).select(grad_out.data(), Scalar(0));
  }
  return g;
}

// ---------------------------------------------------------------------------
// AMMS: per-layer Average / Minimum / Maximum / Standard-deviation monitoring.

/// Observed range of one statistic across calibration batches. The accepted
/// interval is one sigma beyond the observed extremes.
struct StatRange {
  double low = 0.0;
  double high = 0.0;
  double sigma = 0.0;

  double lower() const { return low - sigma; }
  double upper() const { return high + sigma; }
  bool accepts(double v) const { return v >= lower() && v <= upper(); }
};

struct LayerAmmsStats {
  StatRange average;
  StatRange minimum;
  StatRange maximum;
  StatRange stddev;
};

struct AmmsStats {
  std::vector<LayerAmmsStats> layers;
};

/// The four statistics of one activation batch. Any non-finite element makes all four NaN,
/// which no interval accepts.
struct BatchStatistics {
  double average = 0.0;
  double minimum = 0.0;
  double maximum = 0.0;
  double stddev = 0.0;
};

template <typename Scalar>
BatchStatistics batch_statistics(const Tensor<Scalar>& x) {
  const auto& d = x.data();
  double sum = 0.0;
  double lo = std::numeric_limits<double>::infinity();
  double hi = -std::numeric_limits<double>::infinity();
  for (Scalar v : d) {
    if (!std::isfinite(v)) {
      const double nan = std::numeric_limits<double>::quiet_NaN();
      return {nan, nan, nan, nan};
    }
    const double dv = static_cast<double>(v);
    sum += dv;
    lo = std::min(lo, dv);
    hi = std::max(hi, dv);
  }
  if (lo == hi) return {lo, lo, hi, 0.0};
  const double mean = sum / static_cast<double>(d.size());
  double sq = 0.0;
  for (Scalar v : d) {
    const double dv = static_cast<double>(v) - mean;
    sq += dv * dv;
  }
  return {mean, lo, hi, std::sqrt(sq / static_cast<double>(d.size()))};
}

/// Range (min, max, population std) of each statistic over the calibration batches.
/// Needs at least two batches.
LayerAmmsStats summarize_batches(std::span<const BatchStatistics> batches);

struct AmmsOutcome {
  bool detected = false;
  Index masked = 0;
};

/// Detection fires when both the average and the minimum leave their intervals; then every
/// element outside [min.lower, max.upper] (and every non-finite one) is zeroed in place.
template <typename Scalar>
AmmsOutcome amms_apply(Tensor<Scalar>& x, const LayerAmmsStats& stats) {
  const BatchStatistics s = batch_statistics(x);
  AmmsOutcome outcome;
  outcome.detected = !stats.average.accepts(s.average) && !stats.minimum.accepts(s.minimum);
  if (!outcome.detected) return outcome;
  const double lo = stats.minimum.lower();
  const double hi = stats.maximum.upper();
  for (Scalar& v : x.data()) {
    const double dv = static_cast<double>(v);
    if (!(dv >= lo && dv <= hi)) {
      v = Scalar(0);
      ++outcome.masked;
    }
  }
  return outcome;
}

}  // namespace fseg
