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

#include "fseg/hardening.hpp"

#include <algorithm>

namespace fseg {

std::string to_string(ActivationKind kind) {
  switch (kind) {
    case ActivationKind::ReLU:
      return "relu";
    case ActivationKind::ReLU6:
      return "relu6";
    case ActivationKind::ReLUMax:
      return "relumax";
  }
  return "unknown";
}

ActivationKind parse_activation_kind(const std::string& name) {
  if (name == "relu") return ActivationKind::ReLU;
  if (name == "relu6") return ActivationKind::ReLU6;
  if (name == "relumax") return ActivationKind::ReLUMax;
  throw ValueError("unknown activation kind '" + name + "' (expected relu, relu6 or relumax)");
}

namespace {

StatRange range_of(std::span<const BatchStatistics> batches, double BatchStatistics::*field) {
  StatRange r{batches.front().*field, batches.front().*field, 0.0};
  double sum = 0.0;
  for (const auto& b : batches) {
    const double v = b.*field;
    if (!std::isfinite(v)) throw ValueError("AMMS calibration batch has non-finite activations");
    r.low = std::min(r.low, v);
    r.high = std::max(r.high, v);
    sum += v;
  }
  if (r.low == r.high) return r;
  const double mean = sum / static_cast<double>(batches.size());
  double sq = 0.0;
  for (const auto& b : batches) sq += (b.*field - mean) * (b.*field - mean);
  r.sigma = std::sqrt(sq / static_cast<double>(batches.size()));
  return r;
}

}  // namespace

LayerAmmsStats summarize_batches(std::span<const BatchStatistics> batches) {
  if (batches.size() < 2) {
    throw ValueError("AMMS calibration needs at least 2 batches, got " + std::to_string(batches.size()));
  }
  return {range_of(batches, &BatchStatistics::average), range_of(batches, &BatchStatistics::minimum),
          range_of(batches, &BatchStatistics::maximum), range_of(batches, &BatchStatistics::stddev)};
}

}  // namespace fseg
