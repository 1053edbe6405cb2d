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

#include "fseg/faultsim.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "fseg/format.hpp"

namespace fseg {

std::string to_string(GeometryKind kind) {
  switch (kind) {
    case GeometryKind::Row:
      return "row";
    case GeometryKind::Col:
      return "col";
    case GeometryKind::Block:
      return "block";
  }
  return "unknown";
}

GeometryKind parse_geometry_kind(const std::string& name) {
  if (name == "row") return GeometryKind::Row;
  if (name == "col") return GeometryKind::Col;
  if (name == "block") return GeometryKind::Block;
  throw FormatError("unknown geometry kind '" + name + "'");
}

float FaultDescriptor::apply(float v) const {
  switch (special) {
    case MagnitudeKind::PosInf:
      return std::numeric_limits<float>::infinity();
    case MagnitudeKind::NaN:
      return std::numeric_limits<float>::quiet_NaN();
    case MagnitudeKind::Finite:
      break;
  }
  return v * magnitude;
}

bool operator==(const FaultDescriptor& a, const FaultDescriptor& b) {
  const bool same_magnitude = a.special == b.special &&
                              (a.special != MagnitudeKind::Finite || a.magnitude == b.magnitude);
  return a.layer_slot == b.layer_slot && a.geometry == b.geometry && a.channel == b.channel && same_magnitude;
}

void InjectionPolicy::validate() const {
  auto unit = [](double p) { return p >= 0.0 && p <= 1.0; };
  if (!unit(p_inject)) throw ValueError("p_inject must lie in [0, 1]");
  if (!unit(p_extreme)) throw ValueError("p_extreme must lie in [0, 1]");
  if (!(magnitude_lo <= magnitude_hi)) throw ValueError("magnitude range must satisfy lo <= hi");
  if (!std::isfinite(magnitude_lo) || !std::isfinite(magnitude_hi)) throw ValueError("magnitude range must be finite");
  if (block_min < 1) throw ValueError("block sizes must be >= 1");
  if (block_max != 0 && block_max < block_min) throw ValueError("block_max must be 0 or >= block_min");
  for (double w : geometry_weights) {
    if (!(w >= 0.0)) throw ValueError("geometry weights must be non-negative");
  }
  for (double w : channel_weights) {
    if (!(w >= 0.0)) throw ValueError("channel weights must be non-negative");
  }
}

namespace {

Index block_side(const InjectionPolicy& policy, Index extent, RandomStream& rng) {
  const Index hi_default = std::max<Index>(1, extent / 2);
  const Index hi = std::min(extent, policy.block_max == 0 ? hi_default : policy.block_max);
  const Index lo = std::min(policy.block_min, hi);
  return rng.between(lo, hi);
}

}  // namespace

std::optional<FaultDescriptor> sample_fault(const InjectionPolicy& policy, std::span<const Shape> slot_shapes,
                                            RandomStream& rng) {
  policy.validate();
  if (slot_shapes.empty()) throw ValueError("sample_fault: model has no activation slots");
  if (!rng.bernoulli(policy.p_inject)) return std::nullopt;

  FaultDescriptor fault;
  fault.layer_slot = static_cast<Index>(rng.below(slot_shapes.size()));
  const Shape& s = slot_shapes[static_cast<std::size_t>(fault.layer_slot)];
  switch (static_cast<GeometryKind>(rng.choose(policy.geometry_weights))) {
    case GeometryKind::Row:
      fault.geometry = FaultGeometry::row(static_cast<Index>(rng.below(s.h)), s.w);
      break;
    case GeometryKind::Col:
      fault.geometry = FaultGeometry::col(static_cast<Index>(rng.below(s.w)), s.h);
      break;
    case GeometryKind::Block: {
      const Index bh = block_side(policy, s.h, rng);
      const Index bw = block_side(policy, s.w, rng);
      const Index y = static_cast<Index>(rng.below(s.h - bh + 1));
      const Index x = static_cast<Index>(rng.below(s.w - bw + 1));
      fault.geometry = FaultGeometry::block(y, x, bh, bw);
      break;
    }
  }
  if (rng.choose(policy.channel_weights) == 1) fault.channel = static_cast<Index>(rng.below(s.c));
  fault.magnitude = static_cast<float>(rng.uniform(policy.magnitude_lo, policy.magnitude_hi));
  if (policy.magnitude_lo == policy.magnitude_hi) fault.magnitude = static_cast<float>(policy.magnitude_lo);
  if (rng.bernoulli(policy.p_extreme)) {
    fault.special = rng.bernoulli(0.5) ? MagnitudeKind::PosInf : MagnitudeKind::NaN;
  }
  return fault;
}

void check_fault_fits(const FaultDescriptor& fault, const Shape& shape) {
  const FaultGeometry& g = fault.geometry;
  const bool spatial_ok = g.y >= 0 && g.x >= 0 && g.h >= 1 && g.w >= 1 && g.y + g.h <= shape.h && g.x + g.w <= shape.w;
  const bool channel_ok = !fault.channel || (*fault.channel >= 0 && *fault.channel < shape.c);
  if (!spatial_ok || !channel_ok) {
    throw ShapeError("fault " + to_csv(fault) + " does not fit feature map " + shape.str());
  }
}

void inject_inplace(TensorF& x, const FaultDescriptor& fault) {
  const Shape& s = x.shape();
  check_fault_fits(fault, s);
  const FaultGeometry& g = fault.geometry;
  const Index c_begin = fault.channel.value_or(0);
  const Index c_end = fault.channel ? *fault.channel + 1 : s.c;
  for (Index n = 0; n < s.n; ++n) {
    for (Index c = c_begin; c < c_end; ++c) {
      auto plane = x.plane(n, c);
      for (Index y = g.y; y < g.y + g.h; ++y) {
        for (Index xx = g.x; xx < g.x + g.w; ++xx) plane(y, xx) = fault.apply(plane(y, xx));
      }
    }
  }
}

std::string to_csv(const FaultDescriptor& fault) {
  const FaultGeometry& g = fault.geometry;
  std::string magnitude;
  switch (fault.special) {
    case MagnitudeKind::PosInf:
      magnitude = "inf";
      break;
    case MagnitudeKind::NaN:
      magnitude = "nan";
      break;
    case MagnitudeKind::Finite:
      magnitude = shortest(fault.magnitude);
      break;
  }
  return std::to_string(fault.layer_slot) + "," + to_string(g.kind) + "," + std::to_string(g.y) + "," +
         std::to_string(g.x) + "," + std::to_string(g.h) + "," + std::to_string(g.w) + "," +
         std::to_string(fault.channel.value_or(-1)) + "," + magnitude;
}

FaultDescriptor fault_from_csv(std::span<const std::string> fields) {
  if (fields.size() != 8) throw FormatError("fault row needs 8 fields, got " + std::to_string(fields.size()));
  FaultDescriptor f;
  f.layer_slot = parse_number<Index>(fields[0]);
  f.geometry.kind = parse_geometry_kind(fields[1]);
  f.geometry.y = parse_number<Index>(fields[2]);
  f.geometry.x = parse_number<Index>(fields[3]);
  f.geometry.h = parse_number<Index>(fields[4]);
  f.geometry.w = parse_number<Index>(fields[5]);
  const Index channel = parse_number<Index>(fields[6]);
  if (channel >= 0) f.channel = channel;
  if (fields[7] == "inf") {
    f.special = MagnitudeKind::PosInf;
  } else if (fields[7] == "nan") {
    f.special = MagnitudeKind::NaN;
  } else {
    f.magnitude = parse_number<float>(fields[7]);
  }
  return f;
}

}  // namespace fseg
