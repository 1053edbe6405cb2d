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
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fseg/rng.hpp"
#include "fseg/tensor.hpp"

namespace fseg {

enum class GeometryKind { Row, Col, Block };

std::string to_string(GeometryKind kind);
GeometryKind parse_geometry_kind(const std::string& name);

/// Spatial footprint of a fault. Rows span the full width, columns the full height.
struct FaultGeometry {
  GeometryKind kind = GeometryKind::Block;
  Index y = 0;
  Index x = 0;
  Index h = 1;
  Index w = 1;

  static FaultGeometry row(Index y, Index width) { return {GeometryKind::Row, y, 0, 1, width}; }
  static FaultGeometry col(Index x, Index height) { return {GeometryKind::Col, 0, x, height, 1}; }
  static FaultGeometry block(Index y, Index x, Index h, Index w) { return {GeometryKind::Block, y, x, h, w}; }

  bool contains(Index yy, Index xx) const { return yy >= y && yy < y + h && xx >= x && xx < x + w; }
  friend bool operator==(const FaultGeometry&, const FaultGeometry&) = default;
};

enum class MagnitudeKind { Finite, PosInf, NaN };

/// One transient fault: which activation slot, where, which channels, how strong.
struct FaultDescriptor {
  Index layer_slot = 0;
  FaultGeometry geometry;
  std::optional<Index> channel;  ///< nullopt: every channel
  MagnitudeKind special = MagnitudeKind::Finite;
  float magnitude = 1.0f;

  /// Value written into the footprint for an element v.
  float apply(float v) const;
  friend bool operator==(const FaultDescriptor& a, const FaultDescriptor& b);
};

/// How faults are drawn. Defaults: one fault per pass, magnitude U[-1024, 1024],
/// equal geometry weights, blocks of side U[2, extent/2], 5% Inf/NaN extremes.
struct InjectionPolicy {
  std::uint64_t seed = 0;
  double p_inject = 1.0;
  double magnitude_lo = -1024.0;
  double magnitude_hi = 1024.0;
  Index block_min = 2;
  Index block_max = 0;  ///< 0: half the target extent
  std::array<double, 3> geometry_weights{1.0, 1.0, 1.0};  ///< row, col, block
  std::array<double, 2> channel_weights{1.0, 1.0};        ///< all channels, single channel
  double p_extreme = 0.05;

  void validate() const;
};

/// Draws at most one fault for a forward pass over activation slots with the given shapes.
/// Draw order: inject?, slot, geometry, coordinates, channel scope, channel, magnitude, extreme?.
std::optional<FaultDescriptor> sample_fault(const InjectionPolicy& policy, std::span<const Shape> slot_shapes,
                                            RandomStream& rng);

/// Throws ShapeError unless the fault fits inside a tensor of this shape.
void check_fault_fits(const FaultDescriptor& fault, const Shape& shape);

/// Applies the fault to every image of the batch in place.
void inject_inplace(TensorF& x, const FaultDescriptor& fault);

inline TensorF inject(const TensorF& x, const FaultDescriptor& fault) {
  TensorF out = x;
  inject_inplace(out, fault);
  return out;
}

/// CSV fields: layer_slot,geom_kind,y,x,h,w,channel,magnitude (channel -1 = all).
inline constexpr const char* kFaultCsvHeader = "layer_slot,geom_kind,y,x,h,w,channel,magnitude";
std::string to_csv(const FaultDescriptor& fault);
FaultDescriptor fault_from_csv(std::span<const std::string> fields);

}  // namespace fseg
