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
#include <vector>

#include "fseg/rng.hpp"
#include "fseg/tensor.hpp"

namespace fseg {

/// Images (each 1 x 3 x H x W, values in [0, 1]) with their label maps.
struct ImageSet {
  std::vector<TensorF> images;
  std::vector<ClassMap> labels;

  std::size_t size() const { return images.size(); }
  bool empty() const { return images.empty(); }
  ImageSet subset(std::size_t first, std::size_t count) const;
};

enum class ShapeClass : std::int32_t { Background = 0, Circle = 1, Rectangle = 2, Triangle = 3, Road = 4 };

inline constexpr int kShapeClasses = 5;
const std::vector<std::string>& shape_class_names();

/// One drawable primitive. Circles use (cy, cx, radius); rectangles and the road band
/// use the box (y0, x0, y1, x1) with exclusive ends; triangles point up with apex
/// (y0, cx) and base row y1 spanning [x0, x1).
struct ShapeSpec {
  ShapeClass cls = ShapeClass::Circle;
  double cy = 0, cx = 0, radius = 0;
  Index y0 = 0, x0 = 0, y1 = 0, x1 = 0;
  float r = 0, g = 0, b = 0;

  bool covers(Index y, Index x) const;
};

/// Paints the shape's colour into image 0 and its class into the label map.
void render_shape(TensorF& image, ClassMap& labels, const ShapeSpec& shape);

struct ShapesDataset {
  std::uint64_t seed = 0;
  Index height = 64;
  Index width = 64;
  int num_classes = kShapeClasses;
  ImageSet train;
  ImageSet val;
};

/// Textured background, 1-4 occluding shapes, additive N(0, 0.02) noise, clamped to [0, 1].
/// Train images come from stream 0 of the seed, validation images from stream 1.
ShapesDataset generate_dataset(std::uint64_t seed, std::size_t count_train, std::size_t count_val, Index height,
                               Index width);

/// Writes train.bin, val.bin and manifest.json into dir.
void save_dataset(const ShapesDataset& data, const std::filesystem::path& dir);
ShapesDataset load_dataset(const std::filesystem::path& dir);

}  // namespace fseg
