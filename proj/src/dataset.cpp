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

#include "fseg/dataset.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <set>

#include <json.hpp>

#include "fseg/binary_io.hpp"

namespace fseg {

namespace {

constexpr char kDatasetMagic[4] = {'F', 'S', 'D', 'S'};
constexpr std::uint32_t kDatasetVersion = 1;

// Mean colour per class; individual shapes jitter around it.
constexpr std::array<std::array<float, 3>, kShapeClasses> kClassColor{{
    {0.50f, 0.50f, 0.50f},
    {0.85f, 0.25f, 0.20f},
    {0.20f, 0.70f, 0.25f},
    {0.25f, 0.30f, 0.85f},
    {0.15f, 0.15f, 0.15f},
}};

float jitter(RandomStream& rng, float base, double amount) {
  return std::clamp(static_cast<float>(base + rng.uniform(-amount, amount)), 0.0f, 1.0f);
}

ShapeSpec random_shape(RandomStream& rng, Index h, Index w) {
  ShapeSpec s;
  s.cls = static_cast<ShapeClass>(rng.between(1, kShapeClasses - 1));
  const double hd = static_cast<double>(h);
  const double wd = static_cast<double>(w);
  switch (s.cls) {
    case ShapeClass::Circle:
      s.radius = rng.uniform(std::max(2.0, hd / 16.0), hd / 5.0);
      s.cy = rng.uniform(0.0, hd);
      s.cx = rng.uniform(0.0, wd);
      break;
    case ShapeClass::Rectangle: {
      const Index rh = rng.between(std::max<Index>(2, h / 8), std::max<Index>(2, h / 3));
      const Index rw = rng.between(std::max<Index>(2, w / 8), std::max<Index>(2, w / 3));
      s.y0 = rng.between(0, h - rh);
      s.x0 = rng.between(0, w - rw);
      s.y1 = s.y0 + rh;
      s.x1 = s.x0 + rw;
      break;
    }
    case ShapeClass::Triangle: {
      const Index th = rng.between(std::max<Index>(3, h / 6), std::max<Index>(3, h / 3));
      const Index tw = rng.between(std::max<Index>(3, w / 6), std::max<Index>(3, w / 3));
      s.y0 = rng.between(0, h - th);
      s.x0 = rng.between(0, w - tw);
      s.y1 = s.y0 + th;
      s.x1 = s.x0 + tw;
      s.cx = static_cast<double>(s.x0 + s.x1) / 2.0;
      break;
    }
    case ShapeClass::Road: {
      const Index bh = rng.between(std::max<Index>(1, h / 10), std::max<Index>(1, h / 5));
      s.y0 = rng.between(0, h - bh);
      s.y1 = s.y0 + bh;
      s.x0 = 0;
      s.x1 = w;
      break;
    }
    case ShapeClass::Background:
      break;
  }
  const auto& base = kClassColor[static_cast<std::size_t>(s.cls)];
  s.r = jitter(rng, base[0], 0.12);
  s.g = jitter(rng, base[1], 0.12);
  s.b = jitter(rng, base[2], 0.12);
  return s;
}

void render_background(TensorF& image, RandomStream& rng) {
  const Shape& s = image.shape();
  const auto& base = kClassColor[0];
  const double fy = rng.uniform(0.05, 0.4);
  const double fx = rng.uniform(0.05, 0.4);
  const double phase = rng.uniform(0.0, 6.283185307179586);
  for (Index c = 0; c < 3; ++c) {
    const float tone = jitter(rng, base[static_cast<std::size_t>(c)], 0.1);
    for (Index y = 0; y < s.h; ++y) {
      for (Index x = 0; x < s.w; ++x) {
        const double texture = 0.08 * std::sin(fy * static_cast<double>(y) + fx * static_cast<double>(x) + phase);
        image(0, c, y, x) = static_cast<float>(tone + texture);
      }
    }
  }
}

void generate_split(RandomStream& rng, std::size_t count, Index h, Index w, ImageSet& out) {
  out.images.reserve(count);
  out.labels.reserve(count);
  while (out.images.size() < count) {
    TensorF image(Shape{1, 3, h, w});
    ClassMap labels = ClassMap::Zero(h, w);
    render_background(image, rng);
    const auto shapes = rng.between(1, 4);
    for (std::int64_t i = 0; i < shapes; ++i) render_shape(image, labels, random_shape(rng, h, w));
    for (float& v : image.data()) v = std::clamp(static_cast<float>(v + 0.02 * rng.normal()), 0.0f, 1.0f);
    const std::set<std::int32_t> present(labels.data(), labels.data() + labels.size());
    if (present.size() < 2) continue;
    out.images.push_back(std::move(image));
    out.labels.push_back(std::move(labels));
  }
}

std::string encode_split(const ImageSet& set, Index h, Index w, int num_classes) {
  ByteWriter out;
  out.put_raw(std::string_view(kDatasetMagic, 4));
  out.put(kDatasetVersion);
  out.put(static_cast<std::uint32_t>(set.size()));
  out.put(static_cast<std::uint32_t>(h));
  out.put(static_cast<std::uint32_t>(w));
  out.put(static_cast<std::uint32_t>(num_classes));
  for (const TensorF& img : set.images) {
    out.put_array(std::span<const float>(img.data().data(), static_cast<std::size_t>(img.size())));
  }
  for (const ClassMap& lab : set.labels) {
    for (Index i = 0; i < lab.size(); ++i) out.put(static_cast<std::uint8_t>(lab.data()[i]));
  }
  return out.bytes();
}

ImageSet decode_split(const std::string& bytes, const std::string& what, Index& h, Index& w, int& num_classes) {
  ByteReader in(bytes, what);
  if (in.get_raw(4) != std::string_view(kDatasetMagic, 4)) throw MagicError(what + " is not a dataset file");
  const auto version = in.get<std::uint32_t>();
  if (version != kDatasetVersion) throw VersionError(what + ": unsupported dataset version " + std::to_string(version));
  const auto count = in.get<std::uint32_t>();
  h = in.get<std::uint32_t>();
  w = in.get<std::uint32_t>();
  num_classes = static_cast<int>(in.get<std::uint32_t>());
  if (h < 1 || w < 1) throw FormatError(what + ": empty image dimensions");
  ImageSet set;
  for (std::uint32_t i = 0; i < count; ++i) {
    TensorF img(Shape{1, 3, h, w});
    in.get_array(std::span<float>(img.data().data(), static_cast<std::size_t>(img.size())));
    set.images.push_back(std::move(img));
  }
  for (std::uint32_t i = 0; i < count; ++i) {
    ClassMap lab(h, w);
    for (Index j = 0; j < lab.size(); ++j) {
      const auto v = in.get<std::uint8_t>();
      if (v >= num_classes) throw FormatError(what + ": label " + std::to_string(v) + " out of range");
      lab.data()[j] = v;
    }
    set.labels.push_back(std::move(lab));
  }
  if (!in.at_end()) throw FormatError(what + ": trailing bytes");
  return set;
}

}  // namespace

ImageSet ImageSet::subset(std::size_t first, std::size_t count) const {
  if (first + count > size()) throw ValueError("ImageSet::subset out of range");
  ImageSet out;
  out.images.assign(images.begin() + static_cast<std::ptrdiff_t>(first),
                    images.begin() + static_cast<std::ptrdiff_t>(first + count));
  out.labels.assign(labels.begin() + static_cast<std::ptrdiff_t>(first),
                    labels.begin() + static_cast<std::ptrdiff_t>(first + count));
  return out;
}

const std::vector<std::string>& shape_class_names() {
  static const std::vector<std::string> names{"background", "circle", "rectangle", "triangle", "road"};
  return names;
}

bool ShapeSpec::covers(Index y, Index x) const {
  const double py = static_cast<double>(y) + 0.5;
  const double px = static_cast<double>(x) + 0.5;
  switch (cls) {
    case ShapeClass::Circle:
      return (py - cy) * (py - cy) + (px - cx) * (px - cx) <= radius * radius;
    case ShapeClass::Rectangle:
    case ShapeClass::Road:
      return y >= y0 && y < y1 && x >= x0 && x < x1;
    case ShapeClass::Triangle: {
      if (y < y0 || y >= y1) return false;
      const double half = 0.5 * static_cast<double>(x1 - x0) * (py - static_cast<double>(y0)) /
                          static_cast<double>(y1 - y0);
      return std::abs(px - cx) <= half;
    }
    case ShapeClass::Background:
      return false;
  }
  return false;
}

void render_shape(TensorF& image, ClassMap& labels, const ShapeSpec& shape) {
  const Shape& s = image.shape();
  const std::array<float, 3> color{shape.r, shape.g, shape.b};
  for (Index y = 0; y < s.h; ++y) {
    for (Index x = 0; x < s.w; ++x) {
      if (!shape.covers(y, x)) continue;
      for (Index c = 0; c < 3; ++c) image(0, c, y, x) = color[static_cast<std::size_t>(c)];
      labels(y, x) = static_cast<std::int32_t>(shape.cls);
    }
  }
}

ShapesDataset generate_dataset(std::uint64_t seed, std::size_t count_train, std::size_t count_val, Index height,
                               Index width) {
  if (height < 4 || width < 4 || height % 4 != 0 || width % 4 != 0) {
    throw ValueError("dataset dimensions must be positive multiples of 4, got " + std::to_string(height) + "x" +
                     std::to_string(width));
  }
  if (count_train < 1 || count_val < 1) throw ValueError("dataset split counts must be >= 1");
  ShapesDataset data;
  data.seed = seed;
  data.height = height;
  data.width = width;
  RandomStream train_rng(seed, 0);
  RandomStream val_rng(seed, 1);
  generate_split(train_rng, count_train, height, width, data.train);
  generate_split(val_rng, count_val, height, width, data.val);
  return data;
}

void save_dataset(const ShapesDataset& data, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  write_file(dir / "train.bin", encode_split(data.train, data.height, data.width, data.num_classes));
  write_file(dir / "val.bin", encode_split(data.val, data.height, data.width, data.num_classes));
  nlohmann::ordered_json manifest;
  manifest["seed"] = data.seed;
  manifest["count_train"] = data.train.size();
  manifest["count_val"] = data.val.size();
  manifest["height"] = data.height;
  manifest["width"] = data.width;
  manifest["num_classes"] = data.num_classes;
  manifest["class_names"] = shape_class_names();
  write_file(dir / "manifest.json", manifest.dump(2) + "\n");
}

ShapesDataset load_dataset(const std::filesystem::path& dir) {
  ShapesDataset data;
  try {
    const auto manifest = nlohmann::json::parse(read_file(dir / "manifest.json"));
    data.seed = manifest.at("seed").get<std::uint64_t>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("bad dataset manifest in " + dir.string() + ": " + e.what());
  }
  Index h = 0, w = 0, vh = 0, vw = 0;
  int classes = 0, vclasses = 0;
  data.train = decode_split(read_file(dir / "train.bin"), "train.bin", h, w, classes);
  data.val = decode_split(read_file(dir / "val.bin"), "val.bin", vh, vw, vclasses);
  if (h != vh || w != vw || classes != vclasses) throw FormatError("train and val splits disagree on dimensions");
  data.height = h;
  data.width = w;
  data.num_classes = classes;
  return data;
}

}  // namespace fseg
