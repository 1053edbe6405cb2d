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

#include <Eigen/Core>

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fseg/tensor.hpp"

namespace fseg {

/// Per-pixel value map, rows x cols (entropies, uncertainties).
using ValueMap = Eigen::Array<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct SegScore {
  std::vector<std::optional<double>> per_class_iou;  ///< nullopt: class absent from both maps
  double miou = 0.0;
  double pixel_accuracy = 0.0;
};

/// Intersection over union per class; classes with an empty union are excluded from the mean.
SegScore miou(const ClassMap& pred, const ClassMap& gt, int num_classes);

/// Channel argmax of image n. Ties go to the lowest class id and NaN never wins
/// (an all-NaN pixel maps to class 0).
ClassMap argmax_map(const TensorF& logits, Index n = 0);

enum class SdcClass { Masked, NoImpact, Tolerable, Critical };

std::string to_string(SdcClass cls);
SdcClass parse_sdc_class(const std::string& name);

struct SdcResult {
  SdcClass cls = SdcClass::Masked;
  double changed_pixel_fraction = 0.0;
  std::vector<std::int32_t> classes_appeared;
  std::vector<std::int32_t> classes_disappeared;
};

inline constexpr double kTolerablePixelFraction = 0.01;

/// Severity of a faulty inference against the clean one: bitwise-equal logits are Masked,
/// equal argmax maps NoImpact, fewer than 1% changed pixels with unchanged class set
/// Tolerable, anything else Critical.
SdcResult classify_sdc(const TensorF& clean, const TensorF& faulty);

/// Softmax entropy per pixel of image n, computed in double; 0 ln 0 = 0.
ValueMap entropy_map(const TensorF& logits, Index n = 0);

/// Mean entropy over every pixel of every map, summed in input order.
double uncertainty_threshold(std::span<const ValueMap> maps);

struct PatchConfusion {
  std::uint64_t n_ac = 0;
  std::uint64_t n_au = 0;
  std::uint64_t n_ic = 0;
  std::uint64_t n_iu = 0;

  std::uint64_t total() const { return n_ac + n_au + n_ic + n_iu; }
  PatchConfusion& operator+=(const PatchConfusion& o) {
    n_ac += o.n_ac;
    n_au += o.n_au;
    n_ic += o.n_ic;
    n_iu += o.n_iu;
    return *this;
  }
  friend bool operator==(const PatchConfusion&, const PatchConfusion&) = default;
};

inline constexpr Index kPatchWindow = 4;
inline constexpr double kPatchAccuracy = 0.5;

/// Tiles the map into window x window patches. A patch is accurate when strictly more than
/// accuracy_threshold * window^2 pixels are correct, certain when its mean entropy <= u_star.
PatchConfusion patch_confusion(const ClassMap& pred, const ClassMap& gt, const ValueMap& entropy, double u_star,
                               Index window = kPatchWindow, double accuracy_threshold = kPatchAccuracy);

/// p(accurate | certain) = n_ac / (n_ac + n_ic)
std::optional<double> pac(const PatchConfusion& c);
/// p(uncertain | inaccurate) = n_iu / (n_ic + n_iu)
std::optional<double> pui(const PatchConfusion& c);
/// (n_ac + n_iu) / all patches
std::optional<double> pavpu(const PatchConfusion& c);

/// Prediction rejection ratio. Pixels are rejected most-uncertain first (NaN counts as most
/// uncertain; ties in index order). The accuracy-vs-rejected-fraction curve over
/// r = 0, 1/N, ..., (N-1)/N is integrated with the trapezoid rule and normalised as
/// (model - random) / (oracle - random), the random baseline being the constant base accuracy.
/// nullopt when oracle and random coincide (all pixels correct or all wrong).
std::optional<double> prr(std::span<const std::uint8_t> correct, std::span<const double> uncertainty);

struct UncertaintyReport {
  PatchConfusion confusion;
  std::optional<double> p_ac;
  std::optional<double> p_ui;
  std::optional<double> pavpu;
  std::optional<double> prr;
  double u_star = 0.0;
  double a_star = kPatchAccuracy;
  Index window = kPatchWindow;
};

/// Streams per-image predictions into an UncertaintyReport (patch counts plus pooled PRR data).
class UncertaintyAccumulator {
 public:
  UncertaintyAccumulator(double u_star, Index window = kPatchWindow, double accuracy_threshold = kPatchAccuracy);

  void add(const ClassMap& pred, const ClassMap& gt, const ValueMap& entropy);
  UncertaintyReport finish() const;

 private:
  double u_star_;
  Index window_;
  double accuracy_threshold_;
  PatchConfusion confusion_;
  std::vector<std::uint8_t> correct_;
  std::vector<double> uncertainty_;
};

/// "n/a" for undefined values, shortest round-trip decimal otherwise.
std::string format_optional(const std::optional<double>& v);

}  // namespace fseg
