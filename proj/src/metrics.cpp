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

#include "fseg/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <numeric>

#include "fseg/format.hpp"

namespace fseg {

namespace {

void check_same_size(const ClassMap& a, const ClassMap& b, const char* what) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw ShapeError(std::string(what) + ": map " + std::to_string(a.rows()) + "x" + std::to_string(a.cols()) +
                     " vs " + std::to_string(b.rows()) + "x" + std::to_string(b.cols()));
  }
}

std::optional<double> ratio(std::uint64_t num, std::uint64_t den) {
  if (den == 0) return std::nullopt;
  return static_cast<double>(num) / static_cast<double>(den);
}

std::vector<bool> classes_present(const ClassMap& m, int num_classes) {
  std::vector<bool> present(static_cast<std::size_t>(num_classes), false);
  for (Index i = 0; i < m.size(); ++i) present[static_cast<std::size_t>(m.data()[i])] = true;
  return present;
}

// Trapezoid area of the accuracy curve for pixels rejected in the given order.
double rejection_area(std::span<const std::uint8_t> correct_in_rejection_order) {
  const std::size_t n = correct_in_rejection_order.size();
  double retained_correct = 0.0;
  for (std::uint8_t c : correct_in_rejection_order) retained_correct += c;
  const double step = 1.0 / static_cast<double>(n);
  double prev = retained_correct / static_cast<double>(n);
  double area = 0.0;
  for (std::size_t k = 1; k < n; ++k) {
    retained_correct -= correct_in_rejection_order[k - 1];
    const double acc = retained_correct / static_cast<double>(n - k);
    area += 0.5 * (prev + acc) * step;
    prev = acc;
  }
  return area;
}

}  // namespace

SegScore miou(const ClassMap& pred, const ClassMap& gt, int num_classes) {
  check_same_size(pred, gt, "miou");
  if (num_classes < 1) throw ValueError("miou: num_classes must be >= 1");
  const auto k = static_cast<std::size_t>(num_classes);
  std::vector<std::uint64_t> inter(k, 0), pred_count(k, 0), gt_count(k, 0);
  std::uint64_t correct = 0;
  for (Index i = 0; i < pred.size(); ++i) {
    const auto p = pred.data()[i];
    const auto g = gt.data()[i];
    if (p < 0 || p >= num_classes || g < 0 || g >= num_classes) {
      throw ValueError("miou: class id out of range at pixel " + std::to_string(i));
    }
    ++pred_count[static_cast<std::size_t>(p)];
    ++gt_count[static_cast<std::size_t>(g)];
    if (p == g) {
      ++inter[static_cast<std::size_t>(p)];
      ++correct;
    }
  }
  SegScore score;
  score.per_class_iou.resize(k);
  double sum = 0.0;
  int included = 0;
  for (std::size_t c = 0; c < k; ++c) {
    const std::uint64_t uni = pred_count[c] + gt_count[c] - inter[c];
    if (uni == 0) continue;
    const double iou = static_cast<double>(inter[c]) / static_cast<double>(uni);
    score.per_class_iou[c] = iou;
    sum += iou;
    ++included;
  }
  score.miou = included > 0 ? sum / included : 0.0;
  score.pixel_accuracy = static_cast<double>(correct) / static_cast<double>(pred.size());
  return score;
}

ClassMap argmax_map(const TensorF& logits, Index n) {
  const Shape& s = logits.shape();
  ClassMap out(s.h, s.w);
  for (Index y = 0; y < s.h; ++y) {
    for (Index x = 0; x < s.w; ++x) {
      std::int32_t best = 0;
      float best_v = logits(n, 0, y, x);
      for (Index c = 1; c < s.c; ++c) {
        const float v = logits(n, c, y, x);
        if (v > best_v || (std::isnan(best_v) && !std::isnan(v))) {
          best_v = v;
          best = static_cast<std::int32_t>(c);
        }
      }
      out(y, x) = best;
    }
  }
  return out;
}

std::string to_string(SdcClass cls) {
  switch (cls) {
    case SdcClass::Masked:
      return "masked";
    case SdcClass::NoImpact:
      return "no_impact";
    case SdcClass::Tolerable:
      return "tolerable";
    case SdcClass::Critical:
      return "critical";
  }
  return "unknown";
}

SdcClass parse_sdc_class(const std::string& name) {
  if (name == "masked") return SdcClass::Masked;
  if (name == "no_impact") return SdcClass::NoImpact;
  if (name == "tolerable") return SdcClass::Tolerable;
  if (name == "critical") return SdcClass::Critical;
  throw FormatError("unknown SDC class '" + name + "'");
}

SdcResult classify_sdc(const TensorF& clean, const TensorF& faulty) {
  if (clean.shape() != faulty.shape()) {
    throw ShapeError("classify_sdc: clean " + clean.shape().str() + " vs faulty " + faulty.shape().str());
  }
  SdcResult result;
  if (std::memcmp(clean.data().data(), faulty.data().data(), sizeof(float) * static_cast<std::size_t>(clean.size())) ==
      0) {
    return result;
  }
  const Shape& s = clean.shape();
  const int classes = static_cast<int>(s.c);
  std::uint64_t changed = 0;
  std::vector<bool> before(static_cast<std::size_t>(classes), false), after(before);
  for (Index n = 0; n < s.n; ++n) {
    const ClassMap a = argmax_map(clean, n);
    const ClassMap b = argmax_map(faulty, n);
    changed += static_cast<std::uint64_t>((a != b).count());
    const auto pa = classes_present(a, classes);
    const auto pb = classes_present(b, classes);
    for (std::size_t c = 0; c < pa.size(); ++c) {
      before[c] = before[c] || pa[c];
      after[c] = after[c] || pb[c];
    }
  }
  result.changed_pixel_fraction = static_cast<double>(changed) / static_cast<double>(s.n * s.plane());
  for (std::size_t c = 0; c < before.size(); ++c) {
    if (after[c] && !before[c]) result.classes_appeared.push_back(static_cast<std::int32_t>(c));
    if (before[c] && !after[c]) result.classes_disappeared.push_back(static_cast<std::int32_t>(c));
  }
  if (changed == 0) {
    result.cls = SdcClass::NoImpact;
  } else if (result.changed_pixel_fraction < kTolerablePixelFraction && result.classes_appeared.empty() &&
             result.classes_disappeared.empty()) {
    result.cls = SdcClass::Tolerable;
  } else {
    result.cls = SdcClass::Critical;
  }
  return result;
}

ValueMap entropy_map(const TensorF& logits, Index n) {
  const Shape& s = logits.shape();
  ValueMap out(s.h, s.w);
  std::vector<double> z(static_cast<std::size_t>(s.c));
  for (Index y = 0; y < s.h; ++y) {
    for (Index x = 0; x < s.w; ++x) {
      double peak = -std::numeric_limits<double>::infinity();
      bool has_nan = false;
      for (Index c = 0; c < s.c; ++c) {
        z[static_cast<std::size_t>(c)] = logits(n, c, y, x);
        has_nan = has_nan || std::isnan(z[static_cast<std::size_t>(c)]);
        peak = std::max(peak, z[static_cast<std::size_t>(c)]);
      }
      if (has_nan || !std::isfinite(peak)) {
        out(y, x) = std::numeric_limits<double>::quiet_NaN();
        continue;
      }
      double total = 0.0;
      for (double& v : z) {
        v = std::exp(v - peak);
        total += v;
      }
      double h = 0.0;
      for (double v : z) {
        const double p = v / total;
        if (p > 0.0) h -= p * std::log(p);
      }
      out(y, x) = h;
    }
  }
  return out;
}

double uncertainty_threshold(std::span<const ValueMap> maps) {
  double sum = 0.0;
  std::uint64_t count = 0;
  for (const ValueMap& m : maps) {
    for (Index i = 0; i < m.size(); ++i) sum += m.data()[i];
    count += static_cast<std::uint64_t>(m.size());
  }
  if (count == 0) throw ValueError("uncertainty_threshold: no pixels");
  return sum / static_cast<double>(count);
}

PatchConfusion patch_confusion(const ClassMap& pred, const ClassMap& gt, const ValueMap& entropy, double u_star,
                               Index window, double accuracy_threshold) {
  check_same_size(pred, gt, "patch_confusion");
  if (entropy.rows() != pred.rows() || entropy.cols() != pred.cols()) {
    throw ShapeError("patch_confusion: entropy map size differs from prediction size");
  }
  if (window < 1 || pred.rows() % window != 0 || pred.cols() % window != 0) {
    throw ShapeError("patch_confusion: map " + std::to_string(pred.rows()) + "x" + std::to_string(pred.cols()) +
                     " not divisible by window " + std::to_string(window));
  }
  const double needed = accuracy_threshold * static_cast<double>(window * window);
  PatchConfusion conf;
  for (Index py = 0; py < pred.rows(); py += window) {
    for (Index px = 0; px < pred.cols(); px += window) {
      const Index correct = (pred.block(py, px, window, window) == gt.block(py, px, window, window)).count();
      const double mean_entropy = entropy.block(py, px, window, window).sum() / static_cast<double>(window * window);
      const bool accurate = static_cast<double>(correct) > needed;
      const bool certain = mean_entropy <= u_star;
      if (accurate && certain) {
        ++conf.n_ac;
      } else if (accurate) {
        ++conf.n_au;
      } else if (certain) {
        ++conf.n_ic;
      } else {
        ++conf.n_iu;
      }
    }
  }
  return conf;
}

std::optional<double> pac(const PatchConfusion& c) { return ratio(c.n_ac, c.n_ac + c.n_ic); }
std::optional<double> pui(const PatchConfusion& c) { return ratio(c.n_iu, c.n_ic + c.n_iu); }
std::optional<double> pavpu(const PatchConfusion& c) { return ratio(c.n_ac + c.n_iu, c.total()); }

std::optional<double> prr(std::span<const std::uint8_t> correct, std::span<const double> uncertainty) {
  if (correct.size() != uncertainty.size()) {
    throw ShapeError("prr: " + std::to_string(correct.size()) + " correctness flags vs " +
                     std::to_string(uncertainty.size()) + " uncertainties");
  }
  const std::size_t n = correct.size();
  if (n < 2) throw ValueError("prr: needs at least 2 samples");

  std::vector<std::uint32_t> order(n);
  std::iota(order.begin(), order.end(), 0u);
  auto key = [&](std::uint32_t i) {
    const double u = uncertainty[i];
    return std::isnan(u) ? std::numeric_limits<double>::infinity() : u;
  };
  auto more_uncertain = [&](std::uint32_t a, std::uint32_t b) {
    const double ka = key(a);
    const double kb = key(b);
    if (ka != kb) return ka > kb;
    const bool na = std::isnan(uncertainty[a]);
    const bool nb = std::isnan(uncertainty[b]);
    if (na != nb) return na;
    return a < b;
  };
  std::sort(order.begin(), order.end(), more_uncertain);

  std::vector<std::uint8_t> model(n);
  std::size_t correct_total = 0;
  for (std::size_t k = 0; k < n; ++k) {
    model[k] = correct[order[k]] != 0 ? 1 : 0;
    correct_total += model[k];
  }
  std::vector<std::uint8_t> oracle(n, 0);
  std::fill(oracle.begin() + static_cast<std::ptrdiff_t>(n - correct_total), oracle.end(), 1);

  const double base_acc = static_cast<double>(correct_total) / static_cast<double>(n);
  const double area_base = base_acc * static_cast<double>(n - 1) / static_cast<double>(n);
  const double area_oracle = rejection_area(oracle);
  if (area_oracle == area_base || correct_total == n || correct_total == 0) return std::nullopt;
  const double area_model = rejection_area(model);
  return (area_model - area_base) / (area_oracle - area_base);
}

UncertaintyAccumulator::UncertaintyAccumulator(double u_star, Index window, double accuracy_threshold)
    : u_star_(u_star), window_(window), accuracy_threshold_(accuracy_threshold) {}

void UncertaintyAccumulator::add(const ClassMap& pred, const ClassMap& gt, const ValueMap& entropy) {
  confusion_ += patch_confusion(pred, gt, entropy, u_star_, window_, accuracy_threshold_);
  for (Index i = 0; i < pred.size(); ++i) {
    correct_.push_back(pred.data()[i] == gt.data()[i] ? 1 : 0);
    uncertainty_.push_back(entropy.data()[i]);
  }
}

UncertaintyReport UncertaintyAccumulator::finish() const {
  UncertaintyReport r;
  r.confusion = confusion_;
  r.p_ac = pac(confusion_);
  r.p_ui = pui(confusion_);
  r.pavpu = pavpu(confusion_);
  if (correct_.size() >= 2) r.prr = prr(correct_, uncertainty_);
  r.u_star = u_star_;
  r.a_star = accuracy_threshold_;
  r.window = window_;
  return r;
}

std::string format_optional(const std::optional<double>& v) { return v ? shortest(*v) : std::string("n/a"); }

}  // namespace fseg
