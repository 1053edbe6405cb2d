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

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <vector>

#include "fseg/metrics.hpp"
#include "oracles.hpp"

using namespace fseg;

namespace {

constexpr float kNaN = std::numeric_limits<float>::quiet_NaN();

ClassMap random_map(RandomStream& rng, Index h, Index w, int classes) {
  ClassMap m(h, w);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<std::int32_t>(rng.below(classes));
  return m;
}

/// Logits whose argmax is `labels`, with a margin of 1 everywhere.
TensorF logits_for(const ClassMap& labels, int classes) {
  TensorF t(Shape{1, classes, labels.rows(), labels.cols()});
  for (Index y = 0; y < labels.rows(); ++y)
    for (Index x = 0; x < labels.cols(); ++x) t(0, labels(y, x), y, x) = 1.0f;
  return t;
}

/// PRR straight from its definition: recompute every retained accuracy from scratch.
double brute_prr(const std::vector<std::uint8_t>& correct, const std::vector<double>& unc) {
  const std::size_t n = correct.size();
  auto area = [&](const std::vector<std::size_t>& order) {
    std::vector<double> acc;
    for (std::size_t k = 0; k < n; ++k) {
      double hits = 0;
      for (std::size_t j = k; j < n; ++j) hits += correct[order[j]];
      acc.push_back(hits / static_cast<double>(n - k));
    }
    double a = 0;
    for (std::size_t k = 0; k + 1 < n; ++k) a += 0.5 * (acc[k] + acc[k + 1]) / static_cast<double>(n);
    return a;
  };
  std::vector<std::size_t> model(n), oracle_order(n);
  std::iota(model.begin(), model.end(), 0);
  std::iota(oracle_order.begin(), oracle_order.end(), 0);
  auto key = [&](std::size_t i) { return std::isnan(unc[i]) ? std::numeric_limits<double>::infinity() : unc[i]; };
  std::stable_sort(model.begin(), model.end(), [&](auto a, auto b) { return key(a) > key(b); });
  std::stable_sort(oracle_order.begin(), oracle_order.end(),
                   [&](auto a, auto b) { return correct[a] < correct[b]; });
  const double base_acc = std::accumulate(correct.begin(), correct.end(), 0.0) / static_cast<double>(n);
  const double base = base_acc * static_cast<double>(n - 1) / static_cast<double>(n);
  return (area(model) - base) / (area(oracle_order) - base);
}

}  // namespace

TEST(Miou, PerfectPredictionScoresOne) {
  RandomStream rng(1);
  const ClassMap gt = random_map(rng, 8, 8, 3);
  const SegScore s = miou(gt, gt, 3);
  EXPECT_EQ(s.miou, 1.0);
  EXPECT_EQ(s.pixel_accuracy, 1.0);
}

TEST(Miou, DisjointSingleClassMapsScoreZero) {
  const SegScore s = miou(ClassMap::Constant(4, 4, 0), ClassMap::Constant(4, 4, 1), 3);
  EXPECT_EQ(*s.per_class_iou[0], 0.0);
  EXPECT_EQ(*s.per_class_iou[1], 0.0);
  EXPECT_FALSE(s.per_class_iou[2].has_value());
  EXPECT_EQ(s.miou, 0.0);
}

TEST(Miou, HandCountedTwoByTwo) {
  ClassMap gt(2, 2), pred(2, 2);
  gt << 0, 0, 1, 1;
  pred << 0, 1, 1, 1;
  const SegScore s = miou(pred, gt, 2);
  EXPECT_DOUBLE_EQ(*s.per_class_iou[0], 1.0 / 2.0);
  EXPECT_DOUBLE_EQ(*s.per_class_iou[1], 2.0 / 3.0);
  EXPECT_DOUBLE_EQ(s.miou, 7.0 / 12.0);
}

TEST(Miou, InvariantUnderConsistentRelabeling) {
  RandomStream rng(2);
  const std::array<std::int32_t, 3> perm{2, 0, 1};
  for (int i = 0; i < 200; ++i) {
    ClassMap pred = random_map(rng, 8, 8, 3), gt = random_map(rng, 8, 8, 3);
    const double before = miou(pred, gt, 3).miou;
    pred = pred.unaryExpr([&](std::int32_t c) { return perm[static_cast<std::size_t>(c)]; });
    gt = gt.unaryExpr([&](std::int32_t c) { return perm[static_cast<std::size_t>(c)]; });
    EXPECT_NEAR(miou(pred, gt, 3).miou, before, 1e-15);
  }
}

TEST(Miou, MatchesSetOracle) {
  RandomStream rng(3);
  for (int i = 0; i < 300; ++i) {
    const ClassMap pred = random_map(rng, 8, 8, 3), gt = random_map(rng, 8, 8, 3);
    const SegScore s = miou(pred, gt, 3);
    const auto ref = oracle::brute_miou(pred, gt, 3);
    for (int c = 0; c < 3; ++c) {
      if (ref.iou[static_cast<std::size_t>(c)] < 0) {
        EXPECT_FALSE(s.per_class_iou[static_cast<std::size_t>(c)].has_value());
      } else {
        EXPECT_NEAR(*s.per_class_iou[static_cast<std::size_t>(c)], ref.iou[static_cast<std::size_t>(c)], 1e-12);
      }
    }
    EXPECT_NEAR(s.miou, ref.miou, 1e-12);
  }
}

TEST(Miou, ErrorsOnShapeMismatchAndBadIds) {
  EXPECT_THROW(miou(ClassMap::Zero(2, 2), ClassMap::Zero(2, 3), 2), ShapeError);
  EXPECT_THROW(miou(ClassMap::Constant(2, 2, 5), ClassMap::Zero(2, 2), 2), ValueError);
}

TEST(Argmax, TiesGoToLowestClassAndNaNNeverWins) {
  TensorF t(Shape{1, 3, 1, 3});
  t(0, 1, 0, 0) = 2.0f;
  t(0, 2, 0, 0) = 2.0f;
  t(0, 0, 0, 1) = kNaN;
  t(0, 2, 0, 1) = -1.0f;
  t(0, 0, 0, 2) = kNaN;
  t(0, 1, 0, 2) = kNaN;
  t(0, 2, 0, 2) = kNaN;
  const ClassMap m = argmax_map(t);
  EXPECT_EQ(m(0, 0), 1);
  EXPECT_EQ(m(0, 1), 1);
  EXPECT_EQ(m(0, 2), 0);
}

TEST(Argmax, MatchesOracleOnFiniteLogits) {
  RandomStream rng(4);
  for (int i = 0; i < 300; ++i) {
    TensorF t(Shape{1, 3, 8, 8});
    // Coarse values make ties common.
    for (auto& v : t.data()) v = static_cast<float>(rng.between(-2, 2));
    EXPECT_TRUE((argmax_map(t) == oracle::brute_argmax(t)).all());
  }
}

TEST(Sdc, BitCopyIsMasked) {
  RandomStream rng(5);
  TensorF t(Shape{1, 3, 8, 8});
  oracle::fill_uniform(t, rng);
  EXPECT_EQ(classify_sdc(t, t).cls, SdcClass::Masked);
}

TEST(Sdc, NegativeZeroIsNotBitEqual) {
  TensorF clean(Shape{1, 2, 2, 2});
  clean(0, 0, 0, 0) = 1.0f;
  TensorF faulty = clean;
  faulty(0, 1, 1, 1) = -0.0f;
  EXPECT_EQ(classify_sdc(clean, faulty).cls, SdcClass::NoImpact);
}

TEST(Sdc, UniformShiftIsNoImpact) {
  RandomStream rng(6);
  TensorF t(Shape{1, 3, 16, 16});
  oracle::fill_uniform(t, rng);
  TensorF shifted(t.shape(), t.data() + 1e-3f);
  EXPECT_EQ(classify_sdc(t, shifted).cls, SdcClass::NoImpact);
}

class SdcBoundary : public ::testing::Test {
 protected:
  // 64x64 map: left half class 0, right half class 1, one pixel of class 2.
  void SetUp() override {
    labels = ClassMap::Zero(64, 64);
    labels.rightCols(32).setConstant(1);
    labels(63, 63) = 2;
    clean = logits_for(labels, 3);
  }
  SdcResult flip(int count) {
    ClassMap changed = labels;
    for (int i = 0; i < count; ++i) changed(i % 64, i / 64) = 1;  // class 0 pixels in the left half
    return classify_sdc(clean, logits_for(changed, 3));
  }
  ClassMap labels;
  TensorF clean;
};

TEST_F(SdcBoundary, FortyFlippedPixelsAreTolerable) {
  const SdcResult r = flip(40);
  EXPECT_EQ(r.cls, SdcClass::Tolerable);
  EXPECT_DOUBLE_EQ(r.changed_pixel_fraction, 40.0 / 4096.0);
}

TEST_F(SdcBoundary, FortyOneFlippedPixelsAreCritical) { EXPECT_EQ(flip(41).cls, SdcClass::Critical); }

TEST_F(SdcBoundary, VanishingClassIsCritical) {
  ClassMap changed = labels;
  changed(63, 63) = 1;
  const SdcResult r = classify_sdc(clean, logits_for(changed, 3));
  EXPECT_EQ(r.cls, SdcClass::Critical);
  EXPECT_EQ(r.classes_disappeared, std::vector<std::int32_t>{2});
}

TEST_F(SdcBoundary, AppearingClassIsCritical) {
  ClassMap base = labels;
  base(63, 63) = 1;
  ClassMap changed = base;
  changed(0, 0) = 2;
  const SdcResult r = classify_sdc(logits_for(base, 3), logits_for(changed, 3));
  EXPECT_EQ(r.cls, SdcClass::Critical);
  EXPECT_EQ(r.classes_appeared, std::vector<std::int32_t>{2});
}

TEST(Sdc, NaNLogitsAreNeverMasked) {
  TensorF clean(Shape{1, 2, 4, 4});
  clean(0, 0, 0, 0) = 1.0f;
  TensorF faulty = clean;
  faulty(0, 1, 2, 2) = kNaN;
  EXPECT_NE(classify_sdc(clean, faulty).cls, SdcClass::Masked);
}

TEST(Sdc, MatchesOracleOnRandomInstances) {
  RandomStream rng(7);
  for (int i = 0; i < 500; ++i) {
    const Index side = rng.bernoulli(0.5) ? 8 : 16;
    TensorF clean(Shape{1, 3, side, side});
    oracle::fill_uniform(clean, rng);
    TensorF faulty = clean;
    switch (rng.below(4)) {
      case 0:
        break;
      case 1:
        faulty.data() += 0.5f;
        break;
      default: {
        const auto touched = rng.between(1, 6);
        for (std::int64_t k = 0; k < touched; ++k) faulty.data()[static_cast<Index>(rng.below(clean.size()))] *= -3.0f;
      }
    }
    EXPECT_EQ(classify_sdc(clean, faulty).cls, oracle::brute_sdc(clean, faulty));
  }
}

TEST(Sdc, NamesRoundTrip) {
  for (SdcClass c : {SdcClass::Masked, SdcClass::NoImpact, SdcClass::Tolerable, SdcClass::Critical}) {
    EXPECT_EQ(parse_sdc_class(to_string(c)), c);
  }
  EXPECT_THROW(parse_sdc_class("benign"), FormatError);
  EXPECT_THROW(classify_sdc(TensorF(Shape{1, 2, 2, 2}), TensorF(Shape{1, 3, 2, 2})), ShapeError);
}

TEST(Entropy, UniformIsLogC) {
  for (int c : {2, 3, 5, 19}) {
    const ValueMap h = entropy_map(TensorF::constant(Shape{1, c, 2, 2}, 0.3f));
    EXPECT_NEAR(h(1, 1), std::log(static_cast<double>(c)), 1e-9);
  }
}

TEST(Entropy, OneHotIsZero) {
  TensorF t(Shape{1, 3, 1, 1});
  t(0, 1, 0, 0) = 1000.0f;
  EXPECT_EQ(entropy_map(t)(0, 0), 0.0);
}

TEST(Entropy, TwoEqualClassesGiveLogTwo) {
  EXPECT_NEAR(entropy_map(TensorF(Shape{1, 2, 1, 1}))(0, 0), 0.6931471805599453, 1e-12);
}

TEST(Entropy, NonFiniteLogitsGiveNaN) {
  TensorF t(Shape{1, 2, 1, 2});
  t(0, 0, 0, 0) = kNaN;
  t(0, 1, 0, 1) = std::numeric_limits<float>::infinity();
  const ValueMap h = entropy_map(t);
  EXPECT_TRUE(std::isnan(h(0, 0)));
  EXPECT_TRUE(std::isnan(h(0, 1)));
}

TEST(UncertaintyThreshold, ConstantAndTwoLevelExamples) {
  const std::vector<ValueMap> same{ValueMap::Constant(3, 3, 0.4), ValueMap::Constant(2, 2, 0.4)};
  EXPECT_DOUBLE_EQ(uncertainty_threshold(same), 0.4);
  const std::vector<ValueMap> two{ValueMap::Zero(4, 4), ValueMap::Constant(4, 4, std::log(2.0))};
  EXPECT_DOUBLE_EQ(uncertainty_threshold(two), std::log(2.0) / 2.0);
  EXPECT_THROW(uncertainty_threshold({}), ValueError);
}

TEST(PatchConfusion, AllCorrectAndCertain) {
  const ClassMap m = ClassMap::Constant(8, 12, 1);
  const PatchConfusion c = patch_confusion(m, m, ValueMap::Zero(8, 12), 0.1);
  EXPECT_EQ(c.n_ac, 6u);
  EXPECT_EQ(c.total(), 6u);
}

TEST(PatchConfusion, AccuracyThresholdIsStrict) {
  ClassMap gt = ClassMap::Zero(4, 4), pred = ClassMap::Zero(4, 4);
  for (Index i = 0; i < 8; ++i) pred.data()[i] = 1;  // exactly half correct
  EXPECT_EQ(patch_confusion(pred, gt, ValueMap::Zero(4, 4), 0.0).n_ic, 1u);
  pred.data()[7] = 0;  // 9 of 16
  EXPECT_EQ(patch_confusion(pred, gt, ValueMap::Zero(4, 4), 0.0).n_ac, 1u);
}

TEST(PatchConfusion, CertaintyThresholdIsInclusive) {
  const ClassMap m = ClassMap::Zero(4, 4);
  EXPECT_EQ(patch_confusion(m, m, ValueMap::Constant(4, 4, 0.25), 0.25).n_ac, 1u);
  EXPECT_EQ(patch_confusion(m, m, ValueMap::Constant(4, 4, 0.25), 0.2499).n_au, 1u);
}

TEST(PatchConfusion, MatchesOracleOnRandomInstances) {
  RandomStream rng(8);
  for (int i = 0; i < 300; ++i) {
    const ClassMap pred = random_map(rng, 8, 8, 3);
    ClassMap gt = pred;
    for (Index k = 0; k < gt.size(); ++k) {
      if (rng.bernoulli(0.4)) gt.data()[k] = static_cast<std::int32_t>(rng.below(3));
    }
    ValueMap e(8, 8);
    for (Index k = 0; k < e.size(); ++k) e.data()[k] = rng.uniform(0.0, std::log(3.0));
    const double u = rng.uniform(0.3, 0.8);
    EXPECT_EQ(patch_confusion(pred, gt, e, u), oracle::brute_patch_confusion(pred, gt, e, u, 4));
  }
}

TEST(PatchConfusion, IndivisibleDimensionsAreAnError) {
  EXPECT_THROW(patch_confusion(ClassMap::Zero(6, 8), ClassMap::Zero(6, 8), ValueMap::Zero(6, 8), 0.1), ShapeError);
}

TEST(PatchMetrics, WorkedExamples) {
  EXPECT_EQ(*pac({.n_ac = 9, .n_ic = 1}), 0.9);
  EXPECT_EQ(*pui({.n_ic = 1, .n_iu = 3}), 0.75);
  EXPECT_EQ(*pavpu({3, 1, 1, 3}), 0.75);
}

TEST(PatchMetrics, ZeroDenominatorsAreUndefined) {
  EXPECT_FALSE(pac({.n_au = 2, .n_iu = 1}).has_value());
  EXPECT_FALSE(pui({.n_ac = 4}).has_value());
  EXPECT_FALSE(pavpu({}).has_value());
  EXPECT_EQ(format_optional(std::nullopt), "n/a");
  EXPECT_EQ(format_optional(0.75), "0.75");
}

TEST(Prr, OracleOrderingIsExactlyOne) {
  RandomStream rng(9);
  for (int i = 0; i < 50; ++i) {
    const auto n = static_cast<std::size_t>(rng.between(2, 400));
    std::vector<std::uint8_t> correct(n);
    std::vector<double> unc(n);
    for (std::size_t k = 0; k < n; ++k) {
      correct[k] = rng.bernoulli(0.7);
      unc[k] = correct[k] ? rng.uniform(0.0, 1.0) : rng.uniform(2.0, 3.0);
    }
    const auto p = prr(correct, unc);
    if (std::count(correct.begin(), correct.end(), 1) % static_cast<std::ptrdiff_t>(n) == 0) {
      EXPECT_FALSE(p.has_value());
    } else {
      EXPECT_EQ(*p, 1.0);
    }
  }
}

TEST(Prr, ConstantUncertaintyOnShuffledPixelsIsNearZero) {
  RandomStream rng(10);
  const std::size_t n = 10000;
  std::vector<std::uint8_t> correct(n);
  for (std::size_t k = 0; k < n; ++k) correct[k] = k < 8000 ? 1 : 0;
  for (std::size_t k = n - 1; k > 0; --k) std::swap(correct[k], correct[rng.below(k + 1)]);
  const auto p = prr(correct, std::vector<double>(n, 0.5));
  ASSERT_TRUE(p);
  EXPECT_GE(*p, -0.05);
  EXPECT_LE(*p, 0.05);
}

TEST(Prr, AntiOracleIsNegative) {
  std::vector<std::uint8_t> correct{1, 0, 1, 1, 0, 1, 1, 1};
  std::vector<double> unc;
  for (auto c : correct) unc.push_back(c ? 1.0 : 0.0);
  EXPECT_LT(*prr(correct, unc), 0.0);
}

TEST(Prr, NaNUncertaintyIsRejectedFirst) {
  const std::vector<std::uint8_t> correct{1, 1, 0, 1};
  const std::vector<double> unc{0.1, 0.2, std::numeric_limits<double>::quiet_NaN(), 5.0};
  EXPECT_EQ(*prr(correct, unc), 1.0);
}

TEST(Prr, MatchesDefinitionOracle) {
  RandomStream rng(11);
  for (int i = 0; i < 200; ++i) {
    const auto n = static_cast<std::size_t>(rng.between(2, 60));
    std::vector<std::uint8_t> correct(n);
    std::vector<double> unc(n);
    for (std::size_t k = 0; k < n; ++k) {
      correct[k] = rng.bernoulli(0.6);
      unc[k] = static_cast<double>(rng.between(0, 5));  // many ties
      if (rng.bernoulli(0.05)) unc[k] = std::numeric_limits<double>::quiet_NaN();
    }
    const auto p = prr(correct, unc);
    const auto hits = std::count(correct.begin(), correct.end(), 1);
    if (hits == 0 || hits == static_cast<std::ptrdiff_t>(n)) {
      EXPECT_FALSE(p.has_value());
      continue;
    }
    ASSERT_TRUE(p);
    EXPECT_NEAR(*p, brute_prr(correct, unc), 1e-12);
    EXPECT_LE(*p, 1.0);
  }
}

TEST(Prr, LengthMismatchAndTinyInputsAreErrors) {
  const std::vector<std::uint8_t> correct{1, 0};
  const std::vector<double> unc{0.5};
  EXPECT_THROW(prr(correct, unc), ShapeError);
  EXPECT_THROW(prr(std::vector<std::uint8_t>{1}, std::vector<double>{0.1}), ValueError);
}

TEST(UncertaintyAccumulator, PoolsPatchesAcrossImages) {
  RandomStream rng(12);
  UncertaintyAccumulator acc(0.5);
  PatchConfusion expected;
  for (int i = 0; i < 5; ++i) {
    const ClassMap pred = random_map(rng, 8, 8, 3), gt = random_map(rng, 8, 8, 3);
    ValueMap e(8, 8);
    for (Index k = 0; k < e.size(); ++k) e.data()[k] = rng.uniform();
    acc.add(pred, gt, e);
    expected += oracle::brute_patch_confusion(pred, gt, e, 0.5, 4);
  }
  const UncertaintyReport r = acc.finish();
  EXPECT_EQ(r.confusion, expected);
  EXPECT_EQ(r.u_star, 0.5);
  ASSERT_TRUE(r.pavpu);
  EXPECT_EQ(*r.pavpu, static_cast<double>(expected.n_ac + expected.n_iu) / static_cast<double>(expected.total()));
}
