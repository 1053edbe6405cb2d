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

#include <cmath>
#include <limits>
#include <vector>

#include "fseg/hardening.hpp"
#include "oracles.hpp"

using namespace fseg;

namespace {

constexpr float kNaN = std::numeric_limits<float>::quiet_NaN();
constexpr float kInf = std::numeric_limits<float>::infinity();

TensorF row(std::initializer_list<float> values) {
  TensorF t(Shape{1, 1, 1, static_cast<Index>(values.size())});
  Index i = 0;
  for (float v : values) t.data()[i++] = v;
  return t;
}

std::vector<TensorF> calibration_batches(std::uint64_t seed, int count) {
  RandomStream rng(seed);
  std::vector<TensorF> out;
  for (int i = 0; i < count; ++i) {
    TensorF t(Shape{1, 2, 8, 8});
    oracle::fill_uniform(t, rng, 0.5, 1.5);
    out.push_back(std::move(t));
  }
  return out;
}

LayerAmmsStats calibrate(const std::vector<TensorF>& batches) {
  std::vector<BatchStatistics> stats;
  for (const auto& b : batches) stats.push_back(batch_statistics(b));
  return summarize_batches(stats);
}

}  // namespace

TEST(Activation, Relu6ClampsAtSix) {
  const TensorF y = activate(row({-3.0f, 2.5f, 7.0f}), HardeningState{ActivationKind::ReLU6, Mode::Eval});
  EXPECT_EQ(y.data()[0], 0.0f);
  EXPECT_EQ(y.data()[1], 2.5f);
  EXPECT_EQ(y.data()[2], 6.0f);
}

TEST(Activation, ReluMaxEvalClipsAboveMaxAndNonFinite) {
  const HardeningState state{ActivationKind::ReLUMax, Mode::Eval, 5.0f};
  const TensorF y = activate(row({4.0f, 7.0f, kNaN, kInf, -kInf, 5.0f}), state);
  EXPECT_EQ(y.data()[0], 4.0f);
  EXPECT_EQ(y.data()[1], 0.0f);
  EXPECT_EQ(y.data()[2], 0.0f);
  EXPECT_EQ(y.data()[3], 0.0f);
  EXPECT_EQ(y.data()[4], 0.0f);
  EXPECT_EQ(y.data()[5], 5.0f) << "equality with the running max survives";
}

TEST(Activation, ReluMaxClipZeroesValuesCorruptedBelowZero) {
  TensorF y = row({-3.0f, -0.5f, 2.0f, 7.0f, kNaN, -kInf, 0.0f});
  relumax_clip(y, 5.0f);
  const std::vector<float> expected{0.0f, 0.0f, 2.0f, 0.0f, 0.0f, 0.0f, 0.0f};
  for (std::size_t i = 0; i < expected.size(); ++i) EXPECT_EQ(y.data()[static_cast<Index>(i)], expected[i]) << i;
}

TEST(Activation, ReluMaxTrainTracksRunningMaximum) {
  HardeningState state{ActivationKind::ReLUMax, Mode::Train};
  for (float m : {1.0f, 5.0f, 3.0f}) activate(row({-1.0f, m, m / 2}), state);
  EXPECT_EQ(state.running_max, 5.0f);
}

TEST(Activation, ReluMaxRunningMaxIsMonotone) {
  RandomStream rng(4);
  HardeningState state{ActivationKind::ReLUMax, Mode::Train};
  float previous = state.running_max;
  for (int i = 0; i < 50; ++i) {
    TensorF t(Shape{1, 1, 4, 4});
    oracle::fill_uniform(t, rng, -3.0, 3.0);
    activate(t, state);
    EXPECT_GE(state.running_max, previous);
    previous = state.running_max;
  }
}

TEST(Activation, EvalNeverModifiesRunningMax) {
  HardeningState state{ActivationKind::ReLUMax, Mode::Eval, 2.0f};
  activate(row({100.0f}), state);
  EXPECT_EQ(state.running_max, 2.0f);
}

TEST(Activation, UncalibratedReluMaxFails) {
  try {
    activate(row({1.0f}), HardeningState{ActivationKind::ReLUMax, Mode::Eval});
    FAIL() << "expected StateError";
  } catch (const StateError& e) {
    EXPECT_STREQ(e.what(), "uncalibrated ReLUMax");
  }
}

TEST(Activation, EvalIsIdempotentAndInRange) {
  RandomStream rng(6);
  TensorF x(Shape{2, 3, 5, 5});
  oracle::fill_uniform(x, rng, -10.0, 10.0);
  x.data()[3] = kNaN;
  x.data()[7] = kInf;
  for (const HardeningState state : {HardeningState{ActivationKind::ReLU, Mode::Eval},
                                     HardeningState{ActivationKind::ReLU6, Mode::Eval},
                                     HardeningState{ActivationKind::ReLUMax, Mode::Eval, 4.0f}}) {
    const TensorF once = activate(x, state);
    const TensorF twice = activate(once, state);
    for (Index i = 0; i < once.size(); ++i) {
      if (std::isnan(once.data()[i])) {
        EXPECT_TRUE(std::isnan(twice.data()[i]));
      } else {
        EXPECT_EQ(once.data()[i], twice.data()[i]);
      }
    }
    if (state.kind != ActivationKind::ReLU) {
      EXPECT_TRUE(once.data().isFinite().all());
      EXPECT_GE(once.data().minCoeff(), 0.0f);
    }
    if (state.kind == ActivationKind::ReLU6) EXPECT_LE(once.data().maxCoeff(), 6.0f);
    if (state.kind == ActivationKind::ReLUMax) EXPECT_LE(once.data().maxCoeff(), 4.0f);
  }
}

TEST(Activation, ReluMaxEqualsReluOnTrainingInputs) {
  RandomStream rng(7);
  std::vector<TensorF> inputs;
  HardeningState state{ActivationKind::ReLUMax, Mode::Train};
  for (int i = 0; i < 10; ++i) {
    TensorF t(Shape{1, 4, 6, 6});
    oracle::fill_uniform(t, rng, -5.0, 5.0);
    activate(t, state);
    inputs.push_back(std::move(t));
  }
  state.mode = Mode::Eval;
  for (const auto& t : inputs) {
    const TensorF a = activate(t, state);
    const TensorF b = rectify(t, ActivationKind::ReLU);
    EXPECT_EQ(std::memcmp(a.data().data(), b.data().data(), sizeof(float) * a.size()), 0);
  }
}

TEST(Activation, KindNamesRoundTrip) {
  for (ActivationKind k : {ActivationKind::ReLU, ActivationKind::ReLU6, ActivationKind::ReLUMax}) {
    EXPECT_EQ(parse_activation_kind(to_string(k)), k);
  }
  EXPECT_THROW(parse_activation_kind("gelu"), ValueError);
}

TEST(Amms, ConstantActivationsGiveDegenerateIntervals) {
  const std::vector<BatchStatistics> batches(3, batch_statistics(TensorF::constant(Shape{1, 2, 4, 4}, 0.7f)));
  const LayerAmmsStats s = summarize_batches(batches);
  for (const StatRange* r : {&s.average, &s.minimum, &s.maximum}) {
    EXPECT_EQ(r->low, static_cast<double>(0.7f));
    EXPECT_EQ(r->high, static_cast<double>(0.7f));
    EXPECT_EQ(r->sigma, 0.0);
  }
  EXPECT_EQ(s.stddev.low, 0.0);
  EXPECT_EQ(s.stddev.high, 0.0);
  EXPECT_EQ(s.stddev.sigma, 0.0);
}

TEST(Amms, MaximumIntervalUsesPopulationStd) {
  std::vector<BatchStatistics> batches;
  for (float m : {10.0f, 12.0f, 14.0f}) batches.push_back(batch_statistics(row({0.0f, m})));
  const LayerAmmsStats s = summarize_batches(batches);
  const double sigma = std::sqrt(8.0 / 3.0);
  EXPECT_NEAR(s.maximum.sigma, 1.633, 5e-4);
  EXPECT_NEAR(s.maximum.lower(), 10.0 - sigma, 1e-12);
  EXPECT_NEAR(s.maximum.upper(), 14.0 + sigma, 1e-12);
}

TEST(Amms, FewerThanTwoBatchesIsAnError) {
  const std::vector<BatchStatistics> one(1, batch_statistics(row({1.0f})));
  EXPECT_THROW(summarize_batches(one), ValueError);
  EXPECT_THROW(summarize_batches({}), ValueError);
}

TEST(Amms, CalibrationIsDeterministic) {
  const LayerAmmsStats a = calibrate(calibration_batches(1, 6));
  const LayerAmmsStats b = calibrate(calibration_batches(1, 6));
  EXPECT_EQ(std::memcmp(&a, &b, sizeof(a)), 0);
}

TEST(Amms, IntervalsAreOrdered) {
  const LayerAmmsStats s = calibrate(calibration_batches(2, 6));
  for (const StatRange* r : {&s.average, &s.minimum, &s.maximum, &s.stddev}) {
    EXPECT_LE(r->low, r->high);
    EXPECT_GE(r->sigma, 0.0);
  }
}

TEST(Amms, NeverFiresOnCalibrationBatches) {
  const auto batches = calibration_batches(3, 8);
  const LayerAmmsStats stats = calibrate(batches);
  for (auto b : batches) {
    const TensorF before = b;
    EXPECT_FALSE(amms_apply(b, stats).detected);
    EXPECT_TRUE((b.data() == before.data()).all());
  }
}

TEST(Amms, HugeNegativeColumnIsDetectedAndZeroed) {
  const auto batches = calibration_batches(4, 8);
  const LayerAmmsStats stats = calibrate(batches);
  TensorF x = batches[0];
  const Index col = 3;
  for (Index c = 0; c < 2; ++c)
    for (Index y = 0; y < 8; ++y) x(0, c, y, col) *= -1e6f;

  // Both statistics must leave their accepted intervals for the construction to be meaningful.
  const BatchStatistics s = batch_statistics(x);
  ASSERT_FALSE(stats.average.accepts(s.average));
  ASSERT_FALSE(stats.minimum.accepts(s.minimum));

  const AmmsOutcome outcome = amms_apply(x, stats);
  EXPECT_TRUE(outcome.detected);
  EXPECT_EQ(outcome.masked, 16);
  for (Index c = 0; c < 2; ++c)
    for (Index y = 0; y < 8; ++y)
      for (Index xx = 0; xx < 8; ++xx) {
        if (xx == col) {
          EXPECT_EQ(x(0, c, y, xx), 0.0f);
        } else {
          EXPECT_EQ(x(0, c, y, xx), batches[0](0, c, y, xx));
        }
      }
}

TEST(Amms, UnitMagnitudeFaultIsNotDetected) {
  const auto batches = calibration_batches(5, 8);
  const LayerAmmsStats stats = calibrate(batches);
  TensorF x = batches[2];
  for (Index y = 0; y < 8; ++y) x(0, 1, y, 2) *= 1.0f;
  EXPECT_FALSE(amms_apply(x, stats).detected);
}

TEST(Amms, NonFiniteValuesAreDetectedAndMasked) {
  const auto batches = calibration_batches(6, 8);
  const LayerAmmsStats stats = calibrate(batches);
  TensorF x = batches[1];
  x(0, 0, 2, 2) = kNaN;
  x(0, 1, 5, 5) = kInf;
  const AmmsOutcome outcome = amms_apply(x, stats);
  EXPECT_TRUE(outcome.detected);
  EXPECT_TRUE(x.data().isFinite().all());
  EXPECT_EQ(x(0, 0, 2, 2), 0.0f);
  EXPECT_EQ(x(0, 1, 5, 5), 0.0f);
}

TEST(Amms, AverageAloneOutOfRangeIsNotDetected) {
  const auto batches = calibration_batches(7, 8);
  const LayerAmmsStats stats = calibrate(batches);
  TensorF x = batches[0];
  for (Index y = 0; y < 8; ++y) x(0, 0, y, 0) *= 1e4f;
  const BatchStatistics s = batch_statistics(x);
  ASSERT_FALSE(stats.average.accepts(s.average));
  ASSERT_TRUE(stats.minimum.accepts(s.minimum));
  const TensorF before = x;
  EXPECT_FALSE(amms_apply(x, stats).detected);
  EXPECT_TRUE((x.data() == before.data()).all());
}
