// Copyright 2026 The unigait Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "unigait/alignment.h"

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "unigait/error.h"

namespace unigait {
namespace {

std::vector<EmbodimentSpec> FourRobotSpecs() {
  return {{0, "go2", 44, 12, 3, 50},
          {1, "wheeled", 26, 6, 3, 30},
          {2, "humanoid", 68, 20, 3, 80},
          {3, "biped", 28, 8, 3, 30}};
}

// Independent quantile oracle: explicit order statistics in double.
double OracleQuantile(std::vector<double> v, double q) {
  std::sort(v.begin(), v.end());
  const double h = (v.size() - 1) * q;
  const auto lo = static_cast<std::size_t>(h);
  if (lo + 1 >= v.size()) return v.back();
  return v[lo] + (h - lo) * (v[lo + 1] - v[lo]);
}

TEST(UnifiedDimsTest, FourRobotConfiguration) {
  auto specs = FourRobotSpecs();
  UnifiedDims dims = ComputeUnifiedDims(specs);
  EXPECT_EQ(dims.obs_dim, 68);
  EXPECT_EQ(dims.action_dim, 20);
}

TEST(UnifiedDimsTest, SingleAndToy) {
  std::vector<EmbodimentSpec> one = {{0, "a", 5, 2, 3, 1}};
  EXPECT_EQ(ComputeUnifiedDims(one), (UnifiedDims{5, 2}));
  std::vector<EmbodimentSpec> toy = {
      {0, "a", 6, 2, 3, 1}, {1, "b", 8, 3, 3, 1}, {2, "c", 17, 6, 3, 1}};
  EXPECT_EQ(ComputeUnifiedDims(toy).action_dim, 6);
}

TEST(UnifiedDimsTest, Errors) {
  EXPECT_THROW(ComputeUnifiedDims({}), InputError);
  std::vector<EmbodimentSpec> bad = {{0, "a", 5, 2, 3, 1}, {1, "b", 5, 2, 4, 1}};
  EXPECT_THROW(ComputeUnifiedDims(bad), InputError);
}

TEST(PadTest, Examples) {
  EXPECT_EQ(Pad(std::vector<float>{1, 2}, 4), (std::vector<float>{1, 2, 0, 0}));
  EXPECT_EQ(Pad(std::vector<float>{1, 2, 3}, 3), (std::vector<float>{1, 2, 3}));
  EXPECT_EQ(Pad(std::vector<float>{}, 3), (std::vector<float>{0, 0, 0}));
  EXPECT_THROW(Pad(std::vector<float>{1, 2, 3}, 2), InputError);
}

TEST(PadTest, RoundTripForEveryEmbodiment) {
  std::mt19937_64 rng(3);
  std::normal_distribution<float> n;
  for (const auto& s : FourRobotSpecs()) {
    std::vector<float> v(s.obs_dim);
    for (auto& x : v) x = n(rng);
    EXPECT_EQ(Unpad(Pad(v, 68), s.obs_dim), v);
  }
}

TEST(MaskTest, Examples) {
  ValidityMask quad = ValidityMask::For({0, "go2", 44, 12, 3, 1}, 20);
  EXPECT_EQ(quad.valid_count(), 12);
  for (int i = 0; i < 20; ++i) EXPECT_EQ(quad.values()[i], i < 12 ? 1.0f : 0.0f);
  ValidityMask full(20, 20);
  for (float v : full.values()) EXPECT_EQ(v, 1.0f);
  ValidityMask one(1, 3);
  EXPECT_EQ(std::vector<float>(one.values().begin(), one.values().end()),
            (std::vector<float>{1, 0, 0}));
  EXPECT_THROW(ValidityMask(21, 20), InputError);
}

UnifiedDataset SingleDimDataset(const std::vector<float>& values) {
  UnifiedDataset ds;
  ds.specs = {{0, "a", 1, 1, 1, 1}};
  ds.dims = {1, 1};
  ds.obs_horizon = 1;
  ds.pred_horizon = 1;
  ds.command_dim = 1;
  for (float v : values) ds.samples.push_back({{v}, {v}, {v}, 0});
  return ds;
}

TEST(NormStatsTest, LinearRamp) {
  std::vector<float> ramp;
  for (int i = 0; i <= 100; ++i) ramp.push_back(static_cast<float>(i));
  NormStats s = FitNormStats(SingleDimDataset(ramp));
  EXPECT_FLOAT_EQ(s.obs.q05[0], 5.0f);
  EXPECT_FLOAT_EQ(s.obs.q95[0], 95.0f);
  EXPECT_FLOAT_EQ(s.action.q05[0], 5.0f);
  EXPECT_FLOAT_EQ(s.command.q95[0], 95.0f);
}

TEST(NormStatsTest, ConstantDimensionIsFlagged) {
  NormStats s = FitNormStats(SingleDimDataset(std::vector<float>(30, 7.0f)));
  EXPECT_TRUE(s.obs.constant(0));
  EXPECT_EQ(Normalize(std::vector<float>{7.0f}, s.obs)[0], 0.0f);
  EXPECT_EQ(Normalize(std::vector<float>{123.0f}, s.obs)[0], 0.0f);
  EXPECT_EQ(Denormalize(std::vector<float>{0.3f}, s.obs)[0], 7.0f);
}

TEST(NormStatsTest, SymmetricData) {
  std::vector<float> v;
  for (int i = -50; i <= 50; ++i) v.push_back(static_cast<float>(i) * 0.25f);
  NormStats s = FitNormStats(SingleDimDataset(v));
  EXPECT_FLOAT_EQ(s.obs.q05[0], -s.obs.q95[0]);
}

TEST(NormStatsTest, TooFewSamples) {
  EXPECT_THROW(FitNormStats(SingleDimDataset(std::vector<float>(19, 1.0f))),
               InputError);
  EXPECT_NO_THROW(FitNormStats(SingleDimDataset(std::vector<float>(20, 1.0f))));
}

// Two embodiments with very different ranges sharing unified dims. Each native
// dim must match the brute-force oracle merged by min/max, and padded action
// entries must not leak zeros into the fit.
TEST(NormStatsTest, MatchesBruteForceOracle) {
  std::mt19937_64 rng(11);
  UnifiedDataset ds;
  ds.specs = {{0, "small", 2, 1, 3, 1}, {1, "large", 3, 2, 3, 1}};
  ds.dims = ComputeUnifiedDims(ds.specs);
  ds.obs_horizon = 2;
  ds.pred_horizon = 2;
  std::uniform_int_distribution<int> count(20, 2500);
  const int counts[2] = {count(rng), count(rng)};
  const float scales[2] = {0.1f, 50.0f};
  const float offsets[2] = {3.0f, -10.0f};
  for (int e = 0; e < 2; ++e) {
    std::normal_distribution<float> n(offsets[e], scales[e]);
    const EmbodimentSpec& es = ds.specs[e];
    for (int i = 0; i < counts[e]; ++i) {
      UnifiedSample s;
      s.embodiment_id = e;
      s.obs_window.assign(ds.obs_horizon * ds.dims.obs_dim, 0.0f);
      s.action_chunk.assign(ds.pred_horizon * ds.dims.action_dim, 0.0f);
      for (int t = 0; t < ds.obs_horizon; ++t)
        for (int d = 0; d < es.obs_dim; ++d)
          s.obs_window[t * ds.dims.obs_dim + d] = n(rng);
      for (int t = 0; t < ds.pred_horizon; ++t)
        for (int d = 0; d < es.action_dim; ++d)
          s.action_chunk[t * ds.dims.action_dim + d] = n(rng) + 20.0f;
      s.command = {n(rng), n(rng), n(rng)};
      ds.samples.push_back(std::move(s));
    }
  }
  ds.Validate();
  NormStats stats = FitNormStats(ds);

  auto oracle = [&](bool action, int d) {
    double lo = 1e300, hi = -1e300;
    for (int e = 0; e < 2; ++e) {
      const EmbodimentSpec& es = ds.specs[e];
      if (d >= (action ? es.action_dim : es.obs_dim)) continue;
      std::vector<double> col;
      for (const auto& s : ds.samples) {
        if (s.embodiment_id != e) continue;
        const int h = action ? ds.pred_horizon : ds.obs_horizon;
        const int w = action ? ds.dims.action_dim : ds.dims.obs_dim;
        for (int t = 0; t < h; ++t)
          col.push_back((action ? s.action_chunk : s.obs_window)[t * w + d]);
      }
      lo = std::min(lo, OracleQuantile(col, 0.05));
      hi = std::max(hi, OracleQuantile(col, 0.95));
    }
    return std::pair(lo, hi);
  };
  for (int d = 0; d < ds.dims.obs_dim; ++d) {
    auto [lo, hi] = oracle(false, d);
    EXPECT_NEAR(stats.obs.q05[d], lo, 1e-6 * std::max(1.0, std::abs(lo)));
    EXPECT_NEAR(stats.obs.q95[d], hi, 1e-6 * std::max(1.0, std::abs(hi)));
  }
  for (int d = 0; d < ds.dims.action_dim; ++d) {
    auto [lo, hi] = oracle(true, d);
    EXPECT_NEAR(stats.action.q05[d], lo, 1e-6 * std::max(1.0, std::abs(lo)));
    EXPECT_NEAR(stats.action.q95[d], hi, 1e-6 * std::max(1.0, std::abs(hi)));
  }
  // The padded action dim of "small" is zero; including it would drag q05 of
  // dim 1 towards 0. Only "large" owns that dim so q05 stays near 20 - 82.
  EXPECT_LT(stats.action.q05[1], -50.0f);
}

QuantileRange Range(std::vector<float> lo, std::vector<float> hi) {
  return QuantileRange{std::move(lo), std::move(hi)};
}

TEST(NormalizeTest, Endpoints) {
  QuantileRange r = Range({5.0f, -1.0f}, {95.0f, 3.0f});
  auto lo = Normalize(std::vector<float>{5.0f, -1.0f}, r);
  auto hi = Normalize(std::vector<float>{95.0f, 3.0f}, r);
  auto mid = Normalize(std::vector<float>{50.0f, 1.0f}, r);
  EXPECT_FLOAT_EQ(lo[0], -1.0f);
  EXPECT_FLOAT_EQ(lo[1], -1.0f);
  EXPECT_FLOAT_EQ(hi[0], 1.0f);
  EXPECT_FLOAT_EQ(hi[1], 1.0f);
  EXPECT_FLOAT_EQ(mid[0], 0.0f);
  EXPECT_FLOAT_EQ(mid[1], 0.0f);
}

TEST(NormalizeTest, OutOfRangeIsNotClipped) {
  QuantileRange r = Range({5.0f}, {95.0f});
  EXPECT_NEAR(Normalize(std::vector<float>{100.0f}, r)[0], 1.1111, 1e-4);
}

TEST(NormalizeTest, DimensionMismatch) {
  QuantileRange r = Range({0.0f, 0.0f}, {1.0f, 1.0f});
  EXPECT_THROW(Normalize(std::vector<float>{1.0f}, r), InputError);
  EXPECT_THROW(Denormalize(std::vector<float>{1.0f, 2.0f, 3.0f}, r), InputError);
}

TEST(NormalizeTest, RoundTripProperty) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<float> u(-10.0f, 10.0f);
  for (int trial = 0; trial < 200; ++trial) {
    // float32 rounding is amplified by offset / width, so keep ranges
    // at least one unit wide.
    float a = u(rng), b = u(rng);
    if (std::abs(a - b) < 1.0f) continue;
    QuantileRange r = Range({std::min(a, b)}, {std::max(a, b)});
    const float x = u(rng);
    EXPECT_NEAR(Denormalize(Normalize(std::vector<float>{x}, r), r)[0], x,
                1e-5 * std::max(1.0f, std::abs(x)));
    const float z = x * 0.15f;
    EXPECT_NEAR(Normalize(Denormalize(std::vector<float>{z}, r), r)[0], z, 1e-5);
  }
}

TEST(ConditionTest, PaperConfigurationLength) {
  NormStats s;
  s.obs = Range(std::vector<float>(68, -1.0f), std::vector<float>(68, 1.0f));
  s.command = Range(std::vector<float>(3, -1.0f), std::vector<float>(3, 1.0f));
  auto c = BuildCondition(std::vector<float>(680, 0.0f),
                          std::vector<float>(3, 0.0f), s);
  EXPECT_EQ(c.size(), 683u);
}

TEST(ConditionTest, ToyLengthAndZeroInput) {
  NormStats s;
  std::vector<float> lo(12), hi(12);
  for (int d = 0; d < 12; ++d) {
    lo[d] = 0.5f * d - 2.0f;
    hi[d] = lo[d] + 1.0f + d;
  }
  s.obs = Range(lo, hi);
  s.command = Range({-1.0f, 0.0f, 2.0f}, {1.0f, 4.0f, 3.0f});
  auto c = BuildCondition(std::vector<float>(120, 0.0f),
                          std::vector<float>(3, 0.0f), s);
  ASSERT_EQ(c.size(), 123u);
  for (int t = 0; t < 10; ++t) {
    for (int d = 0; d < 12; ++d) {
      const double expect = -2.0 * lo[d] / (hi[d] - lo[d]) - 1.0;
      EXPECT_NEAR(c[t * 12 + d], expect, 1e-6);
    }
  }
  EXPECT_NEAR(c[120], 0.0, 1e-6);
  EXPECT_NEAR(c[121], -1.0, 1e-6);
  EXPECT_NEAR(c[122], -5.0, 1e-6);
  EXPECT_THROW(BuildCondition(std::vector<float>(120, 0.0f),
                              std::vector<float>(2, 0.0f), s),
               InputError);
}

TEST(ConditionTest, NormalizedActionKeepsPaddingZero) {
  NormStats s;
  s.action = Range({1.0f, 1.0f, 1.0f}, {2.0f, 2.0f, 2.0f});
  ValidityMask m(2, 3);
  auto n = NormalizeActionChunk(std::vector<float>{1, 2, 0, 1.5f, 1.5f, 0}, m, s);
  EXPECT_EQ(n, (std::vector<float>{-1, 1, 0, 0, 0, 0}));
}

TEST(HistoryTest, BootstrapsByRepeatingFirstObservation) {
  ObservationHistory h(3, 2);
  h.Reset(std::vector<float>{1, 2});
  EXPECT_EQ(h.Window(), (std::vector<float>{1, 2, 1, 2, 1, 2}));
  h.Push(std::vector<float>{3, 4});
  EXPECT_EQ(h.Window(), (std::vector<float>{1, 2, 1, 2, 3, 4}));
  h.Push(std::vector<float>{5, 6});
  h.Push(std::vector<float>{7, 8});
  EXPECT_EQ(h.Window(), (std::vector<float>{3, 4, 5, 6, 7, 8}));
  EXPECT_THROW(h.Push(std::vector<float>{1}), InputError);
}

TEST(DatasetTest, ValidateRejectsNonZeroPadding) {
  UnifiedDataset ds;
  ds.specs = {{0, "a", 1, 1, 3, 1}, {1, "b", 2, 2, 3, 1}};
  ds.dims = {2, 2};
  ds.obs_horizon = 1;
  ds.pred_horizon = 1;
  ds.samples.push_back({{1, 0}, {1, 0}, {0, 0, 0}, 0});
  EXPECT_NO_THROW(ds.Validate());
  ds.samples.push_back({{1, 0}, {1, 0.5f}, {0, 0, 0}, 0});
  EXPECT_THROW(ds.Validate(), InputError);
  ds.samples.back() = {{1, 0}, {1, 0}, {0, 0, 0}, 7};
  EXPECT_THROW(ds.Validate(), InputError);
}

TEST(JsonTest, NormStatsRoundTripIsExact) {
  NormStats s;
  s.obs = Range({0.1f, -3.3f}, {0.7f, 1e-7f});
  s.action = Range({1.0f / 3.0f}, {2.0f});
  s.command = Range({-1.0f, 0.0f, 0.0f}, {1.0f, 0.0f, 5.0f});
  nlohmann::json j = s;
  NormStats back = nlohmann::json::parse(j.dump()).get<NormStats>();
  EXPECT_EQ(back, s);
}

}  // namespace
}  // namespace unigait
