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

#include "unigait/envsim.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "unigait/error.h"

namespace unigait {
namespace {

using V = std::vector<double>;

ToyEnvConfig QuietPointMass() {
  ToyEnvConfig c = ToyEnvConfig::Default(DynamicsKind::kPointMass2, 0);
  c.gait_force = 0.0;
  c.reset_noise = 0.0;
  return c;
}

double PositiveCoefficientSum(const ToyEnvConfig& c) {
  double s = 0.0;
  for (const auto& [name, v] : c.coefficients) s += std::max(v, 0.0);
  return s;
}

TEST(KindTest, NamesRoundTrip) {
  for (const auto& c : DefaultEmbodiments()) {
    EXPECT_EQ(KindFromName(KindName(c.kind)), c.kind);
  }
  EXPECT_THROW(KindFromName("hexapod"), InputError);
}

TEST(EnvTest, SpecDims) {
  const int obs[] = {6, 7, 17, 7};
  const int act[] = {2, 3, 6, 3};
  auto envs = DefaultEmbodiments();
  std::vector<EmbodimentSpec> specs;
  for (int i = 0; i < 4; ++i) {
    ToyEnv env(envs[i]);
    EXPECT_EQ(env.spec().id, i);
    EXPECT_EQ(env.spec().obs_dim, obs[i]);
    EXPECT_EQ(env.spec().action_dim, act[i]);
    EXPECT_EQ(env.spec().command_dim, 3);
    EXPECT_EQ(static_cast<int>(env.Reset(1).size()), obs[i]);
    EXPECT_EQ(static_cast<int>(env.PrivilegedState().size()),
              env.spec().privileged_dim);
    specs.push_back(env.spec());
  }
  EXPECT_EQ(ComputeUnifiedDims(specs), (UnifiedDims{17, 6}));
}

TEST(EnvTest, ResetDeterministicAndNominal) {
  for (const auto& c : DefaultEmbodiments()) {
    ToyEnv a(c), b(c);
    EXPECT_EQ(a.Reset(42), b.Reset(42));
    EXPECT_EQ(a.command(), b.command());
    EXPECT_NE(a.Reset(43), b.Reset(42));
  }
  ToyEnvConfig c = ToyEnvConfig::Default(DynamicsKind::kUnicycle3, 1);
  c.reset_noise = 0.0;
  ToyEnv env(c);
  auto obs = env.Reset(5, Command{0.3, 0.0, 0.1});
  // u, w, h - h0, hdot, previous action (3).
  std::vector<float> nominal = {0, 0, static_cast<float>(c.height_offset), 0, 0, 0, 0};
  EXPECT_EQ(obs, nominal);
}

TEST(EnvTest, CommandWithinRanges) {
  for (const auto& c : DefaultEmbodiments()) {
    ToyEnv env(c);
    for (int s = 0; s < 50; ++s) {
      env.Reset(s);
      EXPECT_GE(env.command().vx, c.vx_range[0]);
      EXPECT_LE(env.command().vx, c.vx_range[1]);
      EXPECT_GE(env.command().vy, c.vy_range[0]);
      EXPECT_LE(env.command().vy, c.vy_range[1]);
      EXPECT_GE(env.command().wz, c.wz_range[0]);
      EXPECT_LE(env.command().wz, c.wz_range[1]);
    }
  }
}

TEST(EnvTest, ZeroActionDecaysGeometrically) {
  ToyEnvConfig c = QuietPointMass();
  ToyEnv env(c);
  env.Reset(0, Command{});
  env.set_state({0.0, 0.0, 1.0, -0.5});
  const float zero[2] = {0, 0};
  const double factor = 1.0 - c.damping * c.dt;
  for (int n = 1; n <= 50; ++n) {
    env.Step(zero);
    EXPECT_NEAR(env.state()[2], std::pow(factor, n), 1e-12);
    EXPECT_NEAR(env.state()[3], -0.5 * std::pow(factor, n), 1e-12);
  }
}

TEST(EnvTest, ConstantForceIntegrates) {
  ToyEnvConfig c = QuietPointMass();
  c.damping = 0.0;
  ToyEnv env(c);
  env.Reset(0, Command{});
  const float force[2] = {0.75f, -2.0f};
  for (int n = 1; n <= 100; ++n) {
    env.Step(force);
    EXPECT_NEAR(env.state()[2], n * 0.75 * c.dt, 1e-12);
    EXPECT_NEAR(env.state()[3], n * -2.0 * c.dt, 1e-12);
  }
}

TEST(EnvTest, HorizonAndDivergence) {
  ToyEnv env(QuietPointMass());
  env.Reset(0, Command{});
  const float zero[2] = {0, 0};
  for (int n = 1; n < 1000; ++n) ASSERT_FALSE(env.Step(zero).done);
  StepResult last = env.Step(zero);
  EXPECT_TRUE(last.done);
  EXPECT_FALSE(last.diverged);

  env.Reset(0, Command{});
  env.set_state({0.0, 0.0, 99.0, 0.0});
  const float push[2] = {1000.0f, 0.0f};
  StepResult r = env.Step(push);
  EXPECT_TRUE(r.done);
  EXPECT_TRUE(r.diverged);
}

TEST(EnvTest, RejectsBadActions) {
  ToyEnv env(QuietPointMass());
  env.Reset(0);
  const float nan[2] = {std::numeric_limits<float>::quiet_NaN(), 0.0f};
  EXPECT_THROW(env.Step(nan), NumericError);
  const float three[3] = {0, 0, 0};
  EXPECT_THROW(env.Step(three), InputError);
}

TEST(EnvTest, TrajectoriesBitExact) {
  for (const auto& c : DefaultEmbodiments()) {
    std::vector<std::vector<float>> first, second;
    for (auto* out : {&first, &second}) {
      ToyEnv env(c);
      env.Reset(9);
      std::mt19937_64 rng(3);
      std::normal_distribution<float> n(0.0f, 1.0f);
      for (int t = 0; t < 200; ++t) {
        std::vector<float> a(env.spec().action_dim);
        for (float& v : a) v = n(rng);
        StepResult r = env.Step(a);
        out->push_back(r.obs);
        out->push_back({static_cast<float>(r.reward.total)});
      }
    }
    EXPECT_EQ(first, second) << c.name;
  }
}

TEST(EnvTest, GaitSignalOnlyOnLeggedKinds) {
  for (const auto& c : DefaultEmbodiments()) {
    ToyEnv env(c);
    auto obs = env.Reset(0);
    for (int t = 0; t < 10; ++t) obs = env.Step(env.ExpertAction()).obs;
    double phase = 2.0 * M_PI * env.phase();
    if (c.kind == DynamicsKind::kUnicycle3) {
      EXPECT_EQ(obs.size(), 7u);
      continue;
    }
    EXPECT_NEAR(obs[obs.size() - 2], std::sin(phase), 1e-6);
    EXPECT_NEAR(obs[obs.size() - 1], std::cos(phase), 1e-6);
    EXPECT_NEAR(env.phase(), 10 * 0.02 / 0.8, 1e-12);
  }
}

TEST(EnvTest, PhaseWrapsWithinPeriod) {
  ToyEnv env(QuietPointMass());
  env.Reset(0, Command{});
  const float zero[2] = {0, 0};
  for (int t = 0; t < 400; ++t) {
    EXPECT_GE(env.phase(), 0.0);
    EXPECT_LT(env.phase(), 1.0);
    env.Step(zero);
  }
  EXPECT_EQ(env.command(), Command{});
}

// Reward terms, each against a hand-computed value.

TEST(RewardTermTest, TrackingLinearVelocity) {
  V des = {1.0, 0.0}, v = {1.0, 0.0}, off = {0.7, 0.4};
  EXPECT_DOUBLE_EQ(reward::TrackingLinearVelocity(des, v, 4.0), 1.0);
  // |(0.3, -0.4)| = 0.5.
  EXPECT_NEAR(reward::TrackingLinearVelocity(des, off, 4.0), std::exp(-2.0), 1e-15);
}

TEST(RewardTermTest, TrackingAngularVelocity) {
  EXPECT_DOUBLE_EQ(reward::TrackingAngularVelocity(0.5, 0.5, 4.0), 1.0);
  EXPECT_NEAR(reward::TrackingAngularVelocity(0.5, 0.25, 4.0), std::exp(-1.0), 1e-15);
}

TEST(RewardTermTest, BaseHeight) {
  EXPECT_DOUBLE_EQ(reward::BaseHeight(0.3, 0.3), 1.0);
  EXPECT_NEAR(reward::BaseHeight(0.3, 0.31), std::exp(-1.0), 1e-12);
}

TEST(RewardTermTest, Orientation) {
  V des = {0.0, 0.0}, th = {0.06, 0.08};
  EXPECT_NEAR(reward::Orientation(des, th), std::exp(-1.0), 1e-12);
  EXPECT_DOUBLE_EQ(reward::Orientation({}, {}), 1.0);
}

TEST(RewardTermTest, TorqueVelocityAcceleration) {
  V tau = {1.0, -2.0, 3.0}, qd = {0.5, 0.5, -1.0};
  EXPECT_DOUBLE_EQ(reward::JointTorque(tau), 14.0);
  // 0.5 - 1.0 - 3.0 = -3.5.
  EXPECT_DOUBLE_EQ(reward::Power(tau, qd), 3.5);
  EXPECT_DOUBLE_EQ(reward::JointVelocity(qd), 1.5);
  EXPECT_DOUBLE_EQ(reward::JointAcceleration(V{3.0, 4.0}), 25.0);
}

TEST(RewardTermTest, BaseMotion) {
  EXPECT_DOUBLE_EQ(reward::LinearVelocityZ(-0.3), 0.09);
  EXPECT_DOUBLE_EQ(reward::AngularVelocityXy(V{0.1, 0.2}), 0.05);
}

TEST(RewardTermTest, ActionSmoothnessAndRate) {
  V a = {0.3, -0.1};
  EXPECT_DOUBLE_EQ(reward::ActionSmoothness(a, a, a), 0.0);
  EXPECT_DOUBLE_EQ(reward::ActionRate(a, a), 0.0);
  V next = {1.0, 0.0}, cur = {0.5, 1.0}, prev = {0.0, 0.0};
  // next + prev - 2 cur = (0, -2).
  EXPECT_DOUBLE_EQ(reward::ActionSmoothness(next, cur, prev), 4.0);
  // next - cur = (0.5, -1).
  EXPECT_DOUBLE_EQ(reward::ActionRate(next, cur), 1.25);
  // Zero history at the episode start.
  EXPECT_DOUBLE_EQ(reward::ActionSmoothness(next, {}, {}), 1.0);
}

TEST(RewardTermTest, ContactTerms) {
  EXPECT_EQ(reward::Collision(V{0.0, 0.0}), 0.0);
  EXPECT_EQ(reward::Collision(V{0.0, 1e-3}), 1.0);
  V left = {3.0, 4.0}, right = {0.0, 12.0};
  // 5 + 12 - 10 = 7.
  EXPECT_DOUBLE_EQ(reward::ContactForce(left, right, 10.0), 7.0);
  EXPECT_DOUBLE_EQ(reward::ContactForce(left, right, 20.0), 0.0);
  EXPECT_DOUBLE_EQ(reward::ContactForce(V{1000.0}, V{}, 0.0), 400.0);
}

TEST(RewardTermTest, JointAndFootPlacement) {
  V q = {0.3, 0.4}, q0 = {0.0, 0.0};
  EXPECT_DOUBLE_EQ(reward::DefaultJointPosition(q, q0), 0.5);
  EXPECT_NEAR(reward::FootDistance(0.1, 0.15), 0.05, 1e-15);
  EXPECT_DOUBLE_EQ(reward::FootDistance(0.2, 0.15), 0.0);
  EXPECT_DOUBLE_EQ(reward::NominalFootHeight(V{0.1}, V{0.1}), 1.0);
  // 0.05^2 * 200 = 0.5.
  EXPECT_NEAR(reward::NominalFootHeight(V{0.1, 0.1}, V{0.1, 0.05}), std::exp(-0.5),
              1e-12);
}

TEST(RewardTermTest, ResidualPenalty) {
  V delta = {0.1, -0.2};
  RewardInputs in;
  in.residual = delta;
  RewardBreakdown r = ComputeRewards(in, {{"residual", -0.01}}, 4.0);
  EXPECT_NEAR(r.weighted("residual"), -0.003, 1e-15);
  EXPECT_NEAR(r.total, -0.003, 1e-15);
}

TEST(RewardTermTest, InapplicableTermsUseZeroInputs) {
  RewardInputs in;
  RewardCoefficients all;
  for (const auto& name : RewardTermNames()) all[name] = 1.0;
  RewardBreakdown r = ComputeRewards(in, all, 4.0);
  // exp(0) terms read 1, magnitude terms read 0.
  for (const char* one : {"tracking_lin_vel", "tracking_ang_vel", "base_height",
                          "orientation", "nominal_foot_height"}) {
    EXPECT_EQ(r.term(one), 1.0) << one;
  }
  EXPECT_EQ(r.total, 5.0);
  EXPECT_THROW(r.term("gait_bonus"), InputError);
}

TEST(RewardTest, TotalIsWeightedSum) {
  std::mt19937_64 rng(11);
  std::normal_distribution<double> n(0.0, 1.0);
  for (int trial = 0; trial < 50; ++trial) {
    RewardInputs in;
    in.lin_vel_des = {n(rng), n(rng)};
    in.lin_vel = {n(rng), n(rng)};
    in.ang_vel = n(rng);
    in.base_height = 0.01 * n(rng);
    in.torque = {n(rng), n(rng), n(rng)};
    in.joint_vel = {n(rng), n(rng), n(rng)};
    in.joint_acc = {n(rng), n(rng)};
    in.action = {n(rng), n(rng)};
    in.action_prev = {n(rng), n(rng)};
    in.action_prev2 = {n(rng), n(rng)};
    in.residual = {n(rng), n(rng)};
    RewardCoefficients coef;
    for (const auto& name : RewardTermNames()) coef[name] = n(rng);
    RewardBreakdown r = ComputeRewards(in, coef, 4.0);
    double sum = 0.0;
    for (const auto& name : RewardTermNames()) sum += coef[name] * r.term(name);
    EXPECT_NEAR(r.total, sum, 1e-6);
  }
}

TEST(ExpertTest, DampingCompensationAtCommandedVelocity) {
  ToyEnvConfig c = QuietPointMass();
  ToyEnv env(c);
  env.Reset(0, Command{0.8, -0.3, 0.0});
  env.set_state({0.0, 0.0, 0.8, -0.3});
  auto a = env.ExpertAction();
  EXPECT_NEAR(a[0], c.mass * c.damping * 0.8, 1e-6);
  EXPECT_NEAR(a[1], c.mass * c.damping * -0.3, 1e-6);
}

TEST(ExpertTest, RestIsEquilibrium) {
  ToyEnv env(QuietPointMass());
  env.Reset(0, Command{});
  auto a = env.ExpertAction();
  EXPECT_EQ(a, (std::vector<float>{0.0f, 0.0f}));
}

TEST(ExpertTest, CorrectiveForceOpposesError) {
  ToyEnvConfig c = QuietPointMass();
  c.damping = 0.0;
  ToyEnv env(c);
  env.Reset(0, Command{0.5, 0.0, 0.0});
  env.set_state({0.0, 0.0, 0.9, -0.2});
  auto a = env.ExpertAction();
  EXPECT_LT(a[0], 0.0f);
  EXPECT_GT(a[1], 0.0f);
}

TEST(ExpertTest, NearRewardUpperBoundOnNominalEpisodes) {
  for (const auto& c : DefaultEmbodiments()) {
    ToyEnv env(c);
    const double bound = PositiveCoefficientSum(c) * c.max_steps;
    const double lin_bound = c.coefficients.at("tracking_lin_vel") * c.max_steps;
    for (int ep = 0; ep < 3; ++ep) {
      env.Reset(100 + ep);
      double ret = 0.0, lin = 0.0;
      int steps = 0;
      while (!env.done()) {
        StepResult r = env.Step(env.ExpertAction());
        ret += r.reward.total;
        lin += r.reward.weighted("tracking_lin_vel");
        ++steps;
      }
      EXPECT_EQ(steps, c.max_steps) << c.name;
      EXPECT_GE(ret, 0.9 * bound) << c.name;
      EXPECT_GE(lin, 0.95 * lin_bound) << c.name;
    }
  }
}

TEST(DatasetTest, SegmentCount) {
  // Windows end at observation t and chunks start at action t, so
  // t runs from 9 to 996.
  EXPECT_EQ(SegmentCount(1000, 10, 4), 988);
  EXPECT_EQ(SegmentCount(13, 10, 4), 1);
  EXPECT_EQ(SegmentCount(12, 10, 4), 0);
  EXPECT_EQ(kPaperMaxSamplesPerRobot, 2048000);
}

TEST(DatasetTest, SegmentsAlignWithRollout) {
  DatasetOptions opt;
  opt.episodes = 2;
  opt.episode_steps = 60;
  opt.demo_noise = 0.2;
  opt.clean_labels = false;
  auto envs = DefaultEmbodiments();
  UnifiedDims dims{17, 6};
  auto samples = GenerateSamples(envs[2], opt, dims, 5);
  const int per_episode = SegmentCount(60, 10, 4);
  ASSERT_EQ(static_cast<int>(samples.size()), 2 * per_episode);
  const int obs_dim = 17, act_dim = 6;
  for (int i = 0; i + 1 < per_episode; ++i) {
    const auto& s = samples[i];
    const auto& next = samples[i + 1];
    ASSERT_EQ(s.obs_window.size(), 10u * 17);
    ASSERT_EQ(s.action_chunk.size(), 4u * 6);
    EXPECT_EQ(s.embodiment_id, 2);
    // The newest observation of the next window carries the previous action,
    // which is the first action of this chunk. Obs layout: 9 state entries,
    // then the previous action.
    for (int k = 0; k < act_dim; ++k) {
      EXPECT_EQ(next.obs_window[9 * obs_dim + 9 + k], s.action_chunk[k]);
    }
    // Windows slide by one observation.
    for (int k = 0; k < 9 * obs_dim; ++k) {
      EXPECT_EQ(next.obs_window[k], s.obs_window[k + obs_dim]);
    }
  }
}

TEST(DatasetTest, CleanLabelsDifferFromExecutedActionsByTheNoise) {
  DatasetOptions opt;
  opt.episodes = 1;
  opt.episode_steps = 40;
  opt.demo_noise = 0.2;
  auto env = DefaultEmbodiments()[0];
  UnifiedDims dims{17, 6};
  auto clean = GenerateSamples(env, opt, dims, 3);
  double sq = 0.0;
  int n = 0;
  for (size_t i = 0; i + 1 < clean.size(); ++i) {
    for (int k = 0; k < 2; ++k) {
      double d = clean[i + 1].obs_window[9 * 17 + 2 + k] - clean[i].action_chunk[k];
      sq += d * d;
      ++n;
    }
  }
  EXPECT_NEAR(std::sqrt(sq / n), 0.2, 0.05);

  // Without noise both modes record the same actions.
  opt.demo_noise = 0.0;
  auto a = GenerateSamples(env, opt, dims, 3);
  opt.clean_labels = false;
  auto b = GenerateSamples(env, opt, dims, 3);
  ASSERT_EQ(a.size(), b.size());
  for (size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a[i].action_chunk, b[i].action_chunk);
}

TEST(DatasetTest, PaddingIsZero) {
  DatasetOptions opt;
  opt.episodes = 1;
  opt.episode_steps = 40;
  auto samples = GenerateSamples(DefaultEmbodiments()[0], opt, UnifiedDims{17, 6}, 1);
  for (const auto& s : samples) {
    for (int h = 0; h < 10; ++h) {
      for (int k = 6; k < 17; ++k) EXPECT_EQ(s.obs_window[h * 17 + k], 0.0f);
    }
    for (int h = 0; h < 4; ++h) {
      for (int k = 2; k < 6; ++k) EXPECT_EQ(s.action_chunk[h * 6 + k], 0.0f);
    }
  }
}

TEST(DatasetTest, CapIsExactAndSeeded) {
  DatasetOptions opt;
  opt.episodes = 1;
  opt.episode_steps = 300;
  opt.max_samples = 100;
  auto env = DefaultEmbodiments()[1];
  auto a = GenerateSamples(env, opt, UnifiedDims{17, 6}, 8);
  auto b = GenerateSamples(env, opt, UnifiedDims{17, 6}, 8);
  ASSERT_EQ(a.size(), 100u);
  for (size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a[i].obs_window, b[i].obs_window);

  std::mt19937_64 rng(1);
  auto idx = SubsampleIndices(50, 20, rng);
  ASSERT_EQ(idx.size(), 20u);
  EXPECT_TRUE(std::is_sorted(idx.begin(), idx.end()));
  EXPECT_EQ(std::adjacent_find(idx.begin(), idx.end()), idx.end());
  EXPECT_EQ(SubsampleIndices(5, 10, rng).size(), 5u);
}

TEST(DatasetTest, ShortEpisodeRejected) {
  DatasetOptions opt;
  opt.episodes = 1;
  opt.episode_steps = 12;
  EXPECT_THROW(GenerateSamples(DefaultEmbodiments()[0], opt, UnifiedDims{17, 6}, 1),
               InputError);
}

TEST(DatasetTest, CountsAndCoverage) {
  DatasetOptions opt;
  opt.episodes = 2;
  opt.episode_steps = 200;
  opt.demo_noise = 0.1;
  std::vector<int> counts = {30, 100, 100, 100};
  UnifiedDataset ds = GenerateDataset(DefaultEmbodiments(), opt, 3, counts);
  ds.Validate();
  std::vector<int> seen(4, 0);
  for (const auto& s : ds.samples) ++seen[s.embodiment_id];
  EXPECT_EQ(seen, counts);
  // Every owned action dim spans a non-degenerate range.
  for (int d = 0; d < 6; ++d) EXPECT_LT(ds.stats.action.q05[d], ds.stats.action.q95[d]);
  EXPECT_THROW(GenerateDataset(DefaultEmbodiments(), opt, 3, {5000, 1, 1, 1}),
               InputError);
}

TEST(DatasetTest, DeterministicGivenSeed) {
  DatasetOptions opt;
  opt.episodes = 1;
  opt.episode_steps = 50;
  opt.demo_noise = 0.3;
  auto a = GenerateDataset(DefaultEmbodiments(), opt, 12);
  auto b = GenerateDataset(DefaultEmbodiments(), opt, 12);
  auto c = GenerateDataset(DefaultEmbodiments(), opt, 13);
  ASSERT_EQ(a.samples.size(), b.samples.size());
  bool differs = false;
  for (size_t i = 0; i < a.samples.size(); ++i) {
    EXPECT_EQ(a.samples[i].action_chunk, b.samples[i].action_chunk);
    differs |= a.samples[i].action_chunk != c.samples[i].action_chunk;
  }
  EXPECT_TRUE(differs);
}

TEST(ConfigTest, JsonRoundTrip) {
  for (const auto& c : DefaultEmbodiments()) {
    nlohmann::json j = c;
    ToyEnvConfig back = j.get<ToyEnvConfig>();
    EXPECT_EQ(nlohmann::json(back), j);
  }
  nlohmann::json partial = {{"kind", "chain-6"}, {"id", 2}, {"damping", 0.9},
                            {"coefficients", {{"tracking_lin_vel", 2.0}}}};
  ToyEnvConfig c = partial.get<ToyEnvConfig>();
  EXPECT_EQ(c.damping, 0.9);
  EXPECT_EQ(c.coefficients.at("tracking_lin_vel"), 2.0);
  EXPECT_EQ(c.coefficients.at("tracking_ang_vel"), 5.0);
  nlohmann::json bad = {{"kind", "chain-6"}, {"coefficients", {{"bogus", 1.0}}}};
  EXPECT_THROW(bad.get<ToyEnvConfig>(), InputError);
}

}  // namespace
}  // namespace unigait
