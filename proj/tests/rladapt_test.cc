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

#include "unigait/rladapt.h"

#include <cmath>
#include <limits>
#include <numbers>
#include <random>

#include <gtest/gtest.h>

#include "unigait/error.h"

namespace unigait {
namespace {

// --- GAE -------------------------------------------------------------------

TEST(GaeTest, ThreeStepEpisode) {
  std::vector<double> r = {1, 1, 1}, v = {0, 0, 0, 0};
  std::vector<std::uint8_t> d = {0, 0, 1};
  GaeResult g = Gae(r, v, d, 0.99, 0.95);
  EXPECT_NEAR(g.advantages[0], 2.82504, 1e-5);
  EXPECT_NEAR(g.advantages[1], 1.94050, 1e-5);
  EXPECT_NEAR(g.advantages[2], 1.0, 1e-12);
  EXPECT_EQ(g.returns, g.advantages);
}

// Direct sum over future TD errors, truncated at the first done.
std::vector<double> BruteForceGae(const std::vector<double>& r, const std::vector<double>& v,
                                  const std::vector<std::uint8_t>& d, double gamma,
                                  double lambda) {
  const size_t n = r.size();
  std::vector<double> out(n);
  for (size_t t = 0; t < n; ++t) {
    double acc = 0.0, w = 1.0;
    for (size_t k = t; k < n; ++k) {
      const double boot = d[k] ? 0.0 : v[k + 1];
      acc += w * (r[k] + gamma * boot - v[k]);
      if (d[k]) break;
      w *= gamma * lambda;
    }
    out[t] = acc;
  }
  return out;
}

TEST(GaeTest, MatchesBruteForceSum) {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> n(0.0, 1.0);
  std::bernoulli_distribution done(0.2);
  for (int trial = 0; trial < 20; ++trial) {
    const int len = 1 + trial;
    std::vector<double> r(len), v(len + 1);
    std::vector<std::uint8_t> d(len);
    for (auto& x : r) x = n(rng);
    for (auto& x : v) x = n(rng);
    for (auto& x : d) x = done(rng);
    const double gamma = 0.9 + 0.005 * trial, lambda = 0.5 + 0.02 * trial;
    GaeResult g = Gae(r, v, d, gamma, lambda);
    auto want = BruteForceGae(r, v, d, gamma, lambda);
    for (int t = 0; t < len; ++t) {
      EXPECT_NEAR(g.advantages[t], want[t], 1e-10);
      EXPECT_NEAR(g.returns[t], want[t] + v[t], 1e-10);
    }
  }
}

TEST(GaeTest, LambdaZeroIsOneStepTd) {
  std::vector<double> r = {0.5, -1, 2}, v = {0.1, 0.2, 0.3, 0.4};
  std::vector<std::uint8_t> d = {0, 1, 0};
  GaeResult g = Gae(r, v, d, 0.9, 0.0);
  EXPECT_NEAR(g.advantages[0], 0.5 + 0.9 * 0.2 - 0.1, 1e-12);
  EXPECT_NEAR(g.advantages[1], -1 - 0.2, 1e-12);
  EXPECT_NEAR(g.advantages[2], 2 + 0.9 * 0.4 - 0.3, 1e-12);
}

TEST(GaeTest, LengthMismatchThrows) {
  std::vector<double> r = {1, 1}, v = {0, 0};
  std::vector<std::uint8_t> d = {0, 0};
  EXPECT_THROW(Gae(r, v, d, 0.99, 0.95), InputError);
}

// --- advantage normalization ----------------------------------------------

TEST(AdvantageNormTest, EachEmbodimentIsStandardized) {
  std::mt19937_64 rng(1);
  std::normal_distribution<double> n(0.0, 1.0);
  std::vector<double> adv;
  std::vector<int> ids;
  for (int i = 0; i < 300; ++i) {
    const int id = i % 3;
    ids.push_back(id);
    adv.push_back(id * 50.0 + (id + 1) * 7.0 * n(rng));
  }
  auto excluded = NormalizeAdvantagesPerEmbodiment(adv, ids);
  EXPECT_TRUE(excluded.empty());
  for (int id = 0; id < 3; ++id) {
    double sum = 0, sq = 0;
    int count = 0;
    for (size_t i = 0; i < adv.size(); ++i) {
      if (ids[i] != id) continue;
      sum += adv[i];
      ++count;
    }
    const double mean = sum / count;
    for (size_t i = 0; i < adv.size(); ++i) {
      if (ids[i] == id) sq += (adv[i] - mean) * (adv[i] - mean);
    }
    EXPECT_LT(std::abs(mean), 1e-6);
    EXPECT_LT(std::abs(std::sqrt(sq / count) - 1.0), 1e-4);
  }
}

TEST(AdvantageNormTest, GroupsAreIndependent) {
  std::vector<double> a = {1, 2, 3, 10, 20, 40};
  std::vector<int> ids = {0, 0, 0, 1, 1, 1};
  std::vector<double> b = a;
  for (int i = 3; i < 6; ++i) b[i] = b[i] * 1000 - 7;
  NormalizeAdvantagesPerEmbodiment(a, ids);
  NormalizeAdvantagesPerEmbodiment(b, ids);
  for (int i = 0; i < 3; ++i) EXPECT_EQ(a[i], b[i]);
}

TEST(AdvantageNormTest, SingletonGroupIsZeroedAndReported) {
  std::vector<double> a = {5, 1, 2, 3};
  std::vector<int> ids = {7, 0, 0, 0};
  auto excluded = NormalizeAdvantagesPerEmbodiment(a, ids);
  ASSERT_EQ(excluded.size(), 1u);
  EXPECT_EQ(excluded[0], 7);
  EXPECT_EQ(a[0], 0.0);
  EXPECT_NEAR(a[1] + a[2] + a[3], 0.0, 1e-12);
}

// --- scalar rules -----------------------------------------------------------

TEST(KlAdaptiveLrTest, Rules) {
  EXPECT_NEAR(KlAdaptiveLr(0.03, 4e-4, 0.01), 2.6667e-4, 1e-8);
  EXPECT_NEAR(KlAdaptiveLr(0.001, 4e-4, 0.01), 6e-4, 1e-12);
  EXPECT_EQ(KlAdaptiveLr(0.01, 4e-4, 0.01), 4e-4);
  EXPECT_EQ(KlAdaptiveLr(0.0, 4e-4, 0.01), 4e-4);
  EXPECT_EQ(KlAdaptiveLr(1.0, 1e-6, 0.01), 1e-6);
  EXPECT_EQ(KlAdaptiveLr(1e-4, 9e-3, 0.01), 1e-2);
  EXPECT_THROW(KlAdaptiveLr(0.01, 0.0, 0.01), InputError);
}

TEST(ClippedSurrogateTest, Arithmetic) {
  EXPECT_NEAR(ClippedSurrogate(1.5, 1.0, 0.2), 1.2, 1e-12);
  EXPECT_NEAR(ClippedSurrogate(0.5, 1.0, 0.2), 0.5, 1e-12);
  EXPECT_NEAR(ClippedSurrogate(0.5, -1.0, 0.2), -0.8, 1e-12);
  EXPECT_NEAR(ClippedSurrogate(1.5, -1.0, 0.2), -1.5, 1e-12);
  EXPECT_NEAR(ClippedSurrogate(1.1, 2.0, 0.2), 2.2, 1e-12);
}

TEST(ComposeActionTest, ScaledResidualOnValidDims) {
  std::vector<float> prior = {0.1f, 0.3f, 0.0f}, res = {0.5f, -1.0f, 7.0f},
                     mask = {1, 1, 0};
  auto a = ComposeAction(prior, res, 0.2, mask);
  EXPECT_NEAR(a[0], 0.2f, 1e-7);
  EXPECT_NEAR(a[1], 0.1f, 1e-7);
  EXPECT_EQ(a[2], 0.0f);
  std::vector<float> zero(3, 0.0f);
  auto same = ComposeAction(prior, zero, 0.2, mask);
  EXPECT_EQ(same, prior);
  std::vector<float> short_res = {1.0f};
  EXPECT_THROW(ComposeAction(prior, short_res, 0.2, mask), InputError);
}

TEST(GaussianLogProbTest, MatchesClosedForm) {
  std::vector<float> x = {0.5f, -1.0f, 3.0f}, mean = {0.0f, 1.0f, 0.0f},
                     log_std = {0.0f, std::log(2.0f), 5.0f}, mask = {1, 1, 0};
  const double half_log_2pi = 0.5 * std::log(2 * std::numbers::pi);
  const double want = (-0.125 - half_log_2pi) + (-0.5 - std::log(2.0) - half_log_2pi);
  EXPECT_NEAR(GaussianLogProb(x, mean, log_std, mask), want, 1e-6);
}

// --- actor and critics -----------------------------------------------------

TEST(ResidualActorTest, FreshActorIsZeroMeanUnitStd) {
  ResidualActor actor(5, 3, {8, 8});
  std::mt19937_64 rng(0);
  ParamSet p = actor.InitParams(rng);
  Tensor cond(4, 5, 0.7f), prior(4, 3, -0.3f);
  auto out = actor.Forward(p, cond, prior);
  for (float m : out.mean.vec()) EXPECT_EQ(m, 0.0f);
  for (float s : out.std) EXPECT_EQ(s, 1.0f);
  EXPECT_EQ(actor.input_dim(), 8);
}

TEST(ResidualActorTest, LogStdIsClamped) {
  ResidualActor actor(2, 2, {4});
  std::mt19937_64 rng(0);
  ParamSet p = actor.InitParams(rng);
  p.Mutable("actor.log_std") = Tensor::Row({10.0f, -30.0f});
  auto out = actor.Forward(p, Tensor(1, 2), Tensor(1, 2));
  EXPECT_NEAR(out.std[0], std::exp(4.0f), 1e-3);
  EXPECT_NEAR(out.std[1], std::exp(-20.0f), 1e-15);
}

TEST(ResidualActorTest, DimensionMismatchThrows) {
  ResidualActor actor(5, 3, {8});
  std::mt19937_64 rng(0);
  ParamSet p = actor.InitParams(rng);
  EXPECT_THROW(actor.Forward(p, Tensor(2, 4), Tensor(2, 3)), InputError);
  EXPECT_THROW(actor.Forward(p, Tensor(2, 5), Tensor(3, 3)), InputError);
}

std::vector<EmbodimentSpec> TwoSpecs() {
  EmbodimentSpec a{.id = 0, .name = "a", .obs_dim = 3, .action_dim = 2, .privileged_dim = 4};
  EmbodimentSpec b{.id = 1, .name = "b", .obs_dim = 3, .action_dim = 2, .privileged_dim = 6};
  return {a, b};
}

TEST(CriticBankTest, OneCriticPerEmbodiment) {
  CriticBank bank(TwoSpecs(), {8});
  EXPECT_EQ(bank.size(), 2);
  EXPECT_EQ(bank.input_dim(0), 4);
  EXPECT_EQ(bank.input_dim(1), 6);
  EXPECT_EQ(bank.index(1), 1);
  EXPECT_THROW(bank.index(9), InputError);
  std::mt19937_64 rng(0);
  auto params = bank.InitParams(rng);
  ASSERT_EQ(params.size(), 2u);
  EXPECT_GT(params[0].size(), 0u);
  EXPECT_EQ(bank.Values(1, params[1], Tensor(3, 6)).size(), 3u);
  EXPECT_THROW(bank.Values(1, params[1], Tensor(3, 4)), InputError);
}

// A synthetic one-step batch over a 2-dim action; `ids` picks embodiments.
struct Toy {
  ResidualActor actor{3, 2, {8}};
  CriticBank critics{TwoSpecs(), {8}};
  ParamSet actor_params;
  std::vector<ParamSet> critic_params;
  RolloutBatch batch;
};

Toy MakeToy(const std::vector<int>& ids, std::uint64_t seed) {
  Toy t;
  std::mt19937_64 rng(seed);
  t.actor_params = t.actor.InitParams(rng);
  t.critic_params = t.critics.InitParams(rng);
  std::normal_distribution<float> n(0.0f, 1.0f);
  const int count = static_cast<int>(ids.size());
  RolloutBatch& b = t.batch;
  b.num_envs = count;
  b.steps = 1;
  b.embodiment = ids;
  b.actor_input = Tensor(count, 5);
  for (float& x : b.actor_input.vec()) x = n(rng);
  b.residual = Tensor(count, 2);
  for (float& x : b.residual.vec()) x = n(rng);
  b.mask = Tensor(count, 2, 1.0f);
  Graph g(false);
  b.old_mean = g.value(t.actor.Mean(g, t.actor_params, g.Constant(b.actor_input)));
  b.old_log_std = {0.0f, 0.0f};
  for (int i = 0; i < count; ++i) {
    b.old_log_prob.push_back(
        GaussianLogProb(b.residual.row(i), b.old_mean.row(i), b.old_log_std, b.mask.row(i)));
    const int dim = t.critics.input_dim(t.critics.index(ids[i]));
    std::vector<float> s(dim);
    for (float& x : s) x = n(rng);
    b.privileged.push_back(s);
    b.rewards.push_back(0.0);
    b.values.push_back(0.0);
    b.dones.push_back(1);
    // Advantage rewards a positive first residual dim.
    b.advantages.push_back(b.residual(i, 0));
    b.returns.push_back(1.0 + ids[i]);
  }
  b.last_values.assign(count, 0.0);
  return t;
}

TEST(PpoUpdateTest, CriticOnlySeesItsEmbodiment) {
  Toy t = MakeToy(std::vector<int>(32, 0), 5);
  const auto before1 = t.critic_params[1].Hash();
  const auto before0 = t.critic_params[0].Hash();
  PpoConfig cfg;
  std::mt19937_64 rng(0);
  PpoStats s = PpoUpdate(t.batch, t.actor, t.actor_params, t.critics, t.critic_params, cfg,
                         1e-3, rng);
  EXPECT_FALSE(s.aborted);
  EXPECT_EQ(t.critic_params[1].Hash(), before1);
  EXPECT_NE(t.critic_params[0].Hash(), before0);
}

TEST(PpoUpdateTest, FirstStepKlIsZero) {
  Toy t = MakeToy({0, 1, 0, 1, 0, 1, 0, 1}, 6);
  PpoConfig cfg;
  cfg.epochs = 1;
  cfg.minibatches = 1;
  std::mt19937_64 rng(0);
  PpoStats s = PpoUpdate(t.batch, t.actor, t.actor_params, t.critics, t.critic_params, cfg,
                         1e-3, rng);
  EXPECT_LT(std::abs(s.approx_kl), 1e-9);
}

TEST(PpoUpdateTest, ClippedRatioGivesNoActorGradient) {
  Toy t = MakeToy({0, 0, 0, 0, 1, 1, 1, 1}, 7);
  // Old log-probs one nat lower: ratio e > 1 + clip; with A > 0 the clipped
  // branch is active, and the entropy term is switched off.
  for (int i = 0; i < t.batch.size(); ++i) {
    t.batch.old_log_prob[i] -= 1.0;
    t.batch.advantages[i] = 1.0 + i;
  }
  PpoConfig cfg;
  cfg.entropy_coef = 0.0;
  cfg.epochs = 1;
  cfg.minibatches = 1;
  const auto before = t.actor_params.Hash();
  std::mt19937_64 rng(0);
  PpoUpdate(t.batch, t.actor, t.actor_params, t.critics, t.critic_params, cfg, 1e-3, rng);
  EXPECT_EQ(t.actor_params.Hash(), before);
}

TEST(PpoUpdateTest, MeanMovesTowardPositiveAdvantage) {
  Toy t = MakeToy(std::vector<int>(64, 0), 8);
  PpoConfig cfg;
  std::mt19937_64 rng(0);
  for (int round = 0; round < 3; ++round) {
    PpoUpdate(t.batch, t.actor, t.actor_params, t.critics, t.critic_params, cfg, 1e-3, rng);
  }
  auto out = t.actor.Forward(t.actor_params, Tensor(1, 3), Tensor(1, 2));
  EXPECT_GT(out.mean(0, 0), 0.0f);
}

TEST(PpoUpdateTest, NonFiniteLossRestoresParameters) {
  Toy t = MakeToy({0, 0, 1, 1}, 9);
  t.batch.advantages[2] = std::numeric_limits<double>::quiet_NaN();
  const auto actor_before = t.actor_params.Hash();
  const auto c0 = t.critic_params[0].Hash(), c1 = t.critic_params[1].Hash();
  PpoConfig cfg;
  cfg.minibatches = 1;
  std::mt19937_64 rng(0);
  PpoStats s = PpoUpdate(t.batch, t.actor, t.actor_params, t.critics, t.critic_params, cfg,
                         1e-3, rng);
  EXPECT_TRUE(s.aborted);
  EXPECT_EQ(t.actor_params.Hash(), actor_before);
  EXPECT_EQ(t.critic_params[0].Hash(), c0);
  EXPECT_EQ(t.critic_params[1].Hash(), c1);
}

TEST(ComputeAdvantagesTest, InterleavedEnvLayout) {
  // Two envs, three steps; env 1 carries the rewards from the GAE example.
  RolloutBatch b;
  b.num_envs = 2;
  b.steps = 3;
  b.embodiment = {0, 1, 0, 1, 0, 1};
  b.rewards = {0, 1, 0, 1, 0, 1};
  b.values.assign(6, 0.0);
  b.dones = {0, 0, 0, 0, 0, 1};
  b.last_values = {0, 5};
  ComputeAdvantages(b, 0.99, 0.95);
  // Returns are raw (pre-normalization) GAE targets.
  EXPECT_NEAR(b.returns[1], 2.82504, 1e-5);
  EXPECT_NEAR(b.returns[3], 1.94050, 1e-5);
  EXPECT_NEAR(b.returns[5], 1.0, 1e-12);
  EXPECT_EQ(b.returns[0], 0.0);
}

// --- rollouts over the toy envs --------------------------------------------

UnifiedDataset SmallDataset() {
  DatasetOptions opt;
  opt.episodes = 1;
  opt.episode_steps = 40;
  opt.demo_noise = 0.2;
  return GenerateDataset(DefaultEmbodiments(), opt, 1);
}

const DiffusionModel& SmallPrior() {
  static const DiffusionModel model = [] {
    DenoiserConfig c;
    c.emb_dim = 8;
    c.d_model = 16;
    c.heads = 2;
    c.depth = 1;
    c.cond_hidden = {16};
    c.fourier_bank = 4;
    DiffusionTrainConfig train;
    train.epochs = 1;
    train.batch_size = 32;
    return TrainDiffusion(SmallDataset(), c, EdmConfig(), train, 4);
  }();
  return model;
}

std::vector<ToyEnvConfig> ShortEnvs(int steps) {
  auto envs = DefaultEmbodiments();
  for (auto& e : envs) e.max_steps = steps;
  return envs;
}

PpoConfig TinyPpo() {
  PpoConfig c;
  c.actor_hidden = {16};
  c.critic_hidden = {16};
  c.envs_per_embodiment = 2;
  c.rollout_len = 6;
  c.max_iterations = 2;
  c.minibatches = 2;
  c.epochs = 2;
  c.sample_steps = 2;
  return c;
}

TEST(PolicyRunnerTest, ZeroResidualReproducesPriorExactly) {
  const DiffusionModel& prior = SmallPrior();
  auto envs = ShortEnvs(30);
  ResidualPolicy policy = InitResidualPolicy(prior, envs, TinyPpo(), 3);
  PolicyRunner bare(prior, nullptr, envs, 3, 0.2);
  PolicyRunner composed(prior, &policy, policy.envs, 3, 0.2);
  for (int i = 0; i < bare.num_envs(); ++i) {
    bare.Reset(i, 100 + i);
    composed.Reset(i, 100 + i);
  }
  std::mt19937_64 rng_a(11), rng_b(11);
  for (int t = 0; t < 20; ++t) {
    auto a = bare.Step(rng_a, nullptr);
    auto b = composed.Step(rng_b, nullptr);
    for (int i = 0; i < bare.num_envs(); ++i) {
      ASSERT_EQ(a.results[i].obs, b.results[i].obs) << "env " << i << " step " << t;
      for (float r : b.residual.row(i)) EXPECT_EQ(r, 0.0f);
    }
  }
}

TEST(PolicyRunnerTest, RejectsEnvWithMismatchedDims) {
  const DiffusionModel& prior = SmallPrior();
  auto envs = DefaultEmbodiments();
  envs[0].kind = DynamicsKind::kChain6;  // id 0 no longer matches its stats
  EXPECT_THROW(PolicyRunner(prior, nullptr, envs, 2, 0.2), InputError);
}

TEST(TrainResidualTest, PriorIsFrozenAndLogsAreFinite) {
  const DiffusionModel& prior = SmallPrior();
  const auto hash = prior.params.Hash();
  std::vector<IterationLog> logs;
  ResidualPolicy p = TrainResidual(prior, ShortEnvs(1000), TinyPpo(), 5,
                                   [&](const IterationLog& l) { logs.push_back(l); });
  EXPECT_EQ(prior.params.Hash(), hash);
  EXPECT_EQ(p.prior_hash, hash);
  ASSERT_EQ(logs.size(), 2u);
  for (const auto& l : logs) {
    EXPECT_TRUE(std::isfinite(l.ar));
    EXPECT_TRUE(std::isfinite(l.value_loss));
    EXPECT_GT(l.lr, 0.0);
    EXPECT_EQ(l.embodiment_ar.size(), 4u);
  }
  // The actor moved away from its zero head.
  ResidualPolicy fresh = InitResidualPolicy(prior, ShortEnvs(1000), TinyPpo(), 5);
  EXPECT_NE(p.actor.Hash(), fresh.actor.Hash());
}

TEST(TrainResidualTest, CriticWarmupLeavesActorAtInit) {
  const DiffusionModel& prior = SmallPrior();
  PpoConfig cfg = TinyPpo();
  cfg.critic_warmup = cfg.max_iterations;
  ResidualPolicy p = TrainResidual(prior, ShortEnvs(1000), cfg, 5);
  ResidualPolicy fresh = InitResidualPolicy(prior, ShortEnvs(1000), cfg, 5);
  EXPECT_EQ(p.actor.Hash(), fresh.actor.Hash());
  for (size_t k = 0; k < p.critics.size(); ++k) {
    EXPECT_NE(p.critics[k].Hash(), fresh.critics[k].Hash());
  }
}

TEST(TrainResidualTest, SameSeedSameWeights) {
  const DiffusionModel& prior = SmallPrior();
  PpoConfig cfg = TinyPpo();
  cfg.max_iterations = 1;
  auto a = TrainResidual(prior, ShortEnvs(1000), cfg, 8);
  auto b = TrainResidual(prior, ShortEnvs(1000), cfg, 8);
  EXPECT_EQ(a.actor.Hash(), b.actor.Hash());
  for (size_t k = 0; k < a.critics.size(); ++k) {
    EXPECT_EQ(a.critics[k].Hash(), b.critics[k].Hash());
  }
}

TEST(ResidualCheckpointTest, RoundTripReproducesEvaluation) {
  const DiffusionModel& prior = SmallPrior();
  PpoConfig cfg = TinyPpo();
  cfg.max_iterations = 1;
  ResidualPolicy p = TrainResidual(prior, ShortEnvs(1000), cfg, 2);
  Bytes bytes = EncodeCheckpoint(ResidualCheckpoint(p, prior));
  auto [q, prior2] = ResidualFromCheckpoint(DecodeCheckpoint(bytes, CheckpointKind::kResidual));
  EXPECT_EQ(q.actor.Hash(), p.actor.Hash());
  EXPECT_EQ(prior2.params.Hash(), prior.params.Hash());
  EXPECT_EQ(q.prior_hash, p.prior_hash);
  EvalOptions opt;
  opt.episodes = 1;
  opt.sample_steps = 2;
  auto envs = ShortEnvs(15);
  auto r1 = EvaluatePolicy(prior, &p, envs, opt);
  auto r2 = EvaluatePolicy(prior2, &q, envs, opt);
  for (size_t k = 0; k < envs.size(); ++k) {
    EXPECT_EQ(r1.episodes[k][0].ar, r2.episodes[k][0].ar);
  }
  EXPECT_THROW(DecodeCheckpoint(bytes, CheckpointKind::kDiffusion), FormatError);
}

TEST(EvaluateTest, ExpertAndReportStats) {
  EvalOptions opt;
  opt.episodes = 2;
  opt.seeds = {0, 1};
  auto rep = EvaluateExpert(ShortEnvs(50), opt);
  ASSERT_EQ(rep.episodes.size(), 4u);
  for (const auto& e : rep.episodes) {
    ASSERT_EQ(e.size(), 4u);
    EXPECT_EQ(e[0].steps, 50);
    EXPECT_NEAR(e[0].mel, 1.0, 1e-12);
  }
  auto [pooled, sd] = rep.Stat(-1, &EpisodeMetrics::ar);
  double sum = 0;
  for (const auto& e : rep.episodes) {
    for (const auto& m : e) sum += m.ar;
  }
  EXPECT_NEAR(pooled, sum / 16, 1e-9);
  EXPECT_GE(sd, 0.0);
}

TEST(PpoConfigTest, JsonRoundTripAndValidation) {
  PpoConfig c = TinyPpo();
  nlohmann::json j = c;
  PpoConfig d = j.get<PpoConfig>();
  EXPECT_EQ(nlohmann::json(d), j);
  j["clip"] = 1.5;
  EXPECT_THROW(j.get<PpoConfig>(), InputError);
  PpoConfig bad;
  bad.residual_alpha = 0.5;
  EXPECT_THROW(bad.Validate(), InputError);
}

}  // namespace
}  // namespace unigait
