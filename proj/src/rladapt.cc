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

#include <algorithm>
#include <chrono>
#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <iostream>
#include <map>
#include <numbers>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <utility>

#include "unigait/error.h"
#include "unigait/optim.h"

namespace unigait {
namespace {

const double kLog2Pi = std::log(2.0 * std::numbers::pi);

std::string Hex(std::uint64_t h) {
  char buf[19];
  std::snprintf(buf, sizeof(buf), "%016" PRIx64, h);
  return buf;
}

Tensor GatherRows(const Tensor& t, std::span<const int> rows) {
  Tensor out(static_cast<int>(rows.size()), t.cols());
  for (size_t r = 0; r < rows.size(); ++r) {
    auto src = t.row(rows[r]);
    std::copy(src.begin(), src.end(), out.row(static_cast<int>(r)).begin());
  }
  return out;
}

Tensor Column(std::span<const double> v) {
  Tensor t(static_cast<int>(v.size()), 1);
  for (size_t i = 0; i < v.size(); ++i) t[i] = static_cast<float>(v[i]);
  return t;
}

std::uint64_t Mix(std::uint64_t a, std::uint64_t b) {
  std::uint64_t x = a ^ (b + 0x9e3779b97f4a7c15ULL + (a << 6) + (a >> 2));
  x ^= x >> 31;
  x *= 0xbf58476d1ce4e5b9ULL;
  x ^= x >> 29;
  return x;
}

const EmbodimentSpec& SpecFor(const std::vector<EmbodimentSpec>& specs, int id) {
  for (const auto& s : specs) {
    if (s.id == id) return s;
  }
  throw InputError("embodiment id " + std::to_string(id) + " is unknown to the prior");
}

}  // namespace

PpoConfig PpoConfig::PaperPreset() {
  PpoConfig c;
  c.actor_hidden = {512, 256, 128};
  c.critic_hidden = {512, 256, 128};
  c.envs_per_embodiment = 4096;
  c.max_iterations = 5000;
  return c;
}

void PpoConfig::Validate() const {
  auto positive = [](double v, const char* name) {
    if (!(v > 0.0)) throw InputError(std::string("ppo: ") + name + " must be positive");
  };
  positive(desired_kl, "desired_kl");
  positive(lr, "lr");
  positive(gamma, "gamma");
  positive(lambda, "lambda");
  positive(minibatches, "minibatches");
  positive(epochs, "epochs");
  positive(residual_coef, "residual_coef");
  positive(rollout_len, "rollout_len");
  positive(envs_per_embodiment, "envs_per_embodiment");
  positive(init_std, "init_std");
  positive(reward_scale, "reward_scale");
  if (entropy_coef < 0.0) throw InputError("ppo: entropy_coef must be >= 0");
  if (max_iterations < 0) throw InputError("ppo: max_iterations must be >= 0");
  if (!(clip > 0.0 && clip < 1.0)) throw InputError("ppo: clip must lie in (0, 1)");
  if (gamma > 1.0 || lambda > 1.0) throw InputError("ppo: gamma and lambda must be <= 1");
  if (residual_alpha > 0.0) throw InputError("ppo: residual_alpha is a penalty, must be <= 0");
  if (sample_steps < 0) throw InputError("ppo: sample_steps must be >= 0");
  if (max_grad_norm < 0.0) throw InputError("ppo: max_grad_norm must be >= 0");
  if (critic_warmup < 0) throw InputError("ppo: critic_warmup must be >= 0");
}

void to_json(nlohmann::json& j, const PpoConfig& c) {
  j = nlohmann::json{{"desired_kl", c.desired_kl},
                     {"lr", c.lr},
                     {"gamma", c.gamma},
                     {"lambda", c.lambda},
                     {"minibatches", c.minibatches},
                     {"epochs", c.epochs},
                     {"entropy_coef", c.entropy_coef},
                     {"clip", c.clip},
                     {"residual_coef", c.residual_coef},
                     {"residual_alpha", c.residual_alpha},
                     {"rollout_len", c.rollout_len},
                     {"max_iterations", c.max_iterations},
                     {"envs_per_embodiment", c.envs_per_embodiment},
                     {"actor_hidden", c.actor_hidden},
                     {"critic_hidden", c.critic_hidden},
                     {"init_std", c.init_std},
                     {"value_loss_coef", c.value_loss_coef},
                     {"max_grad_norm", c.max_grad_norm},
                     {"reward_scale", c.reward_scale},
                     {"sample_steps", c.sample_steps},
                     {"stagger_episodes", c.stagger_episodes},
                     {"critic_warmup", c.critic_warmup}};
}

void from_json(const nlohmann::json& j, PpoConfig& c) {
  c = PpoConfig{};
  auto get = [&](const char* key, auto& field) {
    if (j.contains(key)) j.at(key).get_to(field);
  };
  get("desired_kl", c.desired_kl);
  get("lr", c.lr);
  get("gamma", c.gamma);
  get("lambda", c.lambda);
  get("minibatches", c.minibatches);
  get("epochs", c.epochs);
  get("entropy_coef", c.entropy_coef);
  get("clip", c.clip);
  get("residual_coef", c.residual_coef);
  get("residual_alpha", c.residual_alpha);
  get("rollout_len", c.rollout_len);
  get("max_iterations", c.max_iterations);
  get("envs_per_embodiment", c.envs_per_embodiment);
  get("actor_hidden", c.actor_hidden);
  get("critic_hidden", c.critic_hidden);
  get("init_std", c.init_std);
  get("value_loss_coef", c.value_loss_coef);
  get("max_grad_norm", c.max_grad_norm);
  get("reward_scale", c.reward_scale);
  get("sample_steps", c.sample_steps);
  get("stagger_episodes", c.stagger_episodes);
  get("critic_warmup", c.critic_warmup);
  c.Validate();
}

std::vector<float> ComposeAction(std::span<const float> prior,
                                 std::span<const float> residual, double coef,
                                 std::span<const float> mask) {
  if (prior.size() != residual.size() || prior.size() != mask.size()) {
    throw InputError("compose: prior, residual and mask lengths differ (" +
                     std::to_string(prior.size()) + ", " + std::to_string(residual.size()) +
                     ", " + std::to_string(mask.size()) + ")");
  }
  const float c = static_cast<float>(coef);
  std::vector<float> out(prior.begin(), prior.end());
  for (size_t i = 0; i < out.size(); ++i) {
    if (mask[i] != 0.0f) out[i] = prior[i] + c * residual[i];
  }
  return out;
}

GaeResult Gae(std::span<const double> rewards, std::span<const double> values,
              std::span<const std::uint8_t> dones, double gamma, double lambda) {
  const size_t t_len = rewards.size();
  if (values.size() != t_len + 1 || dones.size() != t_len) {
    throw InputError("gae: expected " + std::to_string(t_len + 1) + " values and " +
                     std::to_string(t_len) + " dones, got " + std::to_string(values.size()) +
                     " and " + std::to_string(dones.size()));
  }
  GaeResult r;
  r.advantages.assign(t_len, 0.0);
  r.returns.assign(t_len, 0.0);
  double next = 0.0;
  for (size_t k = t_len; k-- > 0;) {
    const double live = dones[k] ? 0.0 : 1.0;
    const double delta = rewards[k] + gamma * values[k + 1] * live - values[k];
    next = delta + gamma * lambda * live * next;
    r.advantages[k] = next;
    r.returns[k] = next + values[k];
  }
  return r;
}

std::vector<int> NormalizeAdvantagesPerEmbodiment(std::vector<double>& advantages,
                                                  std::span<const int> embodiment_ids,
                                                  double eps) {
  if (advantages.size() != embodiment_ids.size()) {
    throw InputError("advantage normalization: one embodiment id per advantage required");
  }
  std::map<int, std::vector<size_t>> groups;
  for (size_t i = 0; i < advantages.size(); ++i) groups[embodiment_ids[i]].push_back(i);
  std::vector<int> excluded;
  for (const auto& [id, idx] : groups) {
    if (idx.size() < 2) {
      for (size_t i : idx) advantages[i] = 0.0;
      excluded.push_back(id);
      continue;
    }
    double mean = 0.0;
    for (size_t i : idx) mean += advantages[i];
    mean /= static_cast<double>(idx.size());
    double var = 0.0;
    for (size_t i : idx) var += (advantages[i] - mean) * (advantages[i] - mean);
    const double stdev = std::sqrt(var / static_cast<double>(idx.size()));
    for (size_t i : idx) advantages[i] = (advantages[i] - mean) / (stdev + eps);
  }
  return excluded;
}

double KlAdaptiveLr(double approx_kl, double lr, double desired_kl) {
  if (!(lr > 0.0)) throw InputError("kl-adaptive lr: lr must be positive");
  if (approx_kl > 2.0 * desired_kl) {
    lr /= 1.5;
  } else if (approx_kl < 0.5 * desired_kl && approx_kl > 0.0) {
    lr *= 1.5;
  }
  return std::clamp(lr, 1e-6, 1e-2);
}

double ClippedSurrogate(double ratio, double advantage, double clip) {
  return std::min(ratio * advantage, std::clamp(ratio, 1.0 - clip, 1.0 + clip) * advantage);
}

ResidualActor::ResidualActor(int cond_dim, int action_dim, std::vector<int> hidden)
    : cond_dim_(cond_dim), action_dim_(action_dim) {
  if (cond_dim <= 0 || action_dim <= 0) throw InputError("actor: dims must be positive");
  ParamSet layout;
  std::mt19937_64 rng(0);
  mlp_ = Mlp::Create(layout, "actor", input_dim(), hidden, action_dim, rng, true);
}

ParamSet ResidualActor::InitParams(std::mt19937_64& rng, double init_std) const {
  ParamSet p;
  std::vector<int> hidden;
  for (size_t i = 0; i + 1 < mlp_.layers.size(); ++i) hidden.push_back(mlp_.layers[i].out);
  Mlp::Create(p, "actor", input_dim(), hidden, action_dim_, rng, true);
  p.Add("actor.log_std", Tensor(1, action_dim_, static_cast<float>(std::log(init_std))));
  return p;
}

Var ResidualActor::Mean(Graph& g, const ParamSet& params, Var input) const {
  return mlp_(g, params, input);
}

Var ResidualActor::LogStd(Graph& g, const ParamSet& params) const {
  return Clamp(g.Param(params, "actor.log_std"), kLogStdMin, kLogStdMax);
}

ResidualActor::Output ResidualActor::Forward(const ParamSet& params, const Tensor& condition,
                                             const Tensor& prior_action) const {
  if (condition.cols() != cond_dim_ || prior_action.cols() != action_dim_ ||
      condition.rows() != prior_action.rows()) {
    throw InputError("actor: expected condition [B, " + std::to_string(cond_dim_) +
                     "] and prior [B, " + std::to_string(action_dim_) + "], got " +
                     condition.ShapeString() + " and " + prior_action.ShapeString());
  }
  Graph g(false);
  Var in = ConcatCols({g.Constant(condition), g.Constant(prior_action)});
  Output out;
  out.mean = g.value(Mean(g, params, in));
  const Tensor& ls = g.value(LogStd(g, params));
  out.std.resize(action_dim_);
  for (int i = 0; i < action_dim_; ++i) out.std[i] = std::exp(ls[i]);
  return out;
}

CriticBank::CriticBank(const std::vector<EmbodimentSpec>& specs, std::vector<int> hidden) {
  ParamSet layout;
  std::mt19937_64 rng(0);
  for (const auto& s : specs) {
    if (std::find(ids_.begin(), ids_.end(), s.id) != ids_.end()) {
      throw InputError("critic bank: duplicate embodiment id " + std::to_string(s.id));
    }
    if (s.privileged_dim <= 0) {
      throw InputError("critic bank: embodiment '" + s.name + "' has no privileged state");
    }
    ids_.push_back(s.id);
    mlps_.push_back(Mlp::Create(layout, "critic" + std::to_string(s.id), s.privileged_dim,
                                hidden, 1, rng));
  }
}

int CriticBank::index(int embodiment_id) const {
  for (size_t k = 0; k < ids_.size(); ++k) {
    if (ids_[k] == embodiment_id) return static_cast<int>(k);
  }
  throw InputError("no critic for embodiment id " + std::to_string(embodiment_id));
}

std::vector<ParamSet> CriticBank::InitParams(std::mt19937_64& rng) const {
  std::vector<ParamSet> out(ids_.size());
  for (size_t k = 0; k < ids_.size(); ++k) {
    std::vector<int> hidden;
    for (size_t i = 0; i + 1 < mlps_[k].layers.size(); ++i) {
      hidden.push_back(mlps_[k].layers[i].out);
    }
    Mlp::Create(out[k], "critic" + std::to_string(ids_[k]), mlps_[k].in(), hidden, 1, rng);
  }
  return out;
}

Var CriticBank::Value(Graph& g, int k, const ParamSet& params, Var state) const {
  return mlps_[k](g, params, state);
}

std::vector<double> CriticBank::Values(int k, const ParamSet& params,
                                       const Tensor& states) const {
  if (states.cols() != input_dim(k)) {
    throw InputError("critic " + std::to_string(ids_[k]) + ": expected " +
                     std::to_string(input_dim(k)) + " state entries, got " +
                     std::to_string(states.cols()));
  }
  Graph g(false);
  const Tensor& v = g.value(Value(g, k, params, g.Constant(states)));
  return std::vector<double>(v.vec().begin(), v.vec().end());
}

double GaussianLogProb(std::span<const float> x, std::span<const float> mean,
                       std::span<const float> log_std, std::span<const float> mask) {
  double lp = 0.0;
  for (size_t i = 0; i < x.size(); ++i) {
    if (mask[i] == 0.0f) continue;
    const double z = (static_cast<double>(x[i]) - mean[i]) / std::exp(log_std[i]);
    lp += -0.5 * z * z - log_std[i] - 0.5 * kLog2Pi;
  }
  return lp;
}

std::vector<int> ComputeAdvantages(RolloutBatch& b, double gamma, double lambda) {
  const int n = b.size();
  if (b.num_envs * b.steps != n || static_cast<int>(b.last_values.size()) != b.num_envs) {
    throw InputError("rollout batch: inconsistent env/step layout");
  }
  b.advantages.assign(n, 0.0);
  b.returns.assign(n, 0.0);
  std::vector<double> r(b.steps), v(b.steps + 1);
  std::vector<std::uint8_t> d(b.steps);
  for (int e = 0; e < b.num_envs; ++e) {
    for (int t = 0; t < b.steps; ++t) {
      const int i = t * b.num_envs + e;
      r[t] = b.rewards[i];
      v[t] = b.values[i];
      d[t] = b.dones[i];
    }
    v[b.steps] = b.last_values[e];
    GaeResult g = Gae(r, v, d, gamma, lambda);
    for (int t = 0; t < b.steps; ++t) {
      b.advantages[t * b.num_envs + e] = g.advantages[t];
      b.returns[t * b.num_envs + e] = g.returns[t];
    }
  }
  return NormalizeAdvantagesPerEmbodiment(b.advantages, b.embodiment);
}

PpoStats PpoUpdate(const RolloutBatch& batch, const ResidualActor& actor,
                   ParamSet& actor_params, const CriticBank& critics,
                   std::vector<ParamSet>& critic_params, const PpoConfig& cfg, double lr,
                   std::mt19937_64& rng, bool update_actor) {
  const int n = batch.size();
  PpoStats stats;
  if (n == 0) return stats;
  if (static_cast<int>(batch.advantages.size()) != n) {
    throw InputError("ppo: advantages not computed");
  }
  const ParamSet actor_backup = actor_params;
  const std::vector<ParamSet> critic_backup = critic_params;
  AdamOptions adam;
  adam.max_grad_norm = cfg.max_grad_norm;
  const int a_dim = actor.action_dim();

  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  const int mb_count = std::min(cfg.minibatches, n);
  int updates = 0;
  double value_weight = 0.0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (int m = 0; m < mb_count; ++m) {
      const int lo = m * n / mb_count, hi = (m + 1) * n / mb_count;
      std::span<const int> idx(order.data() + lo, hi - lo);
      const int b = hi - lo;
      Tensor input = GatherRows(batch.actor_input, idx);
      Tensor residual = GatherRows(batch.residual, idx);
      Tensor mask = GatherRows(batch.mask, idx);
      Tensor old_mean = GatherRows(batch.old_mean, idx);
      std::vector<double> old_lp(b), adv(b), norm_const(b), ent_const(b);
      for (int r = 0; r < b; ++r) {
        old_lp[r] = batch.old_log_prob[idx[r]];
        adv[r] = batch.advantages[idx[r]];
        double valid = 0.0;
        for (int d = 0; d < a_dim; ++d) valid += mask(r, d);
        norm_const[r] = -0.5 * kLog2Pi * valid;
        ent_const[r] = 0.5 * (1.0 + kLog2Pi) * valid;
      }

      Graph g;
      Var mean = actor.Mean(g, actor_params, g.Constant(input));
      Var log_std = actor.LogStd(g, actor_params);
      Var mask_v = g.Constant(mask);
      Var z = Mul(Sub(g.Constant(residual), mean), Exp(Scale(log_std, -1.0f)));
      Var log_std_sum = SumCols(Mul(mask_v, log_std));
      Var log_prob = Add(Sub(Scale(SumCols(Mul(Square(z), mask_v)), -0.5f), log_std_sum),
                         g.Constant(Column(norm_const)));
      Var ratio = Exp(Sub(log_prob, g.Constant(Column(old_lp))));
      Var adv_v = g.Constant(Column(adv));
      const float clip = static_cast<float>(cfg.clip);
      Var surrogate =
          Minimum(Mul(ratio, adv_v), Mul(Clamp(ratio, 1.0f - clip, 1.0f + clip), adv_v));
      Var entropy = Mean(Add(log_std_sum, g.Constant(Column(ent_const))));
      Var loss = Sub(Scale(Mean(surrogate), -1.0f),
                     Scale(entropy, static_cast<float>(cfg.entropy_coef)));
      const double loss_value = g.value(loss).item();

      // KL(old || current) before this step.
      const Tensor& cur_mean = g.value(mean);
      const Tensor& cur_ls = g.value(log_std);
      double kl = 0.0;
      for (int r = 0; r < b; ++r) {
        for (int d = 0; d < a_dim; ++d) {
          if (mask(r, d) == 0.0f) continue;
          const double ls_old = batch.old_log_std[d], ls_new = cur_ls[d];
          const double dm = static_cast<double>(old_mean(r, d)) - cur_mean(r, d);
          kl += ls_new - ls_old +
                (std::exp(2.0 * ls_old) + dm * dm) / (2.0 * std::exp(2.0 * ls_new)) - 0.5;
        }
      }
      kl /= b;

      if (!std::isfinite(loss_value) || !std::isfinite(kl)) {
        actor_params = actor_backup;
        critic_params = critic_backup;
        stats.aborted = true;
        return stats;
      }
      if (update_actor) {
        GradMap grads = ForwardBackward(loss, actor_params);
        AdamStep(actor_params, grads, lr, adam);
      }

      // Each critic regresses only on its own embodiment's samples.
      double value_loss = 0.0;
      for (int k = 0; k < critics.size(); ++k) {
        std::vector<int> rows;
        for (int r = 0; r < b; ++r) {
          if (batch.embodiment[idx[r]] == critics.ids()[k]) rows.push_back(idx[r]);
        }
        if (rows.empty()) continue;
        Tensor states(static_cast<int>(rows.size()), critics.input_dim(k));
        std::vector<double> targets(rows.size());
        for (size_t r = 0; r < rows.size(); ++r) {
          const auto& s = batch.privileged[rows[r]];
          if (static_cast<int>(s.size()) != critics.input_dim(k)) {
            throw InputError("ppo: privileged state size mismatch for critic " +
                             std::to_string(critics.ids()[k]));
          }
          std::copy(s.begin(), s.end(), states.row(static_cast<int>(r)).begin());
          targets[r] = batch.returns[rows[r]];
        }
        Graph gc;
        Var v = critics.Value(gc, k, critic_params[k], gc.Constant(states));
        Var vl = Scale(Mean(Square(Sub(v, gc.Constant(Column(targets))))),
                       static_cast<float>(cfg.value_loss_coef));
        const double vl_value = gc.value(vl).item();
        if (!std::isfinite(vl_value)) {
          actor_params = actor_backup;
          critic_params = critic_backup;
          stats.aborted = true;
          return stats;
        }
        GradMap cg = ForwardBackward(vl, critic_params[k]);
        AdamStep(critic_params[k], cg, lr, adam);
        value_loss += vl_value * rows.size();
      }
      stats.policy_loss += g.value(Mean(surrogate)).item() * -1.0;
      stats.entropy += g.value(entropy).item();
      stats.approx_kl += kl;
      stats.value_loss += value_loss;
      value_weight += b;
      ++updates;
    }
  }
  if (updates > 0) {
    stats.policy_loss /= updates;
    stats.entropy /= updates;
    stats.approx_kl /= updates;
    stats.value_loss /= value_weight;
  }
  return stats;
}

ResidualPolicy InitResidualPolicy(const DiffusionModel& prior,
                                  const std::vector<ToyEnvConfig>& envs,
                                  const PpoConfig& cfg, std::uint64_t seed) {
  cfg.Validate();
  ResidualPolicy p;
  p.ppo = cfg;
  p.seed = seed;
  p.prior_hash = prior.params.Hash();
  for (const auto& e : envs) {
    ToyEnvConfig c = e;
    c.residual_alpha = cfg.residual_alpha;
    c.coefficients["residual"] = cfg.residual_alpha;
    EmbodimentSpec s = ToyEnv(c).spec();
    const EmbodimentSpec& known = SpecFor(prior.specs, s.id);
    if (known.obs_dim != s.obs_dim || known.action_dim != s.action_dim) {
      throw InputError("env '" + s.name + "' does not match the prior's embodiment " +
                       std::to_string(s.id) + " dimensions");
    }
    p.specs.push_back(s);
    p.envs.push_back(std::move(c));
  }
  std::mt19937_64 rng(Mix(seed, 0x51ed270b27b3a6c1ULL));
  ResidualActor actor(prior.denoiser.cond_dim, prior.dims.action_dim, cfg.actor_hidden);
  p.actor = actor.InitParams(rng, cfg.init_std);
  CriticBank bank(p.specs, cfg.critic_hidden);
  p.critics = bank.InitParams(rng);
  return p;
}

PolicyRunner::PolicyRunner(const DiffusionModel& prior, const ResidualPolicy* residual,
                           std::vector<ToyEnvConfig> envs, int sample_steps,
                           double residual_coef)
    : prior_(prior),
      residual_(residual),
      net_(MakeNet(prior)),
      sample_steps_(sample_steps),
      residual_coef_(residual_coef) {
  if (residual_ != nullptr) {
    actor_.emplace(prior.denoiser.cond_dim, prior.dims.action_dim,
                   residual_->ppo.actor_hidden);
  }
  for (auto& c : envs) {
    ToyEnv env(std::move(c));
    const EmbodimentSpec& known = SpecFor(prior.specs, env.spec().id);
    if (known.obs_dim != env.spec().obs_dim || known.action_dim != env.spec().action_dim) {
      throw InputError("env '" + env.spec().name + "' disagrees with the checkpoint's "
                       "embodiment " + std::to_string(known.id) + " (normalization stats "
                       "were fitted for obs " + std::to_string(known.obs_dim) + ", action " +
                       std::to_string(known.action_dim) + ")");
    }
    ids_.push_back(env.spec().id);
    envs_.push_back(std::move(env));
    histories_.emplace_back(prior.obs_horizon, prior.dims.obs_dim);
  }
  if (static_cast<int>(prior.stats.obs.dim()) != prior.dims.obs_dim ||
      static_cast<int>(prior.stats.action.dim()) != prior.dims.action_dim) {
    throw InputError("checkpoint normalization stats do not match its unified dims");
  }
}

void PolicyRunner::Reset(int i, std::uint64_t seed) {
  std::vector<float> obs = envs_[i].Reset(seed);
  histories_[i].Reset(Pad(obs, prior_.dims.obs_dim));
}

Tensor PolicyRunner::Conditions() const {
  Tensor cond(num_envs(), prior_.denoiser.cond_dim);
  for (int i = 0; i < num_envs(); ++i) {
    std::vector<float> c =
        BuildCondition(histories_[i].Window(), envs_[i].command().vec(), prior_.stats);
    if (static_cast<int>(c.size()) != cond.cols()) {
      throw InputError("condition length " + std::to_string(c.size()) +
                       " does not match the denoiser's " + std::to_string(cond.cols()));
    }
    std::copy(c.begin(), c.end(), cond.row(i).begin());
  }
  return cond;
}

PolicyRunner::StepOutput PolicyRunner::Step(std::mt19937_64& prior_rng,
                                            std::mt19937_64* residual_rng) {
  const int n = num_envs(), a_dim = prior_.dims.action_dim, h = prior_.pred_horizon;
  StepOutput out;
  Tensor cond = Conditions();
  Tensor chunks = SampleNormalizedActions(prior_, net_, cond, ids_, prior_rng, sample_steps_);
  Tensor chunk_mask = ChunkMask(prior_, ids_);
  Tensor prior0(n, a_dim), mask(n, a_dim);
  for (int i = 0; i < n; ++i) {
    for (int d = 0; d < a_dim; ++d) {
      prior0(i, d) = chunks(i * h, d);
      mask(i, d) = chunk_mask(i * h, d);
    }
  }
  Tensor action = prior0;
  Tensor residual(n, a_dim);
  if (actor_) {
    ResidualActor::Output o = actor_->Forward(residual_->actor, cond, prior0);
    std::normal_distribution<float> normal(0.0f, 1.0f);
    for (int i = 0; i < n; ++i) {
      for (int d = 0; d < a_dim; ++d) {
        float delta = o.mean(i, d);
        if (residual_rng != nullptr) delta += o.std[d] * normal(*residual_rng);
        residual(i, d) = mask(i, d) * delta;
      }
      std::vector<float> composed =
          ComposeAction(prior0.row(i), residual.row(i), residual_coef_, mask.row(i));
      std::copy(composed.begin(), composed.end(), action.row(i).begin());
    }
    out.actor_input = Tensor(n, actor_->input_dim());
    for (int i = 0; i < n; ++i) {
      auto dst = out.actor_input.row(i);
      std::copy(cond.row(i).begin(), cond.row(i).end(), dst.begin());
      std::copy(prior0.row(i).begin(), prior0.row(i).end(), dst.begin() + cond.cols());
    }
    out.mean = o.mean;
    out.log_std.resize(a_dim);
    for (int d = 0; d < a_dim; ++d) out.log_std[d] = std::log(o.std[d]);
  }
  Tensor native = DenormalizeActions(prior_, action, mask);
  out.results.reserve(n);
  for (int i = 0; i < n; ++i) {
    const int valid = envs_[i].spec().action_dim;
    std::vector<float> a = Unpad(native.row(i), valid);
    std::vector<float> delta;
    if (actor_) delta = Unpad(residual.row(i), valid);
    StepResult r = envs_[i].Step(a, delta);
    if (!r.done) histories_[i].Push(Pad(r.obs, prior_.dims.obs_dim));
    out.results.push_back(std::move(r));
  }
  out.residual = std::move(residual);
  out.mask = std::move(mask);
  return out;
}

std::pair<double, double> EvalReport::Stat(int index, double EpisodeMetrics::*field) const {
  std::vector<double> v;
  for (size_t k = 0; k < episodes.size(); ++k) {
    if (index >= 0 && static_cast<int>(k) != index) continue;
    for (const auto& e : episodes[k]) v.push_back(e.*field);
  }
  if (v.empty()) return {0.0, 0.0};
  const double mean = std::accumulate(v.begin(), v.end(), 0.0) / v.size();
  double var = 0.0;
  for (double x : v) var += (x - mean) * (x - mean);
  const double sd = v.size() > 1 ? std::sqrt(var / (v.size() - 1)) : 0.0;
  return {mean, sd};
}

namespace {

void Accumulate(EpisodeMetrics& m, const StepResult& r) {
  m.ar += r.reward.total;
  m.lvt += r.reward.weighted("tracking_lin_vel");
  m.avt += r.reward.weighted("tracking_ang_vel");
  ++m.steps;
}

EvalReport EmptyReport(const std::vector<ToyEnvConfig>& envs) {
  EvalReport rep;
  for (const auto& e : envs) {
    rep.ids.push_back(e.id);
    rep.names.push_back(e.name);
  }
  rep.episodes.resize(envs.size());
  return rep;
}

std::uint64_t EpisodeSeed(std::uint64_t seed, int env_index, int episode) {
  return Mix(Mix(seed, 0x6a09e667f3bcc909ULL + env_index), episode);
}

}  // namespace

EvalReport EvaluatePolicy(const DiffusionModel& prior, const ResidualPolicy* residual,
                          const std::vector<ToyEnvConfig>& envs, const EvalOptions& options) {
  EvalReport rep = EmptyReport(envs);
  const double coef = residual ? residual->ppo.residual_coef : 0.0;
  for (std::uint64_t seed : options.seeds) {
    std::vector<ToyEnvConfig> fleet;
    std::vector<int> owner;
    for (size_t k = 0; k < envs.size(); ++k) {
      for (int e = 0; e < options.episodes; ++e) {
        ToyEnvConfig c = envs[k];
        if (residual) {
          c.residual_alpha = residual->ppo.residual_alpha;
          c.coefficients["residual"] = residual->ppo.residual_alpha;
        }
        fleet.push_back(c);
        owner.push_back(static_cast<int>(k));
      }
    }
    if (fleet.empty()) continue;
    PolicyRunner runner(prior, residual, fleet, options.sample_steps, coef);
    for (int i = 0; i < runner.num_envs(); ++i) {
      runner.Reset(i, EpisodeSeed(seed, owner[i], i % std::max(1, options.episodes)));
    }
    std::mt19937_64 prior_rng(Mix(seed, 0x3c6ef372fe94f82bULL));
    std::vector<EpisodeMetrics> metrics(runner.num_envs());
    std::vector<bool> finished(runner.num_envs(), false);
    // Envs share one horizon; a diverged env keeps stepping from its frozen
    // terminal state but stops accumulating.
    int remaining = runner.num_envs();
    while (remaining > 0) {
      auto out = runner.Step(prior_rng, nullptr);
      for (int i = 0; i < runner.num_envs(); ++i) {
        if (finished[i]) continue;
        Accumulate(metrics[i], out.results[i]);
        if (out.results[i].done) {
          finished[i] = true;
          metrics[i].mel = metrics[i].steps * runner.env(i).config().dt;
          --remaining;
          // Park the env at a fresh nominal state so later steps stay finite.
          runner.Reset(i, 0);
        }
      }
    }
    for (int i = 0; i < runner.num_envs(); ++i) rep.episodes[owner[i]].push_back(metrics[i]);
  }
  return rep;
}

EvalReport EvaluateExpert(const std::vector<ToyEnvConfig>& envs, const EvalOptions& options) {
  EvalReport rep = EmptyReport(envs);
  for (std::uint64_t seed : options.seeds) {
    for (size_t k = 0; k < envs.size(); ++k) {
      ToyEnv env(envs[k]);
      for (int e = 0; e < options.episodes; ++e) {
        env.Reset(EpisodeSeed(seed, static_cast<int>(k), e));
        EpisodeMetrics m;
        while (!env.done()) Accumulate(m, env.Step(env.ExpertAction()));
        m.mel = m.steps * env.config().dt;
        rep.episodes[k].push_back(m);
      }
    }
  }
  return rep;
}

ResidualPolicy TrainResidual(const DiffusionModel& prior,
                             const std::vector<ToyEnvConfig>& envs, const PpoConfig& cfg,
                             std::uint64_t seed,
                             const std::function<void(const IterationLog&)>& on_iteration) {
  ResidualPolicy policy = InitResidualPolicy(prior, envs, cfg, seed);
  const std::uint64_t prior_hash = prior.params.Hash();
  const ResidualActor actor(prior.denoiser.cond_dim, prior.dims.action_dim, cfg.actor_hidden);
  const CriticBank critics(policy.specs, cfg.critic_hidden);

  std::vector<ToyEnvConfig> fleet;
  for (const auto& e : policy.envs) {
    for (int i = 0; i < cfg.envs_per_embodiment; ++i) fleet.push_back(e);
  }
  PolicyRunner runner(prior, &policy, fleet, cfg.sample_steps, cfg.residual_coef);
  const int n = runner.num_envs();
  std::mt19937_64 prior_rng(Mix(seed, 1)), residual_rng(Mix(seed, 2)), reset_rng(Mix(seed, 3)),
      update_rng(Mix(seed, 4));
  for (int i = 0; i < n; ++i) runner.Reset(i, reset_rng());
  std::vector<int> time_limit(n, std::numeric_limits<int>::max());
  if (cfg.stagger_episodes) {
    for (int i = 0; i < n; ++i) {
      const int max_steps = runner.env(i).config().max_steps;
      time_limit[i] = 1 + static_cast<int>(reset_rng() % static_cast<std::uint64_t>(max_steps));
    }
  }

  auto critic_values = [&](std::vector<double>& out) {
    out.assign(n, 0.0);
    for (int k = 0; k < critics.size(); ++k) {
      std::vector<int> rows;
      for (int i = 0; i < n; ++i) {
        if (runner.embodiment(i) == critics.ids()[k]) rows.push_back(i);
      }
      if (rows.empty()) continue;
      Tensor states(static_cast<int>(rows.size()), critics.input_dim(k));
      for (size_t r = 0; r < rows.size(); ++r) {
        auto s = runner.env(rows[r]).PrivilegedState();
        std::copy(s.begin(), s.end(), states.row(static_cast<int>(r)).begin());
      }
      auto v = critics.Values(k, policy.critics[k], states);
      for (size_t r = 0; r < rows.size(); ++r) out[rows[r]] = v[r];
    }
  };

  double lr = cfg.lr;
  const int a_dim = prior.dims.action_dim;
  for (int it = 0; it < cfg.max_iterations; ++it) {
    const auto t0 = std::chrono::steady_clock::now();
    RolloutBatch batch;
    batch.num_envs = n;
    batch.steps = cfg.rollout_len;
    const int total = n * cfg.rollout_len;
    batch.actor_input = Tensor(total, actor.input_dim());
    batch.residual = Tensor(total, a_dim);
    batch.mask = Tensor(total, a_dim);
    batch.old_mean = Tensor(total, a_dim);
    std::vector<double> reward_sum(critics.size(), 0.0), lin_sum(critics.size(), 0.0),
        ang_sum(critics.size(), 0.0), step_count(critics.size(), 0.0);
    int divergences = 0;
    std::vector<double> values;
    for (int t = 0; t < cfg.rollout_len; ++t) {
      critic_values(values);
      std::vector<std::vector<float>> priv(n);
      for (int i = 0; i < n; ++i) priv[i] = runner.env(i).PrivilegedState();
      auto out = runner.Step(prior_rng, &residual_rng);
      batch.old_log_std = out.log_std;
      for (int i = 0; i < n; ++i) {
        const int row = t * n + i;
        std::copy(out.actor_input.row(i).begin(), out.actor_input.row(i).end(),
                  batch.actor_input.row(row).begin());
        std::copy(out.residual.row(i).begin(), out.residual.row(i).end(),
                  batch.residual.row(row).begin());
        std::copy(out.mask.row(i).begin(), out.mask.row(i).end(), batch.mask.row(row).begin());
        std::copy(out.mean.row(i).begin(), out.mean.row(i).end(),
                  batch.old_mean.row(row).begin());
        batch.old_log_prob.push_back(
            GaussianLogProb(out.residual.row(i), out.mean.row(i), out.log_std, out.mask.row(i)));
        const StepResult& r = out.results[i];
        batch.embodiment.push_back(runner.embodiment(i));
        batch.privileged.push_back(std::move(priv[i]));
        batch.rewards.push_back(r.reward.total * cfg.reward_scale);
        batch.values.push_back(values[i]);
        const bool done = r.done || runner.env(i).steps() >= time_limit[i];
        batch.dones.push_back(done ? 1 : 0);
        const int k = critics.index(runner.embodiment(i));
        reward_sum[k] += r.reward.total;
        lin_sum[k] += r.reward.weighted("tracking_lin_vel");
        ang_sum[k] += r.reward.weighted("tracking_ang_vel");
        step_count[k] += 1.0;
        if (r.diverged) ++divergences;
        if (done) {
          runner.Reset(i, reset_rng());
          time_limit[i] = std::numeric_limits<int>::max();
        }
      }
    }
    critic_values(batch.last_values);
    std::vector<int> excluded = ComputeAdvantages(batch, cfg.gamma, cfg.lambda);
    for (int id : excluded) {
      std::cerr << "warning: embodiment " << id
                << " has fewer than 2 samples; excluded from advantage normalization\n";
    }
    const bool warmup = it < cfg.critic_warmup;
    PpoStats stats = PpoUpdate(batch, actor, policy.actor, critics, policy.critics, cfg, lr,
                               update_rng, !warmup);
    if (stats.aborted) {
      std::cerr << "warning: non-finite PPO loss at iteration " << it
                << "; update skipped\n";
    } else if (!warmup) {
      lr = KlAdaptiveLr(stats.approx_kl, lr, cfg.desired_kl);
    }
    if (prior.params.Hash() != prior_hash) {
      throw std::logic_error("diffusion prior weights changed during residual training");
    }

    IterationLog log;
    log.iteration = it;
    log.policy = &policy;
    const int horizon = policy.envs.front().max_steps;
    double total_steps = 0.0, total_reward = 0.0, total_lin = 0.0, total_ang = 0.0;
    for (int k = 0; k < critics.size(); ++k) {
      log.embodiment_ar.push_back(step_count[k] > 0 ? reward_sum[k] / step_count[k] * horizon
                                                    : 0.0);
      total_steps += step_count[k];
      total_reward += reward_sum[k];
      total_lin += lin_sum[k];
      total_ang += ang_sum[k];
    }
    log.ar = total_reward / total_steps * horizon;
    log.lvt = total_lin / total_steps * horizon;
    log.avt = total_ang / total_steps * horizon;
    const double dt = policy.envs.front().dt;
    log.mel = divergences == 0 ? horizon * dt
                               : std::min<double>(horizon, total_steps / divergences) * dt;
    log.policy_loss = stats.policy_loss;
    log.value_loss = stats.value_loss;
    log.kl = stats.approx_kl;
    log.lr = lr;
    log.wall_ms = std::chrono::duration<double, std::milli>(
                      std::chrono::steady_clock::now() - t0).count();
    if (on_iteration) on_iteration(log);
  }
  return policy;
}

Checkpoint ResidualCheckpoint(const ResidualPolicy& policy, const DiffusionModel& prior) {
  Checkpoint prior_ck = DiffusionCheckpoint(prior);
  Checkpoint ck;
  ck.kind = CheckpointKind::kResidual;
  std::vector<int> critic_ids;
  for (const auto& s : policy.specs) critic_ids.push_back(s.id);
  ck.config = {
      {"ppo", policy.ppo},
      {"specs", policy.specs},
      {"envs", policy.envs},
      {"critic_ids", critic_ids},
      {"prior_hash", Hex(policy.prior_hash)},
      {"prior", {{"config", prior_ck.config}, {"seed", prior_ck.seed}}},
  };
  ck.stats = prior.stats;
  ck.seed = policy.seed;
  for (auto& t : prior_ck.tensors) ck.tensors.push_back({"prior/" + t.name, t.value});
  for (const auto& p : policy.actor.entries()) ck.tensors.push_back({p.name, p.value});
  for (const auto& c : policy.critics) {
    for (const auto& p : c.entries()) ck.tensors.push_back({p.name, p.value});
  }
  return ck;
}

std::pair<ResidualPolicy, DiffusionModel> ResidualFromCheckpoint(const Checkpoint& ck) {
  if (ck.kind != CheckpointKind::kResidual) {
    throw FormatError("checkpoint kind mismatch: expected residual");
  }
  Checkpoint prior_ck;
  prior_ck.kind = CheckpointKind::kDiffusion;
  ResidualPolicy p;
  std::string prior_hash;
  try {
    prior_ck.config = ck.config.at("prior").at("config");
    prior_ck.seed = ck.config.at("prior").at("seed").get<std::uint64_t>();
    p.ppo = ck.config.at("ppo").get<PpoConfig>();
    p.specs = ck.config.at("specs").get<std::vector<EmbodimentSpec>>();
    p.envs = ck.config.at("envs").get<std::vector<ToyEnvConfig>>();
    prior_hash = ck.config.at("prior_hash").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("residual checkpoint: bad config echo: ") + e.what());
  }
  prior_ck.stats = ck.stats;
  std::vector<NamedTensor> own;
  for (const auto& t : ck.tensors) {
    if (t.name.rfind("prior/", 0) == 0) {
      prior_ck.tensors.push_back({t.name.substr(6), t.value});
    } else {
      own.push_back(t);
    }
  }
  DiffusionModel prior = DiffusionFromCheckpoint(prior_ck);
  p.seed = ck.seed;
  p.prior_hash = prior.params.Hash();
  if (Hex(p.prior_hash) != prior_hash) {
    throw FormatError("residual checkpoint: embedded prior does not match its recorded hash");
  }
  // Rebuild the layout and require an exact name/shape match.
  std::mt19937_64 rng(0);
  ResidualActor actor(prior.denoiser.cond_dim, prior.dims.action_dim, p.ppo.actor_hidden);
  ParamSet actor_layout = actor.InitParams(rng);
  CriticBank bank(p.specs, p.ppo.critic_hidden);
  std::vector<ParamSet> critic_layout = bank.InitParams(rng);
  size_t cursor = 0;
  auto fill = [&](const ParamSet& layout, ParamSet& out) {
    for (const auto& want : layout.entries()) {
      if (cursor >= own.size() || own[cursor].name != want.name ||
          !own[cursor].value.SameShape(want.value)) {
        throw FormatError("residual checkpoint: expected tensor '" + want.name + "' " +
                          want.value.ShapeString());
      }
      out.Add(want.name, own[cursor].value);
      ++cursor;
    }
  };
  fill(actor_layout, p.actor);
  p.critics.resize(critic_layout.size());
  for (size_t k = 0; k < critic_layout.size(); ++k) fill(critic_layout[k], p.critics[k]);
  if (cursor != own.size()) {
    throw FormatError("residual checkpoint: " + std::to_string(own.size() - cursor) +
                      " unexpected tensors");
  }
  return {std::move(p), std::move(prior)};
}

}  // namespace unigait
