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

// Residual adaptation on top of a frozen diffusion prior: a shared Gaussian
// residual actor, one critic per embodiment over privileged state, GAE, and
// PPO with per-embodiment advantage normalization and a KL-adaptive step.

#ifndef UNIGAIT_RLADAPT_H_
#define UNIGAIT_RLADAPT_H_

#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "unigait/edm.h"
#include "unigait/envsim.h"
#include "unigait/graph.h"
#include "unigait/nn.h"
#include "unigait/params.h"
#include "unigait/store.h"
#include "unigait/tensor.h"

namespace unigait {

inline constexpr float kLogStdMin = -20.0f;
inline constexpr float kLogStdMax = 4.0f;

struct PpoConfig {
  double desired_kl = 0.01;
  double lr = 4e-4;
  double gamma = 0.99;
  double lambda = 0.95;
  int minibatches = 4;
  int epochs = 5;
  double entropy_coef = 0.001;
  double clip = 0.2;
  // a = prior + residual_coef * delta_a, in the normalized action space.
  double residual_coef = 0.2;
  // Weight of the L1 residual penalty added to every env's reward.
  double residual_alpha = -0.01;
  int rollout_len = 24;
  int max_iterations = 100;
  int envs_per_embodiment = 8;
  std::vector<int> actor_hidden = {64, 64};
  std::vector<int> critic_hidden = {64, 64};
  double init_std = 1.0;
  double value_loss_coef = 1.0;
  // Global gradient clip per update; 0 disables it.
  double max_grad_norm = 0.0;
  // Rewards are multiplied by this before GAE and critic regression.
  double reward_scale = 0.1;
  // Denoising steps for the prior; 0 uses the checkpoint's setting.
  int sample_steps = 0;
  // Cut each env's first episode at a random step so resets spread across
  // iterations instead of arriving for the whole fleet at once.
  bool stagger_episodes = true;
  // Leading iterations that fit only the critics. The actor keeps its zero
  // residual until its advantages come from fitted values.
  int critic_warmup = 0;

  // Full-scale network sizes.
  static PpoConfig PaperPreset();
  // Throws InputError on non-positive fields or clip outside (0, 1).
  void Validate() const;
};

void to_json(nlohmann::json& j, const PpoConfig& c);
void from_json(const nlohmann::json& j, PpoConfig& c);

// --- building blocks -------------------------------------------------------

// a = prior + coef * residual on valid dims; padded dims keep the prior
// (zero). Throws InputError on length mismatch.
std::vector<float> ComposeAction(std::span<const float> prior,
                                 std::span<const float> residual, double coef,
                                 std::span<const float> mask);

struct GaeResult {
  std::vector<double> advantages;
  std::vector<double> returns;
};

// `values` has one extra bootstrap entry. A done at t zeroes both the
// bootstrap and the recursion across t. Throws InputError on length mismatch.
GaeResult Gae(std::span<const double> rewards, std::span<const double> values,
              std::span<const std::uint8_t> dones, double gamma, double lambda);

// z-scores advantages within each embodiment id. Groups with fewer than two
// samples are zeroed and their ids returned so the caller can warn.
std::vector<int> NormalizeAdvantagesPerEmbodiment(std::vector<double>& advantages,
                                                  std::span<const int> embodiment_ids,
                                                  double eps = 1e-8);

double KlAdaptiveLr(double approx_kl, double lr, double desired_kl);

// Single-sample clipped surrogate min(r A, clip(r, 1 - eps, 1 + eps) A).
double ClippedSurrogate(double ratio, double advantage, double clip);

// Shared residual policy: input is concat(condition, executed prior action).
class ResidualActor {
 public:
  ResidualActor(int cond_dim, int action_dim, std::vector<int> hidden);

  int cond_dim() const { return cond_dim_; }
  int action_dim() const { return action_dim_; }
  int input_dim() const { return cond_dim_ + action_dim_; }

  // Zero-initialized head and log-std log(init_std).
  ParamSet InitParams(std::mt19937_64& rng, double init_std = 1.0) const;

  Var Mean(Graph& g, const ParamSet& params, Var input) const;
  // Clamped to [kLogStdMin, kLogStdMax]; [1, action_dim].
  Var LogStd(Graph& g, const ParamSet& params) const;

  struct Output {
    Tensor mean;             // [B, action_dim]
    std::vector<float> std;  // action_dim
  };
  // Throws InputError on dimension mismatch.
  Output Forward(const ParamSet& params, const Tensor& condition,
                 const Tensor& prior_action) const;

 private:
  int cond_dim_;
  int action_dim_;
  Mlp mlp_;
};

// One value MLP per embodiment over that embodiment's privileged state.
class CriticBank {
 public:
  CriticBank(const std::vector<EmbodimentSpec>& specs, std::vector<int> hidden);

  int size() const { return static_cast<int>(ids_.size()); }
  const std::vector<int>& ids() const { return ids_; }
  // Index of the critic owning `embodiment_id`; throws InputError if none.
  int index(int embodiment_id) const;
  int input_dim(int k) const { return mlps_[k].in(); }

  std::vector<ParamSet> InitParams(std::mt19937_64& rng) const;
  Var Value(Graph& g, int k, const ParamSet& params, Var state) const;
  std::vector<double> Values(int k, const ParamSet& params, const Tensor& states) const;

 private:
  std::vector<int> ids_;
  std::vector<Mlp> mlps_;
};

// Flat on-policy batch; sample i belongs to env i % num_envs at step
// i / num_envs.
struct RolloutBatch {
  int num_envs = 0;
  int steps = 0;
  std::vector<int> embodiment;
  Tensor actor_input;  // [N, cond + A]
  Tensor residual;     // [N, A], zero on padded dims
  Tensor mask;         // [N, A]
  Tensor old_mean;     // [N, A]
  std::vector<float> old_log_std;
  std::vector<double> old_log_prob;
  std::vector<std::vector<float>> privileged;
  std::vector<double> rewards;
  std::vector<double> values;
  std::vector<std::uint8_t> dones;
  // One bootstrap value per env.
  std::vector<double> last_values;
  std::vector<double> advantages;
  std::vector<double> returns;

  int size() const { return static_cast<int>(embodiment.size()); }
};

// GAE per env sequence followed by per-embodiment normalization. Returns
// the embodiment ids excluded from normalization.
std::vector<int> ComputeAdvantages(RolloutBatch& batch, double gamma, double lambda);

// Gaussian log-density over valid dims.
double GaussianLogProb(std::span<const float> x, std::span<const float> mean,
                       std::span<const float> log_std, std::span<const float> mask);

struct PpoStats {
  double policy_loss = 0.0;
  double value_loss = 0.0;
  double entropy = 0.0;
  double approx_kl = 0.0;
  bool aborted = false;
};

// `epochs` x `minibatches` clipped-PPO passes. Critic k only sees samples of
// its embodiment and is untouched by minibatches without any. A non-finite
// loss restores every parameter and returns with aborted = true. With
// `update_actor` false only the critics move.
PpoStats PpoUpdate(const RolloutBatch& batch, const ResidualActor& actor,
                   ParamSet& actor_params, const CriticBank& critics,
                   std::vector<ParamSet>& critic_params, const PpoConfig& cfg,
                   double lr, std::mt19937_64& rng, bool update_actor = true);

// --- rollouts and evaluation ---------------------------------------------

struct ResidualPolicy {
  PpoConfig ppo;
  std::vector<EmbodimentSpec> specs;
  std::vector<ToyEnvConfig> envs;
  ParamSet actor;
  std::vector<ParamSet> critics;
  std::uint64_t seed = 0;
  // Hash of the prior's serving weights the policy was trained against.
  std::uint64_t prior_hash = 0;
};

// Zero-head actor and fresh critics for `prior`'s embodiments.
ResidualPolicy InitResidualPolicy(const DiffusionModel& prior,
                                  const std::vector<ToyEnvConfig>& envs,
                                  const PpoConfig& cfg, std::uint64_t seed);

// Runs the frozen prior (plus the residual when given) over a set of envs:
// every step samples a chunk, executes its first action, and slides the
// observation window.
class PolicyRunner {
 public:
  // Envs must be embodiments known to `prior`. `residual` may be null.
  PolicyRunner(const DiffusionModel& prior, const ResidualPolicy* residual,
               std::vector<ToyEnvConfig> envs, int sample_steps,
               double residual_coef);

  int num_envs() const { return static_cast<int>(envs_.size()); }
  ToyEnv& env(int i) { return envs_[i]; }
  int embodiment(int i) const { return envs_[i].spec().id; }

  void Reset(int i, std::uint64_t seed);

  struct StepOutput {
    std::vector<StepResult> results;
    // Filled when the residual is stochastic.
    Tensor actor_input;
    Tensor residual;
    Tensor mean;
    std::vector<float> log_std;
    Tensor mask;
  };
  // `residual_rng` null takes the mean residual. With no residual policy
  // the executed action is exactly the prior's first action.
  StepOutput Step(std::mt19937_64& prior_rng, std::mt19937_64* residual_rng);

 private:
  Tensor Conditions() const;

  const DiffusionModel& prior_;
  const ResidualPolicy* residual_;
  DenoiserNet net_;
  std::optional<ResidualActor> actor_;
  std::vector<ToyEnv> envs_;
  std::vector<ObservationHistory> histories_;
  std::vector<int> ids_;
  int sample_steps_;
  double residual_coef_;
};

struct EpisodeMetrics {
  double ar = 0.0;   // return
  double mel = 0.0;  // seconds survived
  double lvt = 0.0;  // summed weighted linear tracking reward
  double avt = 0.0;  // summed weighted angular tracking reward
  int steps = 0;
};

struct EvalOptions {
  int episodes = 2;
  std::vector<std::uint64_t> seeds = {0};
  int sample_steps = 0;
};

struct EvalReport {
  std::vector<int> ids;
  std::vector<std::string> names;
  // per embodiment, every episode across seeds
  std::vector<std::vector<EpisodeMetrics>> episodes;
  // Mean and sample std of one metric; index -1 pools all embodiments.
  std::pair<double, double> Stat(int index, double EpisodeMetrics::*field) const;
};

// Full-horizon episodes of the composed policy (prior-only when `residual`
// is null). The residual acts with its mean.
EvalReport EvaluatePolicy(const DiffusionModel& prior, const ResidualPolicy* residual,
                          const std::vector<ToyEnvConfig>& envs, const EvalOptions& options);

// Same protocol for the scripted expert.
EvalReport EvaluateExpert(const std::vector<ToyEnvConfig>& envs, const EvalOptions& options);

struct IterationLog {
  int iteration = 0;
  // Per-step rates over the rollout, scaled to the full episode horizon.
  double ar = 0.0;
  double mel = 0.0;
  double lvt = 0.0;
  double avt = 0.0;
  double policy_loss = 0.0;
  double value_loss = 0.0;
  double kl = 0.0;
  double lr = 0.0;
  std::vector<double> embodiment_ar;
  double wall_ms = 0.0;
  // The policy after this iteration's update. Valid only inside the callback.
  const ResidualPolicy* policy = nullptr;
};

// PPO on the residual with the prior frozen. Throws std::logic_error if the
// prior's weights change during training.
ResidualPolicy TrainResidual(const DiffusionModel& prior,
                             const std::vector<ToyEnvConfig>& envs, const PpoConfig& cfg,
                             std::uint64_t seed,
                             const std::function<void(const IterationLog&)>& on_iteration = nullptr);

// Residual checkpoints embed the prior under "prior/" so evaluation needs
// only this file.
Checkpoint ResidualCheckpoint(const ResidualPolicy& policy, const DiffusionModel& prior);
// Throws FormatError if the tensors do not match the echoed architecture.
std::pair<ResidualPolicy, DiffusionModel> ResidualFromCheckpoint(const Checkpoint& checkpoint);

}  // namespace unigait

#endif  // UNIGAIT_RLADAPT_H_
