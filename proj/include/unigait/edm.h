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

// Elucidated diffusion: preconditioning, training-noise sampling, masked
// denoising score matching, the Karras noise schedule, and deterministic
// Euler integration of the probability-flow ODE.

#ifndef UNIGAIT_EDM_H_
#define UNIGAIT_EDM_H_

#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <vector>

#include <nlohmann/json.hpp>

#include "unigait/alignment.h"
#include "unigait/denoiser.h"
#include "unigait/graph.h"
#include "unigait/optim.h"
#include "unigait/params.h"
#include "unigait/tensor.h"

namespace unigait {

struct EdmConfig {
  double sigma_data = 0.5;
  double sigma_min = 0.002;
  double sigma_max = 80.0;
  double rho = 7.0;
  double p_mean = -1.2;
  double p_std = 1.2;
  int sample_steps = 5;

  void Validate() const;
  bool operator==(const EdmConfig&) const = default;
};

void to_json(nlohmann::json& j, const EdmConfig& c);
void from_json(const nlohmann::json& j, EdmConfig& c);

struct PreconditionCoeffs {
  double c_skip = 0.0;
  double c_out = 0.0;
  double c_in = 0.0;
  double c_noise = 0.0;
};

// Throws InputError for sigma <= 0.
PreconditionCoeffs Precondition(double sigma, double sigma_data);
// (sigma_data^2 + sigma^2) / (sigma * sigma_data)^2.
double LossWeight(double sigma, double sigma_data);

// exp(z) with z ~ Normal(p_mean, p_std).
double SampleTrainingSigma(const EdmConfig& config, std::mt19937_64& rng);

// sigma_0 = sigma_min < ... < sigma_steps = sigma_max, interpolated in
// sigma^(1/rho) space.
std::vector<double> KarrasSchedule(int steps, const EdmConfig& config);

// Normalized training batch. Tokens are [B * horizon, action_dim] rows.
struct ChunkBatch {
  Tensor condition;
  Tensor actions;
  Tensor mask;
  int horizon = 1;

  int size() const { return condition.rows(); }
};

// Per-chunk noise levels and unit Gaussian noise for one loss evaluation.
struct NoiseDraw {
  std::vector<float> sigma;
  Tensor eps;
};

NoiseDraw DrawNoise(const ChunkBatch& batch, const EdmConfig& config,
                    std::mt19937_64& rng);

// Denoiser expressed on a graph: masked noisy tokens and per-chunk sigma in,
// clean-token estimate out. Lets oracles stand in for the network.
using GraphDenoiser =
    std::function<Var(Graph& g, Var noisy, std::span<const float> sigma)>;

// Mean over chunks with at least one valid entry of
//   LossWeight(sigma) * mean_valid((mask * (D(mask * (a0 + sigma eps)) - a0))^2).
// Throws InputError on an empty batch or one with no valid entries.
Var MaskedDsmLoss(Graph& g, const GraphDenoiser& denoiser,
                  const ChunkBatch& batch, const NoiseDraw& noise,
                  const EdmConfig& config);

// c_skip x + c_out F(c_in x, c_noise, condition), per-chunk coefficients.
Var PreconditionedDenoise(Graph& g, const DenoiserNet& net,
                          const ParamSet& params, Var noisy,
                          std::span<const float> sigma, Var condition,
                          const EdmConfig& config);

// Binds a network and its condition matrix into a GraphDenoiser.
GraphDenoiser NetworkDenoiser(const DenoiserNet& net, const ParamSet& params,
                              const Tensor& condition, const EdmConfig& config);

// Value-level denoiser used by the sampler.
using ChunkDenoiser =
    std::function<Tensor(const Tensor& noisy, std::span<const float> sigma)>;

// Inference-only network denoiser (no tape).
ChunkDenoiser NetworkChunkDenoiser(const DenoiserNet& net,
                                   const ParamSet& params,
                                   const Tensor& condition,
                                   const EdmConfig& config);

// Euler steps of the probability-flow ODE from `initial` (taken to be at
// sigma_max) down to sigma_min; returns mask * a_0. The denoiser always sees
// mask * a_i. Throws NumericError if the state becomes non-finite.
Tensor EulerSampleFrom(const ChunkDenoiser& denoiser, const Tensor& mask,
                       Tensor initial, int horizon, const EdmConfig& config);
// Same, starting from sigma_max * N(0, I).
Tensor EulerSample(const ChunkDenoiser& denoiser, const Tensor& mask,
                   int horizon, const EdmConfig& config, std::mt19937_64& rng);

struct DiffusionTrainConfig {
  int epochs = 60;
  int batch_size = 512;
  double lr = 3e-4;
  double ema_rate = 0.999;
  AdamOptions adam;

  bool operator==(const DiffusionTrainConfig&) const = default;
};

void to_json(nlohmann::json& j, const DiffusionTrainConfig& c);
void from_json(const nlohmann::json& j, DiffusionTrainConfig& c);

// Everything needed to run the prior at inference time.
struct DiffusionModel {
  DenoiserConfig denoiser;
  EdmConfig edm;
  DiffusionTrainConfig train;
  std::vector<EmbodimentSpec> specs;
  UnifiedDims dims;
  int obs_horizon = kDefaultObsHorizon;
  int pred_horizon = kDefaultPredHorizon;
  int command_dim = kCommandDim;
  NormStats stats;
  std::uint64_t seed = 0;
  Tensor fourier_bank;
  // EMA weights; these are the serving weights.
  ParamSet params;
};

struct EpochLog {
  int epoch = 0;
  double loss = 0.0;
  double lr = 0.0;
  double wall_ms = 0.0;
};

// Normalizes a dataset into one ChunkBatch holding every sample.
ChunkBatch PrepareBatch(const UnifiedDataset& dataset, const NormStats& stats);

// Trains on `dataset` (its NormStats are refitted if empty). The denoiser
// input/condition sizes are taken from the dataset. Returns the EMA weights.
// Throws NumericError with the epoch and step if the loss diverges.
DiffusionModel TrainDiffusion(
    const UnifiedDataset& dataset, DenoiserConfig denoiser,
    const EdmConfig& edm, const DiffusionTrainConfig& train, std::uint64_t seed,
    const std::function<void(const EpochLog&)>& on_epoch = nullptr);

// Generic trainer over a prepared batch; used by TrainDiffusion and by
// oracle tests on synthetic data. `params` starts at the initialization.
ParamSet TrainDenoiserParams(
    const DenoiserNet& net, ParamSet params, const ChunkBatch& data,
    const EdmConfig& edm, const DiffusionTrainConfig& train,
    std::mt19937_64& rng,
    const std::function<void(const EpochLog&)>& on_epoch = nullptr);

// Samples normalized chunks for a batch of conditions, then denormalizes each
// token row into native-scale unified actions (padded dims zero).
// `condition` is [B, cond_dim]; `embodiment_ids` has B entries.
Tensor SampleActions(const DiffusionModel& model, const DenoiserNet& net,
                     const Tensor& condition,
                     std::span<const int> embodiment_ids,
                     std::mt19937_64& rng, int steps = 0);

// [B * H, A] validity mask for a batch of embodiment ids.
Tensor ChunkMask(const DiffusionModel& model, std::span<const int> embodiment_ids);

// As SampleActions but stays in the normalized action space.
Tensor SampleNormalizedActions(const DiffusionModel& model, const DenoiserNet& net,
                               const Tensor& condition,
                               std::span<const int> embodiment_ids,
                               std::mt19937_64& rng, int steps = 0);

// Native-scale rows with padded dims zeroed.
Tensor DenormalizeActions(const DiffusionModel& model, const Tensor& normalized,
                          const Tensor& mask);

// Builds the network for a trained model with its stored frequency bank.
DenoiserNet MakeNet(const DiffusionModel& model);

}  // namespace unigait

#endif  // UNIGAIT_EDM_H_
