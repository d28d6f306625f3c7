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

#include "unigait/edm.h"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <string>

#include "unigait/error.h"

namespace unigait {

namespace {

constexpr std::uint64_t kTrainStream = 0xd1b54a32d192ed03ULL;

// Expands one value per chunk into a [B * horizon, 1] column.
Tensor ChunkColumn(std::span<const double> per_chunk, int horizon) {
  Tensor col(static_cast<int>(per_chunk.size()) * horizon, 1);
  for (std::size_t b = 0; b < per_chunk.size(); ++b) {
    for (int t = 0; t < horizon; ++t) {
      col[b * horizon + t] = static_cast<float>(per_chunk[b]);
    }
  }
  return col;
}

int HorizonOf(const Tensor& tokens, std::size_t chunks) {
  if (chunks == 0 || tokens.rows() % static_cast<int>(chunks) != 0) {
    throw InputError("token rows " + std::to_string(tokens.rows()) +
                     " do not split into " + std::to_string(chunks) + " chunks");
  }
  return tokens.rows() / static_cast<int>(chunks);
}

ChunkBatch Gather(const ChunkBatch& data, std::span<const int> rows) {
  const int h = data.horizon;
  const int c = data.condition.cols(), a = data.actions.cols();
  ChunkBatch out;
  out.horizon = h;
  out.condition = Tensor(static_cast<int>(rows.size()), c);
  out.actions = Tensor(static_cast<int>(rows.size()) * h, a);
  out.mask = Tensor(static_cast<int>(rows.size()) * h, a);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const int r = rows[i];
    std::copy_n(data.condition.row(r).begin(), c, out.condition.row(i).begin());
    std::copy_n(&data.actions.data()[static_cast<std::size_t>(r) * h * a], h * a,
                &out.actions.data()[i * h * a]);
    std::copy_n(&data.mask.data()[static_cast<std::size_t>(r) * h * a], h * a,
                &out.mask.data()[i * h * a]);
  }
  return out;
}

}  // namespace

void EdmConfig::Validate() const {
  if (!(sigma_min > 0.0 && sigma_min < sigma_max)) {
    throw InputError("edm config needs 0 < sigma_min < sigma_max");
  }
  if (!(rho > 0.0)) throw InputError("edm config needs rho > 0");
  if (!(sigma_data > 0.0)) throw InputError("edm config needs sigma_data > 0");
  if (!(p_std > 0.0)) throw InputError("edm config needs p_std > 0");
  if (sample_steps < 1) throw InputError("edm config needs sample_steps >= 1");
}

void to_json(nlohmann::json& j, const EdmConfig& c) {
  j = {{"sigma_data", c.sigma_data}, {"sigma_min", c.sigma_min},
       {"sigma_max", c.sigma_max},   {"rho", c.rho},
       {"p_mean", c.p_mean},         {"p_std", c.p_std},
       {"sample_steps", c.sample_steps}};
}

void from_json(const nlohmann::json& j, EdmConfig& c) {
  EdmConfig d;
  c.sigma_data = j.value("sigma_data", d.sigma_data);
  c.sigma_min = j.value("sigma_min", d.sigma_min);
  c.sigma_max = j.value("sigma_max", d.sigma_max);
  c.rho = j.value("rho", d.rho);
  c.p_mean = j.value("p_mean", d.p_mean);
  c.p_std = j.value("p_std", d.p_std);
  c.sample_steps = j.value("sample_steps", d.sample_steps);
}

PreconditionCoeffs Precondition(double sigma, double sigma_data) {
  if (!(sigma > 0.0)) {
    throw InputError("precondition needs sigma > 0, got " + std::to_string(sigma));
  }
  const double total = sigma_data * sigma_data + sigma * sigma;
  PreconditionCoeffs c;
  c.c_skip = sigma_data * sigma_data / total;
  c.c_out = sigma * sigma_data / std::sqrt(total);
  c.c_in = 1.0 / std::sqrt(total);
  c.c_noise = std::log(sigma) / 4.0;
  return c;
}

double LossWeight(double sigma, double sigma_data) {
  const double s = sigma * sigma_data;
  return (sigma_data * sigma_data + sigma * sigma) / (s * s);
}

double SampleTrainingSigma(const EdmConfig& config, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(config.p_mean, config.p_std);
  return std::exp(normal(rng));
}

std::vector<double> KarrasSchedule(int steps, const EdmConfig& config) {
  if (steps < 1) throw InputError("noise schedule needs at least one step");
  const double lo = std::pow(config.sigma_min, 1.0 / config.rho);
  const double hi = std::pow(config.sigma_max, 1.0 / config.rho);
  std::vector<double> sigmas(steps + 1);
  for (int i = 0; i <= steps; ++i) {
    const double frac = static_cast<double>(i) / steps;
    sigmas[i] = std::pow(lo + frac * (hi - lo), config.rho);
  }
  // Pin the endpoints against pow round-off.
  sigmas.front() = config.sigma_min;
  sigmas.back() = config.sigma_max;
  return sigmas;
}

NoiseDraw DrawNoise(const ChunkBatch& batch, const EdmConfig& config,
                    std::mt19937_64& rng) {
  NoiseDraw draw;
  draw.sigma.resize(batch.size());
  for (auto& s : draw.sigma) s = static_cast<float>(SampleTrainingSigma(config, rng));
  draw.eps = Tensor(batch.actions.rows(), batch.actions.cols());
  std::normal_distribution<float> normal(0.0f, 1.0f);
  for (auto& e : draw.eps.vec()) e = normal(rng);
  return draw;
}

Var MaskedDsmLoss(Graph& g, const GraphDenoiser& denoiser,
                  const ChunkBatch& batch, const NoiseDraw& noise,
                  const EdmConfig& config) {
  const int b_count = batch.size();
  if (b_count == 0) throw InputError("masked loss on an empty batch");
  const int h = batch.horizon;
  const Tensor& a0 = batch.actions;
  if (a0.rows() != b_count * h || !a0.SameShape(batch.mask) ||
      !a0.SameShape(noise.eps) || static_cast<int>(noise.sigma.size()) != b_count) {
    throw InputError("masked loss: inconsistent batch shapes");
  }
  const int width = h * a0.cols();

  std::vector<double> valid(b_count, 0.0);
  int valid_chunks = 0;
  for (int b = 0; b < b_count; ++b) {
    for (int i = 0; i < width; ++i) valid[b] += batch.mask.data()[b * width + i];
    if (valid[b] > 0.0) ++valid_chunks;
  }
  if (valid_chunks == 0) throw InputError("masked loss: batch has no valid entries");

  Tensor noisy(a0.rows(), a0.cols());
  for (std::size_t i = 0; i < noisy.size(); ++i) {
    const float sigma = noise.sigma[i / width];
    noisy[i] = batch.mask[i] * (a0[i] + sigma * noise.eps[i]);
  }
  std::vector<double> weight(b_count, 0.0);
  for (int b = 0; b < b_count; ++b) {
    if (valid[b] > 0.0) {
      weight[b] = LossWeight(noise.sigma[b], config.sigma_data) /
                  (valid[b] * valid_chunks);
    }
  }
  Var denoised = denoiser(g, g.Constant(std::move(noisy)), noise.sigma);
  Var residual = Mul(Sub(denoised, g.Constant(a0)), g.Constant(batch.mask));
  return Sum(Mul(Square(residual), g.Constant(ChunkColumn(weight, h))));
}

Var PreconditionedDenoise(Graph& g, const DenoiserNet& net,
                          const ParamSet& params, Var noisy,
                          std::span<const float> sigma, Var condition,
                          const EdmConfig& config) {
  const int h = HorizonOf(noisy.value(), sigma.size());
  std::vector<double> skip(sigma.size()), out(sigma.size()), in(sigma.size());
  std::vector<float> c_noise(sigma.size());
  for (std::size_t b = 0; b < sigma.size(); ++b) {
    const PreconditionCoeffs c = Precondition(sigma[b], config.sigma_data);
    skip[b] = c.c_skip;
    out[b] = c.c_out;
    in[b] = c.c_in;
    c_noise[b] = static_cast<float>(c.c_noise);
  }
  Var scaled = Mul(noisy, g.Constant(ChunkColumn(in, h)));
  Var raw = net.Forward(g, params, scaled, c_noise, condition);
  return Add(Mul(noisy, g.Constant(ChunkColumn(skip, h))),
             Mul(raw, g.Constant(ChunkColumn(out, h))));
}

GraphDenoiser NetworkDenoiser(const DenoiserNet& net, const ParamSet& params,
                              const Tensor& condition, const EdmConfig& config) {
  return [&net, &params, condition, config](Graph& g, Var noisy,
                                            std::span<const float> sigma) {
    return PreconditionedDenoise(g, net, params, noisy, sigma,
                                 g.Constant(condition), config);
  };
}

ChunkDenoiser NetworkChunkDenoiser(const DenoiserNet& net,
                                   const ParamSet& params,
                                   const Tensor& condition,
                                   const EdmConfig& config) {
  return [&net, &params, condition, config](const Tensor& noisy,
                                            std::span<const float> sigma) {
    Graph g(/*record=*/false);
    Var d = PreconditionedDenoise(g, net, params, g.Constant(noisy), sigma,
                                  g.Constant(condition), config);
    return d.value();
  };
}

Tensor EulerSampleFrom(const ChunkDenoiser& denoiser, const Tensor& mask,
                       Tensor initial, int horizon, const EdmConfig& config) {
  if (!initial.SameShape(mask)) throw InputError("sampler: mask shape mismatch");
  if (horizon <= 0 || initial.rows() % horizon != 0) {
    throw InputError("sampler: rows do not split into chunks");
  }
  const int chunks = initial.rows() / horizon;
  const std::vector<double> sigmas = KarrasSchedule(config.sample_steps, config);
  Tensor x = std::move(initial);
  Tensor masked(x.rows(), x.cols());
  for (int i = config.sample_steps; i >= 1; --i) {
    for (std::size_t k = 0; k < x.size(); ++k) masked[k] = mask[k] * x[k];
    const std::vector<float> level(chunks, static_cast<float>(sigmas[i]));
    const Tensor d = denoiser(masked, level);
    if (!d.SameShape(x)) throw InputError("sampler: denoiser changed the shape");
    const double ratio = (sigmas[i] - sigmas[i - 1]) / sigmas[i];
    for (std::size_t k = 0; k < x.size(); ++k) {
      x[k] = static_cast<float>(x[k] - (static_cast<double>(x[k]) - d[k]) * ratio);
    }
    if (!x.AllFinite()) {
      throw NumericError("sampler state became non-finite at step " +
                         std::to_string(i));
    }
  }
  for (std::size_t k = 0; k < x.size(); ++k) x[k] *= mask[k];
  return x;
}

Tensor EulerSample(const ChunkDenoiser& denoiser, const Tensor& mask,
                   int horizon, const EdmConfig& config, std::mt19937_64& rng) {
  Tensor init(mask.rows(), mask.cols());
  std::normal_distribution<float> normal(0.0f, 1.0f);
  for (auto& v : init.vec()) v = static_cast<float>(config.sigma_max) * normal(rng);
  return EulerSampleFrom(denoiser, mask, std::move(init), horizon, config);
}

void to_json(nlohmann::json& j, const DiffusionTrainConfig& c) {
  j = {{"epochs", c.epochs},
       {"batch_size", c.batch_size},
       {"lr", c.lr},
       {"ema_rate", c.ema_rate},
       {"max_grad_norm", c.adam.max_grad_norm}};
}

void from_json(const nlohmann::json& j, DiffusionTrainConfig& c) {
  DiffusionTrainConfig d;
  c.epochs = j.value("epochs", d.epochs);
  c.batch_size = j.value("batch_size", d.batch_size);
  c.lr = j.value("lr", d.lr);
  c.ema_rate = j.value("ema_rate", d.ema_rate);
  c.adam.max_grad_norm = j.value("max_grad_norm", d.adam.max_grad_norm);
}

ChunkBatch PrepareBatch(const UnifiedDataset& dataset, const NormStats& stats) {
  const int n = static_cast<int>(dataset.samples.size());
  const int h = dataset.pred_horizon, a = dataset.dims.action_dim;
  ChunkBatch out;
  out.horizon = h;
  out.condition = Tensor(n, dataset.condition_dim());
  out.actions = Tensor(n * h, a);
  out.mask = Tensor(n * h, a);
  for (int i = 0; i < n; ++i) {
    const UnifiedSample& s = dataset.samples[i];
    const ValidityMask mask = dataset.mask(s.embodiment_id);
    const auto cond = BuildCondition(s.obs_window, s.command, stats);
    std::copy(cond.begin(), cond.end(), out.condition.row(i).begin());
    const auto act = NormalizeActionChunk(s.action_chunk, mask, stats);
    std::copy(act.begin(), act.end(), &out.actions.data()[static_cast<std::size_t>(i) * h * a]);
    for (int t = 0; t < h; ++t) {
      std::copy(mask.values().begin(), mask.values().end(),
                out.mask.row(i * h + t).begin());
    }
  }
  return out;
}

ParamSet TrainDenoiserParams(const DenoiserNet& net, ParamSet params,
                             const ChunkBatch& data, const EdmConfig& edm,
                             const DiffusionTrainConfig& train,
                             std::mt19937_64& rng,
                             const std::function<void(const EpochLog&)>& on_epoch) {
  edm.Validate();
  if (train.epochs < 0 || train.batch_size <= 0) {
    throw InputError("training needs epochs >= 0 and batch_size > 0");
  }
  EmaSet ema(params, train.ema_rate);
  if (train.epochs == 0) return ema.shadow();
  const int n = data.size();
  if (n == 0) throw InputError("training on an empty dataset");
  const int per_epoch = (n + train.batch_size - 1) / train.batch_size;
  const std::int64_t total = static_cast<std::int64_t>(per_epoch) * train.epochs;
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::int64_t step = 0;
  for (int epoch = 0; epoch < train.epochs; ++epoch) {
    const auto start = std::chrono::steady_clock::now();
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0.0;
    double lr = 0.0;
    for (int k = 0; k < per_epoch; ++k, ++step) {
      const int begin = k * train.batch_size;
      const int count = std::min(train.batch_size, n - begin);
      const ChunkBatch batch =
          Gather(data, std::span<const int>(order).subspan(begin, count));
      const NoiseDraw noise = DrawNoise(batch, edm, rng);
      Graph g;
      Var loss = MaskedDsmLoss(
          g, NetworkDenoiser(net, params, batch.condition, edm), batch, noise, edm);
      const double value = loss.value().item();
      if (!std::isfinite(value)) {
        throw NumericError("diffusion loss diverged at epoch " +
                           std::to_string(epoch) + " step " + std::to_string(k));
      }
      loss_sum += value;
      const GradMap grads = ForwardBackward(loss, params);
      lr = CosineLr(step, total, train.lr);
      AdamStep(params, grads, lr, train.adam);
      ema.Update(params);
    }
    if (on_epoch) {
      const auto end = std::chrono::steady_clock::now();
      on_epoch({epoch, loss_sum / per_epoch, lr,
                std::chrono::duration<double, std::milli>(end - start).count()});
    }
  }
  return ema.shadow();
}

DiffusionModel TrainDiffusion(const UnifiedDataset& dataset,
                              DenoiserConfig denoiser, const EdmConfig& edm,
                              const DiffusionTrainConfig& train,
                              std::uint64_t seed,
                              const std::function<void(const EpochLog&)>& on_epoch) {
  if (dataset.samples.empty()) throw InputError("training on an empty dataset");
  dataset.Validate();
  DiffusionModel model;
  model.specs = dataset.specs;
  model.dims = dataset.dims;
  model.obs_horizon = dataset.obs_horizon;
  model.pred_horizon = dataset.pred_horizon;
  model.command_dim = dataset.command_dim;
  model.stats = dataset.stats.obs.dim() == dataset.dims.obs_dim &&
                        dataset.stats.action.dim() == dataset.dims.action_dim &&
                        dataset.stats.command.dim() == dataset.command_dim
                    ? dataset.stats
                    : FitNormStats(dataset);
  denoiser.input_dim = dataset.dims.action_dim;
  denoiser.pred_horizon = dataset.pred_horizon;
  denoiser.cond_dim = dataset.condition_dim();
  denoiser.seed = seed;
  model.denoiser = denoiser;
  model.edm = edm;
  model.train = train;
  model.seed = seed;

  const DenoiserNet net(denoiser);
  model.fourier_bank = net.fourier_bank();
  const ChunkBatch data = PrepareBatch(dataset, model.stats);
  std::mt19937_64 rng(seed ^ kTrainStream);
  model.params =
      TrainDenoiserParams(net, net.InitParams(), data, edm, train, rng, on_epoch);
  return model;
}

DenoiserNet MakeNet(const DiffusionModel& model) {
  DenoiserNet net(model.denoiser);
  if (model.fourier_bank.size() > 0) net.set_fourier_bank(model.fourier_bank);
  return net;
}

Tensor ChunkMask(const DiffusionModel& model, std::span<const int> embodiment_ids) {
  const int b_count = static_cast<int>(embodiment_ids.size());
  const int h = model.pred_horizon, a = model.dims.action_dim;
  Tensor mask(b_count * h, a);
  for (int b = 0; b < b_count; ++b) {
    int valid = -1;
    for (const auto& s : model.specs) {
      if (s.id == embodiment_ids[b]) valid = s.action_dim;
    }
    if (valid < 0) {
      throw InputError("unknown embodiment id " + std::to_string(embodiment_ids[b]));
    }
    for (int t = 0; t < h; ++t) {
      for (int d = 0; d < valid; ++d) mask(b * h + t, d) = 1.0f;
    }
  }
  return mask;
}

Tensor SampleNormalizedActions(const DiffusionModel& model, const DenoiserNet& net,
                               const Tensor& condition,
                               std::span<const int> embodiment_ids,
                               std::mt19937_64& rng, int steps) {
  if (static_cast<int>(embodiment_ids.size()) != condition.rows()) {
    throw InputError("one embodiment id per condition row is required");
  }
  const Tensor mask = ChunkMask(model, embodiment_ids);
  EdmConfig cfg = model.edm;
  if (steps > 0) cfg.sample_steps = steps;
  return EulerSample(NetworkChunkDenoiser(net, model.params, condition, cfg), mask,
                     model.pred_horizon, cfg, rng);
}

Tensor DenormalizeActions(const DiffusionModel& model, const Tensor& normalized,
                          const Tensor& mask) {
  std::vector<float> native = DenormalizeRows(normalized.span(), model.stats.action);
  for (std::size_t i = 0; i < native.size(); ++i) native[i] *= mask[i];
  return Tensor(normalized.rows(), normalized.cols(), std::move(native));
}

Tensor SampleActions(const DiffusionModel& model, const DenoiserNet& net,
                     const Tensor& condition, std::span<const int> embodiment_ids,
                     std::mt19937_64& rng, int steps) {
  const Tensor normalized =
      SampleNormalizedActions(model, net, condition, embodiment_ids, rng, steps);
  return DenormalizeActions(model, normalized, ChunkMask(model, embodiment_ids));
}

}  // namespace unigait
