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

#include "unigait/denoiser.h"

#include <cmath>
#include <numbers>
#include <string>

#include "unigait/error.h"

namespace unigait {

namespace {

// Decorrelates the frequency bank from the weight initialisation stream.
constexpr std::uint64_t kBankStream = 0x9e3779b97f4a7c15ULL;

}  // namespace

DenoiserConfig DenoiserConfig::PaperPreset() {
  DenoiserConfig c;
  c.input_dim = 20;
  c.pred_horizon = 4;
  c.cond_dim = 683;
  c.emb_dim = 128;
  c.d_model = 256;
  c.heads = 8;
  c.depth = 3;
  c.cond_hidden = {512, 256};
  c.fourier_bank = 64;
  return c;
}

void DenoiserConfig::Validate() const {
  if (input_dim <= 0 || pred_horizon <= 0 || cond_dim <= 0 || emb_dim <= 0 ||
      d_model <= 0 || heads <= 0 || fourier_bank <= 0 || mlp_ratio <= 0) {
    throw InputError("denoiser config has a non-positive size");
  }
  if (d_model % heads != 0) {
    throw InputError("d_model " + std::to_string(d_model) +
                     " is not divisible by heads " + std::to_string(heads));
  }
  if (depth < 1) throw InputError("denoiser depth must be at least 1");
  for (int h : cond_hidden) {
    if (h <= 0) throw InputError("condition hidden width must be positive");
  }
}

void to_json(nlohmann::json& j, const DenoiserConfig& c) {
  j = {{"input_dim", c.input_dim},       {"pred_horizon", c.pred_horizon},
       {"cond_dim", c.cond_dim},         {"emb_dim", c.emb_dim},
       {"d_model", c.d_model},           {"heads", c.heads},
       {"depth", c.depth},               {"cond_hidden", c.cond_hidden},
       {"fourier_bank", c.fourier_bank}, {"fourier_scale", c.fourier_scale},
       {"mlp_ratio", c.mlp_ratio},       {"positional", c.positional},
       {"seed", c.seed}};
}

void from_json(const nlohmann::json& j, DenoiserConfig& c) {
  DenoiserConfig d;
  c.input_dim = j.value("input_dim", d.input_dim);
  c.pred_horizon = j.value("pred_horizon", d.pred_horizon);
  c.cond_dim = j.value("cond_dim", d.cond_dim);
  c.emb_dim = j.value("emb_dim", d.emb_dim);
  c.d_model = j.value("d_model", d.d_model);
  c.heads = j.value("heads", d.heads);
  c.depth = j.value("depth", d.depth);
  c.cond_hidden = j.value("cond_hidden", d.cond_hidden);
  c.fourier_bank = j.value("fourier_bank", d.fourier_bank);
  c.fourier_scale = j.value("fourier_scale", d.fourier_scale);
  c.mlp_ratio = j.value("mlp_ratio", d.mlp_ratio);
  c.positional = j.value("positional", d.positional);
  c.seed = j.value("seed", d.seed);
}

Tensor FourierFeatures(std::span<const float> c_noise, const Tensor& bank) {
  const int n = bank.cols();
  Tensor out(static_cast<int>(c_noise.size()), 2 * n);
  for (std::size_t b = 0; b < c_noise.size(); ++b) {
    for (int j = 0; j < n; ++j) {
      const double phase = 2.0 * std::numbers::pi * bank[j] * c_noise[b];
      out(static_cast<int>(b), j) = static_cast<float>(std::cos(phase));
      out(static_cast<int>(b), n + j) = static_cast<float>(std::sin(phase));
    }
  }
  return out;
}

DenoiserNet::DenoiserNet(const DenoiserConfig& config) : config_(config) {
  config_.Validate();
  ParamSet layout;
  std::mt19937_64 rng(config_.seed);
  Build(layout, rng);
  std::mt19937_64 bank_rng(config_.seed ^ kBankStream);
  std::normal_distribution<float> normal(0.0f, config_.fourier_scale);
  bank_ = Tensor(1, config_.fourier_bank);
  for (auto& f : bank_.vec()) f = normal(bank_rng);
}

ParamSet DenoiserNet::InitParams() const {
  ParamSet params;
  std::mt19937_64 rng(config_.seed);
  // Build is deterministic in layout, so a const copy can rebuild it.
  DenoiserNet copy = *this;
  copy.Build(params, rng);
  return params;
}

void DenoiserNet::set_fourier_bank(Tensor bank) {
  if (bank.rows() != 1 || bank.cols() != config_.fourier_bank) {
    throw InputError("fourier bank shape " + bank.ShapeString() +
                     " does not match config");
  }
  bank_ = std::move(bank);
}

void DenoiserNet::Build(ParamSet& params, std::mt19937_64& rng) {
  const DenoiserConfig& c = config_;
  cond_net_ = Mlp::Create(params, "cond", c.cond_dim, c.cond_hidden, c.emb_dim, rng);
  noise_proj_ = Linear::Create(params, "noise_proj", 2 * c.fourier_bank,
                               c.emb_dim, rng);
  emb_to_model_ = Linear::Create(params, "emb_to_model", c.emb_dim, c.d_model, rng);
  token_in_ = Linear::Create(params, "token_in", c.input_dim, c.d_model, rng);
  positional_.clear();
  if (c.positional) {
    positional_ = "positional";
    params.Add(positional_,
               UniformFanIn(c.pred_horizon, c.d_model, c.d_model, rng));
  }
  blocks_.clear();
  for (int i = 0; i < c.depth; ++i) {
    const std::string p = "block" + std::to_string(i) + ".";
    Block b;
    b.ln1_gamma = p + "ln1.gamma";
    b.ln1_beta = p + "ln1.beta";
    params.Add(b.ln1_gamma, Tensor(1, c.d_model, 1.0f));
    params.Add(b.ln1_beta, Tensor(1, c.d_model));
    b.qkv = Linear::Create(params, p + "qkv", c.d_model, 3 * c.d_model, rng);
    b.proj = Linear::Create(params, p + "proj", c.d_model, c.d_model, rng);
    b.ln2_gamma = p + "ln2.gamma";
    b.ln2_beta = p + "ln2.beta";
    params.Add(b.ln2_gamma, Tensor(1, c.d_model, 1.0f));
    params.Add(b.ln2_beta, Tensor(1, c.d_model));
    b.mlp = Mlp::Create(params, p + "mlp", c.d_model, {c.mlp_ratio * c.d_model},
                        c.d_model, rng);
    blocks_.push_back(std::move(b));
  }
  final_gamma_ = "final.gamma";
  final_beta_ = "final.beta";
  params.Add(final_gamma_, Tensor(1, c.d_model, 1.0f));
  params.Add(final_beta_, Tensor(1, c.d_model));
  head_ = Linear::Create(params, "head", c.d_model, c.input_dim, rng,
                         /*zero_init=*/true);
}

Var DenoiserNet::EncodeCondition(Graph& g, const ParamSet& params,
                                 Var condition) const {
  if (condition.cols() != config_.cond_dim) {
    throw InputError("condition length " + std::to_string(condition.cols()) +
                     " does not match configured " +
                     std::to_string(config_.cond_dim));
  }
  return cond_net_(g, params, condition);
}

Var DenoiserNet::EmbedNoise(Graph& g, const ParamSet& params,
                            std::span<const float> c_noise) const {
  return noise_proj_(g, params, g.Constant(FourierFeatures(c_noise, bank_)));
}

Var DenoiserNet::Raw(Graph& g, const ParamSet& params, Var tokens,
                     Var noise_emb, Var cond_emb) const {
  const DenoiserConfig& c = config_;
  const int horizon = c.pred_horizon;
  if (tokens.cols() != c.input_dim || tokens.rows() % horizon != 0) {
    throw InputError("token tensor " + tokens.value().ShapeString() +
                     " does not fit horizon " + std::to_string(horizon) +
                     " x input " + std::to_string(c.input_dim));
  }
  const int batch = tokens.rows() / horizon;
  if (noise_emb.rows() != batch || cond_emb.rows() != batch) {
    throw InputError("embedding batch does not match token batch");
  }
  Var h = token_in_(g, params, tokens);
  if (c.positional) h = Add(h, TileRows(g.Param(params, positional_), batch));
  Var ctx = emb_to_model_(g, params, Add(noise_emb, cond_emb));
  h = Add(h, RepeatRows(ctx, horizon));
  for (const Block& b : blocks_) {
    Var y = LayerNorm(h, g.Param(params, b.ln1_gamma), g.Param(params, b.ln1_beta));
    Var qkv = b.qkv(g, params, y);
    Var att = MultiHeadAttention(SliceCols(qkv, 0, c.d_model),
                                 SliceCols(qkv, c.d_model, c.d_model),
                                 SliceCols(qkv, 2 * c.d_model, c.d_model),
                                 horizon, c.heads);
    h = Add(h, b.proj(g, params, att));
    y = LayerNorm(h, g.Param(params, b.ln2_gamma), g.Param(params, b.ln2_beta));
    h = Add(h, b.mlp(g, params, y));
  }
  h = LayerNorm(h, g.Param(params, final_gamma_), g.Param(params, final_beta_));
  Var out = head_(g, params, h);
  if (!out.value().AllFinite()) throw NumericError("denoiser produced non-finite output");
  return out;
}

Var DenoiserNet::Forward(Graph& g, const ParamSet& params, Var tokens,
                         std::span<const float> c_noise, Var condition) const {
  return Raw(g, params, tokens, EmbedNoise(g, params, c_noise),
             EncodeCondition(g, params, condition));
}

}  // namespace unigait
