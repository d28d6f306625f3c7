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

// Conditional transformer denoiser over action-chunk tokens. Token layout
// throughout: a batch of B chunks is a [B * pred_horizon, input_dim] tensor,
// one row per token, chunks stored consecutively.

#ifndef UNIGAIT_DENOISER_H_
#define UNIGAIT_DENOISER_H_

#include <cstdint>
#include <span>
#include <vector>

#include <nlohmann/json.hpp>

#include "unigait/graph.h"
#include "unigait/nn.h"
#include "unigait/params.h"
#include "unigait/tensor.h"

namespace unigait {

struct DenoiserConfig {
  int input_dim = 6;
  int pred_horizon = 4;
  int cond_dim = 173;
  int emb_dim = 32;
  int d_model = 64;
  int heads = 4;
  int depth = 2;
  std::vector<int> cond_hidden = {128, 64};
  // Number of frequencies; the raw embedding has twice as many entries.
  int fourier_bank = 16;
  float fourier_scale = 16.0f;
  int mlp_ratio = 4;
  bool positional = true;
  std::uint64_t seed = 0;

  // Table-scale configuration: 20-D tokens, 683-D condition.
  static DenoiserConfig PaperPreset();
  // Throws InputError on inconsistent sizes.
  void Validate() const;

  bool operator==(const DenoiserConfig&) const = default;
};

void to_json(nlohmann::json& j, const DenoiserConfig& c);
void from_json(const nlohmann::json& j, DenoiserConfig& c);

// cos(2 pi f_j c) for every j, then sin(2 pi f_j c): [B, 2 * bank].
Tensor FourierFeatures(std::span<const float> c_noise, const Tensor& bank);

class DenoiserNet {
 public:
  explicit DenoiserNet(const DenoiserConfig& config);

  const DenoiserConfig& config() const { return config_; }
  // Seeded initial parameters; identical for identical configs.
  ParamSet InitParams() const;

  // Frozen normal(0, fourier_scale) frequencies, [1, fourier_bank].
  const Tensor& fourier_bank() const { return bank_; }
  void set_fourier_bank(Tensor bank);

  // g(condition): [B, cond_dim] -> [B, emb_dim].
  Var EncodeCondition(Graph& g, const ParamSet& params, Var condition) const;
  // Projected Fourier embedding of per-chunk c_noise: [B, emb_dim].
  Var EmbedNoise(Graph& g, const ParamSet& params,
                 std::span<const float> c_noise) const;
  // Transformer body F on pre-scaled tokens [B * H, input_dim].
  Var Raw(Graph& g, const ParamSet& params, Var tokens, Var noise_emb,
          Var cond_emb) const;
  // Raw(tokens, EmbedNoise(c_noise), EncodeCondition(condition)).
  Var Forward(Graph& g, const ParamSet& params, Var tokens,
              std::span<const float> c_noise, Var condition) const;

 private:
  struct Block {
    std::string ln1_gamma, ln1_beta, ln2_gamma, ln2_beta;
    Linear qkv;
    Linear proj;
    Mlp mlp;
  };

  // Registers every parameter in a fixed order.
  void Build(ParamSet& params, std::mt19937_64& rng);

  DenoiserConfig config_;
  Tensor bank_;
  Mlp cond_net_;
  Linear noise_proj_;
  Linear emb_to_model_;
  Linear token_in_;
  std::string positional_;
  std::vector<Block> blocks_;
  std::string final_gamma_, final_beta_;
  Linear head_;
};

}  // namespace unigait

#endif  // UNIGAIT_DENOISER_H_
