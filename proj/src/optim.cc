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

#include "unigait/optim.h"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "unigait/error.h"

namespace unigait {

double GradNorm(const GradMap& grads) {
  double sq = 0.0;
  for (const auto& [name, g] : grads) {
    for (float x : g.vec()) sq += static_cast<double>(x) * x;
  }
  return std::sqrt(sq);
}

void AdamStep(ParamSet& params, const GradMap& grads, double lr,
              const AdamOptions& options) {
  if (!(lr > 0.0)) throw InputError("adam learning rate must be positive");
  for (const auto& [name, g] : grads) {
    const Tensor& p = params.Get(name);
    if (!p.SameShape(g)) {
      throw InputError("gradient shape " + g.ShapeString() +
                       " does not match parameter " + name + " " +
                       p.ShapeString());
    }
  }
  double clip = 1.0;
  if (options.max_grad_norm > 0.0) {
    const double norm = GradNorm(grads);
    if (norm > options.max_grad_norm) clip = options.max_grad_norm / norm;
  }
  const std::int64_t t = params.step() + 1;
  const double bc1 = 1.0 - std::pow(options.beta1, static_cast<double>(t));
  const double bc2 = 1.0 - std::pow(options.beta2, static_cast<double>(t));
  const float b1 = static_cast<float>(options.beta1);
  const float b2 = static_cast<float>(options.beta2);
  const float step_size = static_cast<float>(lr / bc1);
  const float inv_sqrt_bc2 = static_cast<float>(1.0 / std::sqrt(bc2));
  const float eps = static_cast<float>(options.epsilon);
  for (Parameter& p : params.mutable_entries()) {
    auto it = grads.find(p.name);
    const Tensor* g = it == grads.end() ? nullptr : &it->second;
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      const float gi = g ? (*g)[i] * static_cast<float>(clip) : 0.0f;
      float& m = p.first_moment[i];
      float& v = p.second_moment[i];
      m = b1 * m + (1.0f - b1) * gi;
      v = b2 * v + (1.0f - b2) * gi * gi;
      p.value[i] -= step_size * m / (std::sqrt(v) * inv_sqrt_bc2 + eps);
    }
  }
  params.set_step(t);
}

double CosineLr(std::int64_t step, std::int64_t total_steps, double lr0) {
  if (total_steps <= 0) throw InputError("cosine schedule needs total_steps > 0");
  if (step < 0 || step > total_steps) {
    throw InputError("cosine schedule step " + std::to_string(step) +
                     " outside [0, " + std::to_string(total_steps) + "]");
  }
  const double frac = static_cast<double>(step) / static_cast<double>(total_steps);
  return std::max(0.0, lr0 * 0.5 * (1.0 + std::cos(std::numbers::pi * frac)));
}

EmaSet::EmaSet(const ParamSet& params, double rate) : rate_(rate) {
  if (!(rate > 0.0 && rate < 1.0)) throw InputError("ema rate must be in (0,1)");
  for (const Parameter& p : params.entries()) shadow_.Add(p.name, p.value);
}

void EmaSet::Update(const ParamSet& params) {
  if (params.size() != shadow_.size()) {
    throw InputError("ema parameter count mismatch");
  }
  const float r = static_cast<float>(rate_);
  const float one_minus = static_cast<float>(1.0 - rate_);
  for (Parameter& s : shadow_.mutable_entries()) {
    const Tensor& p = params.Get(s.name);
    if (!p.SameShape(s.value)) {
      throw InputError("ema shape mismatch for " + s.name);
    }
    for (std::size_t i = 0; i < p.size(); ++i) {
      s.value[i] = r * s.value[i] + one_minus * p[i];
    }
  }
  shadow_.set_step(params.step());
}

}  // namespace unigait
