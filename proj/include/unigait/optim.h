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

#ifndef UNIGAIT_OPTIM_H_
#define UNIGAIT_OPTIM_H_

#include <cstdint>
#include <vector>

#include "unigait/params.h"

namespace unigait {

struct AdamOptions {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  // Global L2 clip applied before the update; 0 disables clipping.
  double max_grad_norm = 0.0;

  bool operator==(const AdamOptions&) const = default;
};

// One bias-corrected Adam step over every parameter in `params`. Missing
// gradient entries count as zero. Increments params.step().
void AdamStep(ParamSet& params, const GradMap& grads, double lr,
              const AdamOptions& options = {});

// Global L2 norm over all gradients.
double GradNorm(const GradMap& grads);

// lr0 * 0.5 * (1 + cos(pi * step / total_steps)), floored at zero.
double CosineLr(std::int64_t step, std::int64_t total_steps, double lr0);

// Exponential moving average of a ParamSet's values.
class EmaSet {
 public:
  EmaSet() = default;
  EmaSet(const ParamSet& params, double rate);

  // shadow <- rate * shadow + (1 - rate) * param.
  void Update(const ParamSet& params);

  double rate() const { return rate_; }
  const ParamSet& shadow() const { return shadow_; }
  ParamSet& mutable_shadow() { return shadow_; }

 private:
  ParamSet shadow_;
  double rate_ = 0.999;
};

}  // namespace unigait

#endif  // UNIGAIT_OPTIM_H_
