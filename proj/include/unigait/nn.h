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

#ifndef UNIGAIT_NN_H_
#define UNIGAIT_NN_H_

#include <random>
#include <string>
#include <vector>

#include "unigait/graph.h"
#include "unigait/params.h"

namespace unigait {

// y = x W + b with W [in, out] and b [1, out].
struct Linear {
  std::string weight;
  std::string bias;
  int in = 0;
  int out = 0;

  static Linear Create(ParamSet& params, const std::string& name, int in,
                       int out, std::mt19937_64& rng, bool zero_init = false);
  Var operator()(Graph& g, const ParamSet& params, Var x) const;
};

// Linear layers with ELU between them and a linear output.
struct Mlp {
  std::vector<Linear> layers;

  static Mlp Create(ParamSet& params, const std::string& name, int in,
                    const std::vector<int>& hidden, int out,
                    std::mt19937_64& rng, bool zero_last = false);
  Var operator()(Graph& g, const ParamSet& params, Var x) const;
  int in() const { return layers.front().in; }
  int out() const { return layers.back().out; }
};

}  // namespace unigait

#endif  // UNIGAIT_NN_H_
