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

#include "unigait/nn.h"

#include "unigait/error.h"

namespace unigait {

Linear Linear::Create(ParamSet& params, const std::string& name, int in,
                      int out, std::mt19937_64& rng, bool zero_init) {
  Linear l{name + ".w", name + ".b", in, out};
  if (zero_init) {
    params.Add(l.weight, Tensor(in, out));
    params.Add(l.bias, Tensor(1, out));
  } else {
    params.Add(l.weight, UniformFanIn(in, out, in, rng));
    params.Add(l.bias, UniformFanIn(1, out, in, rng));
  }
  return l;
}

Var Linear::operator()(Graph& g, const ParamSet& params, Var x) const {
  if (x.cols() != in) {
    throw InputError(weight + ": expected input width " + std::to_string(in) +
                     ", got " + std::to_string(x.cols()));
  }
  return Add(MatMul(x, g.Param(params, weight)), g.Param(params, bias));
}

Mlp Mlp::Create(ParamSet& params, const std::string& name, int in,
                const std::vector<int>& hidden, int out, std::mt19937_64& rng,
                bool zero_last) {
  Mlp mlp;
  int width = in;
  for (std::size_t i = 0; i < hidden.size(); ++i) {
    mlp.layers.push_back(Linear::Create(
        params, name + "." + std::to_string(i), width, hidden[i], rng));
    width = hidden[i];
  }
  mlp.layers.push_back(Linear::Create(
      params, name + "." + std::to_string(hidden.size()), width, out, rng,
      zero_last));
  return mlp;
}

Var Mlp::operator()(Graph& g, const ParamSet& params, Var x) const {
  for (std::size_t i = 0; i < layers.size(); ++i) {
    x = layers[i](g, params, x);
    if (i + 1 < layers.size()) x = Elu(x);
  }
  return x;
}

}  // namespace unigait
