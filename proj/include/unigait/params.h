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

#ifndef UNIGAIT_PARAMS_H_
#define UNIGAIT_PARAMS_H_

#include <cstdint>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "unigait/tensor.h"

namespace unigait {

// A named trainable tensor together with its Adam moment accumulators.
struct Parameter {
  std::string name;
  Tensor value;
  Tensor first_moment;
  Tensor second_moment;
};

// Gradients keyed by parameter name.
using GradMap = std::map<std::string, Tensor>;

// Ordered collection of parameters. Insertion order is the serialization
// order, so two ParamSets built the same way produce identical bytes.
class ParamSet {
 public:
  Parameter& Add(const std::string& name, Tensor value);

  bool Contains(const std::string& name) const;
  const Tensor& Get(const std::string& name) const;
  Tensor& Mutable(const std::string& name);
  const Parameter& entry(const std::string& name) const;
  Parameter& mutable_entry(const std::string& name);

  const std::vector<Parameter>& entries() const { return entries_; }
  std::vector<Parameter>& mutable_entries() { return entries_; }
  std::size_t size() const { return entries_.size(); }
  std::int64_t ParameterCount() const;

  std::int64_t step() const { return step_; }
  void set_step(std::int64_t step) { step_ = step; }

  // FNV-1a 64 over every value, in order. Used to assert frozen weights.
  std::uint64_t Hash() const;

  GradMap ZeroGrads() const;

 private:
  std::vector<Parameter> entries_;
  std::map<std::string, std::size_t> index_;
  std::int64_t step_ = 0;
};

// Uniform in [-1/sqrt(fan_in), 1/sqrt(fan_in)], drawn from `rng`.
Tensor UniformFanIn(int rows, int cols, int fan_in, std::mt19937_64& rng);

}  // namespace unigait

#endif  // UNIGAIT_PARAMS_H_
