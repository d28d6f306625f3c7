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

#include "unigait/params.h"

#include <cmath>
#include <cstring>
#include <utility>

#include "unigait/error.h"
#include "unigait/hash.h"

namespace unigait {

Parameter& ParamSet::Add(const std::string& name, Tensor value) {
  if (index_.count(name)) throw InputError("duplicate parameter " + name);
  index_[name] = entries_.size();
  Parameter p;
  p.name = name;
  p.first_moment = Tensor(value.rows(), value.cols());
  p.second_moment = Tensor(value.rows(), value.cols());
  p.value = std::move(value);
  entries_.push_back(std::move(p));
  return entries_.back();
}

bool ParamSet::Contains(const std::string& name) const {
  return index_.count(name) > 0;
}

const Parameter& ParamSet::entry(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw InputError("unknown parameter " + name);
  return entries_[it->second];
}

Parameter& ParamSet::mutable_entry(const std::string& name) {
  auto it = index_.find(name);
  if (it == index_.end()) throw InputError("unknown parameter " + name);
  return entries_[it->second];
}

const Tensor& ParamSet::Get(const std::string& name) const {
  return entry(name).value;
}

Tensor& ParamSet::Mutable(const std::string& name) {
  return mutable_entry(name).value;
}

std::int64_t ParamSet::ParameterCount() const {
  std::int64_t n = 0;
  for (const auto& p : entries_) n += static_cast<std::int64_t>(p.value.size());
  return n;
}

std::uint64_t ParamSet::Hash() const {
  Fnv1a64 h;
  for (const auto& p : entries_) {
    h.Update(p.name.data(), p.name.size());
    h.Update(p.value.data(), p.value.size() * sizeof(float));
  }
  return h.digest();
}

GradMap ParamSet::ZeroGrads() const {
  GradMap grads;
  for (const auto& p : entries_) {
    grads[p.name] = Tensor(p.value.rows(), p.value.cols());
  }
  return grads;
}

Tensor UniformFanIn(int rows, int cols, int fan_in, std::mt19937_64& rng) {
  const float bound = 1.0f / std::sqrt(static_cast<float>(fan_in));
  std::uniform_real_distribution<float> dist(-bound, bound);
  Tensor t(rows, cols);
  for (auto& x : t.vec()) x = dist(rng);
  return t;
}

}  // namespace unigait
