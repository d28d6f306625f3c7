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

#include "unigait/tensor.h"

#include <algorithm>
#include <cmath>
#include <utility>

#include "unigait/error.h"

namespace unigait {

Tensor::Tensor(int rows, int cols, float fill)
    : rows_(rows), cols_(cols) {
  if (rows < 0 || cols < 0) throw InputError("negative tensor dimension");
  data_.assign(static_cast<std::size_t>(rows) * cols, fill);
}

Tensor::Tensor(int rows, int cols, std::vector<float> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (rows < 0 || cols < 0) throw InputError("negative tensor dimension");
  if (data_.size() != static_cast<std::size_t>(rows) * cols) {
    throw InputError("tensor data length " + std::to_string(data_.size()) +
                     " does not match shape " + ShapeString());
  }
}

Tensor Tensor::Row(std::span<const float> values) {
  return Tensor(1, static_cast<int>(values.size()),
                std::vector<float>(values.begin(), values.end()));
}

Tensor Tensor::Row(std::initializer_list<float> values) {
  return Tensor(1, static_cast<int>(values.size()), std::vector<float>(values));
}

float Tensor::item() const {
  if (size() != 1) throw InputError("item() on non-scalar " + ShapeString());
  return data_[0];
}

void Tensor::Fill(float value) { std::fill(data_.begin(), data_.end(), value); }

bool Tensor::AllFinite() const {
  return std::all_of(data_.begin(), data_.end(),
                     [](float x) { return std::isfinite(x); });
}

std::string Tensor::ShapeString() const {
  return "[" + std::to_string(rows_) + ", " + std::to_string(cols_) + "]";
}

}  // namespace unigait
