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

#ifndef UNIGAIT_TENSOR_H_
#define UNIGAIT_TENSOR_H_

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace unigait {

// Dense row-major float32 matrix. Vectors are 1 x n, scalars 1 x 1.
class Tensor {
 public:
  Tensor() = default;
  Tensor(int rows, int cols, float fill = 0.0f);
  Tensor(int rows, int cols, std::vector<float> data);

  static Tensor Scalar(float value) { return Tensor(1, 1, value); }
  static Tensor Row(std::span<const float> values);
  static Tensor Row(std::initializer_list<float> values);

  int rows() const { return rows_; }
  int cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }
  std::vector<int> shape() const { return {rows_, cols_}; }
  bool SameShape(const Tensor& other) const {
    return rows_ == other.rows_ && cols_ == other.cols_;
  }

  float* data() { return data_.data(); }
  const float* data() const { return data_.data(); }
  std::span<float> span() { return data_; }
  std::span<const float> span() const { return data_; }
  std::vector<float>& vec() { return data_; }
  const std::vector<float>& vec() const { return data_; }

  float& operator()(int r, int c) { return data_[r * cols_ + c]; }
  float operator()(int r, int c) const { return data_[r * cols_ + c]; }
  float& operator[](std::size_t i) { return data_[i]; }
  float operator[](std::size_t i) const { return data_[i]; }

  // Scalar value of a 1 x 1 tensor.
  float item() const;
  std::span<const float> row(int r) const {
    return std::span<const float>(data_).subspan(r * cols_, cols_);
  }
  std::span<float> row(int r) {
    return std::span<float>(data_).subspan(r * cols_, cols_);
  }

  void Fill(float value);
  bool AllFinite() const;
  std::string ShapeString() const;

  bool operator==(const Tensor& other) const = default;

 private:
  int rows_ = 0;
  int cols_ = 0;
  std::vector<float> data_;
};

}  // namespace unigait

#endif  // UNIGAIT_TENSOR_H_
