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

#ifndef UNIGAIT_GRAPH_H_
#define UNIGAIT_GRAPH_H_

#include <functional>
#include <map>
#include <string>
#include <vector>

#include "unigait/params.h"
#include "unigait/tensor.h"

namespace unigait {

class Graph;

// Handle to a node of a Graph. Cheap to copy; only valid while the graph
// lives.
struct Var {
  Graph* graph = nullptr;
  int id = -1;

  const Tensor& value() const;
  int rows() const { return value().rows(); }
  int cols() const { return value().cols(); }
};

// Eager reverse-mode tape. Every op computes its value immediately and, when
// the graph records and any input needs a gradient, stores a closure that
// propagates the output gradient to its inputs.
//
// A Graph is single-threaded. Several graphs may bind the same const
// ParamSet concurrently.
class Graph {
 public:
  using BackwardFn = std::function<void(Graph&, int)>;

  explicit Graph(bool record = true) : record_(record) {}
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  Var Constant(Tensor value);
  // Leaf whose gradient is tracked so it can be inspected after Backward.
  Var Input(Tensor value);
  // Leaf bound to a parameter; repeated calls return the same node. The
  // ParamSet must outlive the graph and stay unmodified while it is used.
  Var Param(const ParamSet& params, const std::string& name);

  const Tensor& value(Var v) const;
  const Tensor& value(int id) const;
  // Gradient accumulated by the last Backward; zeros if none reached v.
  Tensor grad(Var v) const;

  // Seeds d(loss)/d(loss) = 1 and propagates. Throws InputError for a
  // non-scalar loss and NumericError if a non-finite gradient reaches a leaf.
  void Backward(Var loss);

  // Gradients for every parameter of `params`; parameters never bound into
  // this graph get zeros.
  GradMap ParamGrads(const ParamSet& params) const;

  bool recording() const { return record_; }
  int size() const { return static_cast<int>(nodes_.size()); }

  // Op-author interface.
  Var AddNode(Tensor value, const std::vector<int>& inputs, BackwardFn fn);
  bool needs_grad(int id) const { return nodes_[id].needs_grad; }
  // Lazily allocated gradient buffer of node `id`.
  Tensor& grad_buffer(int id);
  const Tensor& grad_of(int id) const { return nodes_[id].grad; }

 private:
  struct Node {
    Tensor value;
    const Tensor* external = nullptr;
    Tensor grad;
    bool needs_grad = false;
    bool is_leaf = false;
    std::string param_name;
    BackwardFn backward;
  };

  bool record_;
  std::vector<Node> nodes_;
  std::map<std::pair<const ParamSet*, std::string>, int> param_nodes_;
};

// Runs Backward on a scalar loss and returns d(loss)/d(p) for every p.
GradMap ForwardBackward(Var loss, const ParamSet& params);

// --- ops -------------------------------------------------------------------
//
// Binary elementwise ops broadcast any dimension of size 1.

Var MatMul(Var a, Var b);
Var Add(Var a, Var b);
Var Sub(Var a, Var b);
Var Mul(Var a, Var b);
Var Minimum(Var a, Var b);
Var Scale(Var a, float s);
Var AddScalar(Var a, float s);
Var Elu(Var a);
Var Exp(Var a);
Var Square(Var a);
// Gradient passes where lo <= a <= hi, zero elsewhere.
Var Clamp(Var a, float lo, float hi);

Var Sum(Var a);
Var Mean(Var a);
// Per-row sum, [n, m] -> [n, 1].
Var SumCols(Var a);

// Per-row layer normalisation followed by gamma * x + beta; gamma and beta
// are [1, cols].
Var LayerNorm(Var x, Var gamma, Var beta, float eps = 1e-6f);
// Per-row softmax.
Var Softmax(Var a);

Var SliceCols(Var a, int start, int count);
Var SliceRows(Var a, int start, int count);
Var ConcatCols(const std::vector<Var>& parts);
Var ConcatRows(const std::vector<Var>& parts);
// [n, m] -> [n * k, m], each row repeated k times consecutively.
Var RepeatRows(Var a, int k);
// [n, m] -> [n * k, m], the whole block stacked k times.
Var TileRows(Var a, int k);
Var Reshape(Var a, int rows, int cols);

// Multi-head scaled dot-product self-attention. q, k, v are
// [groups * tokens, heads * head_dim]; attention mixes only rows within the
// same group of `tokens` consecutive rows.
Var MultiHeadAttention(Var q, Var k, Var v, int tokens, int heads);

}  // namespace unigait

#endif  // UNIGAIT_GRAPH_H_
