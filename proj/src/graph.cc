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

#include "unigait/graph.h"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <utility>

#include "unigait/error.h"

namespace unigait {
namespace {

using RowMatrix =
    Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMatrix>;
using MutMap = Eigen::Map<RowMatrix>;

ConstMap AsMatrix(const Tensor& t) {
  return ConstMap(t.data(), t.rows(), t.cols());
}
MutMap AsMatrix(Tensor& t) { return MutMap(t.data(), t.rows(), t.cols()); }

const float* At(const Tensor& t, int r, int c) {
  return t.data() + static_cast<std::size_t>(r) * t.cols() + c;
}

Graph& SameGraph(Var a, Var b) {
  if (a.graph == nullptr || a.graph != b.graph) {
    throw InputError("vars belong to different graphs");
  }
  return *a.graph;
}

int BroadcastDim(int a, int b, const char* op) {
  if (a == b || b == 1) return a;
  if (a == 1) return b;
  throw InputError(std::string(op) + ": incompatible broadcast dims " +
                   std::to_string(a) + " vs " + std::to_string(b));
}

// Sums `g` (output-shaped) down to a `rows` x `cols` broadcast source and
// accumulates it into `dst`.
void ReduceInto(const Tensor& g, Tensor& dst) {
  if (g.SameShape(dst)) {
    AsMatrix(dst) += AsMatrix(g);
    return;
  }
  const int rows = g.rows(), cols = g.cols();
  const bool rb = dst.rows() == 1, cb = dst.cols() == 1;
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      dst(rb ? 0 : r, cb ? 0 : c) += g(r, c);
    }
  }
}

// Evaluates f(a, b) elementwise with broadcasting.
template <typename F>
Tensor Broadcast(const Tensor& a, const Tensor& b, const char* op, F f) {
  const int rows = BroadcastDim(a.rows(), b.rows(), op);
  const int cols = BroadcastDim(a.cols(), b.cols(), op);
  Tensor out(rows, cols);
  if (a.SameShape(b)) {
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(a[i], b[i]);
    return out;
  }
  const bool ar = a.rows() == 1, ac = a.cols() == 1;
  const bool br = b.rows() == 1, bc = b.cols() == 1;
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      out(r, c) = f(a(ar ? 0 : r, ac ? 0 : c), b(br ? 0 : r, bc ? 0 : c));
    }
  }
  return out;
}

template <typename F>
Var Unary(Var a, Tensor out, F grad_fn) {
  Graph& g = *a.graph;
  const int ia = a.id;
  return g.AddNode(std::move(out), {ia},
                   [ia, grad_fn](Graph& gr, int self) {
                     if (!gr.needs_grad(ia)) return;
                     const Tensor& go = gr.grad_of(self);
                     const Tensor& x = gr.value(ia);
                     const Tensor& y = gr.value(self);
                     Tensor& gx = gr.grad_buffer(ia);
                     for (std::size_t i = 0; i < go.size(); ++i) {
                       gx[i] += go[i] * grad_fn(x[i], y[i]);
                     }
                   });
}

}  // namespace

const Tensor& Var::value() const { return graph->value(*this); }

Var Graph::AddNode(Tensor value, const std::vector<int>& inputs,
                   BackwardFn fn) {
  Node node;
  node.value = std::move(value);
  if (record_) {
    for (int i : inputs) {
      if (nodes_[i].needs_grad) node.needs_grad = true;
    }
    if (node.needs_grad) node.backward = std::move(fn);
  }
  nodes_.push_back(std::move(node));
  return Var{this, static_cast<int>(nodes_.size()) - 1};
}

Var Graph::Constant(Tensor value) {
  Node node;
  node.value = std::move(value);
  node.is_leaf = true;
  nodes_.push_back(std::move(node));
  return Var{this, static_cast<int>(nodes_.size()) - 1};
}

Var Graph::Input(Tensor value) {
  Var v = Constant(std::move(value));
  nodes_[v.id].needs_grad = record_;
  return v;
}

Var Graph::Param(const ParamSet& params, const std::string& name) {
  auto key = std::make_pair(&params, name);
  auto it = param_nodes_.find(key);
  if (it != param_nodes_.end()) return Var{this, it->second};
  Node node;
  node.external = &params.Get(name);
  node.is_leaf = true;
  node.needs_grad = record_;
  node.param_name = name;
  nodes_.push_back(std::move(node));
  const int id = static_cast<int>(nodes_.size()) - 1;
  param_nodes_[key] = id;
  return Var{this, id};
}

const Tensor& Graph::value(Var v) const { return value(v.id); }

const Tensor& Graph::value(int id) const {
  const Node& n = nodes_[id];
  return n.external != nullptr ? *n.external : n.value;
}

Tensor Graph::grad(Var v) const {
  const Node& n = nodes_[v.id];
  if (n.grad.size() == 0) {
    const Tensor& val = value(v.id);
    return Tensor(val.rows(), val.cols());
  }
  return n.grad;
}

Tensor& Graph::grad_buffer(int id) {
  Node& n = nodes_[id];
  if (n.grad.size() == 0) {
    const Tensor& val = value(id);
    n.grad = Tensor(val.rows(), val.cols());
  }
  return n.grad;
}

void Graph::Backward(Var loss) {
  if (loss.graph != this) throw InputError("loss belongs to another graph");
  const Tensor& lv = value(loss.id);
  if (lv.size() != 1) {
    throw InputError("backward requires a scalar loss, got " +
                     lv.ShapeString());
  }
  if (!record_) throw InputError("backward on a non-recording graph");
  for (auto& n : nodes_) n.grad = Tensor();
  grad_buffer(loss.id)[0] = 1.0f;
  for (int id = loss.id; id >= 0; --id) {
    Node& n = nodes_[id];
    if (!n.needs_grad || n.grad.size() == 0) continue;
    if (n.is_leaf) {
      if (!n.grad.AllFinite()) {
        throw NumericError("non-finite gradient at " +
                           (n.param_name.empty() ? std::string("input")
                                                 : n.param_name));
      }
      continue;
    }
    if (n.backward) n.backward(*this, id);
  }
}

GradMap Graph::ParamGrads(const ParamSet& params) const {
  GradMap grads = params.ZeroGrads();
  for (const auto& [key, id] : param_nodes_) {
    if (key.first != &params) continue;
    const Node& n = nodes_[id];
    if (n.grad.size() != 0) grads[key.second] = n.grad;
  }
  return grads;
}

GradMap ForwardBackward(Var loss, const ParamSet& params) {
  loss.graph->Backward(loss);
  return loss.graph->ParamGrads(params);
}

// --- linear algebra ----------------------------------------------------------

Var MatMul(Var a, Var b) {
  Graph& g = SameGraph(a, b);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (av.cols() != bv.rows()) {
    throw InputError("matmul shape mismatch " + av.ShapeString() + " x " +
                     bv.ShapeString());
  }
  Tensor out(av.rows(), bv.cols());
  AsMatrix(out).noalias() = AsMatrix(av) * AsMatrix(bv);
  const int ia = a.id, ib = b.id;
  return g.AddNode(std::move(out), {ia, ib}, [ia, ib](Graph& gr, int self) {
    const Tensor& go = gr.grad_of(self);
    if (gr.needs_grad(ia)) {
      AsMatrix(gr.grad_buffer(ia)).noalias() +=
          AsMatrix(go) * AsMatrix(gr.value(ib)).transpose();
    }
    if (gr.needs_grad(ib)) {
      AsMatrix(gr.grad_buffer(ib)).noalias() +=
          AsMatrix(gr.value(ia)).transpose() * AsMatrix(go);
    }
  });
}

// --- elementwise binary --------------------------------------------------------

Var Add(Var a, Var b) {
  Graph& g = SameGraph(a, b);
  Tensor out = Broadcast(a.value(), b.value(), "add",
                         [](float x, float y) { return x + y; });
  const int ia = a.id, ib = b.id;
  return g.AddNode(std::move(out), {ia, ib}, [ia, ib](Graph& gr, int self) {
    const Tensor& go = gr.grad_of(self);
    if (gr.needs_grad(ia)) ReduceInto(go, gr.grad_buffer(ia));
    if (gr.needs_grad(ib)) ReduceInto(go, gr.grad_buffer(ib));
  });
}

Var Sub(Var a, Var b) {
  Graph& g = SameGraph(a, b);
  Tensor out = Broadcast(a.value(), b.value(), "sub",
                         [](float x, float y) { return x - y; });
  const int ia = a.id, ib = b.id;
  return g.AddNode(std::move(out), {ia, ib}, [ia, ib](Graph& gr, int self) {
    const Tensor& go = gr.grad_of(self);
    if (gr.needs_grad(ia)) ReduceInto(go, gr.grad_buffer(ia));
    if (gr.needs_grad(ib)) {
      Tensor neg = go;
      for (auto& x : neg.vec()) x = -x;
      ReduceInto(neg, gr.grad_buffer(ib));
    }
  });
}

Var Mul(Var a, Var b) {
  Graph& g = SameGraph(a, b);
  Tensor out = Broadcast(a.value(), b.value(), "mul",
                         [](float x, float y) { return x * y; });
  const int ia = a.id, ib = b.id;
  return g.AddNode(std::move(out), {ia, ib}, [ia, ib](Graph& gr, int self) {
    const Tensor& go = gr.grad_of(self);
    const auto mul = [](float x, float y) { return x * y; };
    if (gr.needs_grad(ia)) {
      ReduceInto(Broadcast(go, gr.value(ib), "mul", mul), gr.grad_buffer(ia));
    }
    if (gr.needs_grad(ib)) {
      ReduceInto(Broadcast(go, gr.value(ia), "mul", mul), gr.grad_buffer(ib));
    }
  });
}

Var Minimum(Var a, Var b) {
  Graph& g = SameGraph(a, b);
  if (!a.value().SameShape(b.value())) {
    throw InputError("minimum requires equal shapes");
  }
  Tensor out = Broadcast(a.value(), b.value(), "minimum",
                         [](float x, float y) { return std::min(x, y); });
  const int ia = a.id, ib = b.id;
  return g.AddNode(std::move(out), {ia, ib}, [ia, ib](Graph& gr, int self) {
    const Tensor& go = gr.grad_of(self);
    const Tensor& av = gr.value(ia);
    const Tensor& bv = gr.value(ib);
    for (std::size_t i = 0; i < go.size(); ++i) {
      // Ties route the gradient to `a`.
      if (av[i] <= bv[i]) {
        if (gr.needs_grad(ia)) gr.grad_buffer(ia)[i] += go[i];
      } else if (gr.needs_grad(ib)) {
        gr.grad_buffer(ib)[i] += go[i];
      }
    }
  });
}

// --- elementwise unary ---------------------------------------------------------

Var Scale(Var a, float s) {
  Tensor out = a.value();
  for (auto& x : out.vec()) x *= s;
  return Unary(a, std::move(out), [s](float, float) { return s; });
}

Var AddScalar(Var a, float s) {
  Tensor out = a.value();
  for (auto& x : out.vec()) x += s;
  return Unary(a, std::move(out), [](float, float) { return 1.0f; });
}

Var Elu(Var a) {
  Tensor out = a.value();
  for (auto& x : out.vec()) x = x > 0.0f ? x : std::expm1(x);
  return Unary(a, std::move(out),
               [](float x, float y) { return x > 0.0f ? 1.0f : y + 1.0f; });
}

Var Exp(Var a) {
  Tensor out = a.value();
  for (auto& x : out.vec()) x = std::exp(x);
  return Unary(a, std::move(out), [](float, float y) { return y; });
}

Var Square(Var a) {
  Tensor out = a.value();
  for (auto& x : out.vec()) x = x * x;
  return Unary(a, std::move(out), [](float x, float) { return 2.0f * x; });
}

Var Clamp(Var a, float lo, float hi) {
  Tensor out = a.value();
  for (auto& x : out.vec()) x = std::clamp(x, lo, hi);
  return Unary(a, std::move(out), [lo, hi](float x, float) {
    return (x >= lo && x <= hi) ? 1.0f : 0.0f;
  });
}

// --- reductions ----------------------------------------------------------------

Var Sum(Var a) {
  Graph& g = *a.graph;
  double total = 0.0;
  for (float x : a.value().vec()) total += x;
  const int ia = a.id;
  return g.AddNode(Tensor::Scalar(static_cast<float>(total)), {ia},
                   [ia](Graph& gr, int self) {
                     if (!gr.needs_grad(ia)) return;
                     const float go = gr.grad_of(self)[0];
                     for (auto& x : gr.grad_buffer(ia).vec()) x += go;
                   });
}

Var Mean(Var a) {
  const float n = static_cast<float>(a.value().size());
  if (n == 0) throw InputError("mean of empty tensor");
  return Scale(Sum(a), 1.0f / n);
}

Var SumCols(Var a) {
  Graph& g = *a.graph;
  const Tensor& av = a.value();
  Tensor out(av.rows(), 1);
  for (int r = 0; r < av.rows(); ++r) {
    float s = 0.0f;
    for (float x : av.row(r)) s += x;
    out(r, 0) = s;
  }
  const int ia = a.id;
  return g.AddNode(std::move(out), {ia}, [ia](Graph& gr, int self) {
    if (!gr.needs_grad(ia)) return;
    const Tensor& go = gr.grad_of(self);
    Tensor& ga = gr.grad_buffer(ia);
    for (int r = 0; r < ga.rows(); ++r) {
      for (auto& x : ga.row(r)) x += go(r, 0);
    }
  });
}

// --- normalisation ---------------------------------------------------------------

Var LayerNorm(Var x, Var gamma, Var beta, float eps) {
  Graph& g = SameGraph(x, gamma);
  SameGraph(x, beta);
  const Tensor& xv = x.value();
  const int n = xv.rows(), d = xv.cols();
  if (gamma.value().rows() != 1 || gamma.value().cols() != d ||
      beta.value().rows() != 1 || beta.value().cols() != d) {
    throw InputError("layer norm affine shape mismatch");
  }
  Tensor xhat(n, d);
  std::vector<float> inv_std(n);
  for (int r = 0; r < n; ++r) {
    double mean = 0.0;
    for (float v : xv.row(r)) mean += v;
    mean /= d;
    double var = 0.0;
    for (float v : xv.row(r)) var += (v - mean) * (v - mean);
    var /= d;
    const double is = 1.0 / std::sqrt(var + eps);
    inv_std[r] = static_cast<float>(is);
    for (int c = 0; c < d; ++c) {
      xhat(r, c) = static_cast<float>((xv(r, c) - mean) * is);
    }
  }
  const Tensor& gv = gamma.value();
  const Tensor& bv = beta.value();
  Tensor out(n, d);
  for (int r = 0; r < n; ++r) {
    for (int c = 0; c < d; ++c) out(r, c) = xhat(r, c) * gv[c] + bv[c];
  }
  const int ix = x.id, ig = gamma.id, ib = beta.id;
  return g.AddNode(
      std::move(out), {ix, ig, ib},
      [ix, ig, ib, xhat = std::move(xhat),
       inv_std = std::move(inv_std)](Graph& gr, int self) {
        const Tensor& go = gr.grad_of(self);
        const int n = go.rows(), d = go.cols();
        if (gr.needs_grad(ig) || gr.needs_grad(ib)) {
          Tensor* gg = gr.needs_grad(ig) ? &gr.grad_buffer(ig) : nullptr;
          Tensor* gb = gr.needs_grad(ib) ? &gr.grad_buffer(ib) : nullptr;
          for (int r = 0; r < n; ++r) {
            for (int c = 0; c < d; ++c) {
              if (gg) (*gg)[c] += go(r, c) * xhat(r, c);
              if (gb) (*gb)[c] += go(r, c);
            }
          }
        }
        if (!gr.needs_grad(ix)) return;
        const Tensor& gv = gr.value(ig);
        Tensor& gx = gr.grad_buffer(ix);
        std::vector<float> dxhat(d);
        for (int r = 0; r < n; ++r) {
          double mean_d = 0.0, mean_dx = 0.0;
          for (int c = 0; c < d; ++c) {
            dxhat[c] = go(r, c) * gv[c];
            mean_d += dxhat[c];
            mean_dx += dxhat[c] * xhat(r, c);
          }
          mean_d /= d;
          mean_dx /= d;
          for (int c = 0; c < d; ++c) {
            gx(r, c) += inv_std[r] * static_cast<float>(
                                         dxhat[c] - mean_d - xhat(r, c) * mean_dx);
          }
        }
      });
}

Var Softmax(Var a) {
  Graph& g = *a.graph;
  Tensor out = a.value();
  for (int r = 0; r < out.rows(); ++r) {
    auto row = out.row(r);
    const float mx = *std::max_element(row.begin(), row.end());
    float s = 0.0f;
    for (auto& x : row) {
      x = std::exp(x - mx);
      s += x;
    }
    for (auto& x : row) x /= s;
  }
  const int ia = a.id;
  return g.AddNode(std::move(out), {ia}, [ia](Graph& gr, int self) {
    if (!gr.needs_grad(ia)) return;
    const Tensor& go = gr.grad_of(self);
    const Tensor& y = gr.value(self);
    Tensor& ga = gr.grad_buffer(ia);
    for (int r = 0; r < y.rows(); ++r) {
      float dot = 0.0f;
      for (int c = 0; c < y.cols(); ++c) dot += go(r, c) * y(r, c);
      for (int c = 0; c < y.cols(); ++c) ga(r, c) += y(r, c) * (go(r, c) - dot);
    }
  });
}

// --- structural --------------------------------------------------------------------

Var SliceCols(Var a, int start, int count) {
  Graph& g = *a.graph;
  const Tensor& av = a.value();
  if (start < 0 || count < 0 || start + count > av.cols()) {
    throw InputError("column slice out of range");
  }
  Tensor out(av.rows(), count);
  for (int r = 0; r < av.rows(); ++r) {
    std::copy_n(av.row(r).begin() + start, count, out.row(r).begin());
  }
  const int ia = a.id;
  return g.AddNode(std::move(out), {ia}, [ia, start](Graph& gr, int self) {
    if (!gr.needs_grad(ia)) return;
    const Tensor& go = gr.grad_of(self);
    Tensor& ga = gr.grad_buffer(ia);
    for (int r = 0; r < go.rows(); ++r) {
      for (int c = 0; c < go.cols(); ++c) ga(r, start + c) += go(r, c);
    }
  });
}

Var SliceRows(Var a, int start, int count) {
  Graph& g = *a.graph;
  const Tensor& av = a.value();
  if (start < 0 || count < 0 || start + count > av.rows()) {
    throw InputError("row slice out of range");
  }
  const std::size_t offset = static_cast<std::size_t>(start) * av.cols();
  Tensor out(count, av.cols(),
             std::vector<float>(av.vec().begin() + offset,
                                av.vec().begin() + offset +
                                    static_cast<std::size_t>(count) * av.cols()));
  const int ia = a.id;
  return g.AddNode(std::move(out), {ia}, [ia, offset](Graph& gr, int self) {
    if (!gr.needs_grad(ia)) return;
    const Tensor& go = gr.grad_of(self);
    Tensor& ga = gr.grad_buffer(ia);
    for (std::size_t i = 0; i < go.size(); ++i) ga[offset + i] += go[i];
  });
}

Var ConcatCols(const std::vector<Var>& parts) {
  if (parts.empty()) throw InputError("concat of nothing");
  Graph& g = *parts[0].graph;
  const int rows = parts[0].rows();
  int cols = 0;
  std::vector<int> ids, offsets;
  for (const Var& p : parts) {
    SameGraph(parts[0], p);
    if (p.rows() != rows) throw InputError("concat_cols row mismatch");
    ids.push_back(p.id);
    offsets.push_back(cols);
    cols += p.cols();
  }
  Tensor out(rows, cols);
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const Tensor& pv = parts[k].value();
    for (int r = 0; r < rows; ++r) {
      std::copy(pv.row(r).begin(), pv.row(r).end(),
                out.row(r).begin() + offsets[k]);
    }
  }
  return g.AddNode(std::move(out), ids, [ids, offsets](Graph& gr, int self) {
    const Tensor& go = gr.grad_of(self);
    for (std::size_t k = 0; k < ids.size(); ++k) {
      if (!gr.needs_grad(ids[k])) continue;
      Tensor& gp = gr.grad_buffer(ids[k]);
      for (int r = 0; r < gp.rows(); ++r) {
        for (int c = 0; c < gp.cols(); ++c) gp(r, c) += go(r, offsets[k] + c);
      }
    }
  });
}

Var ConcatRows(const std::vector<Var>& parts) {
  if (parts.empty()) throw InputError("concat of nothing");
  Graph& g = *parts[0].graph;
  const int cols = parts[0].cols();
  std::vector<int> ids;
  std::vector<float> data;
  int rows = 0;
  for (const Var& p : parts) {
    SameGraph(parts[0], p);
    if (p.cols() != cols) throw InputError("concat_rows column mismatch");
    ids.push_back(p.id);
    rows += p.rows();
    data.insert(data.end(), p.value().vec().begin(), p.value().vec().end());
  }
  return g.AddNode(Tensor(rows, cols, std::move(data)), ids,
                   [ids](Graph& gr, int self) {
                     const Tensor& go = gr.grad_of(self);
                     std::size_t offset = 0;
                     for (int id : ids) {
                       const std::size_t n = gr.value(id).size();
                       if (gr.needs_grad(id)) {
                         Tensor& gp = gr.grad_buffer(id);
                         for (std::size_t i = 0; i < n; ++i) {
                           gp[i] += go[offset + i];
                         }
                       }
                       offset += n;
                     }
                   });
}

Var RepeatRows(Var a, int k) {
  Graph& g = *a.graph;
  const Tensor& av = a.value();
  Tensor out(av.rows() * k, av.cols());
  for (int r = 0; r < av.rows(); ++r) {
    for (int j = 0; j < k; ++j) {
      std::copy(av.row(r).begin(), av.row(r).end(), out.row(r * k + j).begin());
    }
  }
  const int ia = a.id;
  return g.AddNode(std::move(out), {ia}, [ia, k](Graph& gr, int self) {
    if (!gr.needs_grad(ia)) return;
    const Tensor& go = gr.grad_of(self);
    Tensor& ga = gr.grad_buffer(ia);
    for (int r = 0; r < ga.rows(); ++r) {
      for (int j = 0; j < k; ++j) {
        for (int c = 0; c < ga.cols(); ++c) ga(r, c) += go(r * k + j, c);
      }
    }
  });
}

Var TileRows(Var a, int k) {
  Graph& g = *a.graph;
  const Tensor& av = a.value();
  std::vector<float> data;
  data.reserve(av.size() * k);
  for (int j = 0; j < k; ++j) {
    data.insert(data.end(), av.vec().begin(), av.vec().end());
  }
  const int ia = a.id;
  return g.AddNode(Tensor(av.rows() * k, av.cols(), std::move(data)), {ia},
                   [ia, k](Graph& gr, int self) {
                     if (!gr.needs_grad(ia)) return;
                     const Tensor& go = gr.grad_of(self);
                     Tensor& ga = gr.grad_buffer(ia);
                     const std::size_t n = ga.size();
                     for (int j = 0; j < k; ++j) {
                       for (std::size_t i = 0; i < n; ++i) ga[i] += go[j * n + i];
                     }
                   });
}

Var Reshape(Var a, int rows, int cols) {
  Graph& g = *a.graph;
  const Tensor& av = a.value();
  if (static_cast<std::size_t>(rows) * cols != av.size()) {
    throw InputError("reshape size mismatch");
  }
  const int ia = a.id;
  return g.AddNode(Tensor(rows, cols, av.vec()), {ia},
                   [ia](Graph& gr, int self) {
                     if (!gr.needs_grad(ia)) return;
                     const Tensor& go = gr.grad_of(self);
                     Tensor& ga = gr.grad_buffer(ia);
                     for (std::size_t i = 0; i < go.size(); ++i) ga[i] += go[i];
                   });
}

// --- attention -------------------------------------------------------------------

Var MultiHeadAttention(Var q, Var k, Var v, int tokens, int heads) {
  Graph& g = SameGraph(q, k);
  SameGraph(q, v);
  const Tensor& qv = q.value();
  const Tensor& kv = k.value();
  const Tensor& vv = v.value();
  if (!qv.SameShape(kv) || !qv.SameShape(vv)) {
    throw InputError("attention q/k/v shape mismatch");
  }
  const int n = qv.rows(), d = qv.cols();
  if (tokens <= 0 || n % tokens != 0 || heads <= 0 || d % heads != 0) {
    throw InputError("attention token/head layout mismatch");
  }
  const int groups = n / tokens, hd = d / heads;
  const float scale = 1.0f / std::sqrt(static_cast<float>(hd));
  // probs[(group * heads + h) * tokens * tokens + i * tokens + j]
  std::vector<float> probs(static_cast<std::size_t>(groups) * heads * tokens *
                           tokens);
  Tensor out(n, d);
  std::vector<float> logits(tokens);
  for (int b = 0; b < groups; ++b) {
    for (int h = 0; h < heads; ++h) {
      float* p = &probs[(static_cast<std::size_t>(b) * heads + h) * tokens *
                        tokens];
      for (int i = 0; i < tokens; ++i) {
        const float* qi = At(qv, b * tokens + i, h * hd);
        float mx = -INFINITY;
        for (int j = 0; j < tokens; ++j) {
          const float* kj = At(kv, b * tokens + j, h * hd);
          float s = 0.0f;
          for (int c = 0; c < hd; ++c) s += qi[c] * kj[c];
          logits[j] = s * scale;
          mx = std::max(mx, logits[j]);
        }
        float sum = 0.0f;
        for (int j = 0; j < tokens; ++j) {
          logits[j] = std::exp(logits[j] - mx);
          sum += logits[j];
        }
        float* oi = &out(b * tokens + i, h * hd);
        for (int j = 0; j < tokens; ++j) {
          const float w = logits[j] / sum;
          p[i * tokens + j] = w;
          const float* vj = At(vv, b * tokens + j, h * hd);
          for (int c = 0; c < hd; ++c) oi[c] += w * vj[c];
        }
      }
    }
  }
  const int iq = q.id, ik = k.id, iv = v.id;
  return g.AddNode(
      std::move(out), {iq, ik, iv},
      [iq, ik, iv, tokens, heads, groups, hd, scale,
       probs = std::move(probs)](Graph& gr, int self) {
        const Tensor& go = gr.grad_of(self);
        const Tensor& qv = gr.value(iq);
        const Tensor& kv = gr.value(ik);
        const Tensor& vv = gr.value(iv);
        Tensor* gq = gr.needs_grad(iq) ? &gr.grad_buffer(iq) : nullptr;
        Tensor* gk = gr.needs_grad(ik) ? &gr.grad_buffer(ik) : nullptr;
        Tensor* gv = gr.needs_grad(iv) ? &gr.grad_buffer(iv) : nullptr;
        std::vector<float> dp(tokens);
        for (int b = 0; b < groups; ++b) {
          for (int h = 0; h < heads; ++h) {
            const float* p = &probs[(static_cast<std::size_t>(b) * heads + h) *
                                    tokens * tokens];
            for (int i = 0; i < tokens; ++i) {
              const float* goi = At(go, b * tokens + i, h * hd);
              float dot = 0.0f;
              for (int j = 0; j < tokens; ++j) {
                const float* vj = At(vv, b * tokens + j, h * hd);
                float s = 0.0f;
                for (int c = 0; c < hd; ++c) s += goi[c] * vj[c];
                dp[j] = s;
                dot += s * p[i * tokens + j];
                if (gv) {
                  float* gvj = &(*gv)(b * tokens + j, h * hd);
                  const float w = p[i * tokens + j];
                  for (int c = 0; c < hd; ++c) gvj[c] += w * goi[c];
                }
              }
              const float* qi = At(qv, b * tokens + i, h * hd);
              for (int j = 0; j < tokens; ++j) {
                const float ds = p[i * tokens + j] * (dp[j] - dot) * scale;
                const float* kj = At(kv, b * tokens + j, h * hd);
                if (gq) {
                  float* gqi = &(*gq)(b * tokens + i, h * hd);
                  for (int c = 0; c < hd; ++c) gqi[c] += ds * kj[c];
                }
                if (gk) {
                  float* gkj = &(*gk)(b * tokens + j, h * hd);
                  for (int c = 0; c < hd; ++c) gkj[c] += ds * qi[c];
                }
              }
            }
          }
        }
      });
}

}  // namespace unigait
