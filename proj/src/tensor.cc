// xducer/tensor.cc

// Copyright 2026  The xducer Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

#include "xducer/tensor.h"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>
#include <unordered_set>

namespace xducer {

namespace {

std::atomic<Precision> g_precision{Precision::k32};

using internal::Node;
using NodePtr = std::shared_ptr<Node>;
using BackwardFn = std::function<void(const Node &)>;

void RequireRank(const Tensor &t, int rank, const char *op) {
  if (t.rank() != rank) {
    std::ostringstream os;
    os << op << ": expected rank " << rank << ", got shape "
       << ShapeString(t.shape());
    throw DimensionError(os.str());
  }
}

void RequireSameShape(const Tensor &a, const Tensor &b, const char *op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape " + ShapeString(a.shape()) +
                         " vs " + ShapeString(b.shape()));
  }
}

// Builds the output node, rounding to the active precision and rejecting
// non-finite values. The backward closure is attached only when some input
// requires a gradient.
Tensor MakeResult(Shape shape, std::vector<double> data, const char *op,
                  std::vector<Tensor> inputs, BackwardFn backward) {
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  if (GetPrecision() == Precision::k32) {
    for (double &v : data) v = static_cast<float>(v);
  }
  for (double v : data) {
    if (!std::isfinite(v)) {
      throw NumericError(std::string(op) + " produced a non-finite value");
    }
  }
  node->data = std::move(data);
  node->op = op;
  bool any = false;
  if (GradEnabled())
    for (const Tensor &t : inputs) any = any || t.requires_grad();
  if (any) {
    node->requires_grad = true;
    node->inputs.reserve(inputs.size());
    for (const Tensor &t : inputs) node->inputs.push_back(t.node());
    node->backward = std::move(backward);
  }
  return Tensor(std::move(node));
}

// Adds `src` into the gradient of `node` if it wants one.
void Accumulate(const NodePtr &node, std::span<const double> src) {
  if (!node->requires_grad) return;
  node->EnsureGrad();
  for (std::size_t i = 0; i < src.size(); ++i) node->grad[i] += src[i];
}

int NormalizeAxis(int axis, int rank, const char *op) {
  int a = axis < 0 ? axis + rank : axis;
  if (a < 0 || a >= rank) {
    throw DimensionError(std::string(op) + ": axis out of range");
  }
  return a;
}

// Splits a shape around `axis` into (outer, n, inner).
void AxisSplit(const Shape &shape, int axis, std::size_t *outer,
               std::size_t *n, std::size_t *inner) {
  *outer = 1;
  *inner = 1;
  for (int i = 0; i < axis; ++i) *outer *= shape[i];
  *n = shape[axis];
  for (std::size_t i = axis + 1; i < shape.size(); ++i) *inner *= shape[i];
}

// out[m,n] += a[m,k] * b[k,n]. Each output element accumulates over k in
// ascending order regardless of m, so row subsets give identical results.
void GemmAccumulate(const double *a, const double *b, double *out, int m,
                    int k, int n) {
  for (int i = 0; i < m; ++i) {
    double *orow = out + static_cast<std::size_t>(i) * n;
    const double *arow = a + static_cast<std::size_t>(i) * k;
    for (int p = 0; p < k; ++p) {
      const double av = arow[p];
      const double *brow = b + static_cast<std::size_t>(p) * n;
      for (int j = 0; j < n; ++j) orow[j] += av * brow[j];
    }
  }
}

// Fixed-order dot product with independent partial sums so the compiler can
// vectorize it.
double Dot(const double *a, const double *b, int k) {
  double s[8] = {0, 0, 0, 0, 0, 0, 0, 0};
  int p = 0;
  for (; p + 8 <= k; p += 8)
    for (int l = 0; l < 8; ++l) s[l] += a[p + l] * b[p + l];
  double tail = 0.0;
  for (; p < k; ++p) tail += a[p] * b[p];
  return ((s[0] + s[4]) + (s[1] + s[5])) + ((s[2] + s[6]) + (s[3] + s[7])) +
         tail;
}

// out[m,n] += a[m,k] * b[n,k]^T
void GemmAccumulateBT(const double *a, const double *b, double *out, int m,
                      int k, int n) {
  for (int i = 0; i < m; ++i) {
    const double *arow = a + static_cast<std::size_t>(i) * k;
    for (int j = 0; j < n; ++j) {
      const double *brow = b + static_cast<std::size_t>(j) * k;
      out[static_cast<std::size_t>(i) * n + j] += Dot(arow, brow, k);
    }
  }
}

// out[k,n] += a[m,k]^T * b[m,n]
void GemmAccumulateAT(const double *a, const double *b, double *out, int m,
                      int k, int n) {
  for (int i = 0; i < m; ++i) {
    const double *arow = a + static_cast<std::size_t>(i) * k;
    const double *brow = b + static_cast<std::size_t>(i) * n;
    for (int p = 0; p < k; ++p) {
      const double av = arow[p];
      double *orow = out + static_cast<std::size_t>(p) * n;
      for (int j = 0; j < n; ++j) orow[j] += av * brow[j];
    }
  }
}

}  // namespace

namespace {
thread_local bool g_grad_enabled = true;
}

NoGradScope::NoGradScope() : saved_(g_grad_enabled) { g_grad_enabled = false; }
NoGradScope::~NoGradScope() { g_grad_enabled = saved_; }
bool GradEnabled() { return g_grad_enabled; }

void SetPrecision(Precision p) { g_precision.store(p); }
Precision GetPrecision() { return g_precision.load(); }

double RoundToPrecision(double v) {
  return GetPrecision() == Precision::k32 ? static_cast<double>(
                                                static_cast<float>(v))
                                          : v;
}

std::string ShapeString(const Shape &shape) {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ')';
  return os.str();
}

std::size_t ShapeNumel(const Shape &shape) {
  std::size_t n = 1;
  for (int e : shape) n *= static_cast<std::size_t>(e);
  return n;
}

// ---------------------------------------------------------------------------
// Tensor

Tensor Tensor::Zeros(Shape shape) { return Full(std::move(shape), 0.0); }

Tensor Tensor::Full(Shape shape, double value) {
  std::vector<double> data(ShapeNumel(shape), value);
  return FromVector(std::move(shape), std::move(data));
}

Tensor Tensor::FromVector(Shape shape, std::vector<double> data) {
  for (int e : shape) {
    if (e <= 0) {
      throw DimensionError("extents must be positive, got " +
                           ShapeString(shape));
    }
  }
  if (ShapeNumel(shape) != data.size()) {
    throw DimensionError("data size " + std::to_string(data.size()) +
                         " does not match shape " + ShapeString(shape));
  }
  return MakeResult(std::move(shape), std::move(data), "leaf", {}, nullptr);
}

Tensor Tensor::Scalar(double value) { return FromVector({1}, {value}); }

int Tensor::dim(int axis) const {
  return node_->shape[NormalizeAxis(axis, rank(), "dim")];
}

double Tensor::item() const {
  if (numel() != 1) throw DimensionError("item() on non-scalar tensor");
  return node_->data[0];
}

double Tensor::at(int i) const { return node_->data.at(i); }

double Tensor::at(int i, int j) const {
  return node_->data.at(static_cast<std::size_t>(i) * shape()[1] + j);
}

double Tensor::at(int i, int j, int k) const {
  const Shape &s = shape();
  return node_->data.at((static_cast<std::size_t>(i) * s[1] + j) * s[2] + k);
}

Tensor &Tensor::set_requires_grad(bool value) {
  if (!is_leaf()) throw ContractError("requires_grad can only be set on leaves");
  node_->requires_grad = value;
  return *this;
}

std::vector<double> Tensor::grad() const {
  if (node_->grad.empty()) return std::vector<double>(numel(), 0.0);
  return node_->grad;
}

void Tensor::zero_grad() { node_->grad.clear(); }

std::span<double> Tensor::mutable_data() {
  if (!is_leaf()) throw ContractError("mutable_data on a non-leaf tensor");
  return node_->data;
}

std::span<double> Tensor::mutable_grad() {
  node_->EnsureGrad();
  return node_->grad;
}

// ---------------------------------------------------------------------------
// Tape

Tape Tape::Record(const Tensor &root) {
  Tape tape;
  std::unordered_set<const Node *> seen;
  // Iterative post-order DFS.
  std::vector<std::pair<NodePtr, std::size_t>> stack;
  stack.emplace_back(root.node(), 0);
  seen.insert(root.node().get());
  while (!stack.empty()) {
    auto &[node, next] = stack.back();
    if (next < node->inputs.size()) {
      NodePtr child = node->inputs[next++];
      if (child->requires_grad && seen.insert(child.get()).second) {
        stack.emplace_back(child, 0);
      }
    } else {
      tape.nodes_.push_back(node);
      stack.pop_back();
    }
  }
  return tape;
}

std::vector<std::string> Tape::op_names() const {
  std::vector<std::string> names;
  names.reserve(nodes_.size());
  for (const auto &n : nodes_) names.emplace_back(n->op);
  return names;
}

void Tape::Backward() {
  if (nodes_.empty()) return;
  const NodePtr &root = nodes_.back();
  if (root->data.size() != 1) {
    throw ContractError("backward root must be a scalar, got shape " +
                        ShapeString(root->shape));
  }
  if (!root->requires_grad) {
    throw ContractError("backward root does not depend on any parameter");
  }
  if (root->is_leaf()) {
    root->EnsureGrad();
    root->grad[0] += 1.0;
    return;
  }
  root->grad.assign(1, 1.0);
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
    Node &node = **it;
    if (node.is_leaf() || node.grad.empty()) continue;
    node.backward(node);
  }
  for (auto &n : nodes_) {
    if (!n->is_leaf()) n->grad.clear();
  }
}

void Backward(const Tensor &root) { Tape::Record(root).Backward(); }

// ---------------------------------------------------------------------------
// Operations

Tensor MatMul(const Tensor &a, const Tensor &b) {
  RequireRank(a, 2, "matmul");
  RequireRank(b, 2, "matmul");
  const int m = a.dim(0), k = a.dim(1), n = b.dim(1);
  if (b.dim(0) != k) {
    throw DimensionError("matmul: " + ShapeString(a.shape()) + " x " +
                         ShapeString(b.shape()));
  }
  std::vector<double> out(static_cast<std::size_t>(m) * n, 0.0);
  GemmAccumulate(a.data().data(), b.data().data(), out.data(), m, k, n);
  NodePtr an = a.node(), bn = b.node();
  return MakeResult({m, n}, std::move(out), "matmul", {a, b},
                    [an, bn, m, k, n](const Node &o) {
                      if (an->requires_grad) {
                        an->EnsureGrad();
                        GemmAccumulateBT(o.grad.data(), bn->data.data(),
                                         an->grad.data(), m, n, k);
                      }
                      if (bn->requires_grad) {
                        bn->EnsureGrad();
                        GemmAccumulateAT(an->data.data(), o.grad.data(),
                                         bn->grad.data(), m, k, n);
                      }
                    });
}

Tensor Add(const Tensor &a, const Tensor &b) {
  RequireSameShape(a, b, "add");
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] + b.data()[i];
  NodePtr an = a.node(), bn = b.node();
  return MakeResult(a.shape(), std::move(out), "add", {a, b},
                    [an, bn](const Node &o) {
                      Accumulate(an, o.grad);
                      Accumulate(bn, o.grad);
                    });
}

Tensor Sub(const Tensor &a, const Tensor &b) {
  RequireSameShape(a, b, "sub");
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] - b.data()[i];
  NodePtr an = a.node(), bn = b.node();
  return MakeResult(a.shape(), std::move(out), "sub", {a, b},
                    [an, bn](const Node &o) {
                      Accumulate(an, o.grad);
                      if (bn->requires_grad) {
                        bn->EnsureGrad();
                        for (std::size_t i = 0; i < o.grad.size(); ++i)
                          bn->grad[i] -= o.grad[i];
                      }
                    });
}

Tensor Mul(const Tensor &a, const Tensor &b) {
  RequireSameShape(a, b, "mul");
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] * b.data()[i];
  NodePtr an = a.node(), bn = b.node();
  return MakeResult(a.shape(), std::move(out), "mul", {a, b},
                    [an, bn](const Node &o) {
                      if (an->requires_grad) {
                        an->EnsureGrad();
                        for (std::size_t i = 0; i < o.grad.size(); ++i)
                          an->grad[i] += o.grad[i] * bn->data[i];
                      }
                      if (bn->requires_grad) {
                        bn->EnsureGrad();
                        for (std::size_t i = 0; i < o.grad.size(); ++i)
                          bn->grad[i] += o.grad[i] * an->data[i];
                      }
                    });
}

Tensor Scale(const Tensor &a, double factor) {
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] * factor;
  NodePtr an = a.node();
  return MakeResult(a.shape(), std::move(out), "scale", {a},
                    [an, factor](const Node &o) {
                      an->EnsureGrad();
                      for (std::size_t i = 0; i < o.grad.size(); ++i)
                        an->grad[i] += o.grad[i] * factor;
                    });
}

Tensor AddBias(const Tensor &x, const Tensor &bias) {
  RequireRank(bias, 1, "add_bias");
  const int n = bias.dim(0);
  if (x.shape().back() != n) {
    throw DimensionError("add_bias: " + ShapeString(x.shape()) + " + " +
                         ShapeString(bias.shape()));
  }
  std::vector<double> out(x.data().begin(), x.data().end());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += bias.data()[i % n];
  NodePtr xn = x.node(), bn = bias.node();
  return MakeResult(x.shape(), std::move(out), "add_bias", {x, bias},
                    [xn, bn, n](const Node &o) {
                      Accumulate(xn, o.grad);
                      if (bn->requires_grad) {
                        bn->EnsureGrad();
                        for (std::size_t i = 0; i < o.grad.size(); ++i)
                          bn->grad[i % n] += o.grad[i];
                      }
                    });
}

Tensor Linear(const Tensor &x, const Tensor &weight, const Tensor &bias) {
  return AddBias(MatMul(x, weight), bias);
}

Tensor Relu(const Tensor &x) {
  std::vector<double> out(x.numel());
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = x.data()[i] > 0.0 ? x.data()[i] : 0.0;
  NodePtr xn = x.node();
  return MakeResult(x.shape(), std::move(out), "relu", {x},
                    [xn](const Node &o) {
                      xn->EnsureGrad();
                      for (std::size_t i = 0; i < o.grad.size(); ++i)
                        if (xn->data[i] > 0.0) xn->grad[i] += o.grad[i];
                    });
}

Tensor Tanh(const Tensor &x) {
  std::vector<double> out(x.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::tanh(x.data()[i]);
  NodePtr xn = x.node();
  return MakeResult(x.shape(), std::move(out), "tanh", {x},
                    [xn](const Node &o) {
                      xn->EnsureGrad();
                      for (std::size_t i = 0; i < o.grad.size(); ++i)
                        xn->grad[i] += o.grad[i] * (1.0 - o.data[i] * o.data[i]);
                    });
}

Tensor Exp(const Tensor &x) {
  std::vector<double> out(x.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::exp(x.data()[i]);
  NodePtr xn = x.node();
  return MakeResult(x.shape(), std::move(out), "exp", {x},
                    [xn](const Node &o) {
                      xn->EnsureGrad();
                      for (std::size_t i = 0; i < o.grad.size(); ++i)
                        xn->grad[i] += o.grad[i] * o.data[i];
                    });
}

Tensor Conv1d(const Tensor &x, const Tensor &weight, const Tensor &bias,
              bool causal) {
  RequireRank(x, 2, "conv1d");
  RequireRank(weight, 3, "conv1d");
  RequireRank(bias, 1, "conv1d");
  const int T = x.dim(0), cin = x.dim(1);
  const int K = weight.dim(0), cout = weight.dim(2);
  if (weight.dim(1) != cin || bias.dim(0) != cout) {
    throw DimensionError("conv1d: input " + ShapeString(x.shape()) +
                         ", weight " + ShapeString(weight.shape()) +
                         ", bias " + ShapeString(bias.shape()));
  }
  const int pad_left = causal ? K - 1 : (K - 1) / 2;
  std::vector<double> out(static_cast<std::size_t>(T) * cout);
  const double *xd = x.data().data();
  const double *wd = weight.data().data();
  for (int t = 0; t < T; ++t) {
    double *orow = out.data() + static_cast<std::size_t>(t) * cout;
    for (int o = 0; o < cout; ++o) orow[o] = bias.data()[o];
    for (int k = 0; k < K; ++k) {
      const int src = t - pad_left + k;
      if (src < 0 || src >= T) continue;
      GemmAccumulate(xd + static_cast<std::size_t>(src) * cin,
                     wd + static_cast<std::size_t>(k) * cin * cout, orow, 1,
                     cin, cout);
    }
  }
  NodePtr xn = x.node(), wn = weight.node(), bn = bias.node();
  return MakeResult(
      {T, cout}, std::move(out), "conv1d", {x, weight, bias},
      [xn, wn, bn, T, cin, cout, K, pad_left](const Node &o) {
        if (xn->requires_grad) xn->EnsureGrad();
        if (wn->requires_grad) wn->EnsureGrad();
        if (bn->requires_grad) bn->EnsureGrad();
        for (int t = 0; t < T; ++t) {
          const double *g = o.grad.data() + static_cast<std::size_t>(t) * cout;
          if (bn->requires_grad)
            for (int c = 0; c < cout; ++c) bn->grad[c] += g[c];
          for (int k = 0; k < K; ++k) {
            const int src = t - pad_left + k;
            if (src < 0 || src >= T) continue;
            const std::size_t woff = static_cast<std::size_t>(k) * cin * cout;
            const std::size_t xoff = static_cast<std::size_t>(src) * cin;
            if (xn->requires_grad)
              GemmAccumulateBT(g, wn->data.data() + woff,
                               xn->grad.data() + xoff, 1, cout, cin);
            if (wn->requires_grad)
              GemmAccumulateAT(xn->data.data() + xoff, g,
                               wn->grad.data() + woff, 1, cin, cout);
          }
        }
      });
}

Tensor LayerNorm(const Tensor &x, const Tensor &gamma, const Tensor &beta,
                 double eps) {
  const int d = x.shape().back();
  if (gamma.shape() != Shape{d} || beta.shape() != Shape{d}) {
    throw DimensionError("layernorm: input " + ShapeString(x.shape()) +
                         ", gamma " + ShapeString(gamma.shape()));
  }
  const std::size_t rows = x.numel() / d;
  std::vector<double> out(x.numel());
  auto xhat = std::make_shared<std::vector<double>>(x.numel());
  auto inv_std = std::make_shared<std::vector<double>>(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const double *xr = x.data().data() + r * d;
    double mean = 0.0;
    for (int i = 0; i < d; ++i) mean += xr[i];
    mean /= d;
    double var = 0.0;
    for (int i = 0; i < d; ++i) var += (xr[i] - mean) * (xr[i] - mean);
    var /= d;
    const double is = 1.0 / std::sqrt(var + eps);
    (*inv_std)[r] = is;
    for (int i = 0; i < d; ++i) {
      const double h = (xr[i] - mean) * is;
      (*xhat)[r * d + i] = h;
      out[r * d + i] = gamma.data()[i] * h + beta.data()[i];
    }
  }
  NodePtr xn = x.node(), gn = gamma.node(), bn = beta.node();
  return MakeResult(
      x.shape(), std::move(out), "layernorm", {x, gamma, beta},
      [xn, gn, bn, xhat, inv_std, d, rows](const Node &o) {
        if (gn->requires_grad) gn->EnsureGrad();
        if (bn->requires_grad) bn->EnsureGrad();
        if (xn->requires_grad) xn->EnsureGrad();
        std::vector<double> dh(d);
        for (std::size_t r = 0; r < rows; ++r) {
          const double *g = o.grad.data() + r * d;
          const double *h = xhat->data() + r * d;
          double mean_dh = 0.0, mean_dh_h = 0.0;
          for (int i = 0; i < d; ++i) {
            if (gn->requires_grad) gn->grad[i] += g[i] * h[i];
            if (bn->requires_grad) bn->grad[i] += g[i];
            dh[i] = g[i] * gn->data[i];
            mean_dh += dh[i];
            mean_dh_h += dh[i] * h[i];
          }
          mean_dh /= d;
          mean_dh_h /= d;
          if (xn->requires_grad) {
            for (int i = 0; i < d; ++i)
              xn->grad[r * d + i] +=
                  (*inv_std)[r] * (dh[i] - mean_dh - h[i] * mean_dh_h);
          }
        }
      });
}

Tensor Softmax(const Tensor &x, int axis) {
  const int a = NormalizeAxis(axis, x.rank(), "softmax");
  std::size_t outer, n, inner;
  AxisSplit(x.shape(), a, &outer, &n, &inner);
  std::vector<double> out(x.numel());
  const double *xd = x.data().data();
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t in = 0; in < inner; ++in) {
      const std::size_t base = o * n * inner + in;
      double mx = -std::numeric_limits<double>::infinity();
      for (std::size_t i = 0; i < n; ++i) mx = std::max(mx, xd[base + i * inner]);
      double sum = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        const double e = std::exp(xd[base + i * inner] - mx);
        out[base + i * inner] = e;
        sum += e;
      }
      for (std::size_t i = 0; i < n; ++i) out[base + i * inner] /= sum;
    }
  }
  NodePtr xn = x.node();
  return MakeResult(
      x.shape(), std::move(out), "softmax", {x},
      [xn, outer, n, inner](const Node &o) {
        xn->EnsureGrad();
        for (std::size_t ou = 0; ou < outer; ++ou) {
          for (std::size_t in = 0; in < inner; ++in) {
            const std::size_t base = ou * n * inner + in;
            double dot = 0.0;
            for (std::size_t i = 0; i < n; ++i)
              dot += o.grad[base + i * inner] * o.data[base + i * inner];
            for (std::size_t i = 0; i < n; ++i) {
              const std::size_t idx = base + i * inner;
              xn->grad[idx] += o.data[idx] * (o.grad[idx] - dot);
            }
          }
        }
      });
}

Tensor LogSoftmax(const Tensor &x, int axis) {
  const int a = NormalizeAxis(axis, x.rank(), "log_softmax");
  std::size_t outer, n, inner;
  AxisSplit(x.shape(), a, &outer, &n, &inner);
  std::vector<double> out(x.numel());
  const double *xd = x.data().data();
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t in = 0; in < inner; ++in) {
      const std::size_t base = o * n * inner + in;
      double mx = -std::numeric_limits<double>::infinity();
      for (std::size_t i = 0; i < n; ++i) mx = std::max(mx, xd[base + i * inner]);
      double sum = 0.0;
      for (std::size_t i = 0; i < n; ++i) sum += std::exp(xd[base + i * inner] - mx);
      const double lse = mx + std::log(sum);
      for (std::size_t i = 0; i < n; ++i)
        out[base + i * inner] = xd[base + i * inner] - lse;
    }
  }
  NodePtr xn = x.node();
  return MakeResult(
      x.shape(), std::move(out), "log_softmax", {x},
      [xn, outer, n, inner](const Node &o) {
        xn->EnsureGrad();
        for (std::size_t ou = 0; ou < outer; ++ou) {
          for (std::size_t in = 0; in < inner; ++in) {
            const std::size_t base = ou * n * inner + in;
            double gsum = 0.0;
            for (std::size_t i = 0; i < n; ++i) gsum += o.grad[base + i * inner];
            for (std::size_t i = 0; i < n; ++i) {
              const std::size_t idx = base + i * inner;
              xn->grad[idx] += o.grad[idx] - std::exp(o.data[idx]) * gsum;
            }
          }
        }
      });
}

Tensor LogSumExp(const Tensor &x, int axis) {
  const int a = NormalizeAxis(axis, x.rank(), "logsumexp");
  std::size_t outer, n, inner;
  AxisSplit(x.shape(), a, &outer, &n, &inner);
  Shape shape;
  for (int i = 0; i < x.rank(); ++i)
    if (i != a) shape.push_back(x.shape()[i]);
  if (shape.empty()) shape = {1};
  std::vector<double> out(outer * inner);
  const double *xd = x.data().data();
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t in = 0; in < inner; ++in) {
      const std::size_t base = o * n * inner + in;
      double mx = -std::numeric_limits<double>::infinity();
      for (std::size_t i = 0; i < n; ++i) mx = std::max(mx, xd[base + i * inner]);
      double sum = 0.0;
      for (std::size_t i = 0; i < n; ++i) sum += std::exp(xd[base + i * inner] - mx);
      out[o * inner + in] = mx + std::log(sum);
    }
  }
  NodePtr xn = x.node();
  return MakeResult(
      std::move(shape), std::move(out), "logsumexp", {x},
      [xn, outer, n, inner](const Node &o) {
        xn->EnsureGrad();
        for (std::size_t ou = 0; ou < outer; ++ou) {
          for (std::size_t in = 0; in < inner; ++in) {
            const std::size_t r = ou * inner + in;
            const std::size_t base = ou * n * inner + in;
            for (std::size_t i = 0; i < n; ++i) {
              const std::size_t idx = base + i * inner;
              xn->grad[idx] += o.grad[r] * std::exp(xn->data[idx] - o.data[r]);
            }
          }
        }
      });
}

Tensor EmbeddingLookup(const Tensor &table, std::span<const int> ids) {
  RequireRank(table, 2, "embedding_lookup");
  const int V = table.dim(0), d = table.dim(1);
  if (ids.empty()) throw DimensionError("embedding_lookup: empty id list");
  std::vector<double> out(ids.size() * d);
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || ids[i] >= V) {
      throw DimensionError("embedding_lookup: id " + std::to_string(ids[i]) +
                           " outside table of " + std::to_string(V));
    }
    std::copy_n(table.data().data() + static_cast<std::size_t>(ids[i]) * d, d,
                out.data() + i * d);
  }
  NodePtr tn = table.node();
  std::vector<int> idv(ids.begin(), ids.end());
  return MakeResult({static_cast<int>(ids.size()), d}, std::move(out),
                    "embedding_lookup", {table},
                    [tn, idv, d](const Node &o) {
                      tn->EnsureGrad();
                      for (std::size_t i = 0; i < idv.size(); ++i)
                        for (int j = 0; j < d; ++j)
                          tn->grad[static_cast<std::size_t>(idv[i]) * d + j] +=
                              o.grad[i * d + j];
                    });
}

Tensor StridedMeanDownsample(const Tensor &x, int factor) {
  RequireRank(x, 2, "strided_mean_downsample");
  if (factor < 1) throw ContractError("downsample factor must be >= 1");
  const int T = x.dim(0), d = x.dim(1);
  const int To = (T + factor - 1) / factor;
  std::vector<double> out(static_cast<std::size_t>(To) * d, 0.0);
  for (int g = 0; g < To; ++g) {
    const int b = g * factor, e = std::min(T, b + factor);
    for (int t = b; t < e; ++t)
      for (int j = 0; j < d; ++j)
        out[static_cast<std::size_t>(g) * d + j] +=
            x.data()[static_cast<std::size_t>(t) * d + j];
    for (int j = 0; j < d; ++j) out[static_cast<std::size_t>(g) * d + j] /= (e - b);
  }
  NodePtr xn = x.node();
  return MakeResult({To, d}, std::move(out), "strided_mean_downsample", {x},
                    [xn, T, d, To, factor](const Node &o) {
                      xn->EnsureGrad();
                      for (int g = 0; g < To; ++g) {
                        const int b = g * factor, e = std::min(T, b + factor);
                        for (int t = b; t < e; ++t)
                          for (int j = 0; j < d; ++j)
                            xn->grad[static_cast<std::size_t>(t) * d + j] +=
                                o.grad[static_cast<std::size_t>(g) * d + j] /
                                (e - b);
                      }
                    });
}

Tensor MaskedAttention(const Tensor &q, const Tensor &k, const Tensor &v,
                       const Tensor &mask) {
  RequireRank(q, 2, "masked_attention");
  RequireRank(k, 2, "masked_attention");
  RequireRank(v, 2, "masked_attention");
  const int tq = q.dim(0), d = q.dim(1), tk = k.dim(0), dv = v.dim(1);
  if (k.dim(1) != d || v.dim(0) != tk) {
    throw DimensionError("masked_attention: q " + ShapeString(q.shape()) +
                         ", k " + ShapeString(k.shape()) + ", v " +
                         ShapeString(v.shape()));
  }
  if (mask.defined()) {
    if (mask.shape() != Shape{tq, tk}) {
      throw DimensionError("masked_attention: mask " +
                           ShapeString(mask.shape()));
    }
    if (mask.requires_grad())
      throw ContractError("masked_attention: mask must not require grad");
  }
  const double scale = 1.0 / std::sqrt(static_cast<double>(d));
  auto probs = std::make_shared<std::vector<double>>(
      static_cast<std::size_t>(tq) * tk, 0.0);
  GemmAccumulateBT(q.data().data(), k.data().data(), probs->data(), tq, d, tk);
  for (int i = 0; i < tq; ++i) {
    double *row = probs->data() + static_cast<std::size_t>(i) * tk;
    double mx = -std::numeric_limits<double>::infinity();
    for (int j = 0; j < tk; ++j) {
      row[j] *= scale;
      if (mask.defined()) row[j] += mask.data()[static_cast<std::size_t>(i) * tk + j];
      mx = std::max(mx, row[j]);
    }
    double sum = 0.0;
    for (int j = 0; j < tk; ++j) {
      row[j] = std::exp(row[j] - mx);
      sum += row[j];
    }
    for (int j = 0; j < tk; ++j) row[j] /= sum;
  }
  std::vector<double> out(static_cast<std::size_t>(tq) * dv, 0.0);
  GemmAccumulate(probs->data(), v.data().data(), out.data(), tq, tk, dv);
  NodePtr qn = q.node(), kn = k.node(), vn = v.node();
  return MakeResult(
      {tq, dv}, std::move(out), "masked_attention", {q, k, v},
      [qn, kn, vn, probs, tq, tk, d, dv, scale](const Node &o) {
        // dP = dO V^T, dS = P (dP - rowdot(dP, P))
        std::vector<double> dp(static_cast<std::size_t>(tq) * tk, 0.0);
        GemmAccumulateBT(o.grad.data(), vn->data.data(), dp.data(), tq, dv, tk);
        if (vn->requires_grad) {
          vn->EnsureGrad();
          GemmAccumulateAT(probs->data(), o.grad.data(), vn->grad.data(), tq,
                           tk, dv);
        }
        for (int i = 0; i < tq; ++i) {
          double *dr = dp.data() + static_cast<std::size_t>(i) * tk;
          const double *pr = probs->data() + static_cast<std::size_t>(i) * tk;
          double dot = 0.0;
          for (int j = 0; j < tk; ++j) dot += dr[j] * pr[j];
          for (int j = 0; j < tk; ++j) dr[j] = pr[j] * (dr[j] - dot) * scale;
        }
        if (qn->requires_grad) {
          qn->EnsureGrad();
          GemmAccumulate(dp.data(), kn->data.data(), qn->grad.data(), tq, tk, d);
        }
        if (kn->requires_grad) {
          kn->EnsureGrad();
          GemmAccumulateAT(dp.data(), qn->data.data(), kn->grad.data(), tq, tk,
                           d);
        }
      });
}

Tensor Sum(const Tensor &x) {
  double s = 0.0;
  for (double v : x.data()) s += v;
  NodePtr xn = x.node();
  return MakeResult({1}, {s}, "sum", {x}, [xn](const Node &o) {
    xn->EnsureGrad();
    for (double &g : xn->grad) g += o.grad[0];
  });
}

Tensor Mean(const Tensor &x) {
  double s = 0.0;
  for (double v : x.data()) s += v;
  const double n = static_cast<double>(x.numel());
  NodePtr xn = x.node();
  return MakeResult({1}, {s / n}, "mean", {x}, [xn, n](const Node &o) {
    xn->EnsureGrad();
    for (double &g : xn->grad) g += o.grad[0] / n;
  });
}

Tensor Reshape(const Tensor &x, Shape shape) {
  if (ShapeNumel(shape) != x.numel()) {
    throw DimensionError("reshape: " + ShapeString(x.shape()) + " to " +
                         ShapeString(shape));
  }
  std::vector<double> out(x.data().begin(), x.data().end());
  NodePtr xn = x.node();
  return MakeResult(std::move(shape), std::move(out), "reshape", {x},
                    [xn](const Node &o) { Accumulate(xn, o.grad); });
}

Tensor SliceRows(const Tensor &x, int begin, int end) {
  if (x.rank() < 1 || begin < 0 || end > x.dim(0) || begin >= end) {
    throw DimensionError("slice_rows: [" + std::to_string(begin) + ", " +
                         std::to_string(end) + ") of " +
                         ShapeString(x.shape()));
  }
  const std::size_t row = x.numel() / x.dim(0);
  std::vector<double> out(x.data().begin() + begin * row,
                          x.data().begin() + end * row);
  Shape shape = x.shape();
  shape[0] = end - begin;
  NodePtr xn = x.node();
  return MakeResult(std::move(shape), std::move(out), "slice_rows", {x},
                    [xn, begin, row](const Node &o) {
                      xn->EnsureGrad();
                      for (std::size_t i = 0; i < o.grad.size(); ++i)
                        xn->grad[begin * row + i] += o.grad[i];
                    });
}

Tensor ConcatRows(std::span<const Tensor> parts) {
  if (parts.empty()) throw DimensionError("concat_rows: no inputs");
  Shape shape = parts[0].shape();
  shape[0] = 0;
  std::vector<double> out;
  for (const Tensor &p : parts) {
    Shape tail(p.shape().begin() + 1, p.shape().end());
    Shape want(shape.begin() + 1, shape.end());
    if (tail != want) {
      throw DimensionError("concat_rows: " + ShapeString(p.shape()) +
                           " vs " + ShapeString(parts[0].shape()));
    }
    shape[0] += p.dim(0);
    out.insert(out.end(), p.data().begin(), p.data().end());
  }
  std::vector<NodePtr> nodes;
  for (const Tensor &p : parts) nodes.push_back(p.node());
  return MakeResult(std::move(shape), std::move(out), "concat_rows",
                    std::vector<Tensor>(parts.begin(), parts.end()),
                    [nodes](const Node &o) {
                      std::size_t off = 0;
                      for (const NodePtr &n : nodes) {
                        Accumulate(n, std::span<const double>(
                                          o.grad.data() + off, n->data.size()));
                        off += n->data.size();
                      }
                    });
}

Tensor Detach(const Tensor &x) {
  std::vector<double> out(x.data().begin(), x.data().end());
  return MakeResult(x.shape(), std::move(out), "detach", {}, nullptr);
}

Tensor OuterAdd(const Tensor &a, const Tensor &b) {
  RequireRank(a, 2, "outer_add");
  RequireRank(b, 2, "outer_add");
  const int T = a.dim(0), U = b.dim(0), n = a.dim(1);
  if (b.dim(1) != n) {
    throw DimensionError("outer_add: " + ShapeString(a.shape()) + " vs " +
                         ShapeString(b.shape()));
  }
  std::vector<double> out(static_cast<std::size_t>(T) * U * n);
  for (int t = 0; t < T; ++t)
    for (int u = 0; u < U; ++u)
      for (int j = 0; j < n; ++j)
        out[(static_cast<std::size_t>(t) * U + u) * n + j] =
            a.data()[static_cast<std::size_t>(t) * n + j] +
            b.data()[static_cast<std::size_t>(u) * n + j];
  NodePtr an = a.node(), bn = b.node();
  return MakeResult({T, U, n}, std::move(out), "outer_add", {a, b},
                    [an, bn, T, U, n](const Node &o) {
                      if (an->requires_grad) an->EnsureGrad();
                      if (bn->requires_grad) bn->EnsureGrad();
                      for (int t = 0; t < T; ++t)
                        for (int u = 0; u < U; ++u)
                          for (int j = 0; j < n; ++j) {
                            const double g =
                                o.grad[(static_cast<std::size_t>(t) * U + u) * n + j];
                            if (an->requires_grad)
                              an->grad[static_cast<std::size_t>(t) * n + j] += g;
                            if (bn->requires_grad)
                              bn->grad[static_cast<std::size_t>(u) * n + j] += g;
                          }
                    });
}

Tensor PairAdd(const Tensor &a, const Tensor &b,
               std::span<const std::pair<int, int>> pairs) {
  RequireRank(a, 2, "pair_add");
  RequireRank(b, 2, "pair_add");
  const int n = a.dim(1);
  if (b.dim(1) != n || pairs.empty()) {
    throw DimensionError("pair_add: " + ShapeString(a.shape()) + " vs " +
                         ShapeString(b.shape()));
  }
  const int P = static_cast<int>(pairs.size());
  std::vector<double> out(static_cast<std::size_t>(P) * n);
  for (int p = 0; p < P; ++p) {
    const auto [t, u] = pairs[p];
    if (t < 0 || t >= a.dim(0) || u < 0 || u >= b.dim(0))
      throw DimensionError("pair_add: pair index out of range");
    for (int j = 0; j < n; ++j)
      out[static_cast<std::size_t>(p) * n + j] =
          a.data()[static_cast<std::size_t>(t) * n + j] +
          b.data()[static_cast<std::size_t>(u) * n + j];
  }
  NodePtr an = a.node(), bn = b.node();
  std::vector<std::pair<int, int>> pv(pairs.begin(), pairs.end());
  return MakeResult({P, n}, std::move(out), "pair_add", {a, b},
                    [an, bn, pv, n](const Node &o) {
                      if (an->requires_grad) an->EnsureGrad();
                      if (bn->requires_grad) bn->EnsureGrad();
                      for (std::size_t p = 0; p < pv.size(); ++p)
                        for (int j = 0; j < n; ++j) {
                          const double g = o.grad[p * n + j];
                          if (an->requires_grad)
                            an->grad[static_cast<std::size_t>(pv[p].first) * n + j] += g;
                          if (bn->requires_grad)
                            bn->grad[static_cast<std::size_t>(pv[p].second) * n + j] += g;
                        }
                    });
}

// ---------------------------------------------------------------------------

const char *OpKindName(OpKind kind) {
  switch (kind) {
    case OpKind::kMatMul: return "matmul";
    case OpKind::kAdd: return "add";
    case OpKind::kMul: return "mul";
    case OpKind::kRelu: return "relu";
    case OpKind::kTanh: return "tanh";
    case OpKind::kConv1d: return "conv1d";
    case OpKind::kLayerNorm: return "layernorm";
    case OpKind::kSoftmax: return "softmax";
    case OpKind::kLogSoftmax: return "log_softmax";
    case OpKind::kLogSumExp: return "logsumexp";
    case OpKind::kEmbeddingLookup: return "embedding_lookup";
    case OpKind::kStridedMeanDownsample: return "strided_mean_downsample";
    case OpKind::kMaskedAttention: return "masked_attention";
  }
  return "unknown";
}

Tensor ForwardOp(OpKind kind, std::span<const Tensor> in,
                 const OpAttrs &attrs) {
  auto need = [&](std::size_t n) {
    if (in.size() < n) {
      throw DimensionError(std::string(OpKindName(kind)) + ": expected " +
                           std::to_string(n) + " inputs");
    }
  };
  switch (kind) {
    case OpKind::kMatMul: need(2); return MatMul(in[0], in[1]);
    case OpKind::kAdd: need(2); return Add(in[0], in[1]);
    case OpKind::kMul: need(2); return Mul(in[0], in[1]);
    case OpKind::kRelu: need(1); return Relu(in[0]);
    case OpKind::kTanh: need(1); return Tanh(in[0]);
    case OpKind::kConv1d: need(3); return Conv1d(in[0], in[1], in[2], attrs.causal);
    case OpKind::kLayerNorm: need(3); return LayerNorm(in[0], in[1], in[2], attrs.eps);
    case OpKind::kSoftmax: need(1); return Softmax(in[0], attrs.axis);
    case OpKind::kLogSoftmax: need(1); return LogSoftmax(in[0], attrs.axis);
    case OpKind::kLogSumExp: need(1); return LogSumExp(in[0], attrs.axis);
    case OpKind::kEmbeddingLookup: need(1); return EmbeddingLookup(in[0], attrs.ids);
    case OpKind::kStridedMeanDownsample:
      need(1);
      return StridedMeanDownsample(in[0], attrs.factor);
    case OpKind::kMaskedAttention:
      need(3);
      return MaskedAttention(in[0], in[1], in[2], in.size() > 3 ? in[3] : Tensor());
  }
  throw ContractError("unknown op kind");
}

double FiniteDiffCheck(const std::function<Tensor(const Tensor &)> &f,
                       const Tensor &x, double h) {
  if (!(h > 0.0)) throw ContractError("finite difference step must be > 0");
  std::vector<double> base(x.data().begin(), x.data().end());
  Tensor leaf = Tensor::FromVector(x.shape(), base);
  leaf.set_requires_grad(true);
  Tensor y = f(leaf);
  Backward(y);
  const std::vector<double> grad = leaf.grad();
  double worst = 0.0;
  for (std::size_t i = 0; i < base.size(); ++i) {
    std::vector<double> plus = base, minus = base;
    plus[i] += h;
    minus[i] -= h;
    const double fp = f(Tensor::FromVector(x.shape(), plus)).item();
    const double fm = f(Tensor::FromVector(x.shape(), minus)).item();
    const double fd = (fp - fm) / (2.0 * h);
    worst = std::max(worst, std::abs(fd - grad[i]) / (std::abs(grad[i]) + 1e-8));
  }
  return worst;
}

}  // namespace xducer
