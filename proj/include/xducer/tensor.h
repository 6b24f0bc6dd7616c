// xducer/tensor.h

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

#ifndef XDUCER_TENSOR_H_
#define XDUCER_TENSOR_H_

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "xducer/error.h"

namespace xducer {

// Storage is always double. In k32 mode every op result and every parameter
// update is rounded to the nearest float, so values stay float-representable
// and a graph behaves like a 32-bit one.
enum class Precision { k32, k64 };

void SetPrecision(Precision p);
Precision GetPrecision();
double RoundToPrecision(double v);

// RAII helper for tests that need 64-bit verification precision.
class PrecisionScope {
 public:
  explicit PrecisionScope(Precision p) : saved_(GetPrecision()) {
    SetPrecision(p);
  }
  ~PrecisionScope() { SetPrecision(saved_); }
  PrecisionScope(const PrecisionScope &) = delete;
  PrecisionScope &operator=(const PrecisionScope &) = delete;

 private:
  Precision saved_;
};

// While alive on a thread, ops on that thread record no backward graph.
class NoGradScope {
 public:
  NoGradScope();
  ~NoGradScope();
  NoGradScope(const NoGradScope &) = delete;
  NoGradScope &operator=(const NoGradScope &) = delete;

 private:
  bool saved_;
};
bool GradEnabled();

using Shape = std::vector<int>;

std::string ShapeString(const Shape &shape);
std::size_t ShapeNumel(const Shape &shape);

namespace internal {

struct Node {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;  // empty until a gradient arrives
  bool requires_grad = false;
  const char *op = "leaf";
  std::vector<std::shared_ptr<Node>> inputs;
  // Reads this node's grad and accumulates into the inputs' grads.
  std::function<void(const Node &)> backward;

  bool is_leaf() const { return !backward; }
  void EnsureGrad() {
    if (grad.empty()) grad.assign(data.size(), 0.0);
  }
};

}  // namespace internal

// Dense row-major real array with an optional reverse-mode gradient. Copies
// share the underlying node, like a handle.
class Tensor {
 public:
  Tensor() = default;

  static Tensor Zeros(Shape shape);
  static Tensor Full(Shape shape, double value);
  static Tensor FromVector(Shape shape, std::vector<double> data);
  static Tensor Scalar(double value);

  bool defined() const { return node_ != nullptr; }
  const Shape &shape() const { return node_->shape; }
  int rank() const { return static_cast<int>(node_->shape.size()); }
  int dim(int axis) const;
  std::size_t numel() const { return node_->data.size(); }

  std::span<const double> data() const { return node_->data; }
  double item() const;
  double at(int i) const;
  double at(int i, int j) const;
  double at(int i, int j, int k) const;

  bool requires_grad() const { return node_->requires_grad; }
  // Only leaves may toggle requires_grad.
  Tensor &set_requires_grad(bool value);
  bool is_leaf() const { return node_->is_leaf(); }
  const char *op_name() const { return node_->op; }

  bool has_grad() const { return !node_->grad.empty(); }
  // Zero-filled view when no gradient has arrived yet.
  std::vector<double> grad() const;
  void zero_grad();

  // Leaves only; used by optimizers and checkpoint loading.
  std::span<double> mutable_data();
  std::span<double> mutable_grad();

  const std::shared_ptr<internal::Node> &node() const { return node_; }
  explicit Tensor(std::shared_ptr<internal::Node> node)
      : node_(std::move(node)) {}

 private:
  std::shared_ptr<internal::Node> node_;
};

// Ordered record of the operations feeding a root: inputs always precede
// the ops that consume them.
class Tape {
 public:
  static Tape Record(const Tensor &root);

  std::size_t size() const { return nodes_.size(); }
  std::vector<std::string> op_names() const;
  // Root must be a scalar of shape [1]. Leaf gradients accumulate across
  // calls; intermediate gradients are cleared afterwards.
  void Backward();

 private:
  std::vector<std::shared_ptr<internal::Node>> nodes_;
};

void Backward(const Tensor &root);

// ---------------------------------------------------------------------------
// Operations. All shapes are checked; a shape mismatch throws DimensionError
// and a non-finite result throws NumericError.

Tensor MatMul(const Tensor &a, const Tensor &b);          // [m,k]x[k,n]
Tensor Add(const Tensor &a, const Tensor &b);             // same shape
Tensor Sub(const Tensor &a, const Tensor &b);
Tensor Mul(const Tensor &a, const Tensor &b);
Tensor Scale(const Tensor &a, double factor);
Tensor AddBias(const Tensor &x, const Tensor &bias);      // [...,n] + [n]
Tensor Linear(const Tensor &x, const Tensor &weight, const Tensor &bias);
Tensor Relu(const Tensor &x);
Tensor Tanh(const Tensor &x);
Tensor Exp(const Tensor &x);

// x: [T, Cin], weight: [K, Cin, Cout], bias: [Cout]. A causal convolution
// pads K-1 zero frames on the left only, so frame t sees inputs <= t.
Tensor Conv1d(const Tensor &x, const Tensor &weight, const Tensor &bias,
              bool causal);

// Normalizes over the last axis.
Tensor LayerNorm(const Tensor &x, const Tensor &gamma, const Tensor &beta,
                 double eps = 1e-5);

Tensor Softmax(const Tensor &x, int axis = -1);
Tensor LogSoftmax(const Tensor &x, int axis = -1);
// Reduces `axis` away; a full reduction yields shape [1].
Tensor LogSumExp(const Tensor &x, int axis = -1);

Tensor EmbeddingLookup(const Tensor &table, std::span<const int> ids);

// [T, d] -> [ceil(T / factor), d]; a trailing partial group is averaged over
// the frames it has.
Tensor StridedMeanDownsample(const Tensor &x, int factor);

// Single-head scaled dot-product attention. `mask` is an optional additive
// [Tq, Tk] matrix that never receives gradient.
Tensor MaskedAttention(const Tensor &q, const Tensor &k, const Tensor &v,
                       const Tensor &mask);

Tensor Sum(const Tensor &x);   // -> [1]
Tensor Mean(const Tensor &x);  // -> [1]
Tensor Reshape(const Tensor &x, Shape shape);
Tensor SliceRows(const Tensor &x, int begin, int end);  // first axis
Tensor ConcatRows(std::span<const Tensor> parts);
Tensor Detach(const Tensor &x);

// a: [T, n], b: [U, n] -> [T, U, n] with out[t, u] = a[t] + b[u].
Tensor OuterAdd(const Tensor &a, const Tensor &b);
// a: [T, n], b: [U, n] -> [P, n] with out[p] = a[pairs[p].first] +
// b[pairs[p].second].
Tensor PairAdd(const Tensor &a, const Tensor &b,
               std::span<const std::pair<int, int>> pairs);

// Generic dispatch over the kernel set, used by the gradient sweeps.
enum class OpKind {
  kMatMul,
  kAdd,
  kMul,
  kRelu,
  kTanh,
  kConv1d,
  kLayerNorm,
  kSoftmax,
  kLogSoftmax,
  kLogSumExp,
  kEmbeddingLookup,
  kStridedMeanDownsample,
  kMaskedAttention,
};

struct OpAttrs {
  int axis = -1;
  bool causal = true;
  double eps = 1e-5;
  int factor = 2;
  std::vector<int> ids;  // embedding_lookup
};

Tensor ForwardOp(OpKind kind, std::span<const Tensor> inputs,
                 const OpAttrs &attrs = {});
const char *OpKindName(OpKind kind);

// Max over coordinates of |central difference - analytic| / (|analytic| +
// 1e-8). `f` must map a tensor shaped like `x` to a [1] tensor.
double FiniteDiffCheck(const std::function<Tensor(const Tensor &)> &f,
                       const Tensor &x, double h = 1e-5);

}  // namespace xducer

#endif  // XDUCER_TENSOR_H_
