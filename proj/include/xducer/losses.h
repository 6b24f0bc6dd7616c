// xducer/losses.h

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

#ifndef XDUCER_LOSSES_H_
#define XDUCER_LOSSES_H_

#include <functional>
#include <span>
#include <utility>
#include <vector>

#include "xducer/tensor.h"

namespace xducer {

// Blank is vocabulary index 0 everywhere in the toolkit.
inline constexpr int kBlank = 0;
// Log-space stand-in for -infinity; keeps the DP free of inf - inf.
inline constexpr double kLogZero = -1e30;

double LogAdd(double a, double b);

// Joiner outputs over (frames, target positions + 1, vocab + blank).
class LogitLattice {
 public:
  explicit LogitLattice(Tensor logits);

  const Tensor &logits() const { return logits_; }
  int frames() const { return logits_.dim(0); }
  int positions() const { return logits_.dim(1); }  // U + 1
  int vocab() const { return logits_.dim(2); }

 private:
  Tensor logits_;
};

// Forward/backward quantities of the transducer lattice, all (T, U+1)
// row-major. `node` is the posterior of visiting (t, u); `blank` and `label`
// are the posteriors of the two transitions leaving it.
struct TransducerOccupancy {
  int frames = 0;
  int positions = 0;
  double log_prob = 0.0;
  std::vector<double> log_alpha;
  std::vector<double> log_beta;
  std::vector<double> node;
  std::vector<double> blank;
  std::vector<double> label;

  double at(const std::vector<double> &v, int t, int u) const {
    return v[static_cast<std::size_t>(t) * positions + u];
  }
};

// -log P(target | lattice), differentiable w.r.t. the lattice logits.
Tensor TransducerNll(const LogitLattice &lattice, std::span<const int> target);

// Explicit enumeration of every alignment; requires T' + U <= 14.
double BruteForceTransducerNll(const LogitLattice &lattice,
                               std::span<const int> target);

TransducerOccupancy ComputeTransducerOccupancy(const LogitLattice &lattice,
                                               std::span<const int> target);

// d NLL / d logits, shape (T', U+1, V). Also the backward rule of
// TransducerNll.
Tensor TransducerOccupancyGrad(const LogitLattice &lattice,
                               std::span<const int> target);

// Additive joiner used to find the pruning windows:
// z[t, u] = f[t] W_f + g[u] W_g + b.
struct SimpleJoinerWeights {
  Tensor w_f;   // [d_f, V]
  Tensor w_g;   // [d_g, V]
  Tensor bias;  // [V]
};

LogitLattice SimpleJoinerLogits(const Tensor &f, const Tensor &g,
                                const SimpleJoinerWeights &w);

// Per-frame output-position windows [starts[t], starts[t] + width).
struct PruneBounds {
  std::vector<int> starts;
  int width = 0;

  // Throws ContractError unless the bounds are well formed for (T', U) and
  // admit at least one complete path.
  void Validate(int frames, int target_len) const;
};

// Picks nested, monotone windows centred on the most occupied output
// position of each frame. Windows for a wider S always contain those for a
// narrower one.
PruneBounds ComputePruneBounds(const TransducerOccupancy &simple, int width);

// Transducer NLL restricted to the windows. `logits` is (T', S, V) with
// logits[t, j] belonging to output position bounds.starts[t] + j.
Tensor PrunedLatticeNll(const Tensor &logits, const PruneBounds &bounds,
                        std::span<const int> target);

// Evaluates a joiner on a list of (frame, position) pairs, returning [P, V].
using PairJoiner = std::function<Tensor(
    const Tensor &f, const Tensor &g,
    std::span<const std::pair<int, int>> pairs)>;

// Runs `joiner` only on the windowed (t, u) pairs and takes the pruned NLL.
Tensor PrunedTransducerNll(const Tensor &f, const Tensor &g,
                           const PruneBounds &bounds,
                           std::span<const int> target,
                           const PairJoiner &joiner);

// CTC over the 2U+1 extended label sequence. `frame_logprobs` is (T', V),
// normally a log_softmax output.
Tensor CtcNll(const Tensor &frame_logprobs, std::span<const int> target);

// Symmetric consistency loss with stop-gradient on the target side of each
// term: 1/2 sum_t [KL(sg(p_b) || p_a) + KL(sg(p_a) || p_b)].
Tensor CrKl(const Tensor &logp_a, const Tensor &logp_b);

}  // namespace xducer

#endif  // XDUCER_LOSSES_H_
