// tests/losses_test.cc

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

#include "xducer/losses.h"

#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "oracles.h"
#include "test_util.h"

namespace xducer {
namespace {

using testing::BruteForceCtcNll;
using testing::BruteForceWindowedNll;
using testing::RandomTensor;

std::vector<int> RandomTarget(int U, int V, std::mt19937_64 &rng) {
  std::uniform_int_distribution<int> tok(1, V - 1);
  std::vector<int> y(U);
  for (int &v : y) v = tok(rng);
  return y;
}

double LogSoftmaxAt(const Tensor &z, int t, int u, int k) {
  const int V = z.dim(2);
  double s = 0.0;
  for (int j = 0; j < V; ++j) s += std::exp(z.at(t, u, j));
  return z.at(t, u, k) - std::log(s);
}

class LossTest : public ::testing::Test {
 protected:
  PrecisionScope precision_{Precision::k64};
};

TEST_F(LossTest, SingleBlankPath) {
  LogitLattice lat(Tensor::Zeros({1, 1, 3}));
  EXPECT_NEAR(TransducerNll(lat, {}).item(), std::log(3.0), 1e-12);
  EXPECT_NEAR(BruteForceTransducerNll(lat, {}), std::log(3.0), 1e-12);
}

TEST_F(LossTest, EmitThenBlank) {
  std::mt19937_64 rng(2);
  Tensor z = RandomTensor({1, 2, 4}, rng, 2.0);
  std::vector<int> y = {3};
  const double want = -LogSoftmaxAt(z, 0, 0, 3) - LogSoftmaxAt(z, 0, 1, 0);
  EXPECT_NEAR(TransducerNll(LogitLattice(z), y).item(), want, 1e-12);
}

TEST_F(LossTest, HandEnumeratedUniform) {
  // T'=2, U=1, V=2: alignments (y, blank, blank) and (blank, y, blank),
  // each with probability 1/8.
  LogitLattice lat(Tensor::Zeros({2, 2, 2}));
  std::vector<int> y = {1};
  EXPECT_NEAR(BruteForceTransducerNll(lat, y), std::log(4.0), 1e-12);
  EXPECT_NEAR(TransducerNll(lat, y).item(), std::log(4.0), 1e-12);
}

TEST_F(LossTest, DpMatchesEnumeration) {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 60; ++trial) {
    const int T = 1 + trial % 5, U = trial % 4, V = 2 + trial % 5;
    Tensor z = RandomTensor({T, U + 1, V}, rng, 3.0);
    std::vector<int> y = RandomTarget(U, V, rng);
    LogitLattice lat(z);
    EXPECT_NEAR(TransducerNll(lat, y).item(), BruteForceTransducerNll(lat, y),
                1e-9);
  }
}

TEST_F(LossTest, BruteForceSizeGuard) {
  LogitLattice lat(Tensor::Zeros({10, 6, 3}));
  std::vector<int> y(5, 1);
  EXPECT_THROW(BruteForceTransducerNll(lat, y), ContractError);
}

TEST_F(LossTest, ErrorPaths) {
  LogitLattice lat(Tensor::Zeros({2, 3, 4}));
  EXPECT_THROW(TransducerNll(lat, std::vector<int>{1}), DimensionError);
  EXPECT_THROW(TransducerNll(lat, std::vector<int>{1, 4}), VocabError);
  EXPECT_THROW(TransducerNll(lat, std::vector<int>{0, 1}), VocabError);
  EXPECT_THROW(LogitLattice(Tensor::Zeros({2, 3})), DimensionError);
}

TEST_F(LossTest, OccupancyGradSinglePath) {
  std::mt19937_64 rng(4);
  Tensor z = RandomTensor({1, 1, 4}, rng);
  Tensor grad = TransducerOccupancyGrad(LogitLattice(z), {});
  double sum = 0.0;
  for (int k = 0; k < 4; ++k) sum += std::exp(z.at(0, 0, k));
  for (int k = 0; k < 4; ++k) {
    const double want = std::exp(z.at(0, 0, k)) / sum - (k == 0 ? 1.0 : 0.0);
    EXPECT_NEAR(grad.at(0, 0, k), want, 1e-12);
  }
}

TEST_F(LossTest, TransitionOccupancyTotalsPathLength) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 10; ++trial) {
    Tensor z = RandomTensor({3, 3, 4}, rng, 2.0);
    std::vector<int> y = RandomTarget(2, 4, rng);
    TransducerOccupancy occ = ComputeTransducerOccupancy(LogitLattice(z), y);
    double total = 0.0;
    for (double v : occ.blank) total += v;
    for (double v : occ.label) total += v;
    EXPECT_NEAR(total, 3 + 2, 1e-6);
    // Node occupancy equals outgoing transition mass.
    for (std::size_t i = 0; i < occ.node.size(); ++i)
      EXPECT_NEAR(occ.node[i], occ.blank[i] + occ.label[i], 1e-9);
  }
}

TEST_F(LossTest, TransducerGradientFiniteDifferences) {
  std::mt19937_64 rng(6);
  for (int trial = 0; trial < 10; ++trial) {
    const int T = 1 + trial % 4, U = trial % 3, V = 3 + trial % 3;
    Tensor z = RandomTensor({T, U + 1, V}, rng, 2.0);
    std::vector<int> y = RandomTarget(U, V, rng);
    auto f = [&](const Tensor &x) { return TransducerNll(LogitLattice(x), y); };
    EXPECT_LE(FiniteDiffCheck(f, z), 1e-4);
    // The tape rule and the closed form agree.
    Tensor leaf = Tensor::FromVector(z.shape(), {z.data().begin(), z.data().end()});
    leaf.set_requires_grad(true);
    Backward(TransducerNll(LogitLattice(leaf), y));
    Tensor closed = TransducerOccupancyGrad(LogitLattice(z), y);
    for (std::size_t i = 0; i < z.numel(); ++i)
      EXPECT_NEAR(leaf.grad()[i], closed.data()[i], 1e-12);
  }
}

TEST_F(LossTest, ShiftInvariance) {
  std::mt19937_64 rng(7);
  Tensor z = RandomTensor({3, 3, 4}, rng, 2.0);
  std::vector<int> y = RandomTarget(2, 4, rng);
  std::vector<double> shifted(z.data().begin(), z.data().end());
  for (int k = 0; k < 4; ++k) shifted[(1 * 3 + 2) * 4 + k] += 5.0;
  EXPECT_NEAR(TransducerNll(LogitLattice(z), y).item(),
              TransducerNll(LogitLattice(Tensor::FromVector(z.shape(), shifted)), y)
                  .item(),
              1e-10);

  Tensor x = RandomTensor({4, 4}, rng, 2.0);
  std::vector<double> xs(x.data().begin(), x.data().end());
  for (int k = 0; k < 4; ++k) xs[2 * 4 + k] += 3.0;
  EXPECT_NEAR(CtcNll(LogSoftmax(x), y).item(),
              CtcNll(LogSoftmax(Tensor::FromVector({4, 4}, xs)), y).item(),
              1e-10);
}

TEST_F(LossTest, SimpleJoiner) {
  SimpleJoinerWeights zero{Tensor::Zeros({2, 3}), Tensor::Zeros({2, 3}),
                           Tensor::Zeros({3})};
  std::mt19937_64 rng(8);
  Tensor f = RandomTensor({4, 2}, rng), g = RandomTensor({3, 2}, rng);
  LogitLattice z0 = SimpleJoinerLogits(f, g, zero);
  for (double v : z0.logits().data()) EXPECT_EQ(v, 0.0);

  SimpleJoinerWeights id{Tensor::Full({1, 2}, 1.0), Tensor::Full({1, 2}, 1.0),
                         Tensor::Zeros({2})};
  LogitLattice z1 = SimpleJoinerLogits(Tensor::FromVector({2, 1}, {1, 2}),
                                       Tensor::FromVector({1, 1}, {10}), id);
  EXPECT_EQ(z1.logits().at(0, 0, 0), 11.0);
  EXPECT_EQ(z1.logits().at(0, 0, 1), 11.0);
  EXPECT_EQ(z1.logits().at(1, 0, 0), 12.0);

  // Perturbing f shifts every u by the same amount.
  SimpleJoinerWeights w{RandomTensor({2, 3}, rng), RandomTensor({2, 3}, rng),
                        RandomTensor({3}, rng)};
  Tensor delta = RandomTensor({4, 2}, rng);
  Tensor a = SimpleJoinerLogits(f, g, w).logits();
  Tensor b = SimpleJoinerLogits(Add(f, delta), g, w).logits();
  for (int t = 0; t < 4; ++t)
    for (int k = 0; k < 3; ++k) {
      const double d0 = b.at(t, 0, k) - a.at(t, 0, k);
      for (int u = 1; u < 3; ++u)
        EXPECT_NEAR(b.at(t, u, k) - a.at(t, u, k), d0, 1e-12);
    }
  EXPECT_THROW(SimpleJoinerLogits(RandomTensor({4, 3}, rng), g, w),
               DimensionError);
}

TransducerOccupancy RandomOccupancy(int T, int U, int V, std::mt19937_64 &rng,
                                    std::vector<int> *y) {
  *y = RandomTarget(U, V, rng);
  return ComputeTransducerOccupancy(
      LogitLattice(RandomTensor({T, U + 1, V}, rng, 2.0)), *y);
}

TEST_F(LossTest, PruneBoundsBasics) {
  std::mt19937_64 rng(9);
  std::vector<int> y;
  TransducerOccupancy occ = RandomOccupancy(5, 3, 4, rng, &y);
  PruneBounds wide = ComputePruneBounds(occ, 4);
  EXPECT_EQ(wide.width, 4);
  for (int s : wide.starts) EXPECT_EQ(s, 0);
  EXPECT_EQ(ComputePruneBounds(occ, 10).width, 4);
  EXPECT_THROW(ComputePruneBounds(occ, 1), ContractError);
}

TEST_F(LossTest, PruneBoundsTrackDiagonal) {
  // Node occupancy concentrated on u = t.
  const int T = 6, U = 5;
  TransducerOccupancy occ;
  occ.frames = T;
  occ.positions = U + 1;
  occ.node.assign(T * (U + 1), 0.01);
  for (int t = 0; t < T; ++t) occ.node[t * (U + 1) + t] = 0.9;
  PruneBounds b = ComputePruneBounds(occ, 2);
  for (int t = 0; t < T; ++t) EXPECT_EQ(b.starts[t], std::min(t, U - 1));
  PruneBounds b3 = ComputePruneBounds(occ, 3);
  for (int t = 0; t < T; ++t)
    EXPECT_EQ(b3.starts[t], std::clamp(t - 1, 0, U + 1 - 3));
}

TEST_F(LossTest, PruneBoundsPropertiesOnRandomLattices) {
  std::mt19937_64 rng(10);
  for (int trial = 0; trial < 100; ++trial) {
    const int T = 1 + trial % 7;
    const int U = trial % (T + 1);
    std::vector<int> y;
    TransducerOccupancy occ = RandomOccupancy(T, U, 5, rng, &y);
    PruneBounds prev;
    for (int S = 2; S <= U + 2; ++S) {
      PruneBounds b = ComputePruneBounds(occ, S);
      if (T > 1 || S >= U + 1) EXPECT_NO_THROW(b.Validate(T, U));
      for (int t = 1; t < T; ++t) EXPECT_GE(b.starts[t], b.starts[t - 1]);
      if (S > 2) {
        // Nested in the previous width.
        for (int t = 0; t < T; ++t) {
          EXPECT_LE(b.starts[t], prev.starts[t]);
          EXPECT_GE(b.starts[t] + b.width, prev.starts[t] + prev.width);
        }
      }
      prev = b;
    }
  }
}

// Picks rows out of a precomputed (T, U+1, V) lattice.
Tensor FullJoinerPairs(const Tensor &lattice,
                       std::span<const std::pair<int, int>> pairs) {
  const int V = lattice.dim(2);
  std::vector<double> rows;
  for (auto [t, u] : pairs)
    for (int k = 0; k < V; ++k) rows.push_back(lattice.at(t, u, k));
  return Tensor::FromVector({static_cast<int>(pairs.size()), V}, rows);
}

Tensor WindowedLogits(const Tensor &full, const PruneBounds &b) {
  const int T = full.dim(0), V = full.dim(2);
  std::vector<double> rows;
  for (int t = 0; t < T; ++t)
    for (int j = 0; j < b.width; ++j)
      for (int k = 0; k < V; ++k) rows.push_back(full.at(t, b.starts[t] + j, k));
  return Tensor::FromVector({T, b.width, V}, rows);
}

TEST_F(LossTest, PrunedContract) {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 80; ++trial) {
    const int T = 1 + trial % 5;
    const int U = trial % (T + 1);
    const int V = 3 + trial % 3;
    Tensor full = RandomTensor({T, U + 1, V}, rng, 2.0);
    std::vector<int> y = RandomTarget(U, V, rng);
    const double exact = TransducerNll(LogitLattice(full), y).item();
    TransducerOccupancy occ = ComputeTransducerOccupancy(
        LogitLattice(RandomTensor({T, U + 1, V}, rng, 2.0)), y);
    double last = INFINITY;
    for (int S = 2; S <= U + 1; ++S) {
      PruneBounds b = ComputePruneBounds(occ, S);
      if (T == 1 && S < U + 1) continue;
      const double pruned =
          PrunedLatticeNll(WindowedLogits(full, b), b, y).item();
      EXPECT_GE(pruned, exact - 1e-12);
      EXPECT_LE(pruned, last + 1e-12);
      EXPECT_NEAR(pruned, BruteForceWindowedNll(full, b, y), 1e-9);
      last = pruned;
    }
    PruneBounds all = ComputePruneBounds(occ, std::max(2, U + 1 + trial % 2));
    EXPECT_NEAR(PrunedLatticeNll(WindowedLogits(full, all), all, y).item(),
                exact, 1e-9);
  }
}

TEST_F(LossTest, PrunedThroughJoinerCallback) {
  std::mt19937_64 rng(12);
  Tensor full = RandomTensor({4, 4, 5}, rng, 2.0);
  std::vector<int> y = RandomTarget(3, 5, rng);
  TransducerOccupancy occ = ComputeTransducerOccupancy(LogitLattice(full), y);
  PruneBounds b = ComputePruneBounds(occ, 2);
  Tensor f = Tensor::Zeros({4, 1}), g = Tensor::Zeros({4, 1});
  PairJoiner joiner = [&](const Tensor &, const Tensor &,
                          std::span<const std::pair<int, int>> pairs) {
    return FullJoinerPairs(full, pairs);
  };
  EXPECT_NEAR(PrunedTransducerNll(f, g, b, y, joiner).item(),
              PrunedLatticeNll(WindowedLogits(full, b), b, y).item(), 1e-12);
  EXPECT_THROW(PrunedTransducerNll(f, Tensor::Zeros({3, 1}), b, y, joiner),
               DimensionError);
  PruneBounds bad = b;
  bad.starts[0] = 1;
  EXPECT_THROW(PrunedLatticeNll(WindowedLogits(full, b), bad, y),
               ContractError);
}

TEST_F(LossTest, PrunedGradientFiniteDifferences) {
  std::mt19937_64 rng(13);
  for (int trial = 0; trial < 10; ++trial) {
    const int T = 2 + trial % 3, U = 1 + trial % 2, V = 4;
    Tensor full = RandomTensor({T, U + 1, V}, rng, 2.0);
    std::vector<int> y = RandomTarget(U, V, rng);
    PruneBounds b =
        ComputePruneBounds(ComputeTransducerOccupancy(LogitLattice(full), y), 2);
    Tensor w = WindowedLogits(full, b);
    auto f = [&](const Tensor &x) { return PrunedLatticeNll(x, b, y); };
    EXPECT_LE(FiniteDiffCheck(f, w), 1e-4);
  }
}

TEST_F(LossTest, CtcHandCases) {
  Tensor one = LogSoftmax(Tensor::FromVector({1, 3}, {0.2, -1.0, 0.5}));
  EXPECT_NEAR(CtcNll(one, std::vector<int>{2}).item(), -one.at(0, 2), 1e-12);

  Tensor uniform = LogSoftmax(Tensor::Zeros({2, 2}));
  EXPECT_NEAR(CtcNll(uniform, std::vector<int>{1}).item(), std::log(4.0 / 3.0),
              1e-12);
  EXPECT_NEAR(std::log(4.0 / 3.0), 0.2877, 1e-4);
}

TEST_F(LossTest, CtcMatchesEnumeration) {
  std::mt19937_64 rng(14);
  for (int trial = 0; trial < 40; ++trial) {
    const int T = 1 + trial % 6, V = 2 + trial % 3;
    const int U = std::min(trial % 3, T);
    std::vector<int> y = RandomTarget(U, V, rng);
    int repeats = 0;
    for (int i = 1; i < U; ++i) repeats += y[i] == y[i - 1];
    Tensor lp = LogSoftmax(RandomTensor({T, V}, rng, 2.0));
    if (T < U + repeats) {
      EXPECT_THROW(CtcNll(lp, y), NoPathError);
      continue;
    }
    EXPECT_NEAR(CtcNll(lp, y).item(), BruteForceCtcNll(lp, y), 1e-9);
  }
  // Repeats need a separating blank.
  Tensor lp = LogSoftmax(Tensor::Zeros({2, 3}));
  EXPECT_THROW(CtcNll(lp, std::vector<int>{1, 1}), NoPathError);
  EXPECT_NO_THROW(CtcNll(lp, std::vector<int>{1, 2}));
  EXPECT_THROW(CtcNll(lp, std::vector<int>{3}), VocabError);
}

TEST_F(LossTest, CtcGradientFiniteDifferences) {
  std::mt19937_64 rng(15);
  for (int trial = 0; trial < 10; ++trial) {
    const int T = 3 + trial % 3, V = 4;
    std::vector<int> y = RandomTarget(1 + trial % 2, V, rng);
    Tensor x = RandomTensor({T, V}, rng, 2.0);
    auto f = [&](const Tensor &t) { return CtcNll(LogSoftmax(t), y); };
    EXPECT_LE(FiniteDiffCheck(f, x), 1e-4);
    auto g = [&](const Tensor &t) { return CtcNll(t, y); };
    EXPECT_LE(FiniteDiffCheck(g, LogSoftmax(x)), 1e-4);
  }
}

TEST_F(LossTest, CrKlValues) {
  Tensor a = Tensor::FromVector({1, 2}, {std::log(0.5), std::log(0.5)});
  Tensor b = Tensor::FromVector({1, 2}, {std::log(0.9), std::log(0.1)});
  EXPECT_NEAR(CrKl(a, b).item(), 0.5 * (0.3681 + 0.5108), 1e-4);
  EXPECT_NEAR(CrKl(a, b).item(), CrKl(b, a).item(), 1e-15);
  EXPECT_EQ(CrKl(a, a).item(), 0.0);

  std::mt19937_64 rng(16);
  for (int trial = 0; trial < 20; ++trial) {
    Tensor x = LogSoftmax(RandomTensor({3, 4}, rng, 2.0));
    Tensor y = LogSoftmax(RandomTensor({3, 4}, rng, 2.0));
    EXPECT_GT(CrKl(x, y).item(), 0.0);
  }
  EXPECT_THROW(CrKl(Tensor::Zeros({1, 2}), Tensor::Zeros({1, 2})),
               ContractError);
  EXPECT_THROW(CrKl(a, LogSoftmax(Tensor::Zeros({2, 2}))), DimensionError);
}

TEST_F(LossTest, CrKlStopGradient) {
  std::mt19937_64 rng(17);
  Tensor xa = RandomTensor({3, 4}, rng, 2.0), xb = RandomTensor({3, 4}, rng, 2.0);
  xa.set_requires_grad(true);
  xb.set_requires_grad(true);
  Tensor la = LogSoftmax(xa), lb = LogSoftmax(xb);
  // KL(sg(b) || a) alone: b must receive exactly nothing.
  Tensor sb = Detach(lb);
  Backward(Sum(Mul(Exp(sb), Sub(sb, la))));
  for (double g : xb.grad()) EXPECT_EQ(g, 0.0);
  bool any = false;
  for (double g : xa.grad()) any = any || g != 0.0;
  EXPECT_TRUE(any);

  // The symmetric value's finite difference would include the stopped
  // branch, so check the one-sided term.
  auto one_sided = [&](const Tensor &t) {
    Tensor sbb = Detach(lb);
    return Sum(Mul(Exp(sbb), Sub(sbb, LogSoftmax(t))));
  };
  EXPECT_LE(FiniteDiffCheck(one_sided, xa), 1e-4);
}

}  // namespace
}  // namespace xducer
