// xducer/losses.cc

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

#include <algorithm>
#include <bit>
#include <cmath>
#include <limits>
#include <sstream>

namespace xducer {

namespace {

using internal::Node;

void CheckTargets(std::span<const int> target, int vocab) {
  for (int y : target) {
    if (y <= kBlank || y >= vocab) {
      throw VocabError("target token " + std::to_string(y) +
                       " outside 1.." + std::to_string(vocab - 1));
    }
  }
}

// Log-softmax of each length-V row of `z`.
std::vector<double> RowLogSoftmax(std::span<const double> z, int V) {
  std::vector<double> out(z.size());
  for (std::size_t r = 0; r < z.size() / V; ++r) {
    const double *row = z.data() + r * V;
    double mx = *std::max_element(row, row + V);
    double sum = 0.0;
    for (int k = 0; k < V; ++k) sum += std::exp(row[k] - mx);
    const double lse = mx + std::log(sum);
    for (int k = 0; k < V; ++k) out[r * V + k] = row[k] - lse;
  }
  return out;
}

// Transducer forward/backward over a lattice in which frame t only hosts
// output positions [starts[t], starts[t] + width). The full lattice is the
// special case starts == 0, width == U + 1. Log-probabilities are indexed
// (t, j) with u = starts[t] + j.
class WindowedDp {
 public:
  WindowedDp(int frames, int target_len, std::span<const int> starts,
             int width, std::vector<double> lp_blank,
             std::vector<double> lp_label)
      : T_(frames),
        U_(target_len),
        S_(width),
        starts_(starts.begin(), starts.end()),
        lpb_(std::move(lp_blank)),
        lpl_(std::move(lp_label)) {}

  bool InWindow(int t, int u) const {
    return u >= starts_[t] && u < starts_[t] + S_ && u <= U_;
  }
  double Lpb(int t, int u) const { return lpb_[Idx(t, u)]; }
  double Lpl(int t, int u) const { return lpl_[Idx(t, u)]; }
  std::size_t Idx(int t, int u) const {
    return static_cast<std::size_t>(t) * S_ + (u - starts_[t]);
  }
  std::size_t Dense(int t, int u) const {
    return static_cast<std::size_t>(t) * (U_ + 1) + u;
  }

  // Returns log P; throws NoPathError when the windows admit no path.
  double Forward() {
    alpha_.assign(static_cast<std::size_t>(T_) * (U_ + 1), kLogZero);
    for (int t = 0; t < T_; ++t) {
      const int top = std::min(U_, starts_[t] + S_ - 1);
      for (int u = starts_[t]; u <= top; ++u) {
        double a = (t == 0 && u == 0) ? 0.0 : kLogZero;
        if (t > 0 && InWindow(t - 1, u))
          a = LogAdd(a, alpha_[Dense(t - 1, u)] + Lpb(t - 1, u));
        if (u > starts_[t]) a = LogAdd(a, alpha_[Dense(t, u - 1)] + Lpl(t, u - 1));
        alpha_[Dense(t, u)] = a;
      }
    }
    if (!InWindow(T_ - 1, U_)) throw NoPathError("final state outside window");
    log_prob_ = alpha_[Dense(T_ - 1, U_)] + Lpb(T_ - 1, U_);
    if (log_prob_ < 0.5 * kLogZero) {
      std::ostringstream os;
      os << "no alignment of " << U_ << " labels fits " << T_ << " frames";
      throw NoPathError(os.str());
    }
    return log_prob_;
  }

  void Backward() {
    beta_.assign(static_cast<std::size_t>(T_) * (U_ + 1), kLogZero);
    for (int t = T_ - 1; t >= 0; --t) {
      const int top = std::min(U_, starts_[t] + S_ - 1);
      for (int u = top; u >= starts_[t]; --u) {
        double b = kLogZero;
        if (t == T_ - 1 && u == U_) b = Lpb(t, u);
        if (t < T_ - 1 && InWindow(t + 1, u))
          b = LogAdd(b, beta_[Dense(t + 1, u)] + Lpb(t, u));
        if (u < top) b = LogAdd(b, beta_[Dense(t, u + 1)] + Lpl(t, u));
        beta_[Dense(t, u)] = b;
      }
    }
  }

  // Posterior of the blank / label transition leaving (t, u).
  double BlankOcc(int t, int u) const {
    double next;
    if (t == T_ - 1) {
      if (u != U_) return 0.0;
      next = 0.0;
    } else {
      if (!InWindow(t + 1, u)) return 0.0;
      next = beta_[Dense(t + 1, u)];
    }
    return std::exp(alpha_[Dense(t, u)] + Lpb(t, u) + next - log_prob_);
  }
  double LabelOcc(int t, int u) const {
    if (u >= U_ || !InWindow(t, u + 1)) return 0.0;
    return std::exp(alpha_[Dense(t, u)] + Lpl(t, u) + beta_[Dense(t, u + 1)] -
                    log_prob_);
  }

  const std::vector<double> &alpha() const { return alpha_; }
  const std::vector<double> &beta() const { return beta_; }
  double log_prob() const { return log_prob_; }

 private:
  int T_, U_, S_;
  std::vector<int> starts_;
  std::vector<double> lpb_, lpl_;
  std::vector<double> alpha_, beta_;
  double log_prob_ = kLogZero;
};

// Splits windowed logits (T, S, V) into blank / label log-probs and runs the
// DP. `lp` receives the full row log-softmax for the gradient.
WindowedDp MakeDp(std::span<const double> logits, int T, int S, int V,
                  std::span<const int> starts, std::span<const int> target,
                  std::vector<double> *lp) {
  const int U = static_cast<int>(target.size());
  *lp = RowLogSoftmax(logits, V);
  std::vector<double> lpb(static_cast<std::size_t>(T) * S, kLogZero);
  std::vector<double> lpl(static_cast<std::size_t>(T) * S, kLogZero);
  for (int t = 0; t < T; ++t) {
    for (int j = 0; j < S; ++j) {
      const int u = starts[t] + j;
      if (u > U) continue;
      const std::size_t row = (static_cast<std::size_t>(t) * S + j) * V;
      lpb[static_cast<std::size_t>(t) * S + j] = (*lp)[row + kBlank];
      if (u < U) lpl[static_cast<std::size_t>(t) * S + j] = (*lp)[row + target[u]];
    }
  }
  return WindowedDp(T, U, starts, S, std::move(lpb), std::move(lpl));
}

// d(-log P) / d logits for windowed logits (T, S, V).
std::vector<double> WindowedGrad(const WindowedDp &dp,
                                 const std::vector<double> &lp, int T, int S,
                                 int V, std::span<const int> starts,
                                 std::span<const int> target) {
  const int U = static_cast<int>(target.size());
  std::vector<double> grad(lp.size(), 0.0);
  for (int t = 0; t < T; ++t) {
    for (int j = 0; j < S; ++j) {
      const int u = starts[t] + j;
      if (u > U) continue;
      const double ob = dp.BlankOcc(t, u);
      const double ol = dp.LabelOcc(t, u);
      const std::size_t row = (static_cast<std::size_t>(t) * S + j) * V;
      const double occ = ob + ol;
      for (int k = 0; k < V; ++k) grad[row + k] = std::exp(lp[row + k]) * occ;
      grad[row + kBlank] -= ob;
      if (u < U) grad[row + target[u]] -= ol;
    }
  }
  return grad;
}

Tensor MakeLossNode(double nll, const Tensor &input, const char *op,
                    std::shared_ptr<std::vector<double>> grad) {
  auto in = input.node();
  auto node = std::make_shared<Node>();
  node->shape = {1};
  node->data = {RoundToPrecision(nll)};
  if (!std::isfinite(nll)) throw NumericError(std::string(op) + " is not finite");
  node->op = op;
  if (input.requires_grad()) {
    node->requires_grad = true;
    node->inputs = {in};
    node->backward = [in, grad](const Node &o) {
      in->EnsureGrad();
      for (std::size_t i = 0; i < grad->size(); ++i)
        in->grad[i] += o.grad[0] * (*grad)[i];
    };
  }
  return Tensor(std::move(node));
}

}  // namespace

double LogAdd(double a, double b) {
  if (a < b) std::swap(a, b);
  if (b <= kLogZero) return a;
  return a + std::log1p(std::exp(b - a));
}

LogitLattice::LogitLattice(Tensor logits) : logits_(std::move(logits)) {
  if (!logits_.defined() || logits_.rank() != 3) {
    throw DimensionError("logit lattice must be (T', U+1, V)");
  }
  if (logits_.dim(2) < 2) {
    throw DimensionError("logit lattice needs blank plus at least one token");
  }
}

Tensor TransducerNll(const LogitLattice &lattice, std::span<const int> target) {
  const int T = lattice.frames(), U1 = lattice.positions(), V = lattice.vocab();
  if (static_cast<int>(target.size()) + 1 != U1) {
    throw DimensionError("target length " + std::to_string(target.size()) +
                         " does not match lattice positions " +
                         std::to_string(U1));
  }
  CheckTargets(target, V);
  std::vector<int> starts(T, 0);
  std::vector<double> lp;
  WindowedDp dp = MakeDp(lattice.logits().data(), T, U1, V, starts, target, &lp);
  const double nll = -dp.Forward();
  std::shared_ptr<std::vector<double>> grad;
  if (lattice.logits().requires_grad()) {
    dp.Backward();
    grad = std::make_shared<std::vector<double>>(
        WindowedGrad(dp, lp, T, U1, V, starts, target));
  }
  return MakeLossNode(nll, lattice.logits(), "transducer_nll", grad);
}

double BruteForceTransducerNll(const LogitLattice &lattice,
                               std::span<const int> target) {
  const int T = lattice.frames(), U = lattice.positions() - 1,
            V = lattice.vocab();
  if (static_cast<int>(target.size()) != U) {
    throw DimensionError("target length does not match lattice");
  }
  if (T + U > 14) {
    throw ContractError("brute force enumeration limited to T' + U <= 14");
  }
  CheckTargets(target, V);
  const std::vector<double> lp = RowLogSoftmax(lattice.logits().data(), V);
  auto at = [&](int t, int u, int k) {
    return lp[(static_cast<std::size_t>(t) * (U + 1) + u) * V + k];
  };
  // Every alignment is T' blanks and U labels with the final symbol a blank;
  // enumerate the label slots among the first T' + U - 1 symbols.
  const int slots = T + U - 1;
  double total = kLogZero;
  for (unsigned mask = 0; mask < (1u << slots); ++mask) {
    if (std::popcount(mask) != U) continue;
    int t = 0, u = 0;
    double score = 0.0;
    for (int i = 0; i < slots; ++i) {
      if (mask & (1u << i)) {
        score += at(t, u, target[u]);
        ++u;
      } else {
        score += at(t, u, kBlank);
        ++t;
      }
    }
    score += at(t, u, kBlank);  // t == T-1, u == U here
    total = LogAdd(total, score);
  }
  return -total;
}

TransducerOccupancy ComputeTransducerOccupancy(const LogitLattice &lattice,
                                               std::span<const int> target) {
  const int T = lattice.frames(), U1 = lattice.positions(), V = lattice.vocab();
  if (static_cast<int>(target.size()) + 1 != U1) {
    throw DimensionError("target length does not match lattice");
  }
  CheckTargets(target, V);
  std::vector<int> starts(T, 0);
  std::vector<double> lp;
  WindowedDp dp = MakeDp(lattice.logits().data(), T, U1, V, starts, target, &lp);
  dp.Forward();
  dp.Backward();
  TransducerOccupancy occ;
  occ.frames = T;
  occ.positions = U1;
  occ.log_prob = dp.log_prob();
  occ.log_alpha = dp.alpha();
  occ.log_beta = dp.beta();
  const std::size_t n = static_cast<std::size_t>(T) * U1;
  occ.node.resize(n);
  occ.blank.resize(n);
  occ.label.resize(n);
  for (int t = 0; t < T; ++t) {
    for (int u = 0; u < U1; ++u) {
      const std::size_t i = static_cast<std::size_t>(t) * U1 + u;
      occ.blank[i] = dp.BlankOcc(t, u);
      occ.label[i] = dp.LabelOcc(t, u);
      occ.node[i] = std::exp(dp.alpha()[i] + dp.beta()[i] - dp.log_prob());
    }
  }
  return occ;
}

Tensor TransducerOccupancyGrad(const LogitLattice &lattice,
                               std::span<const int> target) {
  const int T = lattice.frames(), U1 = lattice.positions(), V = lattice.vocab();
  if (static_cast<int>(target.size()) + 1 != U1) {
    throw DimensionError("target length does not match lattice");
  }
  CheckTargets(target, V);
  std::vector<int> starts(T, 0);
  std::vector<double> lp;
  WindowedDp dp = MakeDp(lattice.logits().data(), T, U1, V, starts, target, &lp);
  dp.Forward();
  dp.Backward();
  return Tensor::FromVector({T, U1, V},
                            WindowedGrad(dp, lp, T, U1, V, starts, target));
}

LogitLattice SimpleJoinerLogits(const Tensor &f, const Tensor &g,
                                const SimpleJoinerWeights &w) {
  return LogitLattice(
      OuterAdd(Linear(f, w.w_f, w.bias), MatMul(g, w.w_g)));
}

void PruneBounds::Validate(int frames, int target_len) const {
  const int U = target_len;
  std::ostringstream os;
  if (static_cast<int>(starts.size()) != frames) {
    os << "bounds cover " << starts.size() << " frames, lattice has " << frames;
  } else if (width < 1 || width > U + 1) {
    os << "window width " << width << " outside 1.." << U + 1;
  } else if (starts[0] != 0) {
    os << "first window must start at 0";
  } else {
    for (int t = 0; t < frames; ++t) {
      if (starts[t] < 0 || starts[t] > U + 1 - width) {
        os << "start " << starts[t] << " at frame " << t << " out of range";
        break;
      }
      if (t > 0 && (starts[t] < starts[t - 1] ||
                    starts[t] - starts[t - 1] > width - 1)) {
        os << "window jump at frame " << t;
        break;
      }
    }
    if (os.str().empty() && starts.back() + width - 1 < U) {
      os << "last window does not reach position " << U;
    }
  }
  if (!os.str().empty()) throw ContractError("prune bounds: " + os.str());
}

PruneBounds ComputePruneBounds(const TransducerOccupancy &simple, int width) {
  if (width < 2) {
    throw ContractError("prune range must be >= 2, got " + std::to_string(width));
  }
  const int T = simple.frames, U = simple.positions - 1;
  const int S = std::min(width, U + 1);
  // Centre of each frame's window: the most occupied output position,
  // repaired to be monotone, start at 0, and end within reach of U.
  const int step = T > 1 ? std::max(1, (U - 1 + T - 2) / (T - 1)) : 1;
  std::vector<int> centre(T, 0);
  for (int t = 0; t < T; ++t) {
    int best = 0;
    for (int u = 1; u <= U; ++u)
      if (simple.at(simple.node, t, u) > simple.at(simple.node, t, best)) best = u;
    if (t == 0) {
      centre[t] = 0;
      continue;
    }
    const int lo = std::max(centre[t - 1], U - 1 - step * (T - 1 - t));
    const int hi = std::min(centre[t - 1] + step, U);
    centre[t] = std::clamp(best, lo, hi);
  }
  PruneBounds bounds;
  bounds.width = S;
  bounds.starts.resize(T);
  const int half = (S - 1) / 2;
  for (int t = 0; t < T; ++t)
    bounds.starts[t] = std::clamp(centre[t] - half, 0, U + 1 - S);
  return bounds;
}

Tensor PrunedLatticeNll(const Tensor &logits, const PruneBounds &bounds,
                        std::span<const int> target) {
  if (logits.rank() != 3) throw DimensionError("pruned logits must be (T', S, V)");
  const int T = logits.dim(0), S = logits.dim(1), V = logits.dim(2);
  const int U = static_cast<int>(target.size());
  if (S != bounds.width) {
    throw DimensionError("pruned logits width " + std::to_string(S) +
                         " does not match bounds width " +
                         std::to_string(bounds.width));
  }
  bounds.Validate(T, U);
  CheckTargets(target, V);
  std::vector<double> lp;
  WindowedDp dp = MakeDp(logits.data(), T, S, V, bounds.starts, target, &lp);
  const double nll = -dp.Forward();
  std::shared_ptr<std::vector<double>> grad;
  if (logits.requires_grad()) {
    dp.Backward();
    grad = std::make_shared<std::vector<double>>(
        WindowedGrad(dp, lp, T, S, V, bounds.starts, target));
  }
  return MakeLossNode(nll, logits, "pruned_transducer_nll", grad);
}

Tensor PrunedTransducerNll(const Tensor &f, const Tensor &g,
                           const PruneBounds &bounds,
                           std::span<const int> target,
                           const PairJoiner &joiner) {
  const int T = f.dim(0);
  const int U = static_cast<int>(target.size());
  if (g.dim(0) != U + 1) {
    throw DimensionError("predictor rows " + std::to_string(g.dim(0)) +
                         " do not match target length " + std::to_string(U));
  }
  bounds.Validate(T, U);
  std::vector<std::pair<int, int>> pairs;
  pairs.reserve(static_cast<std::size_t>(T) * bounds.width);
  for (int t = 0; t < T; ++t)
    for (int j = 0; j < bounds.width; ++j)
      pairs.emplace_back(t, bounds.starts[t] + j);
  Tensor logits = joiner(f, g, pairs);
  return PrunedLatticeNll(
      Reshape(logits, {T, bounds.width, logits.dim(1)}), bounds, target);
}

Tensor CtcNll(const Tensor &frame_logprobs, std::span<const int> target) {
  if (frame_logprobs.rank() != 2) {
    throw DimensionError("ctc expects (T', V) log-probabilities");
  }
  const int T = frame_logprobs.dim(0), V = frame_logprobs.dim(1);
  const int U = static_cast<int>(target.size());
  CheckTargets(target, V);
  int repeats = 0;
  for (int i = 1; i < U; ++i) repeats += target[i] == target[i - 1];
  if (T < U + repeats) {
    throw NoPathError("ctc needs " + std::to_string(U + repeats) +
                      " frames, got " + std::to_string(T));
  }
  const int L = 2 * U + 1;
  std::vector<int> ext(L, kBlank);
  for (int i = 0; i < U; ++i) ext[2 * i + 1] = target[i];
  auto skip_ok = [&](int s) {
    return s >= 2 && ext[s] != kBlank && ext[s] != ext[s - 2];
  };
  const auto lp = frame_logprobs.data();
  auto LP = [&](int t, int k) { return lp[static_cast<std::size_t>(t) * V + k]; };

  std::vector<double> alpha(static_cast<std::size_t>(T) * L, kLogZero);
  alpha[0] = LP(0, ext[0]);
  if (L > 1) alpha[1] = LP(0, ext[1]);
  for (int t = 1; t < T; ++t) {
    for (int s = 0; s < L; ++s) {
      double a = alpha[(t - 1) * L + s];
      if (s >= 1) a = LogAdd(a, alpha[(t - 1) * L + s - 1]);
      if (skip_ok(s)) a = LogAdd(a, alpha[(t - 1) * L + s - 2]);
      alpha[t * L + s] = a <= kLogZero ? kLogZero : a + LP(t, ext[s]);
    }
  }
  double log_prob = alpha[(T - 1) * L + L - 1];
  if (L > 1) log_prob = LogAdd(log_prob, alpha[(T - 1) * L + L - 2]);
  if (log_prob < 0.5 * kLogZero) throw NoPathError("ctc lattice has no path");

  std::shared_ptr<std::vector<double>> grad;
  if (frame_logprobs.requires_grad()) {
    // beta excludes the emission at t itself.
    std::vector<double> beta(static_cast<std::size_t>(T) * L, kLogZero);
    beta[(T - 1) * L + L - 1] = 0.0;
    if (L > 1) beta[(T - 1) * L + L - 2] = 0.0;
    for (int t = T - 2; t >= 0; --t) {
      for (int s = 0; s < L; ++s) {
        double b = beta[(t + 1) * L + s] + LP(t + 1, ext[s]);
        if (s + 1 < L) b = LogAdd(b, beta[(t + 1) * L + s + 1] + LP(t + 1, ext[s + 1]));
        if (s + 2 < L && skip_ok(s + 2))
          b = LogAdd(b, beta[(t + 1) * L + s + 2] + LP(t + 1, ext[s + 2]));
        beta[t * L + s] = b < 0.5 * kLogZero ? kLogZero : b;
      }
    }
    grad = std::make_shared<std::vector<double>>(
        static_cast<std::size_t>(T) * V, 0.0);
    for (int t = 0; t < T; ++t)
      for (int s = 0; s < L; ++s) {
        const double a = alpha[t * L + s], b = beta[t * L + s];
        if (a <= 0.5 * kLogZero || b <= 0.5 * kLogZero) continue;
        (*grad)[static_cast<std::size_t>(t) * V + ext[s]] -=
            std::exp(a + b - log_prob);
      }
  }
  return MakeLossNode(-log_prob, frame_logprobs, "ctc_nll", grad);
}

Tensor CrKl(const Tensor &logp_a, const Tensor &logp_b) {
  if (logp_a.shape() != logp_b.shape() || logp_a.rank() != 2) {
    throw DimensionError("cr_kl: shapes " + ShapeString(logp_a.shape()) +
                         " and " + ShapeString(logp_b.shape()));
  }
  const int T = logp_a.dim(0), V = logp_a.dim(1);
  for (const Tensor *lp : {&logp_a, &logp_b}) {
    for (int t = 0; t < T; ++t) {
      double lse = kLogZero;
      for (int k = 0; k < V; ++k) lse = LogAdd(lse, lp->at(t, k));
      if (std::abs(lse) > 1e-4) {
        throw ContractError("cr_kl: row " + std::to_string(t) +
                            " is not a normalized log distribution");
      }
    }
  }
  Tensor sa = Detach(logp_a), sb = Detach(logp_b);
  // KL(sg(b) || a) + KL(sg(a) || b)
  Tensor kl_ba = Sum(Mul(Exp(sb), Sub(sb, logp_a)));
  Tensor kl_ab = Sum(Mul(Exp(sa), Sub(sa, logp_b)));
  return Scale(Add(kl_ba, kl_ab), 0.5);
}

}  // namespace xducer
