// xducer/train.cc

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

#include "xducer/train.h"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "xducer/error.h"
#include "xducer/losses.h"

namespace xducer {

void LossWeights::Validate() const {
  for (double w : {asr, st, cr_asr, cr_st, ctc_asr, ctc_st})
    if (!(w >= 0.0)) throw ConfigError("loss weights must be >= 0");
}

const char *StageName(Stage stage) {
  return stage == Stage::kAsrPretrain ? "asr_pretrain" : "joint_finetune";
}

Stage ParseStage(const std::string &text) {
  if (text == "asr_pretrain") return Stage::kAsrPretrain;
  if (text == "joint_finetune") return Stage::kJointFinetune;
  throw ConfigError("stage: expected asr_pretrain or joint_finetune, got '" +
                    text + "'");
}

void TrainConfig::Validate() const {
  if (steps < 0) throw ConfigError("steps must be >= 0");
  if (!(lr > 0.0)) throw ConfigError("lr must be positive");
  if (!(lr_final_scale > 0.0 && lr_final_scale <= 1.0))
    throw ConfigError("lr_final_scale must be in (0, 1]");
  if (warmup_steps < 0) throw ConfigError("warmup_steps must be >= 0");
  if (prune_range < 2) throw ConfigError("prune_range must be >= 2");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (!(clip_norm > 0.0)) throw ConfigError("clip_norm must be positive");
  weights.Validate();
  augment.Validate();
}

double LearningRate(const TrainConfig &cfg, int step) {
  if (cfg.steps <= 1) return cfg.lr;
  const double progress =
      std::min(1.0, static_cast<double>(step) / (cfg.steps - 1));
  if (progress <= 0.5) return cfg.lr;
  return cfg.lr * (1.0 - (1.0 - cfg.lr_final_scale) * (progress - 0.5) / 0.5);
}

double WarmupLambda(int step, int warmup_steps) {
  if (step < 0) throw ContractError("step must be >= 0");
  if (warmup_steps <= 0) return 0.0;
  return 0.5 * std::max(0.0, 1.0 - static_cast<double>(step) / warmup_steps);
}

Tensor WarmupBlend(int step, int warmup_steps, const Tensor &simple,
                   const Tensor &pruned) {
  const double lambda = WarmupLambda(step, warmup_steps);
  if (lambda == 0.0) return pruned;
  return Add(Scale(simple, lambda), Scale(pruned, 1.0 - lambda));
}

Tensor TaskTransducerLoss(const HierarchicalModel &model, Task task,
                          const Tensor &f, std::span<const int> target,
                          int step, const TrainConfig &cfg) {
  const TaskHeads &h = model.heads(task);
  Tensor g = h.predictor.Forward(target);
  const double lambda = WarmupLambda(step, cfg.warmup_steps);
  // Past warmup only the bounds are needed from the simple lattice.
  LogitLattice simple = lambda > 0.0
                            ? SimpleJoinerLogits(f, g, h.simple)
                            : SimpleJoinerLogits(Detach(f), Detach(g), h.simple);
  PruneBounds bounds = ComputePruneBounds(
      ComputeTransducerOccupancy(simple, target), cfg.prune_range);
  Tensor pruned =
      PrunedTransducerNll(f, g, bounds, target, h.joiner.AsPairJoiner());
  if (lambda == 0.0) return pruned;
  return WarmupBlend(step, cfg.warmup_steps, TransducerNll(simple, target),
                     pruned);
}

namespace {

class TermSum {
 public:
  void Add(const std::string &name, double weight, const Tensor &term) {
    parts_[name] = term.item();
    Tensor w = Scale(term, weight);
    total_ = total_.defined() ? xducer::Add(total_, w) : w;
  }
  LossTerms Finish() {
    if (!total_.defined()) total_ = Tensor::Scalar(0.0);
    return {total_, std::move(parts_)};
  }

 private:
  Tensor total_;
  std::map<std::string, double> parts_;
};

bool Joint(const TrainConfig &cfg) {
  return cfg.stage == Stage::kJointFinetune;
}

void AddNt(TermSum *sum, const HierarchicalModel &model,
           const EncoderOutputs &enc, const SynthExample &ex, int step,
           const TrainConfig &cfg) {
  if (cfg.weights.asr > 0.0)
    sum->Add("nt_asr", cfg.weights.asr,
             TaskTransducerLoss(model, Task::kAsr, enc.f_s, ex.src, step, cfg));
  if (Joint(cfg) && cfg.weights.st > 0.0)
    sum->Add("nt_st", cfg.weights.st,
             TaskTransducerLoss(model, Task::kSt, enc.f_t, ex.tgt, step, cfg));
}

// Half the CTC sum over both views plus the CR term between them. A target
// that cannot fit the frame count under CTC contributes nothing.
void AddCtcCr(TermSum *sum, const HierarchicalModel &model, Task task,
              const Tensor &fa, const Tensor &fb, std::span<const int> target,
              double w_ctc, double w_cr) {
  if (w_ctc <= 0.0 && w_cr <= 0.0) return;
  const std::string tag = TaskName(task);
  Tensor la = model.CtcLogProbs(task, fa), lb = model.CtcLogProbs(task, fb);
  if (w_ctc > 0.0) {
    try {
      Tensor ctc = Scale(Add(CtcNll(la, target), CtcNll(lb, target)), 0.5);
      sum->Add("ctc_" + tag, w_ctc, ctc);
    } catch (const NoPathError &) {
    }
  }
  if (w_cr > 0.0) sum->Add("cr_" + tag, w_cr, CrKl(la, lb));
}

}  // namespace

LossTerms MultitaskNtLoss(const HierarchicalModel &model,
                          const EncoderOutputs &enc, const SynthExample &ex,
                          int step, const TrainConfig &cfg) {
  if (ex.src.empty() || (Joint(cfg) && ex.tgt.empty()))
    throw ContractError("example " + ex.id + " is missing a target sequence");
  TermSum sum;
  AddNt(&sum, model, enc, ex, step, cfg);
  return sum.Finish();
}

LossTerms CombinedLoss(const HierarchicalModel &model,
                       const EncoderOutputs &view_a,
                       const EncoderOutputs &view_b, const SynthExample &ex,
                       int step, const TrainConfig &cfg) {
  if (ex.src.empty() || (Joint(cfg) && ex.tgt.empty()))
    throw ContractError("example " + ex.id + " is missing a target sequence");
  const LossWeights &w = cfg.weights;
  TermSum sum;
  AddNt(&sum, model, view_a, ex, step, cfg);
  AddCtcCr(&sum, model, Task::kAsr, view_a.f_s, view_b.f_s, ex.src, w.ctc_asr,
           w.cr_asr);
  if (Joint(cfg))
    AddCtcCr(&sum, model, Task::kSt, view_a.f_t, view_b.f_t, ex.tgt, w.ctc_st,
             w.cr_st);
  return sum.Finish();
}

namespace {

EncoderOutputs EncodeForStage(const HierarchicalModel &model, const Tensor &x,
                              const TrainConfig &cfg) {
  if (Joint(cfg)) return model.Encode(x, cfg.train_mask);
  EncoderOutputs out;
  out.f_s = model.EncodeAsr(x, cfg.train_mask);
  return out;
}

}  // namespace

LossTerms ExampleLoss(const HierarchicalModel &model, const SynthExample &ex,
                      int step, const TrainConfig &cfg,
                      std::uint64_t augment_seed) {
  if (cfg.cr_enabled) {
    auto [a, b] = TwoViews(ex.frames, cfg.augment, augment_seed);
    return CombinedLoss(model, EncodeForStage(model, a, cfg),
                        EncodeForStage(model, b, cfg), ex, step, cfg);
  }
  Tensor x = cfg.spec_augment ? SpecAugment(ex.frames, cfg.augment, augment_seed)
                              : ex.frames;
  return MultitaskNtLoss(model, EncodeForStage(model, x, cfg), ex, step, cfg);
}

// ---------------------------------------------------------------------------

Adam::Adam(std::vector<Tensor> params, double lr, double beta1, double beta2,
           double eps)
    : params_(std::move(params)), lr_(lr), beta1_(beta1), beta2_(beta2),
      eps_(eps) {
  for (const Tensor &p : params_) {
    m_.emplace_back(p.numel(), 0.0);
    v_.emplace_back(p.numel(), 0.0);
  }
}

double Adam::GradNorm() const {
  double s = 0.0;
  for (const Tensor &p : params_)
    if (p.has_grad())
      for (double g : p.grad()) s += g * g;
  return std::sqrt(s);
}

double Adam::ClipGradNorm(double max_norm) {
  const double norm = GradNorm();
  if (norm > max_norm) {
    const double scale = max_norm / norm;
    for (Tensor &p : params_)
      if (p.has_grad())
        for (double &g : p.mutable_grad()) g *= scale;
  }
  return norm;
}

void Adam::Step() {
  ++step_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(step_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(step_));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    Tensor &p = params_[i];
    if (!p.has_grad()) continue;
    std::span<double> w = p.mutable_data();
    std::span<double> g = p.mutable_grad();
    std::vector<double> &m = m_[i], &v = v_[i];
    for (std::size_t j = 0; j < w.size(); ++j) {
      m[j] = beta1_ * m[j] + (1.0 - beta1_) * g[j];
      v[j] = beta2_ * v[j] + (1.0 - beta2_) * g[j] * g[j];
      const double update = lr_ * (m[j] / c1) / (std::sqrt(v[j] / c2) + eps_);
      w[j] = RoundToPrecision(w[j] - update);
    }
  }
}

void Adam::ZeroGrad() {
  for (Tensor &p : params_) p.zero_grad();
}

namespace {

std::vector<Tensor> Parameters(const HierarchicalModel &model) {
  std::vector<Tensor> out;
  for (auto &[name, t] : model.NamedParameters()) out.push_back(t);
  return out;
}

std::uint64_t Mix(std::uint64_t a, std::uint64_t b) {
  std::uint64_t x = a * 0x9e3779b97f4a7c15ull + b + 0x632be59bd9b4e019ull;
  x ^= x >> 31;
  x *= 0xbf58476d1ce4e5b9ull;
  return x ^ (x >> 29);
}

}  // namespace

Trainer::Trainer(HierarchicalModel *model, const TrainConfig &cfg)
    : model_(model), cfg_(cfg), adam_(Parameters(*model), cfg.lr) {
  cfg_.Validate();
}

StepRecord Trainer::Step(std::span<const SynthExample *const> batch) {
  if (batch.empty()) throw ContractError("empty batch");
  StepRecord rec;
  rec.step = step_ + 1;
  adam_.ZeroGrad();
  const double inv = 1.0 / static_cast<double>(batch.size());
  double total = 0.0;
  try {
    for (std::size_t i = 0; i < batch.size(); ++i) {
      LossTerms terms = ExampleLoss(*model_, *batch[i], step_, cfg_,
                                    Mix(cfg_.seed, Mix(step_, i)));
      total += terms.total.item() * inv;
      for (const auto &[name, v] : terms.parts) rec.values[name] += v * inv;
      Backward(Scale(terms.total, inv));
    }
  } catch (const NumericError &e) {
    throw DivergenceError("non-finite value at step " +
                          std::to_string(rec.step) + " (" + e.what() + ")");
  }
  if (!std::isfinite(total))
    throw DivergenceError("loss is not finite at step " +
                          std::to_string(rec.step));
  const double norm = adam_.ClipGradNorm(cfg_.clip_norm);
  if (!std::isfinite(norm))
    throw DivergenceError("gradient norm is not finite at step " +
                          std::to_string(rec.step));
  adam_.set_lr(LearningRate(cfg_, step_));
  adam_.Step();
  rec.values["loss"] = total;
  rec.values["lr"] = adam_.lr();
  rec.values["grad_norm"] = norm;
  ++step_;
  return rec;
}

std::vector<StepRecord> Trainer::Run(const std::vector<SynthExample> &data,
                                     std::ostream *log) {
  std::vector<StepRecord> records;
  if (cfg_.steps == 0) return records;
  if (data.empty()) throw ContractError("no training data");
  std::mt19937_64 rng(cfg_.seed);
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  std::size_t cursor = order.size();
  std::vector<const SynthExample *> batch;
  for (int s = 0; s < cfg_.steps; ++s) {
    batch.clear();
    while (static_cast<int>(batch.size()) < cfg_.batch_size) {
      if (cursor == order.size()) {
        std::shuffle(order.begin(), order.end(), rng);
        cursor = 0;
      }
      batch.push_back(&data[order[cursor++]]);
    }
    records.push_back(Step(batch));
    if (log) {
      for (const auto &[name, v] : records.back().values)
        *log << records.back().step << '\t' << name << '\t' << v << '\n';
      log->flush();
    }
  }
  return records;
}

}  // namespace xducer
