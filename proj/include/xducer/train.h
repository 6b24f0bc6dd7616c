// xducer/train.h

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

#ifndef XDUCER_TRAIN_H_
#define XDUCER_TRAIN_H_

#include <cstdint>
#include <functional>
#include <map>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "xducer/augment.h"
#include "xducer/model.h"
#include "xducer/synthdata.h"

namespace xducer {

struct LossWeights {
  double asr = 1.0;
  double st = 1.0;
  double cr_asr = 0.05;
  double cr_st = 0.05;
  double ctc_asr = 0.1;
  double ctc_st = 0.1;

  void Validate() const;
};

enum class Stage { kAsrPretrain, kJointFinetune };
const char *StageName(Stage stage);
Stage ParseStage(const std::string &text);

struct TrainConfig {
  Stage stage = Stage::kAsrPretrain;
  int steps = 2000;
  double lr = 3e-3;
  // The learning rate is held for the first half of `steps`, then decays
  // linearly to lr * lr_final_scale at the last step.
  double lr_final_scale = 0.1;
  int warmup_steps = 200;
  int prune_range = 4;
  int batch_size = 8;
  std::uint64_t seed = 1;
  bool cr_enabled = false;
  bool spec_augment = true;  // base masking of the NT input without CR
  double clip_norm = 5.0;
  LossWeights weights;
  AugmentConfig augment;
  ChunkMaskSpec train_mask;

  void Validate() const;
};

// λ = 0.5 max(0, 1 - step / warmup); λ L_simple + (1 - λ) L_pruned.
double WarmupLambda(int step, int warmup_steps);

// Learning rate used for optimizer step `step` (0-based) of a run.
double LearningRate(const TrainConfig &cfg, int step);
Tensor WarmupBlend(int step, int warmup_steps, const Tensor &simple,
                   const Tensor &pruned);

// Scalar loss plus the value of each weighted component before weighting.
struct LossTerms {
  Tensor total;
  std::map<std::string, double> parts;
};

// Transducer loss for one task on encoder output `f`: simple-joiner lattice
// NLL and pruned NLL, blended per warmup. Bounds come from the simple
// lattice occupancy.
Tensor TaskTransducerLoss(const HierarchicalModel &model, Task task,
                          const Tensor &f, std::span<const int> target,
                          int step, const TrainConfig &cfg);

LossTerms MultitaskNtLoss(const HierarchicalModel &model,
                          const EncoderOutputs &enc, const SynthExample &ex,
                          int step, const TrainConfig &cfg);

// NT on view a; CTC averaged over both views; CR between the CTC heads of
// the two views.
LossTerms CombinedLoss(const HierarchicalModel &model,
                       const EncoderOutputs &view_a,
                       const EncoderOutputs &view_b, const SynthExample &ex,
                       int step, const TrainConfig &cfg);

// Loss of one example at `step`, including augmentation; what the trainer
// optimizes.
LossTerms ExampleLoss(const HierarchicalModel &model, const SynthExample &ex,
                      int step, const TrainConfig &cfg,
                      std::uint64_t augment_seed);

class Adam {
 public:
  Adam(std::vector<Tensor> params, double lr, double beta1 = 0.9,
       double beta2 = 0.98, double eps = 1e-9);

  double GradNorm() const;
  // Scales gradients down to `max_norm` if needed; returns the norm before.
  double ClipGradNorm(double max_norm);
  void Step();
  void ZeroGrad();
  double lr() const { return lr_; }
  void set_lr(double lr) { lr_ = lr; }

 private:
  std::vector<Tensor> params_;
  std::vector<std::vector<double>> m_, v_;
  double lr_, beta1_, beta2_, eps_;
  long step_ = 0;
};

struct StepRecord {
  int step = 0;
  std::map<std::string, double> values;
};

class Trainer {
 public:
  Trainer(HierarchicalModel *model, const TrainConfig &cfg);

  // One optimizer step over `batch` (mean loss).
  StepRecord Step(std::span<const SynthExample *const> batch);

  // Runs cfg.steps steps over shuffled epochs of `data`. Each step writes
  // `step\tname\tvalue` lines to `log` (if non-null) and flushes.
  std::vector<StepRecord> Run(const std::vector<SynthExample> &data,
                              std::ostream *log = nullptr);

  int step() const { return step_; }

 private:
  HierarchicalModel *model_;
  TrainConfig cfg_;
  Adam adam_;
  int step_ = 0;
};

}  // namespace xducer

#endif  // XDUCER_TRAIN_H_
