// xducer/pipeline.h

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

#ifndef XDUCER_PIPELINE_H_
#define XDUCER_PIPELINE_H_

#include <functional>
#include <limits>
#include <ostream>
#include <string>
#include <vector>

#include "xducer/config.h"
#include "xducer/eval.h"

namespace xducer {

// Runs fn(0..n-1) on up to `jobs` threads. The first exception is rethrown
// after all workers finish.
void ParallelFor(int n, int jobs, const std::function<void(int)> &fn);

// Architecture whose ASR side is trained by the pretraining stage for `arch`.
// hier1, hier2 and hier2+cr share one pretrained ASR stack.
std::string PretrainArch(const std::string &arch);

// Training configuration for one stage of `arch`; CR is enabled only for
// the joint stage of hier2+cr.
TrainConfig StageConfig(const ExperimentConfig &cfg, const std::string &arch,
                        Stage stage, int steps, int prune_range,
                        int warmup_steps);

std::vector<TokenSeq> References(const std::vector<SynthExample> &data,
                                 Task task);

struct DecodeRun {
  std::vector<DecodeRecord> records;
  double seconds = 0.0;  // wall time spent in encoder and search
  long frames = 0;       // input frames
  double rtf() const { return Rtf(seconds, frames); }
  std::vector<TokenSeq> Tokens() const;
};

// Decodes every utterance: chunked streaming greedy when cfg.streaming,
// otherwise full-context search with cfg.decode (beam 1 is greedy).
DecodeRun DecodeDataset(const HierarchicalModel &model, Task task,
                        const std::vector<SynthExample> &data,
                        const ExperimentConfig &cfg, double bp);

struct AblationCell {
  std::string arch;
  int prune_range = 0;
  int warmup = 0;
  double bp = 0.0;
  std::string Name() const;
};

struct AblationRow {
  AblationCell cell;
  double asr_ter = std::numeric_limits<double>::quiet_NaN();
  double bleu = std::numeric_limits<double>::quiet_NaN();
  double length_ratio = std::numeric_limits<double>::quiet_NaN();
  double rtf = std::numeric_limits<double>::quiet_NaN();
  std::string error;  // empty on success
};

// Trains and evaluates every cell of cfg.ablate. Training cells share the
// bp axis; failures are recorded per row. When `out_dir` is non-empty each
// trained cell writes train.log and model.ckpt under its own subdirectory.
std::vector<AblationRow> RunAblation(const ExperimentConfig &cfg,
                                     const std::vector<SynthExample> &train,
                                     const std::vector<SynthExample> &test,
                                     int jobs, const std::string &out_dir = "");

// Checkpoint path RunAblation uses for a trained cell.
std::string CellCheckpoint(const std::string &out_dir, const std::string &arch,
                           int prune_range, int warmup);

void WriteAblationTable(std::ostream &os, const std::vector<AblationRow> &rows);

}  // namespace xducer

#endif  // XDUCER_PIPELINE_H_
