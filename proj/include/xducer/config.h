// xducer/config.h

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

#ifndef XDUCER_CONFIG_H_
#define XDUCER_CONFIG_H_

#include <cstdint>
#include <string>
#include <vector>

#include "xducer/decode.h"
#include "xducer/model.h"
#include "xducer/synthdata.h"
#include "xducer/train.h"

namespace xducer {

struct AblationGrid {
  std::vector<std::string> archs = {"shared", "hier1", "hier2", "hier2+cr"};
  std::vector<int> prune_ranges = {4};
  std::vector<int> warmups = {200};
  std::vector<double> bps = {0.0};
  int pretrain_steps = 2000;
  int joint_steps = 2000;
};

// Everything a command needs, read from `key = value` lines. The model keys
// refine the preset named by `arch`, whatever their order in the file.
struct ExperimentConfig {
  std::string arch = "hier1";
  ModelConfig model = ModelConfig::Hier1();
  SynthConfig synth;
  int num_utts = 1000;
  TrainConfig train;
  DecodeOptions decode;
  ChunkConfig chunk;
  bool streaming = false;
  Task task = Task::kSt;
  std::uint64_t seed = 1;
  std::uint64_t model_seed = 1;
  Precision precision = Precision::k32;
  AblationGrid ablate;

  static ExperimentConfig Parse(const std::string &text);
  static ExperimentConfig Load(const std::string &path);

  // Every key with its resolved value; parsing the result reproduces this
  // config.
  std::string Serialize() const;
  void Validate() const;

  // Model config for an ablation arch with this config's dims.
  ModelConfig ModelFor(const std::string &arch) const;
};

}  // namespace xducer

#endif  // XDUCER_CONFIG_H_
