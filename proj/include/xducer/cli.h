// xducer/cli.h

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

#ifndef XDUCER_CLI_H_
#define XDUCER_CLI_H_

#include <functional>
#include <ostream>
#include <string>
#include <vector>

#include "xducer/config.h"

namespace xducer {

// Each command writes its artifacts under `out_dir` together with a copy of
// the resolved configuration (config.conf), and throws on failure.

// Writes a dataset of cfg.num_utts utterances drawn with cfg.seed.
void CmdSynth(const ExperimentConfig &cfg, const std::string &out_dir);

// Trains cfg.train.stage on the dataset in `data_dir`. Writes model.ckpt and
// train.log. The joint stage requires `init_from`.
void CmdTrain(const ExperimentConfig &cfg, const std::string &data_dir,
              const std::string &out_dir, const std::string &init_from,
              bool init_st);

// Decodes cfg.task once per blank penalty, writing decode_bp<bp>.tsv and
// decode_bp<bp>.timing for each value.
void CmdDecode(const ExperimentConfig &cfg, const std::string &checkpoint,
               const std::string &data_dir, const std::string &out_dir,
               const std::vector<double> &bps);

// Scores `hyps` (decode file) against `refs`, which is either a dataset
// directory (references chosen by cfg.task) or a decode file. `timing`, if
// non-empty, is a .timing file written by CmdDecode. Writes report.tsv.
void CmdEval(const ExperimentConfig &cfg, const std::string &refs,
             const std::string &hyps, const std::string &out_dir,
             const std::string &timing, bool per_utterance);

// Runs the cfg.ablate grid and writes ablation.tsv.
void CmdAblate(const ExperimentConfig &cfg, const std::string &train_dir,
               const std::string &test_dir, const std::string &out_dir,
               int jobs);

std::string DecodeFileName(double bp);

// Runs `fn`, mapping exceptions to a single `error<TAB>kind<TAB>message`
// line on `err`. Returns the process exit status: 0 on success, 2 for
// configuration errors, 1 otherwise.
int RunCommand(const std::function<void()> &fn, std::ostream &err);

}  // namespace xducer

#endif  // XDUCER_CLI_H_
