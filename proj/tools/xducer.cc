// tools/xducer.cc

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

// Command-line front end: synth, train, decode, eval and ablate.

#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "xducer/cli.h"
#include "xducer/error.h"
#include "xducer/tensor.h"

int main(int argc, char **argv) {
  using namespace xducer;
  CLI::App app{"Hierarchical transducer speech translation toolkit"};
  app.require_subcommand(1);

  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<int> precision;
  int jobs = 1;
  app.add_option("--config", config_path, "configuration file (key = value)");
  app.add_option("--seed", seed, "overrides the config seed");
  app.add_option("--jobs", jobs, "parallel workers")->check(CLI::PositiveNumber);
  app.add_option("--precision", precision, "32 or 64")
      ->check(CLI::IsMember({32, 64}));

  std::string out, data, init_from, checkpoint, refs, hyps, timing, train_dir,
      test_dir;
  bool init_st = false, per_utt = false;
  std::vector<double> bps;

  CLI::App *synth = app.add_subcommand("synth", "generate a dataset");
  synth->add_option("--out", out, "output directory")->required();

  CLI::App *train = app.add_subcommand("train", "train one stage");
  train->add_option("--data", data, "dataset directory")->required();
  train->add_option("--out", out, "output directory")->required();
  train->add_option("--init-from", init_from, "checkpoint to start from");
  train->add_flag("--init-st", init_st,
                  "keep freshly initialized ST weights when loading");

  CLI::App *decode = app.add_subcommand("decode", "decode a dataset");
  decode->add_option("--checkpoint", checkpoint, "model checkpoint")->required();
  decode->add_option("--data", data, "dataset directory")->required();
  decode->add_option("--out", out, "output directory")->required();
  decode->add_option("--bp", bps, "blank penalties, comma separated")
      ->delimiter(',');

  CLI::App *eval = app.add_subcommand("eval", "score hypotheses");
  eval->add_option("--refs", refs, "dataset directory or decode file")
      ->required();
  eval->add_option("--hyps", hyps, "decode file")->required();
  eval->add_option("--out", out, "output directory")->required();
  eval->add_option("--timing", timing, "timing file written by decode");
  eval->add_flag("--per-utt", per_utt, "append per-utterance scores");

  CLI::App *ablate = app.add_subcommand("ablate", "run the ablation grid");
  ablate->add_option("--train", train_dir, "training dataset")->required();
  ablate->add_option("--test", test_dir, "test dataset")->required();
  ablate->add_option("--out", out, "output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError &e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    std::cerr << "error\tusage\t" << e.what() << std::endl;
    return 2;
  }

  return RunCommand(
      [&] {
        ExperimentConfig cfg = config_path.empty()
                                   ? ExperimentConfig::Parse("")
                                   : ExperimentConfig::Load(config_path);
        if (seed) cfg.seed = cfg.train.seed = *seed;
        if (precision)
          cfg.precision = *precision == 64 ? Precision::k64 : Precision::k32;
        SetPrecision(cfg.precision);
        if (*synth) {
          CmdSynth(cfg, out);
        } else if (*train) {
          CmdTrain(cfg, data, out, init_from, init_st);
        } else if (*decode) {
          if (bps.empty()) bps.push_back(cfg.decode.blank_penalty);
          CmdDecode(cfg, checkpoint, data, out, bps);
        } else if (*eval) {
          CmdEval(cfg, refs, hyps, out, timing, per_utt);
        } else if (*ablate) {
          CmdAblate(cfg, train_dir, test_dir, out, jobs);
        }
      },
      std::cerr);
}
