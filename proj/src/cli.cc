// xducer/cli.cc

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

#include "xducer/cli.h"

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include "xducer/error.h"
#include "xducer/pipeline.h"

namespace xducer {

namespace fs = std::filesystem;

namespace {

std::string PrepareDir(const ExperimentConfig &cfg, const std::string &dir) {
  if (dir.empty()) throw ConfigError("output directory not given");
  fs::create_directories(dir);
  const fs::path path = fs::path(dir) / "config.conf";
  std::ofstream os(path);
  os << cfg.Serialize();
  if (!os) throw IoError("cannot write " + path.string());
  return dir;
}

std::ofstream OpenOut(const fs::path &path) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot write " + path.string());
  return os;
}

std::map<std::string, TokenSeq> ToMap(const std::vector<DecodeRecord> &recs) {
  std::map<std::string, TokenSeq> out;
  for (const DecodeRecord &r : recs)
    if (!out.emplace(r.id, r.tokens).second)
      throw ContractError("duplicate id " + r.id);
  return out;
}

}  // namespace

std::string DecodeFileName(double bp) {
  std::ostringstream os;
  os << "decode_bp" << bp << ".tsv";
  return os.str();
}

void CmdSynth(const ExperimentConfig &cfg, const std::string &out_dir) {
  PrepareDir(cfg, out_dir);
  WriteDataset(out_dir, GenerateDataset(cfg.synth, cfg.num_utts, cfg.seed));
}

void CmdTrain(const ExperimentConfig &cfg, const std::string &data_dir,
              const std::string &out_dir, const std::string &init_from,
              bool init_st) {
  if (cfg.train.stage == Stage::kJointFinetune && init_from.empty())
    throw ConfigError("stage joint_finetune needs an ASR checkpoint");
  const std::vector<SynthExample> data = ReadDataset(data_dir);
  HierarchicalModel model(cfg.model, cfg.model_seed);
  if (!init_from.empty())
    LoadCheckpoint(&model, init_from, {.init_st = init_st});
  PrepareDir(cfg, out_dir);
  std::ofstream log = OpenOut(fs::path(out_dir) / "train.log");
  Trainer(&model, cfg.train).Run(data, &log);
  SaveCheckpoint(model, (fs::path(out_dir) / "model.ckpt").string());
}

void CmdDecode(const ExperimentConfig &cfg, const std::string &checkpoint,
               const std::string &data_dir, const std::string &out_dir,
               const std::vector<double> &bps) {
  if (bps.empty()) throw ConfigError("empty blank-penalty list");
  HierarchicalModel model(cfg.model, cfg.model_seed);
  LoadCheckpoint(&model, checkpoint);
  const std::vector<SynthExample> data = ReadDataset(data_dir);
  PrepareDir(cfg, out_dir);
  for (double bp : bps) {
    const DecodeRun run = DecodeDataset(model, cfg.task, data, cfg, bp);
    const fs::path path = fs::path(out_dir) / DecodeFileName(bp);
    WriteDecodeFile(path.string(), run.records);
    fs::path timing = path;
    timing.replace_extension(".timing");
    std::ofstream os = OpenOut(timing);
    os.precision(17);
    os << "seconds\t" << run.seconds << "\nframes\t" << run.frames << '\n';
  }
}

void CmdEval(const ExperimentConfig &cfg, const std::string &refs,
             const std::string &hyps, const std::string &out_dir,
             const std::string &timing, bool per_utterance) {
  std::map<std::string, TokenSeq> ref_map;
  if (fs::is_directory(refs)) {
    for (const SynthExample &ex : ReadDataset(refs))
      ref_map[ex.id] = cfg.task == Task::kAsr ? ex.src : ex.tgt;
  } else {
    ref_map = ToMap(ReadDecodeFile(refs));
  }
  EvalReport report = Evaluate(ref_map, ToMap(ReadDecodeFile(hyps)));
  if (!timing.empty()) {
    std::ifstream is(timing);
    if (!is) throw IoError("cannot read " + timing);
    std::map<std::string, double> kv;
    std::string key;
    double value;
    while (is >> key >> value) kv[key] = value;
    if (!kv.count("seconds") || !kv.count("frames"))
      throw LoadError(timing + ": expected seconds and frames");
    report.rtf = Rtf(kv["seconds"], static_cast<long>(kv["frames"]));
  }
  PrepareDir(cfg, out_dir);
  std::ofstream os = OpenOut(fs::path(out_dir) / "report.tsv");
  report.Write(os, per_utterance);
  report.Write(std::cout, false);
}

void CmdAblate(const ExperimentConfig &cfg, const std::string &train_dir,
               const std::string &test_dir, const std::string &out_dir,
               int jobs) {
  const std::vector<SynthExample> train = ReadDataset(train_dir);
  const std::vector<SynthExample> test = ReadDataset(test_dir);
  PrepareDir(cfg, out_dir);
  const std::vector<AblationRow> rows =
      RunAblation(cfg, train, test, jobs, out_dir);
  std::ofstream os = OpenOut(fs::path(out_dir) / "ablation.tsv");
  WriteAblationTable(os, rows);
  WriteAblationTable(std::cout, rows);
}

int RunCommand(const std::function<void()> &fn, std::ostream &err) {
  auto line = [&err](const std::string &kind, std::string msg) {
    for (char &c : msg)
      if (c == '\n' || c == '\t') c = ' ';
    err << "error\t" << kind << '\t' << msg << std::endl;
  };
  try {
    fn();
    return 0;
  } catch (const ConfigError &e) {
    line(e.kind(), std::string(e.what()).substr(e.kind().size() + 2));
    return 2;
  } catch (const Error &e) {
    line(e.kind(), std::string(e.what()).substr(e.kind().size() + 2));
    return 1;
  } catch (const std::exception &e) {
    line("error", e.what());
    return 1;
  }
}

}  // namespace xducer
