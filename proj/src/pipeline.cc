// xducer/pipeline.cc

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

#include "xducer/pipeline.h"

#include <atomic>
#include <chrono>
#include <cmath>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <mutex>
#include <sstream>
#include <thread>
#include <tuple>

#include "xducer/error.h"

namespace xducer {

void ParallelFor(int n, int jobs, const std::function<void(int)> &fn) {
  if (n <= 0) return;
  jobs = std::max(1, std::min(jobs, n));
  if (jobs == 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<int> next{0};
  std::exception_ptr first;
  std::mutex mu;
  std::vector<std::thread> workers;
  for (int w = 0; w < jobs; ++w) {
    workers.emplace_back([&] {
      for (int i = next++; i < n; i = next++) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(mu);
          if (!first) first = std::current_exception();
        }
      }
    });
  }
  for (std::thread &t : workers) t.join();
  if (first) std::rethrow_exception(first);
}

std::string PretrainArch(const std::string &arch) {
  return arch == "shared" ? "shared" : "hier1";
}

TrainConfig StageConfig(const ExperimentConfig &cfg, const std::string &arch,
                        Stage stage, int steps, int prune_range,
                        int warmup_steps) {
  TrainConfig t = cfg.train;
  t.stage = stage;
  t.steps = steps;
  t.prune_range = prune_range;
  t.warmup_steps = warmup_steps;
  t.cr_enabled = stage == Stage::kJointFinetune && arch == "hier2+cr";
  return t;
}

std::vector<TokenSeq> References(const std::vector<SynthExample> &data,
                                 Task task) {
  std::vector<TokenSeq> out;
  out.reserve(data.size());
  for (const SynthExample &ex : data)
    out.push_back(task == Task::kAsr ? ex.src : ex.tgt);
  return out;
}

std::vector<TokenSeq> DecodeRun::Tokens() const {
  std::vector<TokenSeq> out;
  out.reserve(records.size());
  for (const DecodeRecord &r : records) out.push_back(r.tokens);
  return out;
}

DecodeRun DecodeDataset(const HierarchicalModel &model, Task task,
                        const std::vector<SynthExample> &data,
                        const ExperimentConfig &cfg, double bp) {
  NoGradScope no_grad;
  DecodeRun run;
  DecodeOptions options = cfg.decode;
  options.blank_penalty = bp;
  for (const SynthExample &ex : data) {
    Hypothesis hyp;
    if (cfg.streaming) {
      StreamingResult r = StreamingDecode(model, task, ex.frames, cfg.chunk, bp);
      run.seconds += r.seconds();
      hyp = std::move(r.hyp);
    } else {
      const auto start = std::chrono::steady_clock::now();
      hyp = DecodeUtterance(model, task, ex.frames, cfg.train.train_mask,
                            options);
      run.seconds += std::chrono::duration<double>(
                         std::chrono::steady_clock::now() - start)
                         .count();
    }
    run.frames += ex.frames.dim(0);
    run.records.push_back({ex.id, hyp.logp, std::move(hyp.tokens)});
  }
  return run;
}

std::string AblationCell::Name() const {
  std::ostringstream os;
  os << "arch=" << arch << ",prune_range=" << prune_range
     << ",warmup=" << warmup << ",bp=" << bp;
  return os.str();
}

namespace {

std::string DirName(const std::string &arch, int prune_range, int warmup) {
  return arch + "_S" + std::to_string(prune_range) + "_w" +
         std::to_string(warmup);
}

}  // namespace

std::string CellCheckpoint(const std::string &out_dir, const std::string &arch,
                           int prune_range, int warmup) {
  return (std::filesystem::path(out_dir) / DirName(arch, prune_range, warmup) /
          "model.ckpt")
      .string();
}

namespace {

std::ofstream OpenLog(const std::string &out_dir, const std::string &sub) {
  if (out_dir.empty()) return std::ofstream();
  const std::filesystem::path dir = std::filesystem::path(out_dir) / sub;
  std::filesystem::create_directories(dir);
  std::ofstream os(dir / "train.log");
  if (!os) throw IoError("cannot write " + (dir / "train.log").string());
  return os;
}

}  // namespace

std::vector<AblationRow> RunAblation(const ExperimentConfig &cfg,
                                     const std::vector<SynthExample> &train,
                                     const std::vector<SynthExample> &test,
                                     int jobs, const std::string &out_dir) {
  const AblationGrid &g = cfg.ablate;
  if (train.empty() || test.empty())
    throw ContractError("ablation needs non-empty train and test sets");

  // Training cells: one per (arch, S, warmup); the bp axis only affects
  // decoding.
  using TrainKey = std::tuple<std::string, int, int>;
  std::vector<TrainKey> cells;
  for (const std::string &arch : g.archs)
    for (int s : g.prune_ranges)
      for (int w : g.warmups) cells.emplace_back(arch, s, w);

  // Pretraining is shared between architectures with the same ASR stack.
  std::vector<TrainKey> pre_keys;
  for (const auto &[arch, s, w] : cells) {
    TrainKey k{PretrainArch(arch), s, w};
    if (std::find(pre_keys.begin(), pre_keys.end(), k) == pre_keys.end())
      pre_keys.push_back(k);
  }
  std::vector<ModelState> pre_states(pre_keys.size());
  std::vector<std::string> pre_errors(pre_keys.size());
  ParallelFor(static_cast<int>(pre_keys.size()), jobs, [&](int i) {
    const auto &[arch, s, w] = pre_keys[i];
    try {
      HierarchicalModel model(cfg.ModelFor(arch), cfg.model_seed);
      TrainConfig t = StageConfig(cfg, arch, Stage::kAsrPretrain,
                                  g.pretrain_steps, s, w);
      std::ofstream log = OpenLog(out_dir, "pretrain_" + DirName(arch, s, w));
      Trainer(&model, t).Run(train, log.is_open() ? &log : nullptr);
      pre_states[i] = CaptureState(model);
    } catch (const std::exception &e) {
      pre_errors[i] = std::string("pretrain: ") + e.what();
    }
  });

  std::vector<std::vector<AblationRow>> results(cells.size());
  ParallelFor(static_cast<int>(cells.size()), jobs, [&](int i) {
    const auto &[arch, s, w] = cells[i];
    std::vector<AblationRow> &rows = results[i];
    for (double bp : g.bps) {
      AblationRow row;
      row.cell = {arch, s, w, bp};
      rows.push_back(row);
    }
    auto fail = [&rows](const std::string &msg) {
      for (AblationRow &r : rows) r.error = msg;
    };
    const std::size_t p =
        std::find(pre_keys.begin(), pre_keys.end(),
                  TrainKey{PretrainArch(arch), s, w}) -
        pre_keys.begin();
    if (!pre_errors[p].empty()) return fail(pre_errors[p]);
    try {
      HierarchicalModel model(cfg.ModelFor(arch), cfg.model_seed);
      RestoreState(&model, pre_states[p], {.init_st = true}, "pretrained");
      TrainConfig t =
          StageConfig(cfg, arch, Stage::kJointFinetune, g.joint_steps, s, w);
      std::ofstream log = OpenLog(out_dir, DirName(arch, s, w));
      Trainer(&model, t).Run(train, log.is_open() ? &log : nullptr);
      if (!out_dir.empty())
        SaveCheckpoint(model, CellCheckpoint(out_dir, arch, s, w));

      const double ter = Wer(References(test, Task::kAsr),
                             DecodeDataset(model, Task::kAsr, test, cfg, 0.0)
                                 .Tokens());
      const std::vector<TokenSeq> refs = References(test, Task::kSt);
      for (AblationRow &r : rows) {
        const DecodeRun run = DecodeDataset(model, Task::kSt, test, cfg, r.cell.bp);
        const std::vector<TokenSeq> hyps = run.Tokens();
        r.asr_ter = ter;
        r.bleu = Bleu(refs, hyps);
        r.length_ratio = LengthRatio(refs, hyps);
        r.rtf = run.rtf();
      }
    } catch (const std::exception &e) {
      fail(e.what());
    }
  });

  std::vector<AblationRow> out;
  for (auto &rows : results)
    for (AblationRow &r : rows) out.push_back(std::move(r));
  return out;
}

void WriteAblationTable(std::ostream &os, const std::vector<AblationRow> &rows) {
  os << "config\tasr_ter\tbleu\tlength_ratio\trtf\tstatus\n";
  os << std::fixed << std::setprecision(6);
  for (const AblationRow &r : rows) {
    os << r.cell.Name() << '\t';
    if (r.error.empty()) {
      os << r.asr_ter << '\t' << r.bleu << '\t' << r.length_ratio << '\t'
         << r.rtf << "\tok\n";
    } else {
      std::string msg = r.error;
      for (char &c : msg)
        if (c == '\t' || c == '\n') c = ' ';
      os << "nan\tnan\tnan\tnan\terror: " << msg << '\n';
    }
  }
}

}  // namespace xducer
