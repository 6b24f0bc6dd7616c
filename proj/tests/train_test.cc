// tests/train_test.cc

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

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <limits>
#include <sstream>

#include "xducer/error.h"
#include "xducer/losses.h"

namespace xducer {
namespace {

ModelConfig Small() {
  ModelConfig c;
  c.feature_dim = 8;
  c.src_vocab = 6;
  c.tgt_vocab = 6;
  c.model_dim = 16;
  c.asr_blocks = 2;
  c.st_blocks = 1;
  c.st_dim = 16;
  c.joiner_dim = 16;
  return c;
}

SynthConfig SmallData() {
  SynthConfig c;
  c.src_vocab = 6;
  c.tgt_vocab = 6;
  c.feature_dim = 8;
  c.min_tokens = 3;
  c.max_tokens = 5;
  return c;
}

TrainConfig Joint() {
  TrainConfig c;
  c.stage = Stage::kJointFinetune;
  c.warmup_steps = 10;
  c.prune_range = 3;
  return c;
}

class TrainTest : public ::testing::Test {
 protected:
  TrainTest() : p64_(Precision::k64), model_(Small(), 1) {
    data_ = GenerateDataset(SmallData(), 4, 2);
  }
  PrecisionScope p64_;
  HierarchicalModel model_;
  std::vector<SynthExample> data_;
};

TEST_F(TrainTest, WarmupSchedule) {
  EXPECT_EQ(WarmupLambda(0, 200), 0.5);
  EXPECT_EQ(WarmupLambda(100, 200), 0.25);
  EXPECT_EQ(WarmupLambda(200, 200), 0.0);
  EXPECT_EQ(WarmupLambda(5000, 200), 0.0);
  EXPECT_EQ(WarmupLambda(0, 0), 0.0);
  double prev = 1.0;
  for (int s = 0; s < 300; ++s) {
    const double l = WarmupLambda(s, 200);
    EXPECT_LE(l, prev);
    prev = l;
  }
  EXPECT_THROW(WarmupLambda(-1, 10), ContractError);
  Tensor a = Tensor::Scalar(2.0), b = Tensor::Scalar(6.0);
  EXPECT_EQ(WarmupBlend(0, 10, a, b).item(), 4.0);
  EXPECT_EQ(WarmupBlend(10, 10, a, b).item(), 6.0);
}

TEST_F(TrainTest, DefaultWeights) {
  LossWeights w;
  EXPECT_EQ(w.asr, 1.0);
  EXPECT_EQ(w.st, 1.0);
  EXPECT_EQ(w.cr_asr, 0.05);
  EXPECT_EQ(w.cr_st, 0.05);
  EXPECT_EQ(w.ctc_asr, 0.1);
  EXPECT_EQ(w.ctc_st, 0.1);
}

TEST_F(TrainTest, MultitaskWeights) {
  const SynthExample &ex = data_[0];
  EncoderOutputs enc = model_.Encode(ex.frames, {});
  TrainConfig c = Joint();
  const double asr =
      TaskTransducerLoss(model_, Task::kAsr, enc.f_s, ex.src, 3, c).item();
  const double st =
      TaskTransducerLoss(model_, Task::kSt, enc.f_t, ex.tgt, 3, c).item();
  EXPECT_NEAR(MultitaskNtLoss(model_, enc, ex, 3, c).total.item(), asr + st,
              1e-9);
  c.weights.st = 0.0;
  EXPECT_NEAR(MultitaskNtLoss(model_, enc, ex, 3, c).total.item(), asr, 1e-12);
  c.weights.st = 1.0;
  c.weights.asr = c.weights.st = 2.0;
  EXPECT_NEAR(MultitaskNtLoss(model_, enc, ex, 3, c).total.item(),
              2 * (asr + st), 1e-9);
}

TEST_F(TrainTest, TransducerLossBlendsTowardsPruned) {
  const SynthExample &ex = data_[1];
  Tensor f = model_.EncodeAsr(ex.frames, {});
  TrainConfig c = Joint();
  const TaskHeads &h = model_.heads(Task::kAsr);
  Tensor g = h.predictor.Forward(ex.src);
  const double simple =
      TransducerNll(SimpleJoinerLogits(f, g, h.simple), ex.src).item();
  const double pruned =
      TaskTransducerLoss(model_, Task::kAsr, f, ex.src, c.warmup_steps, c).item();
  EXPECT_NEAR(TaskTransducerLoss(model_, Task::kAsr, f, ex.src, 0, c).item(),
              0.5 * simple + 0.5 * pruned, 1e-9);
  // Pruning never undercuts the exact lattice.
  const double exact = TransducerNll(h.joiner.Lattice(f, g), ex.src).item();
  EXPECT_GE(pruned, exact - 1e-9);
}

TEST_F(TrainTest, CombinedLossDegeneracies) {
  const SynthExample &ex = data_[2];
  TrainConfig c = Joint();
  auto [xa, xb] = TwoViews(ex.frames, c.augment, 3);
  EncoderOutputs a = model_.Encode(xa, {}), b = model_.Encode(xb, {});
  const double nt = MultitaskNtLoss(model_, a, ex, 1, c).total.item();

  TrainConfig off = c;
  off.weights.cr_asr = off.weights.cr_st = 0.0;
  off.weights.ctc_asr = off.weights.ctc_st = 0.0;
  EXPECT_EQ(CombinedLoss(model_, a, b, ex, 1, off).total.item(), nt);

  LossTerms same = CombinedLoss(model_, a, a, ex, 1, c);
  EXPECT_EQ(same.parts.at("cr_asr"), 0.0);
  EXPECT_EQ(same.parts.at("cr_st"), 0.0);
}

TEST_F(TrainTest, CombinedLossLinearInWeights) {
  const SynthExample &ex = data_[3];
  TrainConfig c = Joint();
  auto [xa, xb] = TwoViews(ex.frames, c.augment, 4);
  EncoderOutputs a = model_.Encode(xa, {}), b = model_.Encode(xb, {});
  LossTerms base = CombinedLoss(model_, a, b, ex, 1, c);
  const double delta = 0.37;
  struct Knob {
    const char *part;
    double LossWeights::*w;
  };
  const Knob knobs[] = {{"nt_asr", &LossWeights::asr},
                        {"nt_st", &LossWeights::st},
                        {"cr_asr", &LossWeights::cr_asr},
                        {"cr_st", &LossWeights::cr_st},
                        {"ctc_asr", &LossWeights::ctc_asr},
                        {"ctc_st", &LossWeights::ctc_st}};
  for (const Knob &k : knobs) {
    TrainConfig d = c;
    d.weights.*k.w += delta;
    ASSERT_TRUE(base.parts.count(k.part)) << k.part;
    EXPECT_NEAR(CombinedLoss(model_, a, b, ex, 1, d).total.item() -
                    base.total.item(),
                delta * base.parts.at(k.part), 1e-6)
        << k.part;
  }
}

TEST_F(TrainTest, PretrainUsesAsrTermsOnly) {
  TrainConfig c;
  c.cr_enabled = true;
  LossTerms t = ExampleLoss(model_, data_[0], 0, c, 1);
  for (const auto &[name, v] : t.parts)
    EXPECT_NE(name.find("asr"), std::string::npos) << name;
  EXPECT_TRUE(t.parts.count("cr_asr"));
}

TEST_F(TrainTest, MissingTarget) {
  SynthExample ex = data_[0];
  ex.tgt.clear();
  EncoderOutputs enc = model_.Encode(ex.frames, {});
  EXPECT_THROW(MultitaskNtLoss(model_, enc, ex, 0, Joint()), ContractError);
}

TEST_F(TrainTest, AdamClipsGradientNorm) {
  Tensor w = Tensor::FromVector({2}, {0.0, 0.0});
  w.set_requires_grad(true);
  Backward(Sum(Mul(w, Tensor::FromVector({2}, {30.0, 40.0}))));
  Adam adam({w}, 0.1);
  EXPECT_DOUBLE_EQ(adam.ClipGradNorm(5.0), 50.0);
  EXPECT_NEAR(adam.GradNorm(), 5.0, 1e-12);
  adam.Step();
  // The first Adam step moves each coordinate by lr against its gradient.
  EXPECT_NEAR(w.data()[0], -0.1, 1e-6);
  EXPECT_NEAR(w.data()[1], -0.1, 1e-6);
}

TEST_F(TrainTest, ZeroStepsLeaveModelUnchanged) {
  TrainConfig c;
  c.steps = 0;
  const double before = model_.NamedParameters()[0].second.data()[0];
  std::ostringstream log;
  Trainer t(&model_, c);
  EXPECT_TRUE(t.Run(data_, &log).empty());
  EXPECT_TRUE(log.str().empty());
  EXPECT_EQ(model_.NamedParameters()[0].second.data()[0], before);
}

std::vector<double> Trajectory(std::uint64_t seed) {
  HierarchicalModel m(Small(), 7);
  TrainConfig c = Joint();
  c.cr_enabled = true;
  c.steps = 5;
  c.batch_size = 2;
  c.seed = seed;
  Trainer t(&m, c);
  std::vector<double> out;
  for (const StepRecord &r : t.Run(GenerateDataset(SmallData(), 6, 1)))
    out.push_back(r.values.at("loss"));
  return out;
}

TEST_F(TrainTest, Reproducible) {
  EXPECT_EQ(Trajectory(3), Trajectory(3));
  EXPECT_NE(Trajectory(3), Trajectory(4));
}

TEST_F(TrainTest, LogFormat) {
  TrainConfig c;
  c.steps = 2;
  c.batch_size = 2;
  std::ostringstream log;
  Trainer(&model_, c).Run(data_, &log);
  std::istringstream is(log.str());
  std::string line;
  int lines = 0;
  bool saw_norm = false;
  while (std::getline(is, line)) {
    ++lines;
    EXPECT_EQ(std::count(line.begin(), line.end(), '\t'), 2) << line;
    saw_norm |= line.find("\tgrad_norm\t") != std::string::npos;
  }
  EXPECT_GT(lines, 4);
  EXPECT_TRUE(saw_norm);
}

TEST_F(TrainTest, DivergenceNamesStep) {
  TrainConfig c;
  c.steps = 3;
  c.batch_size = 1;
  Trainer t(&model_, c);
  t.Run(std::vector<SynthExample>{data_[0]});
  Tensor w = model_.NamedParameters()[0].second;
  w.mutable_data()[0] = std::numeric_limits<double>::quiet_NaN();
  const SynthExample *b[] = {&data_[0]};
  try {
    t.Step(b);
    FAIL() << "expected DivergenceError";
  } catch (const DivergenceError &e) {
    EXPECT_NE(std::string(e.what()).find("step 4"), std::string::npos)
        << e.what();
  }
}

TEST_F(TrainTest, PretrainingTransfersToJointStage) {
  PrecisionScope p32(Precision::k32);
  SynthConfig sc = SmallData();
  sc.reorder = Reorder::Parse("monotone");
  auto data = GenerateDataset(sc, 64, 5);
  HierarchicalModel pre(Small(), 11);
  TrainConfig c;
  c.steps = 150;
  c.batch_size = 4;
  c.spec_augment = false;
  Trainer(&pre, c).Run(data);
  const std::string path =
      (std::filesystem::temp_directory_path() / "xducer_train_pre.bin").string();
  SaveCheckpoint(pre, path);

  HierarchicalModel fresh(Small(), 12), loaded(Small(), 12);
  LoadCheckpoint(&loaded, path, {.init_st = true});
  std::filesystem::remove(path);
  TrainConfig j = Joint();
  j.warmup_steps = 0;
  double lf = 0.0, ll = 0.0;
  for (const SynthExample &ex : data) {
    lf += TaskTransducerLoss(fresh, Task::kAsr, fresh.EncodeAsr(ex.frames, {}),
                             ex.src, 0, j).item();
    ll += TaskTransducerLoss(loaded, Task::kAsr,
                             loaded.EncodeAsr(ex.frames, {}), ex.src, 0, j)
              .item();
  }
  EXPECT_LT(ll, lf);
}

}  // namespace
}  // namespace xducer
