// tests/model_test.cc

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

#include "xducer/model.h"

#include <gtest/gtest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>

#include "test_util.h"
#include "xducer/error.h"

namespace xducer {
namespace {

using testing::RandomTensor;

ModelConfig Small() {
  ModelConfig c;
  c.feature_dim = 6;
  c.src_vocab = 7;
  c.tgt_vocab = 5;
  c.model_dim = 8;
  c.asr_blocks = 2;
  c.st_blocks = 2;
  c.st_dim = 8;
  c.joiner_dim = 8;
  return c;
}

void ExpectBitEqual(const Tensor &a, const Tensor &b) {
  ASSERT_EQ(a.shape(), b.shape());
  for (std::size_t i = 0; i < a.numel(); ++i)
    ASSERT_EQ(a.data()[i], b.data()[i]) << "index " << i;
}

std::string TempPath(const std::string &name) {
  return (std::filesystem::temp_directory_path() /
          ("xducer_model_test_" + name))
      .string();
}

TEST(ModelTest, EncoderShapes) {
  HierarchicalModel m(Small(), 1);
  std::mt19937_64 rng(2);
  EncoderOutputs out = m.Encode(RandomTensor({10, 6}, rng), {});
  EXPECT_EQ(out.f_s.shape(), (Shape{5, 8}));
  EXPECT_EQ(out.f_t.shape(), (Shape{5, 8}));
  EXPECT_EQ(m.EncodeAsr(RandomTensor({9, 6}, rng), {}).dim(0), 5);
  EXPECT_THROW(m.EncodeAsr(RandomTensor({1, 6}, rng), {}), ContractError);
  EXPECT_THROW(m.EncodeAsr(RandomTensor({4, 5}, rng), {}), DimensionError);
  EXPECT_THROW(m.EncodeSt(RandomTensor({4, 5}, rng), {}), DimensionError);
}

TEST(ModelTest, BlockPreservesShape) {
  std::mt19937_64 rng(3);
  ModelConfig c = Small();
  Tensor f = RandomTensor({7, 8}, rng);
  // A single ST block maps (T', d) to (T', d).
  c.st_blocks = 1;
  HierarchicalModel one(c, 5);
  EXPECT_EQ(one.EncodeSt(f, {}).shape(), f.shape());
}

TEST(ModelTest, ZeroWeightsStayFinite) {
  HierarchicalModel m(Small(), 1);
  for (auto &[name, t] : m.NamedParameters())
    if (name.find(".g") == std::string::npos)
      std::fill(t.mutable_data().begin(), t.mutable_data().end(), 0.0);
  std::mt19937_64 rng(6);
  EncoderOutputs out = m.Encode(RandomTensor({12, 6}, rng), {});
  for (double v : out.f_t.data()) {
    EXPECT_TRUE(std::isfinite(v));
    EXPECT_EQ(v, 0.0);
  }
}

TEST(ModelTest, SingleChunkMaskMatchesUnmasked) {
  HierarchicalModel m(Small(), 7);
  std::mt19937_64 rng(8);
  Tensor x = RandomTensor({14, 6}, rng);
  ExpectBitEqual(m.Encode(x, {}).f_t, m.Encode(x, {7, 0}).f_t);
}

TEST(ModelTest, MaskChangesOnlyLaterChunks) {
  // Unrestricted attention lets every frame see the future, so a real chunk
  // mask must change some outputs.
  HierarchicalModel m(Small(), 9);
  std::mt19937_64 rng(10);
  Tensor x = RandomTensor({16, 6}, rng);
  Tensor a = m.Encode(x, {}).f_s, b = m.Encode(x, {2, 0}).f_s;
  int differing = 0;
  for (int t = 0; t < a.dim(0); ++t)
    for (int j = 0; j < a.dim(1); ++j) differing += a.at(t, j) != b.at(t, j);
  EXPECT_GT(differing, 0);
}

TEST(ModelTest, MaskAllowedSet) {
  Tensor m = ChunkAttentionMask(7, {3, 2});
  // Frame 4 is in chunk [3, 6) and may also see frames 1 and 2.
  for (int j = 0; j < 7; ++j) {
    const bool allowed = j >= 1 && j < 6;
    if (allowed)
      EXPECT_EQ(m.at(4, j), 0.0) << j;
    else
      EXPECT_LT(m.at(4, j), -1e29) << j;
  }
  EXPECT_FALSE(ChunkAttentionMask(7, {}).defined());
}

TEST(ModelTest, ChunkCausality) {
  for (int seed = 0; seed < 5; ++seed) {
    HierarchicalModel m(Small(), 100 + seed);
    std::mt19937_64 rng(seed);
    const ChunkMaskSpec spec{2, 3};
    Tensor x = RandomTensor({19, 6}, rng);
    EncoderOutputs full = m.Encode(x, spec);
    for (int chunk = 0; chunk < 4; ++chunk) {
      // Zero every input frame after chunk `chunk` (4 input frames each).
      std::vector<double> v(x.data().begin(), x.data().end());
      const int keep = (chunk + 1) * 4;
      std::fill(v.begin() + keep * 6, v.end(), 0.0);
      EncoderOutputs cut = m.Encode(Tensor::FromVector({19, 6}, v), spec);
      for (int t = 0; t < (chunk + 1) * 2; ++t)
        for (int j = 0; j < 8; ++j) {
          ASSERT_EQ(full.f_s.at(t, j), cut.f_s.at(t, j));
          ASSERT_EQ(full.f_t.at(t, j), cut.f_t.at(t, j));
        }
    }
  }
}

TEST(ModelTest, StreamingMatchesMaskedOffline) {
  const ChunkMaskSpec specs[] = {{1, 0}, {2, 3}, {3, 1}, {4, 8}};
  for (const ChunkMaskSpec &spec : specs) {
    for (int seed = 0; seed < 4; ++seed) {
      ModelConfig c = Small();
      if (seed % 2) c.st_dim = 6;
      HierarchicalModel m(c, 200 + seed);
      std::mt19937_64 rng(seed);
      const int T = 9 + 5 * seed;
      Tensor x = RandomTensor({T, 6}, rng);
      EncoderOutputs offline = m.Encode(x, spec);
      StreamingEncoder stream(m, spec);
      std::vector<Tensor> fs, ft;
      for (int b = 0; b < T; b += stream.input_chunk()) {
        EncoderOutputs o = stream.AcceptChunk(
            SliceRows(x, b, std::min(T, b + stream.input_chunk())));
        fs.push_back(o.f_s);
        ft.push_back(o.f_t);
      }
      ExpectBitEqual(ConcatRows(fs), offline.f_s);
      ExpectBitEqual(ConcatRows(ft), offline.f_t);
    }
  }
}

TEST(ModelTest, StreamingRejectsBadChunks) {
  HierarchicalModel m(Small(), 1);
  std::mt19937_64 rng(1);
  EXPECT_THROW(StreamingEncoder(m, {}), ContractError);
  StreamingEncoder s(m, {2, 2});
  EXPECT_THROW(s.AcceptChunk(RandomTensor({5, 6}, rng)), ContractError);
  s.AcceptChunk(RandomTensor({3, 6}, rng));
  EXPECT_THROW(s.AcceptChunk(RandomTensor({4, 6}, rng)), ContractError);
}

TEST(ModelTest, PredictorEmptyPrefix) {
  HierarchicalModel m(Small(), 1);
  const Predictor &p = m.heads(Task::kAsr).predictor;
  Tensor g = p.Forward({});
  EXPECT_EQ(g.shape(), (Shape{1, 8}));
  ExpectBitEqual(g, p.Step({}));
  const std::vector<int> bad = {1, 0};
  EXPECT_THROW(p.Forward(bad), ContractError);
  const std::vector<int> oov = {8};
  EXPECT_THROW(p.Forward(oov), VocabError);
}

TEST(ModelTest, PredictorContextWindow) {
  HierarchicalModel m(Small(), 2);
  const Predictor &p = m.heads(Task::kAsr).predictor;
  const std::vector<int> a = {1, 2, 3}, b = {4, 2, 3};
  Tensor ga = p.Forward(a), gb = p.Forward(b);
  for (int j = 0; j < 8; ++j) EXPECT_EQ(ga.at(3, j), gb.at(3, j));
  bool row1_differs = false;
  for (int j = 0; j < 8; ++j) row1_differs |= ga.at(1, j) != gb.at(1, j);
  EXPECT_TRUE(row1_differs);
}

TEST(ModelTest, PredictorLocalitySweep) {
  for (int K : {1, 2, 3}) {
    ModelConfig c = Small();
    c.predictor_context = K;
    HierarchicalModel m(c, 30 + K);
    const Predictor &p = m.heads(Task::kAsr).predictor;
    std::mt19937_64 rng(K);
    std::uniform_int_distribution<int> tok(1, 7);
    for (int trial = 0; trial < 20; ++trial) {
      const int U = 1 + trial % 12;
      std::vector<int> y(U);
      for (int &v : y) v = tok(rng);
      Tensor g = p.Forward(y);
      for (int u = 1; u <= U; ++u) {
        // Step over the prefix reproduces row u exactly.
        Tensor s = p.Step(std::span(y).first(u));
        for (int j = 0; j < 8; ++j) ASSERT_EQ(s.at(0, j), g.at(u, j));
        std::vector<int> z = y;
        z[u - 1] = z[u - 1] % 7 + 1;
        Tensor h = p.Forward(z);
        for (int r = 0; r <= U; ++r) {
          bool same = true;
          for (int j = 0; j < 8; ++j) same &= g.at(r, j) == h.at(r, j);
          if (r < u || r > u + K - 1) ASSERT_TRUE(same) << r;
        }
      }
    }
  }
}

TEST(ModelTest, JoinerZeroWeightsGiveZeroLogits) {
  HierarchicalModel m(Small(), 3);
  const Joiner &j = m.heads(Task::kSt).joiner;
  for (Tensor t : {j.w_f, j.w_g, j.bias, j.out.w, j.out.b})
    std::fill(t.mutable_data().begin(), t.mutable_data().end(), 0.0);
  std::mt19937_64 rng(3);
  Tensor z = j.Forward(RandomTensor({1, 8}, rng), RandomTensor({1, 8}, rng));
  EXPECT_EQ(z.shape(), (Shape{1, 6}));
  for (double v : z.data()) EXPECT_EQ(v, 0.0);
}

TEST(ModelTest, JoinerPointwiseMatchesLattice) {
  HierarchicalModel m(Small(), 4);
  const TaskHeads &h = m.heads(Task::kAsr);
  std::mt19937_64 rng(4);
  Tensor f = RandomTensor({5, 8}, rng);
  const std::vector<int> y = {3, 1, 7};
  Tensor g = h.predictor.Forward(y);
  LogitLattice lat = h.joiner.Lattice(f, g);
  EXPECT_EQ(lat.vocab(), 8);
  for (int t = 0; t < 5; ++t)
    for (int u = 0; u < 4; ++u) {
      Tensor z = h.joiner.Forward(SliceRows(f, t, t + 1), SliceRows(g, u, u + 1));
      for (int v = 0; v < 8; ++v) ASSERT_EQ(z.at(0, v), lat.logits().at(t, u, v));
    }
  EXPECT_THROW(h.joiner.Forward(RandomTensor({1, 7}, rng), SliceRows(g, 0, 1)),
               DimensionError);
}

TEST(ModelTest, ZeroDepthStEncoderIsIdentity) {
  ModelConfig c = Small();
  c.st_blocks = 0;
  HierarchicalModel m(c, 5);
  std::mt19937_64 rng(5);
  EncoderOutputs out = m.Encode(RandomTensor({8, 6}, rng), {});
  ExpectBitEqual(out.f_s, out.f_t);
}

TEST(ModelTest, ZeroedStBlocksPassResidualThrough) {
  HierarchicalModel m(Small(), 6);
  for (auto &[name, t] : m.NamedParameters())
    if (name.rfind("enc_st.", 0) == 0)
      std::fill(t.mutable_data().begin(), t.mutable_data().end(), 0.0);
  std::mt19937_64 rng(6);
  EncoderOutputs out = m.Encode(RandomTensor({8, 6}, rng), {});
  ExpectBitEqual(out.f_s, out.f_t);
}

TEST(ModelTest, StLossReachesAsrEncoder) {
  PrecisionScope p64(Precision::k64);
  HierarchicalModel m(Small(), 7);
  std::mt19937_64 rng(7);
  EncoderOutputs out = m.Encode(RandomTensor({10, 6}, rng), {});
  const TaskHeads &h = m.heads(Task::kSt);
  const std::vector<int> y = {2, 4};
  Backward(TransducerNll(h.joiner.Lattice(out.f_t, h.predictor.Forward(y)), y));
  for (auto &[name, t] : m.NamedParameters()) {
    if (name.rfind("enc_asr.", 0) != 0 || name.find("ln") != std::string::npos)
      continue;
    double norm = 0.0;
    for (double g : t.grad()) norm += g * g;
    EXPECT_GT(norm, 0.0) << name;
  }
}

TEST(ModelTest, ParameterBudget) {
  const double h1 = HierarchicalModel(ModelConfig::Hier1(), 1).ParameterCount();
  const double h2 = HierarchicalModel(ModelConfig::Hier2(), 1).ParameterCount();
  const double sh =
      HierarchicalModel(ModelConfig::Shared(), 1).ParameterCount();
  EXPECT_LT(std::abs(h1 - h2) / h1, 0.05) << h1 << " vs " << h2;
  EXPECT_LT(std::abs(h1 - sh) / h1, 0.05) << h1 << " vs " << sh;
}

TEST(ModelTest, CheckpointRoundTrip) {
  PrecisionScope p32(Precision::k32);
  HierarchicalModel a(Small(), 11), b(Small(), 12);
  const std::string path = TempPath("rt.bin");
  SaveCheckpoint(a, path);
  LoadCheckpoint(&b, path);
  auto pa = a.NamedParameters(), pb = b.NamedParameters();
  ASSERT_EQ(pa.size(), pb.size());
  for (std::size_t i = 0; i < pa.size(); ++i) ExpectBitEqual(pa[i].second, pb[i].second);
  std::remove(path.c_str());
}

TEST(ModelTest, CheckpointErrors) {
  HierarchicalModel a(Small(), 11);
  const std::string path = TempPath("err.bin");
  SaveCheckpoint(a, path);
  const auto size = std::filesystem::file_size(path);

  // Deeper ST stack: the absent blocks are named.
  ModelConfig deep = Small();
  deep.st_blocks = 3;
  HierarchicalModel d(deep, 1);
  try {
    LoadCheckpoint(&d, path);
    FAIL() << "expected LoadError";
  } catch (const LoadError &e) {
    EXPECT_NE(std::string(e.what()).find("enc_st.2.attn.q.w"), std::string::npos)
        << e.what();
  }
  // The same file seeds a deeper model once ST weights are left fresh.
  const Tensor before = d.NamedParameters().back().second;
  const double keep = before.data()[0];
  LoadCheckpoint(&d, path, {.init_st = true});
  EXPECT_EQ(before.data()[0], keep);

  // Shallower model: the file holds arrays it does not know.
  ModelConfig shallow = Small();
  shallow.st_blocks = 1;
  HierarchicalModel s(shallow, 1);
  try {
    LoadCheckpoint(&s, path);
    FAIL() << "expected LoadError";
  } catch (const LoadError &e) {
    EXPECT_NE(std::string(e.what()).find("unknown array enc_st.1."),
              std::string::npos)
        << e.what();
  }

  std::filesystem::resize_file(path, size - 3);
  EXPECT_THROW(LoadCheckpoint(&a, path), LoadError);
  {
    std::ofstream os(path, std::ios::binary);
    os << "HENT2";
  }
  EXPECT_THROW(LoadCheckpoint(&a, path), LoadError);
  std::remove(path.c_str());
  EXPECT_THROW(LoadCheckpoint(&a, path), IoError);
}

}  // namespace
}  // namespace xducer
