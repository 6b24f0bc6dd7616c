// xducer/model.h

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

#ifndef XDUCER_MODEL_H_
#define XDUCER_MODEL_H_

#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "xducer/losses.h"
#include "xducer/tensor.h"

namespace xducer {

enum class Task { kAsr, kSt };
const char *TaskName(Task task);

struct ModelConfig {
  int feature_dim = 16;
  int src_vocab = 30;  // tokens 1..src_vocab, blank 0
  int tgt_vocab = 30;
  int model_dim = 64;
  int asr_blocks = 3;
  int st_blocks = 2;  // 0: both tasks read the ASR encoder output
  int st_dim = 64;    // width of the ST blocks
  int ffn_mult = 4;
  int conv_kernel = 3;
  int predictor_context = 2;
  int joiner_dim = 256;
  bool causal_conv = true;

  static constexpr int kDownsample = 2;

  // Architecture presets over the dims of `base`: "shared" (five ASR
  // blocks, no ST stack), "hier1" (3 + 2 full width) and "hier2" (3 + 4 at
  // the ST width that brings the total closest to hier1). "hier2+cr" is
  // hier2; the suffix only changes training.
  static ModelConfig Preset(const std::string &arch, const ModelConfig &base);
  static ModelConfig Preset(const std::string &arch);
  static ModelConfig Shared() { return Preset("shared"); }
  static ModelConfig Hier1() { return Preset("hier1"); }
  static ModelConfig Hier2() { return Preset("hier2"); }

  int vocab(Task task) const {
    return (task == Task::kAsr ? src_vocab : tgt_vocab) + 1;
  }
  int st_out_dim() const { return st_blocks > 0 ? st_dim : model_dim; }
  void Validate() const;
};

// Chunked attention: frame i sees its own chunk plus `left_context` frames
// before it. chunk_size == 0 means unrestricted attention.
struct ChunkMaskSpec {
  int chunk_size = 0;
  int left_context = 0;

  bool enabled() const { return chunk_size > 0; }
  ChunkMaskSpec Scaled(int factor) const {
    return {chunk_size * factor, left_context * factor};
  }
};

// Additive (T, T) mask, 0 where allowed and kLogZero elsewhere; undefined
// tensor when the spec is disabled.
Tensor ChunkAttentionMask(int frames, const ChunkMaskSpec &spec);

struct Linear2 {
  Tensor w, b;
  Tensor operator()(const Tensor &x) const { return Linear(x, w, b); }
};

struct EncoderBlock {
  Tensor ln1_g, ln1_b;
  Linear2 q, k, v, o;
  Tensor conv_w, conv_b;
  Tensor ln2_g, ln2_b;
  Linear2 ff1, ff2;
  bool causal = true;

  Tensor Forward(const Tensor &x, const Tensor &mask) const;

  // Incremental form of Forward for one chunk. Holds the projected keys and
  // values of the last `left` frames and the trailing conv inputs.
  struct Cache {
    Tensor k, v, conv_in;
  };
  Tensor ForwardChunk(const Tensor &x, int left, Cache *cache) const;
};

// Stateless predictor: embedding, causal conv of width K, relu, projection.
// Row u of the output depends only on the K most recent symbols of
// [BOS, y_1 .. y_u], with BOS using embedding row 0.
struct Predictor {
  Tensor embed;
  Tensor conv_w, conv_b;
  Linear2 proj;
  int context = 2;

  Tensor Forward(std::span<const int> tokens) const;  // -> (U+1, d)
  // Output row for the last position of `history` (tokens without BOS);
  // bit-identical to the matching row of Forward.
  Tensor Step(std::span<const int> history) const;  // -> (1, d)
};

struct Joiner {
  Tensor w_f, w_g, bias;
  Linear2 out;

  // linear(tanh(f W_f + g W_g + b)) for each (frame, position) pair.
  Tensor PairLogits(const Tensor &f, const Tensor &g,
                    std::span<const std::pair<int, int>> pairs) const;
  Tensor Forward(const Tensor &f_row, const Tensor &g_row) const;  // -> (1, V)
  LogitLattice Lattice(const Tensor &f, const Tensor &g) const;
  PairJoiner AsPairJoiner() const;
};

struct TaskHeads {
  Predictor predictor;
  Joiner joiner;
  SimpleJoinerWeights simple;
  Linear2 ctc;
  int vocab = 0;
};

struct EncoderOutputs {
  Tensor f_s;  // ASR encoder output (T', d)
  Tensor f_t;  // ST encoder output (T', st_out_dim)
};

class HierarchicalModel {
 public:
  HierarchicalModel(const ModelConfig &config, std::uint64_t seed);

  const ModelConfig &config() const { return config_; }

  Tensor EncodeAsr(const Tensor &features, const ChunkMaskSpec &mask) const;
  Tensor EncodeSt(const Tensor &f_s, const ChunkMaskSpec &mask) const;
  EncoderOutputs Encode(const Tensor &features,
                        const ChunkMaskSpec &mask) const;

  const TaskHeads &heads(Task task) const {
    return task == Task::kAsr ? asr_ : st_;
  }
  // Log-probabilities of the CTC head over encoder output `f`.
  Tensor CtcLogProbs(Task task, const Tensor &f) const;

  // Stable names; "enc_st." and "st." prefixes mark the ST side.
  std::vector<std::pair<std::string, Tensor>> NamedParameters() const;
  std::size_t ParameterCount() const;
  static bool IsStParameter(const std::string &name);

  // Re-draws every ST-side parameter from `seed`.
  void ReinitializeSt(std::uint64_t seed);

  friend class StreamingEncoder;

 private:
  void Initialize(std::uint64_t seed, bool st_only);

  ModelConfig config_;
  Linear2 input_;
  std::vector<EncoderBlock> asr_blocks_;
  Linear2 st_in_;  // present only when st_dim != model_dim
  std::vector<EncoderBlock> st_blocks_;
  TaskHeads asr_, st_;
};

// Chunk-by-chunk encoder with per-block caches. For the same ChunkMaskSpec
// its outputs are bit-identical to the masked offline Encode.
class StreamingEncoder {
 public:
  StreamingEncoder(const HierarchicalModel &model, const ChunkMaskSpec &mask);

  // Input frames per full chunk.
  int input_chunk() const;
  // Consumes the next input chunk (exactly input_chunk() frames, except the
  // final one which may be shorter) and returns the new encoder frames.
  EncoderOutputs AcceptChunk(const Tensor &features);

 private:
  const HierarchicalModel &model_;
  ChunkMaskSpec mask_;
  std::vector<EncoderBlock::Cache> asr_cache_, st_cache_;
  bool finished_ = false;
};

struct LoadOptions {
  // Skip ST-side arrays in the file and keep the model's fresh ST weights.
  bool init_st = false;
};

// Named parameter values detached from any model, e.g. a pretrained
// snapshot applied to several models.
struct ModelState {
  struct Array {
    std::string name;
    Shape shape;
    std::vector<double> values;
  };
  std::vector<Array> arrays;
};

ModelState CaptureState(const HierarchicalModel &model);
// Same checks as LoadCheckpoint; `source` names the origin in errors.
void RestoreState(HierarchicalModel *model, const ModelState &state,
                  const LoadOptions &options = {},
                  const std::string &source = "state");

// Format: magic "HENT1", then per array: u32 name length, UTF-8 name,
// u32 rank, u32 extents, float32 values; all little-endian.
void SaveCheckpoint(const HierarchicalModel &model, const std::string &path);
void LoadCheckpoint(HierarchicalModel *model, const std::string &path,
                    const LoadOptions &options = {});

}  // namespace xducer

#endif  // XDUCER_MODEL_H_
