// xducer/decode.h

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

#ifndef XDUCER_DECODE_H_
#define XDUCER_DECODE_H_

#include <span>
#include <string>
#include <vector>

#include "xducer/model.h"

namespace xducer {

// Returns a copy with index 0 of the last axis lowered by `bp`.
Tensor ApplyBlankPenalty(const Tensor &logits, double bp);

struct Hypothesis {
  std::vector<int> tokens;
  double logp = 0.0;   // unpenalized model log-probability
  double score = 0.0;  // penalized; used for selection
};

struct DecodeOptions {
  double blank_penalty = 0.0;
  int max_sym_per_frame = 20;
  int beam = 20;

  void Validate() const;
};

struct ChunkConfig {
  int chunk_size = 64;  // encoder output frames
  int left_context = 128;
  int max_sym_per_frame = 20;

  void Validate() const;
  ChunkMaskSpec mask() const { return {chunk_size, left_context}; }
};

// Joiner evaluation with the frame and context projections cached.
class JoinerScorer {
 public:
  JoinerScorer(const HierarchicalModel &model, Task task);

  const TaskHeads &heads() const { return heads_; }
  Tensor ProjectFrames(const Tensor &f) const;        // f W_f
  Tensor ProjectContext(std::span<const int> history) const;  // g W_g
  // Logits (1, V) for row `t` of projected frames and a projected context.
  Tensor Logits(const Tensor &frames_proj, int t, const Tensor &ctx_proj) const;

 private:
  const TaskHeads &heads_;
};

// Frame-at-a-time greedy search; Advance may be called once per chunk.
class GreedyDecoder {
 public:
  GreedyDecoder(const HierarchicalModel &model, Task task,
                const DecodeOptions &options);

  void Advance(const Tensor &f);
  const Hypothesis &hypothesis() const { return hyp_; }
  int frames() const { return frames_; }

 private:
  JoinerScorer scorer_;
  DecodeOptions options_;
  Hypothesis hyp_;
  Tensor ctx_;
  int frames_ = 0;
};

Hypothesis GreedyDecode(const HierarchicalModel &model, Task task,
                        const Tensor &f, const DecodeOptions &options);

Hypothesis BeamSearch(const HierarchicalModel &model, Task task,
                      const Tensor &f, const DecodeOptions &options);

struct StreamingResult {
  Hypothesis hyp;
  std::vector<double> chunk_seconds;
  std::vector<int> tokens_after_chunk;
  int input_frames = 0;

  double seconds() const;
};

// Chunked encoder plus greedy search; `task` picks the encoder output and
// heads.
StreamingResult StreamingDecode(const HierarchicalModel &model, Task task,
                                const Tensor &features,
                                const ChunkConfig &chunk, double bp);

// Encodes with `mask` and runs greedy (beam == 1) or beam search.
Hypothesis DecodeUtterance(const HierarchicalModel &model, Task task,
                           const Tensor &features, const ChunkMaskSpec &mask,
                           const DecodeOptions &options);

}  // namespace xducer

#endif  // XDUCER_DECODE_H_
