// xducer/synthdata.h

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

#ifndef XDUCER_SYNTHDATA_H_
#define XDUCER_SYNTHDATA_H_

#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "xducer/tensor.h"

namespace xducer {

enum class ReorderMode { kMonotone, kSwapPairs, kRotateSpan };

struct Reorder {
  ReorderMode mode = ReorderMode::kSwapPairs;
  int span = 2;  // only for kRotateSpan

  // "monotone", "swap_pairs" or "rotate_span(k)".
  static Reorder Parse(const std::string &text);
  std::string ToString() const;

  // Position permutation p: output i takes input p[i].
  std::vector<int> Permutation(int n) const;
  std::vector<int> Apply(std::span<const int> tokens) const;
  std::vector<int> Invert(std::span<const int> tokens) const;
};

struct SynthConfig {
  int src_vocab = 30;
  int tgt_vocab = 30;
  int min_frames_per_token = 2;
  int max_frames_per_token = 4;
  int feature_dim = 16;
  double noise_std = 0.2;
  Reorder reorder;
  int min_tokens = 4;
  int max_tokens = 10;
  std::uint64_t task_seed = 1;  // token embeddings and token map

  void Validate() const;
};

struct SynthExample {
  std::string id;
  Tensor frames;               // (T, F)
  std::vector<int> src;
  std::vector<int> tgt;
  std::vector<int> durations;  // frames per source token; empty when loaded
};

// Fixed part of a task: per-token frame embeddings and the token map.
class SynthTask {
 public:
  explicit SynthTask(const SynthConfig &cfg);

  const SynthConfig &config() const { return cfg_; }
  int Map(int src_token) const { return map_[src_token]; }
  std::span<const double> Embedding(int src_token) const;

  // Consecutive source tokens are drawn distinct so token boundaries are
  // recoverable from the frames.
  SynthExample Generate(std::mt19937_64 &rng) const;
  std::vector<int> Target(std::span<const int> src) const;

  // Throws ContractError describing the first broken invariant.
  void Validate(const SynthExample &ex) const;

 private:
  SynthConfig cfg_;
  std::vector<int> map_;
  std::vector<double> embed_;
};

std::vector<SynthExample> GenerateDataset(const SynthConfig &cfg, int n,
                                          std::uint64_t seed);

// Directory layout: manifest.tsv, features.bin (float32 LE, row-major),
// features.idx (id, byte offset, T).
void WriteDataset(const std::string &dir,
                  const std::vector<SynthExample> &examples);
std::vector<SynthExample> ReadDataset(const std::string &dir);

}  // namespace xducer

#endif  // XDUCER_SYNTHDATA_H_
