// xducer/decode.cc

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

#include "xducer/decode.h"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <map>

#include "xducer/error.h"
#include "xducer/losses.h"

namespace xducer {

Tensor ApplyBlankPenalty(const Tensor &logits, double bp) {
  const int V = logits.dim(-1);
  std::vector<double> v(logits.data().begin(), logits.data().end());
  for (std::size_t i = 0; i < v.size(); i += V) v[i] -= bp;
  return Tensor::FromVector(logits.shape(), std::move(v));
}

void DecodeOptions::Validate() const {
  if (max_sym_per_frame < 1)
    throw ConfigError("max_sym_per_frame must be >= 1");
  if (beam < 1) throw ConfigError("beam must be >= 1");
  if (!std::isfinite(blank_penalty))
    throw ConfigError("blank_penalty must be finite");
}

void ChunkConfig::Validate() const {
  if (chunk_size < 1) throw ConfigError("chunk_size must be >= 1");
  if (left_context < 0 || left_context % chunk_size != 0)
    throw ConfigError("left_context must be a non-negative multiple of "
                      "chunk_size");
  if (max_sym_per_frame < 1)
    throw ConfigError("max_sym_per_frame must be >= 1");
}

JoinerScorer::JoinerScorer(const HierarchicalModel &model, Task task)
    : heads_(model.heads(task)) {}

Tensor JoinerScorer::ProjectFrames(const Tensor &f) const {
  return MatMul(f, heads_.joiner.w_f);
}

Tensor JoinerScorer::ProjectContext(std::span<const int> history) const {
  return MatMul(heads_.predictor.Step(history), heads_.joiner.w_g);
}

Tensor JoinerScorer::Logits(const Tensor &frames_proj, int t,
                            const Tensor &ctx_proj) const {
  const std::pair<int, int> pair{t, 0};
  Tensor h = PairAdd(frames_proj, ctx_proj, std::span(&pair, 1));
  return heads_.joiner.out(Tanh(AddBias(h, heads_.joiner.bias)));
}

namespace {

int Argmax(std::span<const double> v) {
  return static_cast<int>(std::max_element(v.begin(), v.end()) - v.begin());
}

// Log-softmax of the raw and of the penalized logits of one joiner row.
struct Scores {
  Tensor logp, penalized;
};

Scores ScoreRow(const Tensor &logits, double bp) {
  return {LogSoftmax(logits), LogSoftmax(ApplyBlankPenalty(logits, bp))};
}

}  // namespace

GreedyDecoder::GreedyDecoder(const HierarchicalModel &model, Task task,
                             const DecodeOptions &options)
    : scorer_(model, task), options_(options) {
  options_.Validate();
  NoGradScope no_grad;
  ctx_ = scorer_.ProjectContext(hyp_.tokens);
}

void GreedyDecoder::Advance(const Tensor &f) {
  NoGradScope no_grad;
  const double bp = options_.blank_penalty;
  Tensor fp = scorer_.ProjectFrames(f);
  for (int t = 0; t < f.dim(0); ++t) {
    int emitted = 0;
    for (;;) {
      Tensor z = scorer_.Logits(fp, t, ctx_);
      Scores s = ScoreRow(z, bp);
      const int k = emitted < options_.max_sym_per_frame
                        ? Argmax(ApplyBlankPenalty(z, bp).data())
                        : kBlank;
      hyp_.logp += s.logp.data()[k];
      hyp_.score += s.penalized.data()[k];
      if (k == kBlank) break;
      hyp_.tokens.push_back(k);
      ++emitted;
      ctx_ = scorer_.ProjectContext(hyp_.tokens);
    }
  }
  frames_ += f.dim(0);
}

Hypothesis GreedyDecode(const HierarchicalModel &model, Task task,
                        const Tensor &f, const DecodeOptions &options) {
  GreedyDecoder d(model, task, options);
  d.Advance(f);
  return d.hypothesis();
}

namespace {

struct BeamHyp {
  Hypothesis hyp;
  Tensor ctx;
};

// Higher score first; ties go to the shorter, then lexicographically
// smaller, token sequence.
bool Better(const Hypothesis &a, const Hypothesis &b) {
  if (a.score != b.score) return a.score > b.score;
  if (a.tokens.size() != b.tokens.size())
    return a.tokens.size() < b.tokens.size();
  return a.tokens < b.tokens;
}

double LogAddExp(double a, double b) {
  const double m = std::max(a, b);
  return m + std::log(std::exp(a - m) + std::exp(b - m));
}

// Merges hypotheses with identical token sequences.
void MergeInto(std::map<std::vector<int>, BeamHyp> *set, BeamHyp h) {
  auto [it, inserted] = set->try_emplace(h.hyp.tokens, std::move(h));
  if (inserted) return;
  it->second.hyp.logp = LogAddExp(it->second.hyp.logp, h.hyp.logp);
  it->second.hyp.score = LogAddExp(it->second.hyp.score, h.hyp.score);
}

std::vector<BeamHyp> Sorted(std::map<std::vector<int>, BeamHyp> set) {
  std::vector<BeamHyp> v;
  for (auto &[k, h] : set) v.push_back(std::move(h));
  std::sort(v.begin(), v.end(), [](const BeamHyp &a, const BeamHyp &b) {
    return Better(a.hyp, b.hyp);
  });
  return v;
}

}  // namespace

Hypothesis BeamSearch(const HierarchicalModel &model, Task task,
                      const Tensor &f, const DecodeOptions &options) {
  options.Validate();
  NoGradScope no_grad;
  JoinerScorer scorer(model, task);
  const double bp = options.blank_penalty;
  Tensor fp = scorer.ProjectFrames(f);
  std::vector<BeamHyp> beam = {{Hypothesis(), scorer.ProjectContext({})}};

  for (int t = 0; t < f.dim(0); ++t) {
    // `done` holds hypotheses that emitted blank on this frame; `active`
    // may still emit on it.
    std::map<std::vector<int>, BeamHyp> done;
    std::vector<BeamHyp> active = std::move(beam);
    for (int round = 0; !active.empty(); ++round) {
      const bool forced = round == options.max_sym_per_frame;
      std::map<std::vector<int>, BeamHyp> next;
      for (const BeamHyp &h : active) {
        Tensor z = scorer.Logits(fp, t, h.ctx);
        Scores s = ScoreRow(z, bp);
        BeamHyp b = h;
        b.hyp.logp += s.logp.data()[kBlank];
        b.hyp.score += s.penalized.data()[kBlank];
        MergeInto(&done, std::move(b));
        if (forced) continue;
        for (int v = 1; v < z.dim(1); ++v) {
          BeamHyp e;
          e.hyp.tokens = h.hyp.tokens;
          e.hyp.tokens.push_back(v);
          e.hyp.logp = h.hyp.logp + s.logp.data()[v];
          e.hyp.score = h.hyp.score + s.penalized.data()[v];
          MergeInto(&next, std::move(e));
        }
      }
      // Prune the union to `beam` and split it back.
      std::vector<std::pair<const Hypothesis *, bool>> pool;
      for (auto &[k, h] : done) pool.emplace_back(&h.hyp, true);
      for (auto &[k, h] : next) pool.emplace_back(&h.hyp, false);
      std::sort(pool.begin(), pool.end(), [](const auto &a, const auto &b) {
        return Better(*a.first, *b.first);
      });
      if (pool.size() > static_cast<std::size_t>(options.beam))
        pool.resize(options.beam);
      std::map<std::vector<int>, BeamHyp> kept_done;
      active.clear();
      for (auto &[hp, is_done] : pool) {
        if (is_done) {
          auto node = done.extract(hp->tokens);
          kept_done.insert(std::move(node));
        } else {
          BeamHyp h = std::move(next.at(hp->tokens));
          h.ctx = scorer.ProjectContext(h.hyp.tokens);
          active.push_back(std::move(h));
        }
      }
      done = std::move(kept_done);
    }
    beam = Sorted(std::move(done));
  }
  return beam.front().hyp;
}

double StreamingResult::seconds() const {
  double s = 0.0;
  for (double c : chunk_seconds) s += c;
  return s;
}

StreamingResult StreamingDecode(const HierarchicalModel &model, Task task,
                                const Tensor &features,
                                const ChunkConfig &chunk, double bp) {
  chunk.Validate();
  NoGradScope no_grad;
  DecodeOptions options;
  options.blank_penalty = bp;
  options.max_sym_per_frame = chunk.max_sym_per_frame;
  options.beam = 1;
  StreamingEncoder encoder(model, chunk.mask());
  GreedyDecoder decoder(model, task, options);
  StreamingResult r;
  const int T = features.dim(0);
  if (T < ModelConfig::kDownsample)
    throw ContractError("utterance has " + std::to_string(T) +
                        " frames; at least 2 are required");
  r.input_frames = T;
  for (int b = 0; b < T; b += encoder.input_chunk()) {
    const auto start = std::chrono::steady_clock::now();
    EncoderOutputs out = encoder.AcceptChunk(
        SliceRows(features, b, std::min(T, b + encoder.input_chunk())));
    decoder.Advance(task == Task::kAsr ? out.f_s : out.f_t);
    const auto stop = std::chrono::steady_clock::now();
    r.chunk_seconds.push_back(
        std::chrono::duration<double>(stop - start).count());
    r.tokens_after_chunk.push_back(
        static_cast<int>(decoder.hypothesis().tokens.size()));
  }
  r.hyp = decoder.hypothesis();
  return r;
}

Hypothesis DecodeUtterance(const HierarchicalModel &model, Task task,
                           const Tensor &features, const ChunkMaskSpec &mask,
                           const DecodeOptions &options) {
  NoGradScope no_grad;
  const Tensor f = task == Task::kAsr ? model.EncodeAsr(features, mask)
                                      : model.Encode(features, mask).f_t;
  return options.beam == 1 ? GreedyDecode(model, task, f, options)
                           : BeamSearch(model, task, f, options);
}

}  // namespace xducer
