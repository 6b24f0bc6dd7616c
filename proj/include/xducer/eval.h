// xducer/eval.h

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

#ifndef XDUCER_EVAL_H_
#define XDUCER_EVAL_H_

#include <map>
#include <ostream>
#include <span>
#include <string>
#include <vector>

namespace xducer {

using TokenSeq = std::vector<int>;

int EditDistance(std::span<const int> ref, std::span<const int> hyp);

// Corpus-pooled (S + D + I) / N. Throws ContractError on an empty reference
// corpus or mismatched sizes. May exceed 1 when hypotheses insert.
double Wer(const std::vector<TokenSeq> &refs, const std::vector<TokenSeq> &hyps);

// Corpus BLEU on 1..4-grams with brevity penalty, 0..100. An order with no
// matches gets 0.1 added to its matched count.
double Bleu(const std::vector<TokenSeq> &refs,
            const std::vector<TokenSeq> &hyps);

double LengthRatio(const std::vector<TokenSeq> &refs,
                   const std::vector<TokenSeq> &hyps);

// Seconds of processing per second of input at a 10 ms frame shift.
double Rtf(double seconds, long frames);

struct DecodeRecord {
  std::string id;
  double logp = 0.0;
  TokenSeq tokens;
};

// `id<TAB>logp<TAB>tokens`.
void WriteDecodeFile(const std::string &path,
                     const std::vector<DecodeRecord> &records);
std::vector<DecodeRecord> ReadDecodeFile(const std::string &path);

struct UttScore {
  std::string id;
  int edits = 0;
  int ref_len = 0;
  int hyp_len = 0;
};

struct EvalReport {
  double wer = 0.0;
  double bleu = 0.0;
  double length_ratio = 0.0;
  double rtf = 0.0;  // 0 when no timing is known
  std::vector<UttScore> utterances;

  // One `metric<TAB>value` line per corpus metric, then, if requested, a
  // per-utterance section.
  void Write(std::ostream &os, bool per_utterance = false) const;
};

// Scores hyps against refs keyed by id; the id sets must match.
EvalReport Evaluate(const std::map<std::string, TokenSeq> &refs,
                    const std::map<std::string, TokenSeq> &hyps);

}  // namespace xducer

#endif  // XDUCER_EVAL_H_
