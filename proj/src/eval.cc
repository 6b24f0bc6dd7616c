// xducer/eval.cc

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

#include "xducer/eval.h"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "xducer/error.h"

namespace xducer {

int EditDistance(std::span<const int> ref, std::span<const int> hyp) {
  std::vector<int> prev(hyp.size() + 1), cur(hyp.size() + 1);
  for (std::size_t j = 0; j <= hyp.size(); ++j) prev[j] = static_cast<int>(j);
  for (std::size_t i = 1; i <= ref.size(); ++i) {
    cur[0] = static_cast<int>(i);
    for (std::size_t j = 1; j <= hyp.size(); ++j)
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1,
                         prev[j - 1] + (ref[i - 1] != hyp[j - 1])});
    std::swap(prev, cur);
  }
  return prev[hyp.size()];
}

namespace {

void CheckSizes(const std::vector<TokenSeq> &refs,
                const std::vector<TokenSeq> &hyps) {
  if (refs.size() != hyps.size())
    throw ContractError(std::to_string(refs.size()) + " references but " +
                        std::to_string(hyps.size()) + " hypotheses");
}

long TotalLength(const std::vector<TokenSeq> &v) {
  long n = 0;
  for (const TokenSeq &s : v) n += static_cast<long>(s.size());
  return n;
}

}  // namespace

double Wer(const std::vector<TokenSeq> &refs,
           const std::vector<TokenSeq> &hyps) {
  CheckSizes(refs, hyps);
  const long n = TotalLength(refs);
  if (n == 0) throw ContractError("empty reference corpus");
  long edits = 0;
  for (std::size_t i = 0; i < refs.size(); ++i)
    edits += EditDistance(refs[i], hyps[i]);
  return static_cast<double>(edits) / n;
}

double Bleu(const std::vector<TokenSeq> &refs,
            const std::vector<TokenSeq> &hyps) {
  CheckSizes(refs, hyps);
  const long hyp_len = TotalLength(hyps), ref_len = TotalLength(refs);
  if (hyp_len == 0) return 0.0;
  double matched[4] = {0, 0, 0, 0}, total[4] = {0, 0, 0, 0};
  for (std::size_t i = 0; i < refs.size(); ++i) {
    for (int n = 1; n <= 4; ++n) {
      std::map<std::vector<int>, int> ref_counts;
      const TokenSeq &r = refs[i], &h = hyps[i];
      for (std::size_t k = 0; k + n <= r.size(); ++k)
        ++ref_counts[std::vector<int>(r.begin() + k, r.begin() + k + n)];
      for (std::size_t k = 0; k + n <= h.size(); ++k) {
        auto it = ref_counts.find(std::vector<int>(h.begin() + k, h.begin() + k + n));
        if (it != ref_counts.end() && it->second > 0) {
          --it->second;
          matched[n - 1] += 1;
        }
        total[n - 1] += 1;
      }
    }
  }
  // Orders the hypotheses are too short to contain are left out of the
  // geometric mean.
  double log_sum = 0.0;
  int orders = 0;
  for (int n = 0; n < 4; ++n) {
    if (total[n] == 0) continue;
    const double m = matched[n] == 0 ? 0.1 : matched[n];
    log_sum += std::log(m / total[n]);
    ++orders;
  }
  const double bp = hyp_len >= ref_len
                        ? 1.0
                        : std::exp(1.0 - static_cast<double>(ref_len) / hyp_len);
  return 100.0 * bp * std::exp(log_sum / orders);
}

double LengthRatio(const std::vector<TokenSeq> &refs,
                   const std::vector<TokenSeq> &hyps) {
  CheckSizes(refs, hyps);
  const long n = TotalLength(refs);
  if (n == 0) throw ContractError("empty reference corpus");
  return static_cast<double>(TotalLength(hyps)) / n;
}

double Rtf(double seconds, long frames) {
  if (frames < 1) throw ContractError("rtf needs at least one frame");
  return seconds / (static_cast<double>(frames) * 0.01);
}

void WriteDecodeFile(const std::string &path,
                     const std::vector<DecodeRecord> &records) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot write " + path);
  os << std::setprecision(10);
  for (const DecodeRecord &r : records) {
    os << r.id << '\t' << r.logp << '\t';
    for (std::size_t i = 0; i < r.tokens.size(); ++i)
      os << (i ? " " : "") << r.tokens[i];
    os << '\n';
  }
  if (!os) throw IoError("write failed: " + path);
}

std::vector<DecodeRecord> ReadDecodeFile(const std::string &path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot read " + path);
  std::vector<DecodeRecord> out;
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    const std::size_t a = line.find('\t');
    const std::size_t b = a == std::string::npos ? a : line.find('\t', a + 1);
    if (b == std::string::npos)
      throw IoError(path + ":" + std::to_string(lineno) +
                    ": expected id, logp and tokens");
    DecodeRecord r;
    r.id = line.substr(0, a);
    r.logp = std::stod(line.substr(a + 1, b - a - 1));
    std::istringstream ts(line.substr(b + 1));
    int tok;
    while (ts >> tok) r.tokens.push_back(tok);
    out.push_back(std::move(r));
  }
  return out;
}

void EvalReport::Write(std::ostream &os, bool per_utterance) const {
  os << std::setprecision(6) << std::fixed;
  os << "wer\t" << wer << '\n';
  os << "bleu\t" << bleu << '\n';
  os << "length_ratio\t" << length_ratio << '\n';
  os << "rtf\t" << rtf << '\n';
  if (!per_utterance) return;
  os << "\nid\tedits\tref_len\thyp_len\n";
  for (const UttScore &u : utterances)
    os << u.id << '\t' << u.edits << '\t' << u.ref_len << '\t' << u.hyp_len
       << '\n';
}

EvalReport Evaluate(const std::map<std::string, TokenSeq> &refs,
                    const std::map<std::string, TokenSeq> &hyps) {
  std::vector<TokenSeq> r, h;
  EvalReport report;
  for (const auto &[id, ref] : refs) {
    auto it = hyps.find(id);
    if (it == hyps.end()) throw ContractError("no hypothesis for " + id);
    r.push_back(ref);
    h.push_back(it->second);
    report.utterances.push_back({id, EditDistance(ref, it->second),
                                 static_cast<int>(ref.size()),
                                 static_cast<int>(it->second.size())});
  }
  for (const auto &[id, hyp] : hyps)
    if (!refs.count(id)) throw ContractError("no reference for " + id);
  report.wer = Wer(r, h);
  report.bleu = Bleu(r, h);
  report.length_ratio = LengthRatio(r, h);
  return report;
}

}  // namespace xducer
