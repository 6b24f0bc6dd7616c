// xducer/synthdata.cc

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

#include "xducer/synthdata.h"

#include <algorithm>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>

#include "xducer/error.h"

namespace xducer {

Reorder Reorder::Parse(const std::string &text) {
  if (text == "monotone") return {ReorderMode::kMonotone, 1};
  if (text == "swap_pairs") return {ReorderMode::kSwapPairs, 2};
  int k = 0;
  char tail = 0;
  if (std::sscanf(text.c_str(), "rotate_span(%d%c", &k, &tail) == 2 &&
      tail == ')' && text.back() == ')' && k >= 1)
    return {ReorderMode::kRotateSpan, k};
  throw ConfigError("reorder_mode: expected monotone, swap_pairs or "
                    "rotate_span(k), got '" + text + "'");
}

std::string Reorder::ToString() const {
  switch (mode) {
    case ReorderMode::kMonotone: return "monotone";
    case ReorderMode::kSwapPairs: return "swap_pairs";
    case ReorderMode::kRotateSpan:
      return "rotate_span(" + std::to_string(span) + ")";
  }
  return "?";
}

std::vector<int> Reorder::Permutation(int n) const {
  std::vector<int> p(n);
  std::iota(p.begin(), p.end(), 0);
  const int k = mode == ReorderMode::kMonotone   ? 1
                : mode == ReorderMode::kSwapPairs ? 2
                                                  : span;
  // Left-rotate each span of k positions by one; a trailing partial span of
  // length >= 2 rotates too, a single trailing token stays put. For k = 2
  // this is the pairwise swap.
  for (int b = 0; b < n; b += k) {
    const int e = std::min(n, b + k);
    std::rotate(p.begin() + b, p.begin() + b + 1, p.begin() + e);
  }
  return p;
}

std::vector<int> Reorder::Apply(std::span<const int> tokens) const {
  const std::vector<int> p = Permutation(static_cast<int>(tokens.size()));
  std::vector<int> out(tokens.size());
  for (std::size_t i = 0; i < p.size(); ++i) out[i] = tokens[p[i]];
  return out;
}

std::vector<int> Reorder::Invert(std::span<const int> tokens) const {
  const std::vector<int> p = Permutation(static_cast<int>(tokens.size()));
  std::vector<int> out(tokens.size());
  for (std::size_t i = 0; i < p.size(); ++i) out[p[i]] = tokens[i];
  return out;
}

void SynthConfig::Validate() const {
  if (src_vocab < 4 || tgt_vocab < 4)
    throw ConfigError("vocabulary sizes must be >= 4");
  if (min_frames_per_token < 1 || max_frames_per_token < min_frames_per_token)
    throw ConfigError("frames_per_token range is empty");
  if (feature_dim < 1) throw ConfigError("feature_dim must be positive");
  if (!(noise_std >= 0.0)) throw ConfigError("noise_std must be >= 0");
  if (min_tokens < 1 || max_tokens < min_tokens)
    throw ConfigError("utterance length range is empty");
  if (reorder.mode == ReorderMode::kRotateSpan && reorder.span < 1)
    throw ConfigError("rotate_span needs k >= 1");
}

SynthTask::SynthTask(const SynthConfig &cfg) : cfg_(cfg) {
  cfg_.Validate();
  std::mt19937_64 rng(cfg.task_seed);
  // Token map: injective when the target vocabulary allows it.
  std::vector<int> perm(cfg.tgt_vocab);
  std::iota(perm.begin(), perm.end(), 1);
  std::shuffle(perm.begin(), perm.end(), rng);
  map_.assign(cfg.src_vocab + 1, 0);
  for (int s = 1; s <= cfg.src_vocab; ++s)
    map_[s] = perm[(s - 1) % cfg.tgt_vocab];
  std::normal_distribution<double> gauss(0.0, 1.0);
  embed_.resize(static_cast<std::size_t>(cfg.src_vocab + 1) * cfg.feature_dim);
  // float-representable so frames survive 32-bit storage unchanged
  for (double &v : embed_) v = static_cast<float>(gauss(rng));
}

std::span<const double> SynthTask::Embedding(int s) const {
  return std::span<const double>(embed_).subspan(
      static_cast<std::size_t>(s) * cfg_.feature_dim, cfg_.feature_dim);
}

std::vector<int> SynthTask::Target(std::span<const int> src) const {
  std::vector<int> mapped(src.size());
  for (std::size_t i = 0; i < src.size(); ++i) mapped[i] = Map(src[i]);
  return cfg_.reorder.Apply(mapped);
}

SynthExample SynthTask::Generate(std::mt19937_64 &rng) const {
  const int F = cfg_.feature_dim;
  SynthExample ex;
  const int n = std::uniform_int_distribution<int>(cfg_.min_tokens,
                                                   cfg_.max_tokens)(rng);
  std::uniform_int_distribution<int> tok(1, cfg_.src_vocab);
  std::uniform_int_distribution<int> dur(cfg_.min_frames_per_token,
                                         cfg_.max_frames_per_token);
  std::normal_distribution<double> noise(0.0, 1.0);
  std::vector<double> frames;
  for (int i = 0; i < n; ++i) {
    int s = tok(rng);
    while (i > 0 && s == ex.src.back()) s = tok(rng);
    ex.src.push_back(s);
    const int r = dur(rng);
    ex.durations.push_back(r);
    std::span<const double> e = Embedding(s);
    for (int k = 0; k < r; ++k)
      for (int j = 0; j < F; ++j)
        frames.push_back(e[j] + cfg_.noise_std * noise(rng));
  }
  ex.tgt = Target(ex.src);
  const int T = static_cast<int>(frames.size()) / F;
  ex.frames = Tensor::FromVector({T, F}, std::move(frames));
  return ex;
}

void SynthTask::Validate(const SynthExample &ex) const {
  auto fail = [&](const std::string &what) {
    throw ContractError("example " + ex.id + ": " + what);
  };
  if (ex.frames.rank() != 2 || ex.frames.dim(1) != cfg_.feature_dim)
    fail("bad feature shape " + ShapeString(ex.frames.shape()));
  const int n = static_cast<int>(ex.src.size());
  if (n < cfg_.min_tokens || n > cfg_.max_tokens) fail("length out of range");
  for (int i = 0; i < n; ++i) {
    if (ex.src[i] < 1 || ex.src[i] > cfg_.src_vocab) fail("token out of range");
    if (i > 0 && ex.src[i] == ex.src[i - 1]) fail("repeated source token");
  }
  if (ex.tgt != Target(ex.src)) fail("target is not reorder(map(src))");
  if (ex.durations.empty()) return;
  if (static_cast<int>(ex.durations.size()) != n) fail("duration count");
  int total = 0;
  for (int r : ex.durations) {
    if (r < cfg_.min_frames_per_token || r > cfg_.max_frames_per_token)
      fail("duration out of range");
    total += r;
  }
  if (total != ex.frames.dim(0)) fail("T != sum of durations");
}

std::vector<SynthExample> GenerateDataset(const SynthConfig &cfg, int n,
                                          std::uint64_t seed) {
  if (n < 1) throw ContractError("dataset size must be >= 1");
  SynthTask task(cfg);
  std::mt19937_64 rng(seed);
  std::vector<SynthExample> out;
  out.reserve(n);
  for (int i = 0; i < n; ++i) {
    SynthExample ex = task.Generate(rng);
    char id[32];
    std::snprintf(id, sizeof(id), "utt%06d", i);
    ex.id = id;
    out.push_back(std::move(ex));
  }
  return out;
}

namespace {

std::string JoinTokens(const std::vector<int> &v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i)
    s += (i ? " " : "") + std::to_string(v[i]);
  return s;
}

std::vector<int> SplitTokens(const std::string &s) {
  std::istringstream is(s);
  std::vector<int> v;
  int x;
  while (is >> x) v.push_back(x);
  return v;
}

std::vector<std::string> SplitTabs(const std::string &line) {
  std::vector<std::string> f;
  std::size_t b = 0;
  for (;;) {
    const std::size_t e = line.find('\t', b);
    f.push_back(line.substr(b, e - b));
    if (e == std::string::npos) return f;
    b = e + 1;
  }
}

}  // namespace

void WriteDataset(const std::string &dir,
                  const std::vector<SynthExample> &examples) {
  std::filesystem::create_directories(dir);
  const std::filesystem::path p(dir);
  std::ofstream man(p / "manifest.tsv"), idx(p / "features.idx");
  std::ofstream bin(p / "features.bin", std::ios::binary);
  if (!man || !idx || !bin) throw IoError("cannot write dataset in " + dir);
  std::uint64_t offset = 0;
  for (const SynthExample &ex : examples) {
    const int T = ex.frames.dim(0);
    man << ex.id << '\t' << T << '\t' << JoinTokens(ex.src) << '\t'
        << JoinTokens(ex.tgt) << '\n';
    idx << ex.id << '\t' << offset << '\t' << T << '\n';
    for (double v : ex.frames.data()) {
      const float f = static_cast<float>(v);
      std::uint32_t u;
      std::memcpy(&u, &f, 4);
      const unsigned char b[4] = {
          static_cast<unsigned char>(u), static_cast<unsigned char>(u >> 8),
          static_cast<unsigned char>(u >> 16),
          static_cast<unsigned char>(u >> 24)};
      bin.write(reinterpret_cast<const char *>(b), 4);
    }
    offset += static_cast<std::uint64_t>(ex.frames.numel()) * 4;
  }
  if (!man || !idx || !bin) throw IoError("write failed in " + dir);
}

std::vector<SynthExample> ReadDataset(const std::string &dir) {
  const std::filesystem::path p(dir);
  std::ifstream man(p / "manifest.tsv"), idx(p / "features.idx");
  std::ifstream bin(p / "features.bin", std::ios::binary);
  if (!man || !idx || !bin) throw IoError("cannot read dataset in " + dir);

  std::map<std::string, std::pair<std::uint64_t, int>> index;
  std::string line;
  while (std::getline(idx, line)) {
    if (line.empty()) continue;
    const auto f = SplitTabs(line);
    if (f.size() != 3) throw IoError("malformed index line: " + line);
    index[f[0]] = {std::stoull(f[1]), std::stoi(f[2])};
  }
  std::vector<SynthExample> out;
  std::vector<std::uint64_t> offsets;
  std::uint64_t total_frames = 0;
  int lineno = 0;
  while (std::getline(man, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto f = SplitTabs(line);
    if (f.size() != 4)
      throw IoError("manifest line " + std::to_string(lineno) +
                    ": expected 4 fields");
    SynthExample ex;
    ex.id = f[0];
    const int T = std::stoi(f[1]);
    ex.src = SplitTokens(f[2]);
    ex.tgt = SplitTokens(f[3]);
    auto it = index.find(ex.id);
    if (it == index.end()) throw IoError("no features for " + ex.id);
    if (it->second.second != T || T <= 0)
      throw IoError("frame count mismatch for " + ex.id);
    offsets.push_back(it->second.first);
    total_frames += T;
    // Frames are filled in below once the feature dim is known.
    ex.durations.assign(1, T);
    out.push_back(std::move(ex));
  }
  if (out.empty()) throw IoError("empty manifest in " + dir);

  // The index carries (offset, T) only; the feature dim follows from the
  // size of the binary file.
  bin.seekg(0, std::ios::end);
  const std::uint64_t bytes = static_cast<std::uint64_t>(bin.tellg());
  if (bytes % (4 * total_frames) != 0)
    throw IoError("features.bin size does not match the manifest");
  const int F = static_cast<int>(bytes / (4 * total_frames));
  for (std::size_t i = 0; i < out.size(); ++i) {
    const int T = out[i].durations[0];
    out[i].durations.clear();
    if (offsets[i] + 4ull * T * F > bytes)
      throw IoError("features for " + out[i].id + " run past end of file");
    std::vector<unsigned char> raw(4ull * T * F);
    bin.seekg(static_cast<std::streamoff>(offsets[i]));
    bin.read(reinterpret_cast<char *>(raw.data()),
             static_cast<std::streamsize>(raw.size()));
    if (!bin) throw IoError("short read for " + out[i].id);
    std::vector<double> v(static_cast<std::size_t>(T) * F);
    for (std::size_t k = 0; k < v.size(); ++k) {
      const unsigned char *b = raw.data() + 4 * k;
      const std::uint32_t u = b[0] | (b[1] << 8) | (b[2] << 16) |
                              (static_cast<std::uint32_t>(b[3]) << 24);
      float fv;
      std::memcpy(&fv, &u, 4);
      v[k] = fv;
    }
    out[i].frames = Tensor::FromVector({T, F}, std::move(v));
  }
  return out;
}

}  // namespace xducer
