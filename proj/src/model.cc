// xducer/model.cc

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

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <set>

#include "xducer/error.h"

namespace xducer {

const char *TaskName(Task task) { return task == Task::kAsr ? "asr" : "st"; }

ModelConfig ModelConfig::Preset(const std::string &arch) {
  return Preset(arch, ModelConfig());
}

ModelConfig ModelConfig::Preset(const std::string &arch,
                                const ModelConfig &base) {
  ModelConfig c = base;
  c.st_dim = base.model_dim;
  if (arch == "shared") {
    c.asr_blocks = 5;
    c.st_blocks = 0;
  } else if (arch == "hier1") {
    c.asr_blocks = 3;
    c.st_blocks = 2;
  } else if (arch == "hier2" || arch == "hier2+cr") {
    const double target = HierarchicalModel(Preset("hier1", base), 0)
                              .ParameterCount();
    c.asr_blocks = 3;
    c.st_blocks = 4;
    double best = -1.0;
    for (int e = std::max(1, base.model_dim / 4); e <= base.model_dim; ++e) {
      ModelConfig t = c;
      t.st_dim = e;
      const double diff =
          std::abs(HierarchicalModel(t, 0).ParameterCount() - target);
      if (best < 0.0 || diff < best) {
        best = diff;
        c.st_dim = e;
      }
    }
  } else {
    throw ConfigError("arch: expected shared, hier1, hier2 or hier2+cr, got '" +
                      arch + "'");
  }
  return c;
}

void ModelConfig::Validate() const {
  auto positive = [](int v, const char *name) {
    if (v <= 0) throw ConfigError(std::string(name) + " must be positive");
  };
  positive(feature_dim, "feature_dim");
  positive(src_vocab, "src_vocab");
  positive(tgt_vocab, "tgt_vocab");
  positive(model_dim, "model_dim");
  positive(asr_blocks, "asr_blocks");
  positive(st_dim, "st_dim");
  positive(ffn_mult, "ffn_mult");
  positive(conv_kernel, "conv_kernel");
  positive(predictor_context, "predictor_context");
  positive(joiner_dim, "joiner_dim");
  if (st_blocks < 0) throw ConfigError("st_blocks must be >= 0");
}

Tensor ChunkAttentionMask(int frames, const ChunkMaskSpec &spec) {
  if (!spec.enabled()) return Tensor();
  if (spec.left_context < 0)
    throw ContractError("left_context must be >= 0");
  std::vector<double> m(static_cast<std::size_t>(frames) * frames, kLogZero);
  for (int i = 0; i < frames; ++i) {
    const int begin = i / spec.chunk_size * spec.chunk_size;
    const int end = std::min(frames, begin + spec.chunk_size);
    for (int j = std::max(0, begin - spec.left_context); j < end; ++j)
      m[static_cast<std::size_t>(i) * frames + j] = 0.0;
  }
  return Tensor::FromVector({frames, frames}, std::move(m));
}

// ---------------------------------------------------------------------------

Tensor EncoderBlock::Forward(const Tensor &x, const Tensor &mask) const {
  Tensor h = LayerNorm(x, ln1_g, ln1_b);
  Tensor x1 = Add(x, o(MaskedAttention(q(h), k(h), v(h), mask)));
  Tensor x2 = Add(x1, Relu(Conv1d(x1, conv_w, conv_b, causal)));
  return Add(x2, ff2(Relu(ff1(LayerNorm(x2, ln2_g, ln2_b)))));
}

Tensor EncoderBlock::ForwardChunk(const Tensor &x, int left,
                                  Cache *cache) const {
  if (!causal)
    throw ContractError("chunked encoding requires causal convolutions");
  const int n = x.dim(0);
  Tensor h = LayerNorm(x, ln1_g, ln1_b);
  Tensor kc = k(h), vc = v(h);
  Tensor keys = kc, values = vc;
  if (cache->k.defined()) {
    Tensor kp[] = {cache->k, kc}, vp[] = {cache->v, vc};
    keys = ConcatRows(kp);
    values = ConcatRows(vp);
  }
  Tensor x1 = Add(x, o(MaskedAttention(q(h), keys, values, Tensor())));
  const int total = keys.dim(0);
  const int keep = std::min(left, total);
  if (keep > 0) {
    cache->k = SliceRows(keys, total - keep, total);
    cache->v = SliceRows(values, total - keep, total);
  } else {
    cache->k = cache->v = Tensor();
  }

  Tensor conv_in = x1;
  int hist = 0;
  if (cache->conv_in.defined()) {
    hist = cache->conv_in.dim(0);
    Tensor parts[] = {cache->conv_in, x1};
    conv_in = ConcatRows(parts);
  }
  Tensor conv = SliceRows(Conv1d(conv_in, conv_w, conv_b, true), hist,
                          hist + n);
  const int window = conv_w.dim(0) - 1;
  const int rows = conv_in.dim(0);
  cache->conv_in = window > 0 ? SliceRows(conv_in, std::max(0, rows - window),
                                          rows)
                              : Tensor();

  Tensor x2 = Add(x1, Relu(conv));
  return Add(x2, ff2(Relu(ff1(LayerNorm(x2, ln2_g, ln2_b)))));
}

// ---------------------------------------------------------------------------

namespace {

void CheckTokens(std::span<const int> tokens, int vocab) {
  for (int y : tokens) {
    if (y == kBlank)
      throw ContractError("blank token fed to the predictor");
    if (y < 0 || y >= vocab)
      throw VocabError("token " + std::to_string(y) + " outside 1.." +
                       std::to_string(vocab - 1));
  }
}

}  // namespace

Tensor Predictor::Forward(std::span<const int> tokens) const {
  CheckTokens(tokens, embed.dim(0));
  std::vector<int> seq(tokens.size() + 1, kBlank);
  std::copy(tokens.begin(), tokens.end(), seq.begin() + 1);
  Tensor e = EmbeddingLookup(embed, seq);
  return proj(Relu(Conv1d(e, conv_w, conv_b, true)));
}

Tensor Predictor::Step(std::span<const int> history) const {
  CheckTokens(history, embed.dim(0));
  const std::size_t n = history.size() + 1;
  const std::size_t w = std::min<std::size_t>(n, conv_w.dim(0));
  std::vector<int> seq(w);
  for (std::size_t i = 0; i < w; ++i) {
    const std::size_t pos = n - w + i;  // index into [BOS, history...]
    seq[i] = pos == 0 ? kBlank : history[pos - 1];
  }
  Tensor e = EmbeddingLookup(embed, seq);
  Tensor c = Conv1d(e, conv_w, conv_b, true);
  return proj(Relu(SliceRows(c, static_cast<int>(w) - 1, static_cast<int>(w))));
}

Tensor Joiner::PairLogits(const Tensor &f, const Tensor &g,
                          std::span<const std::pair<int, int>> pairs) const {
  if (f.rank() != 2 || g.rank() != 2 || f.dim(1) != w_f.dim(0) ||
      g.dim(1) != w_g.dim(0)) {
    throw DimensionError("joiner: f " + ShapeString(f.shape()) + ", g " +
                         ShapeString(g.shape()) + ", W_f " +
                         ShapeString(w_f.shape()) + ", W_g " +
                         ShapeString(w_g.shape()));
  }
  Tensor h = PairAdd(MatMul(f, w_f), MatMul(g, w_g), pairs);
  return out(Tanh(AddBias(h, bias)));
}

Tensor Joiner::Forward(const Tensor &f_row, const Tensor &g_row) const {
  const std::pair<int, int> pair{0, 0};
  return PairLogits(f_row, g_row, std::span(&pair, 1));
}

LogitLattice Joiner::Lattice(const Tensor &f, const Tensor &g) const {
  const int T = f.dim(0), U1 = g.dim(0);
  std::vector<std::pair<int, int>> pairs;
  pairs.reserve(static_cast<std::size_t>(T) * U1);
  for (int t = 0; t < T; ++t)
    for (int u = 0; u < U1; ++u) pairs.emplace_back(t, u);
  Tensor z = PairLogits(f, g, pairs);
  return LogitLattice(Reshape(z, {T, U1, z.dim(1)}));
}

PairJoiner Joiner::AsPairJoiner() const {
  return [this](const Tensor &f, const Tensor &g,
                std::span<const std::pair<int, int>> pairs) {
    return PairLogits(f, g, pairs);
  };
}

// ---------------------------------------------------------------------------

HierarchicalModel::HierarchicalModel(const ModelConfig &config,
                                     std::uint64_t seed)
    : config_(config) {
  config_.Validate();
  Initialize(seed, false);
}

bool HierarchicalModel::IsStParameter(const std::string &name) {
  return name.rfind("enc_st.", 0) == 0 || name.rfind("st.", 0) == 0;
}

namespace {

class Initializer {
 public:
  explicit Initializer(std::uint64_t seed) : rng_(seed) {}

  Tensor Uniform(Shape shape, int fan_in) {
    const double r = 1.0 / std::sqrt(static_cast<double>(fan_in));
    std::uniform_real_distribution<double> dist(-r, r);
    std::vector<double> v(ShapeNumel(shape));
    for (double &x : v) x = RoundToPrecision(dist(rng_));
    return Leaf(std::move(shape), std::move(v));
  }
  Tensor Constant(Shape shape, double value) {
    return Leaf(shape, std::vector<double>(ShapeNumel(shape), value));
  }
  Linear2 Dense(int in, int out) {
    return {Uniform({in, out}, in), Constant({out}, 0.0)};
  }

 private:
  static Tensor Leaf(Shape shape, std::vector<double> v) {
    Tensor t = Tensor::FromVector(std::move(shape), std::move(v));
    t.set_requires_grad(true);
    return t;
  }
  std::mt19937_64 rng_;
};

EncoderBlock MakeBlock(Initializer &init, int d, int mult, int kernel,
                       bool causal) {
  EncoderBlock b;
  b.ln1_g = init.Constant({d}, 1.0);
  b.ln1_b = init.Constant({d}, 0.0);
  b.q = init.Dense(d, d);
  b.k = init.Dense(d, d);
  b.v = init.Dense(d, d);
  b.o = init.Dense(d, d);
  b.conv_w = init.Uniform({kernel, d, d}, kernel * d);
  b.conv_b = init.Constant({d}, 0.0);
  b.ln2_g = init.Constant({d}, 1.0);
  b.ln2_b = init.Constant({d}, 0.0);
  b.ff1 = init.Dense(d, mult * d);
  b.ff2 = init.Dense(mult * d, d);
  b.causal = causal;
  return b;
}

TaskHeads MakeHeads(Initializer &init, const ModelConfig &c, int enc_dim,
                    int vocab) {
  const int d = c.model_dim, j = c.joiner_dim;
  TaskHeads h;
  h.vocab = vocab;
  h.predictor.embed = init.Uniform({vocab, d}, 1);
  h.predictor.conv_w =
      init.Uniform({c.predictor_context, d, d}, c.predictor_context * d);
  h.predictor.conv_b = init.Constant({d}, 0.0);
  h.predictor.proj = init.Dense(d, d);
  h.predictor.context = c.predictor_context;
  h.joiner.w_f = init.Uniform({enc_dim, j}, enc_dim);
  h.joiner.w_g = init.Uniform({d, j}, d);
  h.joiner.bias = init.Constant({j}, 0.0);
  h.joiner.out = init.Dense(j, vocab);
  h.simple.w_f = init.Uniform({enc_dim, vocab}, enc_dim);
  h.simple.w_g = init.Uniform({d, vocab}, d);
  h.simple.bias = init.Constant({vocab}, 0.0);
  h.ctc = init.Dense(enc_dim, vocab);
  return h;
}

void AppendBlock(std::vector<std::pair<std::string, Tensor>> *out,
                 const std::string &p, const EncoderBlock &b) {
  auto add = [&](const char *n, const Tensor &t) { out->emplace_back(p + n, t); };
  add("ln1.g", b.ln1_g);
  add("ln1.b", b.ln1_b);
  add("attn.q.w", b.q.w);
  add("attn.q.b", b.q.b);
  add("attn.k.w", b.k.w);
  add("attn.k.b", b.k.b);
  add("attn.v.w", b.v.w);
  add("attn.v.b", b.v.b);
  add("attn.o.w", b.o.w);
  add("attn.o.b", b.o.b);
  add("conv.w", b.conv_w);
  add("conv.b", b.conv_b);
  add("ln2.g", b.ln2_g);
  add("ln2.b", b.ln2_b);
  add("ff1.w", b.ff1.w);
  add("ff1.b", b.ff1.b);
  add("ff2.w", b.ff2.w);
  add("ff2.b", b.ff2.b);
}

void AppendHeads(std::vector<std::pair<std::string, Tensor>> *out,
                 const std::string &p, const TaskHeads &h) {
  auto add = [&](const char *n, const Tensor &t) { out->emplace_back(p + n, t); };
  add("pred.embed", h.predictor.embed);
  add("pred.conv.w", h.predictor.conv_w);
  add("pred.conv.b", h.predictor.conv_b);
  add("pred.proj.w", h.predictor.proj.w);
  add("pred.proj.b", h.predictor.proj.b);
  add("joiner.w_f", h.joiner.w_f);
  add("joiner.w_g", h.joiner.w_g);
  add("joiner.b", h.joiner.bias);
  add("joiner.out.w", h.joiner.out.w);
  add("joiner.out.b", h.joiner.out.b);
  add("simple.w_f", h.simple.w_f);
  add("simple.w_g", h.simple.w_g);
  add("simple.b", h.simple.bias);
  add("ctc.w", h.ctc.w);
  add("ctc.b", h.ctc.b);
}

}  // namespace

void HierarchicalModel::Initialize(std::uint64_t seed, bool st_only) {
  const ModelConfig &c = config_;
  // Separate streams so re-drawing the ST side leaves the ASR side alone.
  if (!st_only) {
    Initializer init(seed);
    input_ = init.Dense(c.feature_dim, c.model_dim);
    asr_blocks_.clear();
    for (int i = 0; i < c.asr_blocks; ++i)
      asr_blocks_.push_back(MakeBlock(init, c.model_dim, c.ffn_mult,
                                      c.conv_kernel, c.causal_conv));
    asr_ = MakeHeads(init, c, c.model_dim, c.vocab(Task::kAsr));
  }
  Initializer init(seed ^ 0x5bd1e995u);
  st_in_ = Linear2();
  st_blocks_.clear();
  if (c.st_blocks > 0) {
    if (c.st_dim != c.model_dim) st_in_ = init.Dense(c.model_dim, c.st_dim);
    for (int i = 0; i < c.st_blocks; ++i)
      st_blocks_.push_back(MakeBlock(init, c.st_dim, c.ffn_mult,
                                     c.conv_kernel, c.causal_conv));
  }
  st_ = MakeHeads(init, c, c.st_out_dim(), c.vocab(Task::kSt));
}

void HierarchicalModel::ReinitializeSt(std::uint64_t seed) {
  Initialize(seed, true);
}

Tensor HierarchicalModel::EncodeAsr(const Tensor &features,
                                    const ChunkMaskSpec &mask) const {
  if (features.rank() != 2 || features.dim(1) != config_.feature_dim) {
    throw DimensionError("features " + ShapeString(features.shape()) +
                         ", expected (T, " +
                         std::to_string(config_.feature_dim) + ")");
  }
  const int T = features.dim(0);
  if (T < ModelConfig::kDownsample)
    throw ContractError("utterance has " + std::to_string(T) +
                        " frames; at least 2 are required");
  Tensor x = input_(features);
  x = asr_blocks_[0].Forward(
      x, ChunkAttentionMask(T, mask.Scaled(ModelConfig::kDownsample)));
  x = StridedMeanDownsample(x, ModelConfig::kDownsample);
  Tensor m = ChunkAttentionMask(x.dim(0), mask);
  for (std::size_t i = 1; i < asr_blocks_.size(); ++i)
    x = asr_blocks_[i].Forward(x, m);
  return x;
}

Tensor HierarchicalModel::EncodeSt(const Tensor &f_s,
                                   const ChunkMaskSpec &mask) const {
  if (f_s.rank() != 2 || f_s.dim(1) != config_.model_dim)
    throw DimensionError("ST encoder input " + ShapeString(f_s.shape()));
  if (st_blocks_.empty()) return f_s;
  Tensor x = st_in_.w.defined() ? st_in_(f_s) : f_s;
  Tensor m = ChunkAttentionMask(x.dim(0), mask);
  for (const EncoderBlock &b : st_blocks_) x = b.Forward(x, m);
  return x;
}

EncoderOutputs HierarchicalModel::Encode(const Tensor &features,
                                         const ChunkMaskSpec &mask) const {
  EncoderOutputs out;
  out.f_s = EncodeAsr(features, mask);
  out.f_t = EncodeSt(out.f_s, mask);
  return out;
}

Tensor HierarchicalModel::CtcLogProbs(Task task, const Tensor &f) const {
  return LogSoftmax(heads(task).ctc(f), -1);
}

std::vector<std::pair<std::string, Tensor>>
HierarchicalModel::NamedParameters() const {
  std::vector<std::pair<std::string, Tensor>> out;
  out.emplace_back("input.w", input_.w);
  out.emplace_back("input.b", input_.b);
  for (std::size_t i = 0; i < asr_blocks_.size(); ++i)
    AppendBlock(&out, "enc_asr." + std::to_string(i) + ".", asr_blocks_[i]);
  AppendHeads(&out, "asr.", asr_);
  if (st_in_.w.defined()) {
    out.emplace_back("enc_st.in.w", st_in_.w);
    out.emplace_back("enc_st.in.b", st_in_.b);
  }
  for (std::size_t i = 0; i < st_blocks_.size(); ++i)
    AppendBlock(&out, "enc_st." + std::to_string(i) + ".", st_blocks_[i]);
  AppendHeads(&out, "st.", st_);
  return out;
}

std::size_t HierarchicalModel::ParameterCount() const {
  std::size_t n = 0;
  for (const auto &[name, t] : NamedParameters()) n += t.numel();
  return n;
}

// ---------------------------------------------------------------------------

StreamingEncoder::StreamingEncoder(const HierarchicalModel &model,
                                   const ChunkMaskSpec &mask)
    : model_(model), mask_(mask) {
  if (!mask.enabled())
    throw ContractError("streaming needs a positive chunk size");
  asr_cache_.resize(model.asr_blocks_.size());
  st_cache_.resize(model.st_blocks_.size());
}

int StreamingEncoder::input_chunk() const {
  return mask_.chunk_size * ModelConfig::kDownsample;
}

EncoderOutputs StreamingEncoder::AcceptChunk(const Tensor &features) {
  const ModelConfig &c = model_.config_;
  if (finished_)
    throw ContractError("chunk after a short final chunk");
  if (features.rank() != 2 || features.dim(1) != c.feature_dim)
    throw DimensionError("features " + ShapeString(features.shape()));
  const int n = features.dim(0);
  if (n == 0 || n > input_chunk())
    throw ContractError("chunk of " + std::to_string(n) +
                        " frames; expected 1.." +
                        std::to_string(input_chunk()));
  if (n < input_chunk()) finished_ = true;

  const int k = ModelConfig::kDownsample;
  Tensor x = model_.input_(features);
  x = model_.asr_blocks_[0].ForwardChunk(x, mask_.left_context * k,
                                         &asr_cache_[0]);
  x = StridedMeanDownsample(x, k);
  for (std::size_t i = 1; i < model_.asr_blocks_.size(); ++i)
    x = model_.asr_blocks_[i].ForwardChunk(x, mask_.left_context,
                                           &asr_cache_[i]);
  EncoderOutputs out;
  out.f_s = x;
  if (model_.st_blocks_.empty()) {
    out.f_t = x;
    return out;
  }
  Tensor y = model_.st_in_.w.defined() ? model_.st_in_(x) : x;
  for (std::size_t i = 0; i < model_.st_blocks_.size(); ++i)
    y = model_.st_blocks_[i].ForwardChunk(y, mask_.left_context,
                                          &st_cache_[i]);
  out.f_t = y;
  return out;
}

// ---------------------------------------------------------------------------

namespace {

constexpr char kMagic[] = "HENT1";
constexpr std::size_t kMagicLen = 5;

void PutU32(std::ostream &os, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v),
                        static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v >> 16),
                        static_cast<unsigned char>(v >> 24)};
  os.write(reinterpret_cast<const char *>(b), 4);
}

bool GetU32(std::istream &is, std::uint32_t *v) {
  unsigned char b[4];
  if (!is.read(reinterpret_cast<char *>(b), 4)) return false;
  *v = b[0] | (b[1] << 8) | (b[2] << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
  return true;
}

void PutF32(std::ostream &os, float f) {
  std::uint32_t u;
  std::memcpy(&u, &f, 4);
  PutU32(os, u);
}

}  // namespace

void SaveCheckpoint(const HierarchicalModel &model, const std::string &path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot write " + path);
  os.write(kMagic, kMagicLen);
  for (const auto &[name, t] : model.NamedParameters()) {
    PutU32(os, static_cast<std::uint32_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    PutU32(os, static_cast<std::uint32_t>(t.rank()));
    for (int e : t.shape()) PutU32(os, static_cast<std::uint32_t>(e));
    for (double v : t.data()) PutF32(os, static_cast<float>(v));
  }
  if (!os) throw IoError("write failed: " + path);
}

ModelState CaptureState(const HierarchicalModel &model) {
  ModelState st;
  for (const auto &[name, t] : model.NamedParameters())
    st.arrays.push_back({name, t.shape(),
                         std::vector<double>(t.data().begin(), t.data().end())});
  return st;
}

void RestoreState(HierarchicalModel *model, const ModelState &state,
                  const LoadOptions &options, const std::string &source) {
  std::map<std::string, Tensor> params;
  for (const auto &[name, t] : model->NamedParameters()) params[name] = t;
  std::set<std::string> seen;
  std::vector<std::string> mismatched;
  for (const ModelState::Array &a : state.arrays) {
    if (options.init_st && HierarchicalModel::IsStParameter(a.name)) continue;
    auto it = params.find(a.name);
    if (it == params.end())
      throw LoadError(source + ": unknown array " + a.name);
    if (it->second.shape() != a.shape) {
      mismatched.push_back(a.name + " " + ShapeString(a.shape) + " vs " +
                           ShapeString(it->second.shape()));
      continue;
    }
    seen.insert(a.name);
  }
  std::string missing;
  for (const auto &[name, t] : params) {
    if (seen.count(name)) continue;
    if (options.init_st && HierarchicalModel::IsStParameter(name)) continue;
    missing += (missing.empty() ? "" : ", ") + name;
  }
  std::string msg;
  if (!missing.empty()) msg = "missing arrays " + missing;
  for (const std::string &m : mismatched)
    msg += (msg.empty() ? "shape mismatch " : "; shape mismatch ") + m;
  if (!msg.empty()) throw LoadError(source + ": " + msg);
  // Nothing is written until the whole state has been checked.
  for (const ModelState::Array &a : state.arrays) {
    if (!seen.count(a.name)) continue;
    std::span<double> dst = params.at(a.name).mutable_data();
    for (std::size_t i = 0; i < dst.size(); ++i)
      dst[i] = RoundToPrecision(a.values[i]);
  }
}

void LoadCheckpoint(HierarchicalModel *model, const std::string &path,
                    const LoadOptions &options) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot read " + path);
  char magic[kMagicLen];
  if (!is.read(magic, kMagicLen) || std::memcmp(magic, kMagic, kMagicLen) != 0)
    throw LoadError(path + ": bad magic, not a HENT1 checkpoint");

  ModelState state;
  while (is.peek() != std::char_traits<char>::eof()) {
    std::uint32_t len = 0, rank = 0;
    if (!GetU32(is, &len) || len > (1u << 16))
      throw LoadError(path + ": truncated record header");
    ModelState::Array a;
    a.name.assign(len, '\0');
    if (!is.read(a.name.data(), len) || !GetU32(is, &rank) || rank > 8)
      throw LoadError(path + ": truncated record header");
    a.shape.resize(rank);
    for (auto &e : a.shape) {
      std::uint32_t v;
      if (!GetU32(is, &v)) throw LoadError(path + ": truncated array " + a.name);
      e = static_cast<int>(v);
    }
    a.values.resize(ShapeNumel(a.shape));
    for (double &v : a.values) {
      std::uint32_t u;
      if (!GetU32(is, &u)) throw LoadError(path + ": truncated array " + a.name);
      float f;
      std::memcpy(&f, &u, 4);
      v = f;
    }
    state.arrays.push_back(std::move(a));
  }
  RestoreState(model, state, options, path);
}

}  // namespace xducer
