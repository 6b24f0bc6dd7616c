// xducer/config.cc

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

#include "xducer/config.h"

#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>

#include "xducer/error.h"

namespace xducer {

namespace {

std::string Trim(const std::string &s) {
  const std::size_t b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const std::size_t e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <typename T>
T ParseNumber(const std::string &v) {
  T out{};
  const char *end = v.data() + v.size();
  auto [p, ec] = std::from_chars(v.data(), end, out);
  if (ec != std::errc() || p != end) throw ConfigError("'" + v + "' is not a number");
  return out;
}

bool ParseBool(const std::string &v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError("'" + v + "' is not a boolean");
}

std::vector<std::string> SplitList(const std::string &v) {
  std::vector<std::string> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(Trim(item));
  if (out.empty()) throw ConfigError("empty list");
  return out;
}

template <typename T>
std::string Join(const std::vector<T> &v) {
  std::ostringstream os;
  for (std::size_t i = 0; i < v.size(); ++i) os << (i ? "," : "") << v[i];
  return os.str();
}

void CheckArch(const std::string &a) {
  if (a != "shared" && a != "hier1" && a != "hier2" && a != "hier2+cr")
    throw ConfigError("expected shared, hier1, hier2 or hier2+cr, got '" + a +
                      "'");
}

// Shortest form that parses back to the same double.
std::string Num(double v) {
  char buf[32];
  auto [p, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, p);
}

// Phase 0 picks the preset, phase 1 sets dims and everything else, phase 2
// overrides the preset's stack layout.
struct Key {
  const char *name;
  int phase;
  std::function<void(ExperimentConfig &, const std::string &)> set;
  std::function<std::string(const ExperimentConfig &)> get;
};

#define XD_INT(key, phase, field)                                            \
  Key{key, phase,                                                            \
      [](ExperimentConfig &c, const std::string &v) {                        \
        c.field = ParseNumber<int>(v);                                       \
      },                                                                     \
      [](const ExperimentConfig &c) { return std::to_string(c.field); }}
#define XD_U64(key, phase, field)                                            \
  Key{key, phase,                                                            \
      [](ExperimentConfig &c, const std::string &v) {                        \
        c.field = ParseNumber<std::uint64_t>(v);                             \
      },                                                                     \
      [](const ExperimentConfig &c) { return std::to_string(c.field); }}
#define XD_DBL(key, phase, field)                                            \
  Key{key, phase,                                                            \
      [](ExperimentConfig &c, const std::string &v) {                        \
        c.field = ParseNumber<double>(v);                                    \
      },                                                                     \
      [](const ExperimentConfig &c) { return Num(c.field); }}
#define XD_BOOL(key, phase, field)                                           \
  Key{key, phase,                                                            \
      [](ExperimentConfig &c, const std::string &v) {                        \
        c.field = ParseBool(v);                                              \
      },                                                                     \
      [](const ExperimentConfig &c) {                                        \
        return std::string(c.field ? "true" : "false");                      \
      }}

const std::vector<Key> &Keys() {
  static const std::vector<Key> keys = {
      {"arch", 0,
       [](ExperimentConfig &c, const std::string &v) {
         CheckArch(v);
         c.arch = v;
       },
       [](const ExperimentConfig &c) { return c.arch; }},
      XD_U64("seed", 1, seed),
      XD_U64("model_seed", 1, model_seed),
      {"precision", 1,
       [](ExperimentConfig &c, const std::string &v) {
         if (v == "32") c.precision = Precision::k32;
         else if (v == "64") c.precision = Precision::k64;
         else throw ConfigError("expected 32 or 64");
       },
       [](const ExperimentConfig &c) {
         return std::string(c.precision == Precision::k32 ? "32" : "64");
       }},
      {"task", 1,
       [](ExperimentConfig &c, const std::string &v) {
         if (v == "asr") c.task = Task::kAsr;
         else if (v == "st") c.task = Task::kSt;
         else throw ConfigError("expected asr or st");
       },
       [](const ExperimentConfig &c) { return std::string(TaskName(c.task)); }},
      XD_INT("num_utts", 1, num_utts),
      {"feature_dim", 1,
       [](ExperimentConfig &c, const std::string &v) {
         c.synth.feature_dim = c.model.feature_dim = ParseNumber<int>(v);
       },
       [](const ExperimentConfig &c) { return std::to_string(c.model.feature_dim); }},
      {"src_vocab", 1,
       [](ExperimentConfig &c, const std::string &v) {
         c.synth.src_vocab = c.model.src_vocab = ParseNumber<int>(v);
       },
       [](const ExperimentConfig &c) { return std::to_string(c.model.src_vocab); }},
      {"tgt_vocab", 1,
       [](ExperimentConfig &c, const std::string &v) {
         c.synth.tgt_vocab = c.model.tgt_vocab = ParseNumber<int>(v);
       },
       [](const ExperimentConfig &c) { return std::to_string(c.model.tgt_vocab); }},
      XD_INT("model_dim", 1, model.model_dim),
      XD_INT("ffn_mult", 1, model.ffn_mult),
      XD_INT("conv_kernel", 1, model.conv_kernel),
      XD_INT("predictor_context", 1, model.predictor_context),
      XD_INT("joiner_dim", 1, model.joiner_dim),
      XD_BOOL("causal_conv", 1, model.causal_conv),
      XD_INT("asr_blocks", 2, model.asr_blocks),
      XD_INT("st_blocks", 2, model.st_blocks),
      XD_INT("st_dim", 2, model.st_dim),
      XD_INT("frames_per_token_min", 1, synth.min_frames_per_token),
      XD_INT("frames_per_token_max", 1, synth.max_frames_per_token),
      XD_DBL("noise_std", 1, synth.noise_std),
      {"reorder_mode", 1,
       [](ExperimentConfig &c, const std::string &v) {
         c.synth.reorder = Reorder::Parse(v);
       },
       [](const ExperimentConfig &c) { return c.synth.reorder.ToString(); }},
      XD_INT("min_tokens", 1, synth.min_tokens),
      XD_INT("max_tokens", 1, synth.max_tokens),
      XD_U64("task_seed", 1, synth.task_seed),
      {"stage", 1,
       [](ExperimentConfig &c, const std::string &v) {
         c.train.stage = ParseStage(v);
       },
       [](const ExperimentConfig &c) { return std::string(StageName(c.train.stage)); }},
      XD_INT("steps", 1, train.steps),
      XD_DBL("lr", 1, train.lr),
      XD_DBL("lr_final_scale", 1, train.lr_final_scale),
      XD_INT("warmup_steps", 1, train.warmup_steps),
      XD_INT("prune_range", 1, train.prune_range),
      XD_INT("batch_size", 1, train.batch_size),
      XD_BOOL("cr_enabled", 1, train.cr_enabled),
      XD_BOOL("spec_augment", 1, train.spec_augment),
      XD_DBL("clip_norm", 1, train.clip_norm),
      XD_INT("train_chunk_size", 1, train.train_mask.chunk_size),
      XD_INT("train_left_context", 1, train.train_mask.left_context),
      XD_DBL("alpha_asr", 1, train.weights.asr),
      XD_DBL("alpha_st", 1, train.weights.st),
      XD_DBL("alpha_cr_asr", 1, train.weights.cr_asr),
      XD_DBL("alpha_cr_st", 1, train.weights.cr_st),
      XD_DBL("alpha_ctc_asr", 1, train.weights.ctc_asr),
      XD_DBL("alpha_ctc_st", 1, train.weights.ctc_st),
      XD_INT("freq_mask_regions", 1, train.augment.freq_mask_regions),
      XD_INT("freq_mask_max_width", 1, train.augment.freq_mask_max_width),
      XD_INT("time_mask_regions", 1, train.augment.time_mask_regions),
      XD_DBL("time_mask_max_fraction", 1, train.augment.time_mask_max_fraction),
      XD_DBL("cr_scale", 1, train.augment.cr_scale),
      XD_INT("beam", 1, decode.beam),
      XD_DBL("blank_penalty", 1, decode.blank_penalty),
      {"max_sym_per_frame", 1,
       [](ExperimentConfig &c, const std::string &v) {
         c.decode.max_sym_per_frame = c.chunk.max_sym_per_frame =
             ParseNumber<int>(v);
       },
       [](const ExperimentConfig &c) {
         return std::to_string(c.decode.max_sym_per_frame);
       }},
      XD_BOOL("streaming", 1, streaming),
      XD_INT("chunk_size", 1, chunk.chunk_size),
      XD_INT("left_context", 1, chunk.left_context),
      {"ablate_archs", 1,
       [](ExperimentConfig &c, const std::string &v) {
         c.ablate.archs = SplitList(v);
         for (const std::string &a : c.ablate.archs) CheckArch(a);
       },
       [](const ExperimentConfig &c) { return Join(c.ablate.archs); }},
      {"ablate_prune_ranges", 1,
       [](ExperimentConfig &c, const std::string &v) {
         c.ablate.prune_ranges.clear();
         for (const std::string &x : SplitList(v))
           c.ablate.prune_ranges.push_back(ParseNumber<int>(x));
       },
       [](const ExperimentConfig &c) { return Join(c.ablate.prune_ranges); }},
      {"ablate_warmups", 1,
       [](ExperimentConfig &c, const std::string &v) {
         c.ablate.warmups.clear();
         for (const std::string &x : SplitList(v))
           c.ablate.warmups.push_back(ParseNumber<int>(x));
       },
       [](const ExperimentConfig &c) { return Join(c.ablate.warmups); }},
      {"ablate_bps", 1,
       [](ExperimentConfig &c, const std::string &v) {
         c.ablate.bps.clear();
         for (const std::string &x : SplitList(v))
           c.ablate.bps.push_back(ParseNumber<double>(x));
       },
       [](const ExperimentConfig &c) {
         std::vector<std::string> s;
         for (double b : c.ablate.bps) s.push_back(Num(b));
         return Join(s);
       }},
      XD_INT("ablate_pretrain_steps", 1, ablate.pretrain_steps),
      XD_INT("ablate_joint_steps", 1, ablate.joint_steps),
  };
  return keys;
}

#undef XD_INT
#undef XD_U64
#undef XD_DBL
#undef XD_BOOL

}  // namespace

ExperimentConfig ExperimentConfig::Parse(const std::string &text) {
  std::map<std::string, const Key *> by_name;
  for (const Key &k : Keys()) by_name[k.name] = &k;

  std::vector<std::pair<const Key *, std::string>> entries;
  std::set<std::string> seen;
  std::istringstream is(text);
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const std::size_t hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = Trim(line);
    if (line.empty()) continue;
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("line " + std::to_string(lineno) +
                        ": expected 'key = value'");
    const std::string key = Trim(line.substr(0, eq));
    const std::string value = Trim(line.substr(eq + 1));
    auto it = by_name.find(key);
    if (it == by_name.end())
      throw ConfigError("line " + std::to_string(lineno) + ": unknown key '" +
                        key + "'");
    if (!seen.insert(key).second)
      throw ConfigError("line " + std::to_string(lineno) + ": key '" + key +
                        "' given twice");
    entries.emplace_back(it->second, value);
  }

  ExperimentConfig c;
  for (int phase = 0; phase <= 2; ++phase) {
    if (phase == 2) c.model = ModelConfig::Preset(c.arch, c.model);
    for (const auto &[key, value] : entries) {
      if (key->phase != phase) continue;
      try {
        key->set(c, value);
      } catch (const ConfigError &e) {
        throw ConfigError("key '" + std::string(key->name) + "': " +
                          std::string(e.what()).substr(e.kind().size() + 2));
      }
    }
  }
  c.train.seed = c.seed;
  c.Validate();
  return c;
}

ExperimentConfig ExperimentConfig::Load(const std::string &path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot read config " + path);
  std::stringstream ss;
  ss << is.rdbuf();
  return Parse(ss.str());
}

std::string ExperimentConfig::Serialize() const {
  std::ostringstream os;
  for (const Key &k : Keys()) os << k.name << " = " << k.get(*this) << '\n';
  return os.str();
}

void ExperimentConfig::Validate() const {
  model.Validate();
  synth.Validate();
  train.Validate();
  decode.Validate();
  chunk.Validate();
  if (num_utts < 1) throw ConfigError("num_utts must be >= 1");
  if (model.feature_dim != synth.feature_dim ||
      model.src_vocab != synth.src_vocab || model.tgt_vocab != synth.tgt_vocab)
    throw ConfigError("model and synth dims disagree");
  if (train.train_mask.chunk_size < 0 || train.train_mask.left_context < 0)
    throw ConfigError("train_chunk_size and train_left_context must be >= 0");
  for (int s : ablate.prune_ranges)
    if (s < 2) throw ConfigError("ablate_prune_ranges entries must be >= 2");
  for (int w : ablate.warmups)
    if (w < 0) throw ConfigError("ablate_warmups entries must be >= 0");
  if (ablate.pretrain_steps < 0 || ablate.joint_steps < 0)
    throw ConfigError("ablate step counts must be >= 0");
}

ModelConfig ExperimentConfig::ModelFor(const std::string &name) const {
  return ModelConfig::Preset(name, model);
}

}  // namespace xducer
