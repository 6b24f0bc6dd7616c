// xducer/augment.cc

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

#include "xducer/augment.h"

#include <algorithm>
#include <cmath>
#include <random>
#include <string>

#include "xducer/error.h"

namespace xducer {

namespace {
constexpr std::uint64_t kSecondViewSalt = 0x9e3779b97f4a7c15ull;
}

void AugmentConfig::Validate() const {
  if (freq_mask_regions < 0 || time_mask_regions < 0)
    throw ConfigError("mask region counts must be >= 0");
  if (freq_mask_max_width < 0)
    throw ConfigError("freq_mask_max_width must be >= 0");
  if (!(time_mask_max_fraction >= 0.0 && time_mask_max_fraction <= 1.0))
    throw ConfigError("time_mask_max_fraction must be in [0, 1]");
  if (!(cr_scale >= 1.0)) throw ConfigError("cr_scale must be >= 1");
}

AugmentConfig AugmentConfig::ForCrViews() const {
  AugmentConfig c = *this;
  c.time_mask_regions =
      static_cast<int>(std::lround(time_mask_regions * cr_scale));
  c.time_mask_max_fraction = std::min(1.0, time_mask_max_fraction * cr_scale);
  return c;
}

MaskDraw DrawMasks(int frames, int feature_dim, const AugmentConfig &cfg,
                   std::uint64_t seed) {
  cfg.Validate();
  std::mt19937_64 rng(seed);
  auto draw = [&rng](int extent, int max_width) {
    const int w = std::uniform_int_distribution<int>(0, max_width)(rng);
    const int b = std::uniform_int_distribution<int>(0, extent - w)(rng);
    return std::make_pair(b, b + w);
  };
  MaskDraw m;
  const int fw = std::min(cfg.freq_mask_max_width, feature_dim);
  for (int i = 0; i < cfg.freq_mask_regions; ++i)
    m.freq.push_back(draw(feature_dim, fw));
  const int tw = static_cast<int>(std::floor(cfg.time_mask_max_fraction * frames));
  for (int i = 0; i < cfg.time_mask_regions; ++i)
    m.time.push_back(draw(frames, tw));
  return m;
}

Tensor ApplyMasks(const Tensor &features, const MaskDraw &masks) {
  if (features.rank() != 2)
    throw DimensionError("spec_augment expects (T, F), got " +
                         ShapeString(features.shape()));
  const int T = features.dim(0), F = features.dim(1);
  std::vector<double> v(features.data().begin(), features.data().end());
  for (auto [b, e] : masks.freq)
    for (int t = 0; t < T; ++t)
      for (int f = b; f < e; ++f) v[static_cast<std::size_t>(t) * F + f] = 0.0;
  for (auto [b, e] : masks.time)
    std::fill(v.begin() + static_cast<std::ptrdiff_t>(b) * F,
              v.begin() + static_cast<std::ptrdiff_t>(e) * F, 0.0);
  return Tensor::FromVector({T, F}, std::move(v));
}

Tensor SpecAugment(const Tensor &features, const AugmentConfig &cfg,
                   std::uint64_t seed) {
  if (features.rank() != 2)
    throw DimensionError("spec_augment expects (T, F), got " +
                         ShapeString(features.shape()));
  return ApplyMasks(features,
                    DrawMasks(features.dim(0), features.dim(1), cfg, seed));
}

std::pair<Tensor, Tensor> TwoViews(const Tensor &features,
                                   const AugmentConfig &cfg,
                                   std::uint64_t seed) {
  const AugmentConfig cr = cfg.ForCrViews();
  return {SpecAugment(features, cr, seed),
          SpecAugment(features, cr, seed ^ kSecondViewSalt)};
}

}  // namespace xducer
