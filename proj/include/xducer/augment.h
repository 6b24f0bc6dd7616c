// xducer/augment.h

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

#ifndef XDUCER_AUGMENT_H_
#define XDUCER_AUGMENT_H_

#include <cstdint>
#include <utility>
#include <vector>

#include "xducer/tensor.h"

namespace xducer {

// Defaults are sized for 16-bin features and utterances of a few dozen
// frames; the widths are clamped to the feature dim.
struct AugmentConfig {
  int freq_mask_regions = 2;
  int freq_mask_max_width = 5;
  int time_mask_regions = 2;
  double time_mask_max_fraction = 0.05;
  double cr_scale = 2.5;

  void Validate() const;
  bool identity() const {
    return (freq_mask_regions == 0 || freq_mask_max_width == 0) &&
           (time_mask_regions == 0 || time_mask_max_fraction == 0.0);
  }
  // Config for the consistency-regularization views: time-mask regions and
  // max fraction scaled by cr_scale (regions rounded to nearest).
  AugmentConfig ForCrViews() const;
};

// Masked [begin, end) ranges; width-0 draws still count as regions.
struct MaskDraw {
  std::vector<std::pair<int, int>> freq;
  std::vector<std::pair<int, int>> time;
};

MaskDraw DrawMasks(int frames, int feature_dim, const AugmentConfig &cfg,
                   std::uint64_t seed);
Tensor ApplyMasks(const Tensor &features, const MaskDraw &masks);

Tensor SpecAugment(const Tensor &features, const AugmentConfig &cfg,
                   std::uint64_t seed);

// Two independent draws with the CR-scaled config.
std::pair<Tensor, Tensor> TwoViews(const Tensor &features,
                                   const AugmentConfig &cfg,
                                   std::uint64_t seed);

}  // namespace xducer

#endif  // XDUCER_AUGMENT_H_
