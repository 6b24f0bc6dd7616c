// tests/test_util.h

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

#ifndef XDUCER_TESTS_TEST_UTIL_H_
#define XDUCER_TESTS_TEST_UTIL_H_

#include <random>
#include <vector>

#include "xducer/tensor.h"

namespace xducer::testing {

inline Tensor RandomTensor(const Shape &shape, std::mt19937_64 &rng,
                           double scale = 1.0) {
  std::uniform_real_distribution<double> dist(-scale, scale);
  std::vector<double> v(ShapeNumel(shape));
  for (double &x : v) x = dist(rng);
  return Tensor::FromVector(shape, std::move(v));
}

// sum(w * y) with a fixed random w, so gradients of shift-invariant ops are
// not identically zero.
inline Tensor WeightedSum(const Tensor &y, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return Sum(Mul(y, RandomTensor(y.shape(), rng)));
}

}  // namespace xducer::testing

#endif  // XDUCER_TESTS_TEST_UTIL_H_
