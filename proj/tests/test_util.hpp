// Copyright 2026 The tridentse authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <random>
#include <vector>

#include "trident/tensor.hpp"

namespace testutil {

template <class Real>
trident::nn::Tensor<Real> random_tensor(trident::nn::Shape shape, std::mt19937& rng,
                                        Real lo = Real(-1), Real hi = Real(1)) {
  std::uniform_real_distribution<double> dist(static_cast<double>(lo), static_cast<double>(hi));
  auto t = trident::nn::Tensor<Real>::zeros(std::move(shape));
  for (auto& v : t.data()) v = static_cast<Real>(dist(rng));
  return t;
}

// Fixed-weight scalar probe so gradients of every output coordinate matter.
template <class Real>
trident::nn::Tensor<Real> probe(const trident::nn::Tensor<Real>& y, unsigned seed = 1234) {
  std::mt19937 rng(seed);
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  auto w = trident::nn::Tensor<Real>::zeros(y.shape());
  for (auto& v : w.data()) v = static_cast<Real>(dist(rng));
  return trident::nn::sum_all(trident::nn::mul(y, w));
}

}  // namespace testutil
