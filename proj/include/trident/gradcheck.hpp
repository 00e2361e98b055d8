// Copyright 2026 The tridentse authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <functional>

#include "trident/tensor.hpp"

namespace trident::nn {

struct GradCheckReport {
  double max_rel_err = 0.0;
  int64_t checked = 0;
  int64_t excluded = 0;
  std::string worst;  // "input#/coord" of the worst coordinate
};

struct GradCheckOptions {
  double step = 1e-5;
  // Returns true to skip a coordinate (e.g. a relu kink); skipped coordinates
  // are counted in `excluded`.
  std::function<bool(size_t input_idx, int64_t coord, double value)> exclude;
};

// Central-difference check of d f / d inputs against one taped backward pass.
// f must rebuild its graph from the inputs' current values on every call and
// return a scalar. Runs in 64-bit; callers instantiate the double graph.
inline GradCheckReport gradient_check(const std::vector<Tensor<double>>& inputs,
                                      const std::function<Tensor<double>()>& f,
                                      GradCheckOptions opts = {}) {
  for (auto& t : inputs) {
    const_cast<Tensor<double>&>(t).set_requires_grad(true);
    const_cast<Tensor<double>&>(t).zero_grad();
  }
  std::vector<std::vector<double>> analytic;
  {
    Tape<double> tape;
    tape.finite_checks = true;
    TapeScope<double> scope(tape);
    auto y = f();
    if (y.numel() != 1) throw std::invalid_argument("gradient_check: f must return a scalar");
    tape.backward(y);
    for (auto& t : inputs) {
      t.node()->ensure_grad();
      analytic.push_back(t.grad());
    }
  }
  GradCheckReport rep;
  const double h = opts.step;
  for (size_t i = 0; i < inputs.size(); ++i) {
    auto& vals = const_cast<Tensor<double>&>(inputs[i]).data();
    for (int64_t j = 0; j < static_cast<int64_t>(vals.size()); ++j) {
      const double v0 = vals[static_cast<size_t>(j)];
      if (opts.exclude && opts.exclude(i, j, v0)) {
        ++rep.excluded;
        continue;
      }
      vals[static_cast<size_t>(j)] = v0 + h;
      const double yp = f().item();
      vals[static_cast<size_t>(j)] = v0 - h;
      const double ym = f().item();
      vals[static_cast<size_t>(j)] = v0;
      const double fd = (yp - ym) / (2.0 * h);
      const double an = analytic[i][static_cast<size_t>(j)];
      const double denom = std::max({std::abs(an), std::abs(fd), 1e-8});
      const double rel = std::abs(an - fd) / denom;
      ++rep.checked;
      if (rel > rep.max_rel_err) {
        rep.max_rel_err = rel;
        rep.worst = "input" + std::to_string(i) + "/" + std::to_string(j);
      }
    }
  }
  return rep;
}

}  // namespace trident::nn
