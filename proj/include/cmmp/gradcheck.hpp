#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <utility>
#include <vector>

#include "cmmp/rng.hpp"
#include "cmmp/tape.hpp"
#include "cmmp/tensor.hpp"

namespace cmmp {

// Compares analytic gradients against central differences.
//
// `f` must rebuild the scalar loss from the current values of `inputs`,
// recording on the given tape (or none, when the tape is null). The check
// runs backward once for the analytic gradients, then perturbs a random
// subsample of at least `min_coords` coordinates (all of them when fewer
// exist) and reports the worst relative error
//   |analytic - numeric| / max(1e-8, |analytic| + |numeric|).
template <typename T>
T grad_check(const std::function<Tensor<T>(Tape<T>*)>& f, std::vector<Tensor<T>> inputs,
             T eps, Rng& rng, std::size_t min_coords = 64) {
  for (auto& in : inputs) in.zero_grad();
  Tape<T> tape;
  Tensor<T> loss = f(&tape);
  tape.backward(loss);

  std::vector<std::vector<T>> analytic;
  analytic.reserve(inputs.size());
  for (auto& in : inputs)
    analytic.emplace_back(in.grad().begin(), in.grad().end());

  std::vector<std::pair<std::size_t, std::size_t>> coords;
  for (std::size_t i = 0; i < inputs.size(); ++i)
    for (std::size_t j = 0; j < inputs[i].numel(); ++j) coords.emplace_back(i, j);
  if (coords.size() > min_coords) {
    // Partial Fisher-Yates: the first min_coords entries become the sample.
    for (std::size_t i = 0; i < min_coords; ++i) {
      std::size_t j = i + rng.index(coords.size() - i);
      std::swap(coords[i], coords[j]);
    }
    coords.resize(min_coords);
  }

  T max_rel = T(0);
  for (auto [ti, ei] : coords) {
    T* slot = inputs[ti].data() + ei;
    const T saved = *slot;
    *slot = saved + eps;
    const T lp = f(nullptr).values()[0];
    *slot = saved - eps;
    const T lm = f(nullptr).values()[0];
    *slot = saved;
    const T numeric = (lp - lm) / (T(2) * eps);
    const T a = analytic[ti][ei];
    const T denom = std::max(T(1e-8), std::abs(a) + std::abs(numeric));
    max_rel = std::max(max_rel, std::abs(a - numeric) / denom);
  }
  return max_rel;
}

}  // namespace cmmp
