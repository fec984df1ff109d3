/*
 * Copyright 2026 The bevfl Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *      http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */
#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "bevfl/graph.hpp"
#include "bevfl/rng.hpp"
#include "bevfl/tensor.hpp"

namespace bevfl::testing {

inline Tensor random_tensor(Rng& rng, Shape shape, double lo = -1.0, double hi = 1.0) {
  Tensor t(std::move(shape));
  for (auto& v : t.vec()) v = rng.uniform(lo, hi);
  return t;
}

using Builder = std::function<Graph::Var(Graph&, const std::vector<Graph::Var>&)>;

// Relative error between the analytic gradient of sum(f(x) * R) (R a fixed
// random weighting) and central differences, over every input.
inline double gradcheck(const std::vector<Tensor>& inputs, const Builder& f, Rng& rng, double h = 1e-5) {
  Tensor weights;
  auto loss_of = [&](const std::vector<Tensor>& xs, std::vector<Tensor>* grads) {
    Graph g;
    std::vector<Graph::Var> vars;
    for (const auto& x : xs) vars.push_back(grads ? g.variable(x) : g.constant(x));
    auto out = f(g, vars);
    if (weights.size() == 0) weights = random_tensor(rng, g.value(out).shape());
    auto loss = g.sum(g.mul(out, g.constant(weights)));
    if (grads) {
      g.backward(loss);
      for (auto v : vars) grads->push_back(g.grad(v));
    }
    return g.value(loss)[0];
  };
  std::vector<Tensor> analytic;
  loss_of(inputs, &analytic);
  double diff2 = 0.0, a2 = 0.0, n2 = 0.0;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    for (std::size_t j = 0; j < inputs[i].size(); ++j) {
      auto plus = inputs, minus = inputs;
      plus[i][j] += h;
      minus[i][j] -= h;
      const double num = (loss_of(plus, nullptr) - loss_of(minus, nullptr)) / (2.0 * h);
      const double an = analytic[i][j];
      diff2 += (an - num) * (an - num);
      a2 += an * an;
      n2 += num * num;
    }
  }
  return std::sqrt(diff2) / std::max(1e-12, std::max(std::sqrt(a2), std::sqrt(n2)));
}

}  // namespace bevfl::testing
