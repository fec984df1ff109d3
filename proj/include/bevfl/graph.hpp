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

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "bevfl/bev_grid.hpp"
#include "bevfl/param_store.hpp"
#include "bevfl/tensor.hpp"

namespace bevfl {

// Reverse-mode tape. Nodes are recorded in creation order, which is a valid
// topological order, and backward() walks them in reverse.
//
// All matrix ops take rank-2 tensors. A graph is built for one forward pass
// and discarded; it holds no state that outlives it besides gradients pushed
// into bound ParamStores.
class Graph {
 public:
  struct Var {
    std::size_t id;
  };

  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  Var constant(Tensor value);
  // Leaf whose gradient is retained and readable through grad().
  Var variable(Tensor value);
  // Leaf viewing store.values()[offset, offset + size(shape)). backward()
  // accumulates its gradient into store.grads().
  Var param(ParamStore& store, std::size_t offset, Shape shape);

  const Tensor& value(Var v) const { return nodes_[v.id].value; }
  // Gradient of the last backward() target w.r.t. v; zeros if v got none.
  Tensor grad(Var v) const;
  std::size_t size() const { return nodes_.size(); }

  // Seeds d(loss)/d(loss) = 1 and propagates. `loss` must hold one element.
  void backward(Var loss);

  Var matmul(Var a, Var b);     // [m,k] x [k,n]
  Var matmul_bt(Var a, Var b);  // [m,k] x [n,k]^T
  Var transpose(Var a);
  // Same-shape add, or broadcast of a [1,n] / [n] row vector b over rows of a.
  Var add(Var a, Var b);
  Var mul(Var a, Var b);
  Var scale(Var a, double s);
  Var relu(Var a);
  Var sigmoid(Var a);
  Var softmax_rows(Var a);
  Var layer_norm(Var a, double eps = 1e-5);
  Var concat_cols(std::span<const Var> parts);
  Var slice_cols(Var a, std::size_t begin, std::size_t end);
  Var reshape(Var a, Shape shape);
  Var mean(Var a);
  Var sum(Var a);
  // Zeroes rows i where row_mask[i] == 0, forward and backward.
  Var mask_rows(Var a, std::span<const std::uint8_t> row_mask);
  // Masked mean binary cross-entropy on logits. Throws EmptySupportError if
  // the mask has no active cell.
  Var bce_with_logits(Var logits, const BevGrid& targets, const BevGrid& mask);

  // x W + b.
  Var linear(Var x, Var w, Var b) { return add(matmul(x, w), b); }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    bool requires_grad = false;
    std::function<void()> backward;
    ParamStore* store = nullptr;
    std::size_t store_offset = 0;
  };

  Var push(Tensor value, bool requires_grad);
  bool needs(Var v) const { return nodes_[v.id].requires_grad; }
  Tensor& grad_ref(Var v);
  const Tensor& grad_in(Var v) const { return nodes_[v.id].grad; }

  std::vector<Node> nodes_;
};

}  // namespace bevfl
