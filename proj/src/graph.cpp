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
#include "bevfl/graph.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "bevfl/errors.hpp"

namespace bevfl {
namespace {

void require_rank2(const Tensor& t, const char* op) {
  if (t.rank() != 2) {
    throw DimensionError(std::string(op) + ": expected rank-2 tensor, got " + shape_str(t.shape()));
  }
}

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMat>;
using MutMap = Eigen::Map<RowMat>;

// c[m,n] += a[m,k] * b[k,n]
void gemm_nn(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
             std::size_t n) {
  const auto M = static_cast<Eigen::Index>(m), K = static_cast<Eigen::Index>(k),
             N = static_cast<Eigen::Index>(n);
  MutMap(c, M, N).noalias() += ConstMap(a, M, K) * ConstMap(b, K, N);
}

// c[m,n] += a[m,k] * b[n,k]^T
void gemm_nt(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
             std::size_t n) {
  const auto M = static_cast<Eigen::Index>(m), K = static_cast<Eigen::Index>(k),
             N = static_cast<Eigen::Index>(n);
  MutMap(c, M, N).noalias() += ConstMap(a, M, K) * ConstMap(b, N, K).transpose();
}

// c[k,n] += a[m,k]^T * b[m,n]
void gemm_tn(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
             std::size_t n) {
  const auto M = static_cast<Eigen::Index>(m), K = static_cast<Eigen::Index>(k),
             N = static_cast<Eigen::Index>(n);
  MutMap(c, K, N).noalias() += ConstMap(a, M, K).transpose() * ConstMap(b, M, N);
}

}  // namespace

Graph::Var Graph::push(Tensor value, bool requires_grad) {
  Node n;
  n.value = std::move(value);
  n.requires_grad = requires_grad;
  nodes_.push_back(std::move(n));
  return Var{nodes_.size() - 1};
}

Tensor& Graph::grad_ref(Var v) {
  Node& n = nodes_[v.id];
  if (n.grad.size() != n.value.size() || n.grad.shape() != n.value.shape()) {
    n.grad = Tensor(n.value.shape(), 0.0);
  }
  return n.grad;
}

Tensor Graph::grad(Var v) const {
  const Node& n = nodes_[v.id];
  if (n.grad.shape() == n.value.shape() && n.grad.size() == n.value.size()) return n.grad;
  return Tensor(n.value.shape(), 0.0);
}

Graph::Var Graph::constant(Tensor value) { return push(std::move(value), false); }

Graph::Var Graph::variable(Tensor value) { return push(std::move(value), true); }

Graph::Var Graph::param(ParamStore& store, std::size_t offset, Shape shape) {
  const std::size_t n = shape_size(shape);
  if (offset + n > store.size()) {
    throw DimensionError("param: view [" + std::to_string(offset) + ", " +
                         std::to_string(offset + n) + ") exceeds store of " +
                         std::to_string(store.size()));
  }
  auto vals = store.values().subspan(offset, n);
  Var v = push(Tensor(std::move(shape), std::vector<double>(vals.begin(), vals.end())), true);
  nodes_[v.id].store = &store;
  nodes_[v.id].store_offset = offset;
  return v;
}

void Graph::backward(Var loss) {
  if (nodes_[loss.id].value.size() != 1) {
    throw DimensionError("backward: target must be a scalar, got " +
                         shape_str(nodes_[loss.id].value.shape()));
  }
  for (auto& n : nodes_) n.grad = Tensor();
  grad_ref(loss)[0] = 1.0;
  for (std::size_t i = loss.id + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.requires_grad || n.grad.size() == 0) continue;
    if (n.backward) n.backward();
  }
  for (auto& n : nodes_) {
    if (n.store == nullptr || n.grad.size() == 0) continue;
    auto g = n.store->grads().subspan(n.store_offset, n.grad.size());
    for (std::size_t j = 0; j < g.size(); ++j) g[j] += n.grad[j];
  }
}

Graph::Var Graph::matmul(Var a, Var b) {
  const Tensor& av = value(a);
  const Tensor& bv = value(b);
  require_rank2(av, "matmul");
  require_rank2(bv, "matmul");
  const std::size_t m = av.rows(), k = av.cols(), n = bv.cols();
  if (bv.rows() != k) {
    throw DimensionError("matmul: inner dimensions differ, " + shape_str(av.shape()) + " x " +
                         shape_str(bv.shape()));
  }
  Tensor out({m, n}, 0.0);
  gemm_nn(av.data().data(), bv.data().data(), out.data().data(), m, k, n);
  Var o = push(std::move(out), needs(a) || needs(b));
  if (needs(o)) {
    nodes_[o.id].backward = [this, a, b, o, m, k, n] {
      const Tensor& g = grad_in(o);
      if (needs(a)) gemm_nt(g.data().data(), value(b).data().data(), grad_ref(a).data().data(), m, n, k);
      if (needs(b)) gemm_tn(value(a).data().data(), g.data().data(), grad_ref(b).data().data(), m, k, n);
    };
  }
  return o;
}

Graph::Var Graph::matmul_bt(Var a, Var b) {
  const Tensor& av = value(a);
  const Tensor& bv = value(b);
  require_rank2(av, "matmul_bt");
  require_rank2(bv, "matmul_bt");
  const std::size_t m = av.rows(), k = av.cols(), n = bv.rows();
  if (bv.cols() != k) {
    throw DimensionError("matmul_bt: inner dimensions differ, " + shape_str(av.shape()) + " x " +
                         shape_str(bv.shape()) + "^T");
  }
  Tensor out({m, n}, 0.0);
  gemm_nt(av.data().data(), bv.data().data(), out.data().data(), m, k, n);
  Var o = push(std::move(out), needs(a) || needs(b));
  if (needs(o)) {
    nodes_[o.id].backward = [this, a, b, o, m, k, n] {
      const Tensor& g = grad_in(o);
      // dA = G B, dB = G^T A
      if (needs(a)) gemm_nn(g.data().data(), value(b).data().data(), grad_ref(a).data().data(), m, n, k);
      if (needs(b)) gemm_tn(g.data().data(), value(a).data().data(), grad_ref(b).data().data(), m, n, k);
    };
  }
  return o;
}

Graph::Var Graph::transpose(Var a) {
  const Tensor& av = value(a);
  require_rank2(av, "transpose");
  const std::size_t m = av.rows(), n = av.cols();
  Tensor out({n, m});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out.at(j, i) = av.at(i, j);
  Var o = push(std::move(out), needs(a));
  if (needs(o)) {
    nodes_[o.id].backward = [this, a, o, m, n] {
      const Tensor& g = grad_in(o);
      Tensor& ga = grad_ref(a);
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) ga.at(i, j) += g.at(j, i);
    };
  }
  return o;
}

Graph::Var Graph::add(Var a, Var b) {
  const Tensor& av = value(a);
  const Tensor& bv = value(b);
  if (av.shape() == bv.shape()) {
    Tensor out = av;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[i];
    Var o = push(std::move(out), needs(a) || needs(b));
    if (needs(o)) {
      nodes_[o.id].backward = [this, a, b, o] {
        const Tensor& g = grad_in(o);
        for (Var v : {a, b}) {
          if (!needs(v)) continue;
          Tensor& gv = grad_ref(v);
          for (std::size_t i = 0; i < g.size(); ++i) gv[i] += g[i];
        }
      };
    }
    return o;
  }
  // Row-vector broadcast.
  require_rank2(av, "add");
  const std::size_t m = av.rows(), n = av.cols();
  const bool row_vec = bv.size() == n && (bv.rank() == 1 || (bv.rank() == 2 && bv.shape()[0] == 1));
  if (!row_vec) {
    throw DimensionError("add: incompatible shapes " + shape_str(av.shape()) + " + " +
                         shape_str(bv.shape()));
  }
  Tensor out = av;
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out.at(i, j) += bv[j];
  Var o = push(std::move(out), needs(a) || needs(b));
  if (needs(o)) {
    nodes_[o.id].backward = [this, a, b, o, m, n] {
      const Tensor& g = grad_in(o);
      if (needs(a)) {
        Tensor& ga = grad_ref(a);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
      }
      if (needs(b)) {
        Tensor& gb = grad_ref(b);
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t j = 0; j < n; ++j) gb[j] += g.at(i, j);
      }
    };
  }
  return o;
}

Graph::Var Graph::mul(Var a, Var b) {
  const Tensor& av = value(a);
  const Tensor& bv = value(b);
  if (av.shape() != bv.shape()) {
    throw DimensionError("mul: shapes differ, " + shape_str(av.shape()) + " * " +
                         shape_str(bv.shape()));
  }
  Tensor out = av;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= bv[i];
  Var o = push(std::move(out), needs(a) || needs(b));
  if (needs(o)) {
    nodes_[o.id].backward = [this, a, b, o] {
      const Tensor& g = grad_in(o);
      if (needs(a)) {
        Tensor& ga = grad_ref(a);
        const Tensor& bv = value(b);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bv[i];
      }
      if (needs(b)) {
        Tensor& gb = grad_ref(b);
        const Tensor& av = value(a);
        for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * av[i];
      }
    };
  }
  return o;
}

Graph::Var Graph::scale(Var a, double s) {
  Tensor out = value(a);
  for (auto& x : out.data()) x *= s;
  Var o = push(std::move(out), needs(a));
  if (needs(o)) {
    nodes_[o.id].backward = [this, a, o, s] {
      const Tensor& g = grad_in(o);
      Tensor& ga = grad_ref(a);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += s * g[i];
    };
  }
  return o;
}

Graph::Var Graph::relu(Var a) {
  Tensor out = value(a);
  for (auto& x : out.data()) x = x > 0.0 || std::isnan(x) ? x : 0.0;
  Var o = push(std::move(out), needs(a));
  if (needs(o)) {
    nodes_[o.id].backward = [this, a, o] {
      const Tensor& g = grad_in(o);
      const Tensor& x = value(a);
      Tensor& ga = grad_ref(a);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += x[i] > 0.0 ? g[i] : 0.0;
    };
  }
  return o;
}

Graph::Var Graph::sigmoid(Var a) {
  Tensor out = value(a);
  for (auto& x : out.data()) {
    x = x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
  }
  Var o = push(std::move(out), needs(a));
  if (needs(o)) {
    nodes_[o.id].backward = [this, a, o] {
      const Tensor& g = grad_in(o);
      const Tensor& y = value(o);
      Tensor& ga = grad_ref(a);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * y[i] * (1.0 - y[i]);
    };
  }
  return o;
}

Graph::Var Graph::softmax_rows(Var a) {
  const Tensor& av = value(a);
  require_rank2(av, "softmax_rows");
  const std::size_t m = av.rows(), n = av.cols();
  Tensor out({m, n});
  for (std::size_t i = 0; i < m; ++i) {
    double mx = av.at(i, 0);
    for (std::size_t j = 1; j < n; ++j) mx = std::max(mx, av.at(i, j));
    double s = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      const double e = std::exp(av.at(i, j) - mx);
      out.at(i, j) = e;
      s += e;
    }
    for (std::size_t j = 0; j < n; ++j) out.at(i, j) /= s;
  }
  Var o = push(std::move(out), needs(a));
  if (needs(o)) {
    nodes_[o.id].backward = [this, a, o, m, n] {
      const Tensor& g = grad_in(o);
      const Tensor& y = value(o);
      Tensor& ga = grad_ref(a);
      for (std::size_t i = 0; i < m; ++i) {
        double dot = 0.0;
        for (std::size_t j = 0; j < n; ++j) dot += g.at(i, j) * y.at(i, j);
        for (std::size_t j = 0; j < n; ++j) ga.at(i, j) += y.at(i, j) * (g.at(i, j) - dot);
      }
    };
  }
  return o;
}

Graph::Var Graph::layer_norm(Var a, double eps) {
  const Tensor& av = value(a);
  require_rank2(av, "layer_norm");
  const std::size_t m = av.rows(), n = av.cols();
  Tensor out({m, n});
  std::vector<double> inv_std(m);
  for (std::size_t i = 0; i < m; ++i) {
    double mu = 0.0;
    for (std::size_t j = 0; j < n; ++j) mu += av.at(i, j);
    mu /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t j = 0; j < n; ++j) var += (av.at(i, j) - mu) * (av.at(i, j) - mu);
    var /= static_cast<double>(n);
    inv_std[i] = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < n; ++j) out.at(i, j) = (av.at(i, j) - mu) * inv_std[i];
  }
  Var o = push(std::move(out), needs(a));
  if (needs(o)) {
    nodes_[o.id].backward = [this, a, o, m, n, inv_std = std::move(inv_std)] {
      const Tensor& g = grad_in(o);
      const Tensor& xhat = value(o);
      Tensor& ga = grad_ref(a);
      const double dn = static_cast<double>(n);
      for (std::size_t i = 0; i < m; ++i) {
        double g_mean = 0.0, gx_mean = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
          g_mean += g.at(i, j);
          gx_mean += g.at(i, j) * xhat.at(i, j);
        }
        g_mean /= dn;
        gx_mean /= dn;
        for (std::size_t j = 0; j < n; ++j) {
          ga.at(i, j) += inv_std[i] * (g.at(i, j) - g_mean - xhat.at(i, j) * gx_mean);
        }
      }
    };
  }
  return o;
}

Graph::Var Graph::concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw DimensionError("concat_cols: no inputs");
  const std::size_t m = value(parts[0]).rows();
  std::vector<std::size_t> widths;
  std::size_t total = 0;
  bool any = false;
  for (Var p : parts) {
    const Tensor& t = value(p);
    require_rank2(t, "concat_cols");
    if (t.rows() != m) {
      throw DimensionError("concat_cols: row counts differ (" + std::to_string(m) + " vs " +
                           std::to_string(t.rows()) + ")");
    }
    widths.push_back(t.cols());
    total += t.cols();
    any = any || needs(p);
  }
  Tensor out({m, total});
  std::size_t col = 0;
  for (std::size_t p = 0; p < parts.size(); ++p) {
    const Tensor& t = value(parts[p]);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < widths[p]; ++j) out.at(i, col + j) = t.at(i, j);
    col += widths[p];
  }
  Var o = push(std::move(out), any);
  if (needs(o)) {
    std::vector<Var> ins(parts.begin(), parts.end());
    nodes_[o.id].backward = [this, ins = std::move(ins), widths = std::move(widths), o, m] {
      const Tensor& g = grad_in(o);
      std::size_t c = 0;
      for (std::size_t p = 0; p < ins.size(); ++p) {
        if (needs(ins[p])) {
          Tensor& gp = grad_ref(ins[p]);
          for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < widths[p]; ++j) gp.at(i, j) += g.at(i, c + j);
        }
        c += widths[p];
      }
    };
  }
  return o;
}

Graph::Var Graph::slice_cols(Var a, std::size_t begin, std::size_t end) {
  const Tensor& av = value(a);
  require_rank2(av, "slice_cols");
  if (begin > end || end > av.cols()) {
    throw DimensionError("slice_cols: [" + std::to_string(begin) + ", " + std::to_string(end) +
                         ") out of " + shape_str(av.shape()));
  }
  const std::size_t m = av.rows(), w = end - begin;
  Tensor out({m, w});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < w; ++j) out.at(i, j) = av.at(i, begin + j);
  Var o = push(std::move(out), needs(a));
  if (needs(o)) {
    nodes_[o.id].backward = [this, a, o, m, w, begin] {
      const Tensor& g = grad_in(o);
      Tensor& ga = grad_ref(a);
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < w; ++j) ga.at(i, begin + j) += g.at(i, j);
    };
  }
  return o;
}

Graph::Var Graph::reshape(Var a, Shape shape) {
  Var o = push(value(a).reshaped(std::move(shape)), needs(a));
  if (needs(o)) {
    nodes_[o.id].backward = [this, a, o] {
      const Tensor& g = grad_in(o);
      Tensor& ga = grad_ref(a);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    };
  }
  return o;
}

Graph::Var Graph::sum(Var a) {
  double s = 0.0;
  for (double x : value(a).data()) s += x;
  Var o = push(Tensor({1}, std::vector<double>{s}), needs(a));
  if (needs(o)) {
    nodes_[o.id].backward = [this, a, o] {
      const double g = grad_in(o)[0];
      for (auto& x : grad_ref(a).data()) x += g;
    };
  }
  return o;
}

Graph::Var Graph::mean(Var a) {
  const std::size_t n = value(a).size();
  if (n == 0) throw EmptySupportError("mean: empty tensor");
  return scale(sum(a), 1.0 / static_cast<double>(n));
}

Graph::Var Graph::mask_rows(Var a, std::span<const std::uint8_t> row_mask) {
  const Tensor& av = value(a);
  require_rank2(av, "mask_rows");
  const std::size_t m = av.rows(), n = av.cols();
  if (row_mask.size() != m) {
    throw DimensionError("mask_rows: mask of " + std::to_string(row_mask.size()) +
                         " rows for tensor " + shape_str(av.shape()));
  }
  Tensor out = av;
  for (std::size_t i = 0; i < m; ++i)
    if (!row_mask[i])
      for (std::size_t j = 0; j < n; ++j) out.at(i, j) = 0.0;
  Var o = push(std::move(out), needs(a));
  if (needs(o)) {
    std::vector<std::uint8_t> mask(row_mask.begin(), row_mask.end());
    nodes_[o.id].backward = [this, a, o, m, n, mask = std::move(mask)] {
      const Tensor& g = grad_in(o);
      Tensor& ga = grad_ref(a);
      for (std::size_t i = 0; i < m; ++i)
        if (mask[i])
          for (std::size_t j = 0; j < n; ++j) ga.at(i, j) += g.at(i, j);
    };
  }
  return o;
}

Graph::Var Graph::bce_with_logits(Var logits, const BevGrid& targets, const BevGrid& mask) {
  const Tensor& z = value(logits);
  if (z.size() != targets.size() || z.size() != mask.size()) {
    throw DimensionError("bce_with_logits: logits " + shape_str(z.shape()) + " vs grid " +
                         std::to_string(targets.h()) + "x" + std::to_string(targets.w()) +
                         " / mask " + std::to_string(mask.h()) + "x" + std::to_string(mask.w()));
  }
  const std::size_t active = mask.count();
  if (active == 0) throw EmptySupportError("bce_with_logits: every cell is masked");
  const double inv = 1.0 / static_cast<double>(active);
  double total = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) {
    if (!mask[i]) continue;
    const double y = targets[i] ? 1.0 : 0.0;
    total += std::max(z[i], 0.0) - z[i] * y + std::log1p(std::exp(-std::abs(z[i])));
  }
  Var o = push(Tensor({1}, std::vector<double>{total * inv}), needs(logits));
  if (needs(o)) {
    nodes_[o.id].backward = [this, logits, o, targets, mask, inv] {
      const double g = grad_in(o)[0];
      const Tensor& zv = value(logits);
      Tensor& gz = grad_ref(logits);
      for (std::size_t i = 0; i < zv.size(); ++i) {
        if (!mask[i]) continue;
        const double y = targets[i] ? 1.0 : 0.0;
        const double s = zv[i] >= 0.0 ? 1.0 / (1.0 + std::exp(-zv[i]))
                                       : std::exp(zv[i]) / (1.0 + std::exp(zv[i]));
        gz[i] += g * (s - y) * inv;
      }
    };
  }
  return o;
}

}  // namespace bevfl
