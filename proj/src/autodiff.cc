// Copyright (c) 2026 The cosmix-kws Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//   http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "cosmix/autodiff.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>

#include <Eigen/Core>

#include "cosmix/errors.h"
#include "cosmix/util.h"

namespace cosmix::ad {

std::size_t numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string to_string(const Shape& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ", ";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

namespace {

std::string& fault_slot() {
  static std::string op;
  return op;
}

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MapMat = Eigen::Map<RowMat<T>>;
template <typename T>
using ConstMapMat = Eigen::Map<const RowMat<T>>;

}  // namespace

void set_gradient_fault(std::string op) { fault_slot() = std::move(op); }
const std::string& gradient_fault() { return fault_slot(); }

// ---------------------------------------------------------------------------
// ParameterSet

template <typename T>
Parameter<T>& ParameterSet<T>::add(std::string name, Shape shape, T fill) {
  if (contains(name)) throw ContractError("duplicate parameter name: " + name);
  Parameter<T> p;
  p.name = std::move(name);
  p.value.assign(numel(shape), fill);
  p.shape = std::move(shape);
  params_.push_back(std::move(p));
  return params_.back();
}

template <typename T>
Parameter<T>& ParameterSet<T>::at(std::string_view name) {
  for (auto& p : params_) {
    if (p.name == name) return p;
  }
  throw ContractError("no parameter named " + std::string(name));
}

template <typename T>
const Parameter<T>& ParameterSet<T>::at(std::string_view name) const {
  return const_cast<ParameterSet*>(this)->at(name);
}

template <typename T>
bool ParameterSet<T>::contains(std::string_view name) const {
  return std::any_of(params_.begin(), params_.end(),
                     [name](const Parameter<T>& p) { return p.name == name; });
}

template <typename T>
std::size_t ParameterSet<T>::scalar_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.value.size();
  return n;
}

template <typename T>
void ParameterSet<T>::zero_grad() {
  for (auto& p : params_) p.grad.assign(p.value.size(), T(0));
}

// ---------------------------------------------------------------------------
// Tensor

template <typename T>
const Shape& Tensor<T>::shape() const {
  return tape_->nodes_[id_].shape;
}

template <typename T>
std::span<const T> Tensor<T>::values() const {
  return tape_->nodes_[id_].value;
}

template <typename T>
std::span<const T> Tensor<T>::grad() const {
  return tape_->nodes_[id_].grad;
}

template <typename T>
bool Tensor<T>::requires_grad() const {
  return tape_->nodes_[id_].requires_grad;
}

template <typename T>
T Tensor<T>::item() const {
  auto v = values();
  if (v.size() != 1) throw ContractError("item() on a tensor of shape " + to_string(shape()));
  return v[0];
}

// ---------------------------------------------------------------------------
// Tape

namespace {

template <typename T>
bool all_finite(std::span<const T> v) {
  return std::all_of(v.begin(), v.end(), [](T x) { return std::isfinite(x); });
}

}  // namespace

template <typename T>
Tensor<T> Tape<T>::record(std::string_view op, Shape shape, std::vector<T> value,
                          std::initializer_list<Tensor<T>> inputs, BackwardFn backward) {
  if (value.size() != numel(shape)) {
    throw ContractError(std::string(op) + ": value count does not match shape " + to_string(shape));
  }
  if (!all_finite<T>(value)) {
    throw NumericError("non-finite value produced by " + std::string(op));
  }
  Node node;
  node.op = op;
  node.shape = std::move(shape);
  node.value = std::move(value);
  for (const auto& in : inputs) {
    if (!in.valid()) continue;
    if (&in.tape() != this) throw ContractError(std::string(op) + ": input lives on another tape");
    node.inputs.push_back(in.id());
    node.requires_grad = node.requires_grad || nodes_[in.id()].requires_grad;
  }
  node.requires_grad = node.requires_grad && grad_enabled_ && backward != nullptr;
  if (node.requires_grad) node.backward = std::move(backward);
  nodes_.push_back(std::move(node));
  return Tensor<T>(this, nodes_.size() - 1);
}

template <typename T>
Tensor<T> Tape<T>::constant(Shape shape, std::vector<T> values) {
  return record("constant", std::move(shape), std::move(values), {}, nullptr);
}

template <typename T>
Tensor<T> Tape<T>::variable(Shape shape, std::vector<T> values) {
  Tensor<T> t = record("variable", std::move(shape), std::move(values), {}, nullptr);
  nodes_[t.id()].requires_grad = grad_enabled_;
  return t;
}

template <typename T>
Tensor<T> Tape<T>::bind(Parameter<T>& param) {
  if (auto it = bound_.find(&param); it != bound_.end()) return Tensor<T>(this, it->second);
  Tensor<T> t = record("param", param.shape, param.value, {}, nullptr);
  Node& n = nodes_[t.id()];
  n.requires_grad = grad_enabled_;
  n.bound = &param;
  bound_[&param] = t.id();
  return t;
}

template <typename T>
T* Tape<T>::grad_buffer(std::size_t id) {
  Node& n = nodes_[id];
  if (!n.requires_grad) return nullptr;
  if (n.grad.empty()) n.grad.assign(n.value.size(), T(0));
  return n.grad.data();
}

template <typename T>
void Tape<T>::backward(const Tensor<T>& loss) {
  if (!loss.valid() || &loss.tape() != this) throw ContractError("backward: loss is not on this tape");
  if (numel(loss.shape()) != 1) {
    throw ContractError("backward: loss must be a scalar, got shape " + to_string(loss.shape()));
  }
  if (backward_done_) throw ContractError("backward: tape already consumed");
  backward_done_ = true;
  if (!nodes_[loss.id()].requires_grad) return;
  nodes_[loss.id()].grad.assign(1, T(1));

  const std::string& fault = gradient_fault();
  for (std::size_t id = loss.id() + 1; id-- > 0;) {
    Node& n = nodes_[id];
    if (n.grad.empty()) continue;
    if (n.backward) {
      std::vector<std::vector<T>> before;
      const bool corrupt = !fault.empty() && fault == n.op;
      if (corrupt) {
        for (std::size_t in : n.inputs) {
          grad_buffer(in);
          before.push_back(nodes_[in].grad);
        }
      }
      n.backward(*this, n);
      for (std::size_t k = 0; k < n.inputs.size(); ++k) {
        Node& in = nodes_[n.inputs[k]];
        if (in.grad.empty()) continue;
        if (corrupt) {
          for (std::size_t i = 0; i < in.grad.size(); ++i) {
            in.grad[i] += T(0.5) * (in.grad[i] - before[k][i]);
          }
        }
        if (!all_finite<T>(in.grad)) {
          throw NumericError("non-finite gradient from " + std::string(n.op));
        }
      }
    }
    if (n.bound != nullptr) {
      Parameter<T>& p = *n.bound;
      if (p.grad.size() != p.value.size()) p.grad.assign(p.value.size(), T(0));
      for (std::size_t i = 0; i < n.grad.size(); ++i) p.grad[i] += n.grad[i];
    }
  }
}

template <typename T>
std::string Tape<T>::dump() const {
  std::ostringstream os;
  for (std::size_t id = 0; id < nodes_.size(); ++id) {
    const Node& n = nodes_[id];
    os << '#' << id << ' ' << n.op;
    if (n.bound) os << '(' << n.bound->name << ')';
    os << ' ' << to_string(n.shape) << (n.requires_grad ? " grad" : "");
    if (!n.inputs.empty()) {
      os << " <-";
      for (std::size_t in : n.inputs) os << " #" << in;
    }
    os << '\n';
  }
  return os.str();
}

// ---------------------------------------------------------------------------
// Ops

namespace {

template <typename T>
void require_rank(const Tensor<T>& t, std::size_t rank, std::string_view op) {
  if (!t.valid()) throw ContractError(std::string(op) + ": invalid tensor");
  if (t.shape().size() != rank) {
    throw ShapeError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got " +
                     to_string(t.shape()));
  }
}

template <typename T>
void require_same_tape(const Tensor<T>& a, const Tensor<T>& b, std::string_view op) {
  if (&a.tape() != &b.tape()) throw ContractError(std::string(op) + ": inputs on different tapes");
}

[[noreturn]] void shape_mismatch(std::string_view op, const Shape& a, const Shape& b) {
  throw ShapeError(std::string(op) + ": shape mismatch " + to_string(a) + " vs " + to_string(b));
}

}  // namespace

template <typename T>
Tensor<T> dense(const Tensor<T>& x, const Tensor<T>& W, const Tensor<T>& b) {
  require_rank(x, 2, "dense");
  require_rank(W, 2, "dense");
  require_rank(b, 1, "dense");
  require_same_tape(x, W, "dense");
  require_same_tape(x, b, "dense");
  const std::size_t B = x.shape()[0], in = x.shape()[1], out = W.shape()[1];
  if (W.shape()[0] != in) shape_mismatch("dense", x.shape(), W.shape());
  if (b.shape()[0] != out) shape_mismatch("dense", W.shape(), b.shape());

  std::vector<T> y(B * out);
  {
    ConstMapMat<T> X(x.values().data(), B, in);
    ConstMapMat<T> Wm(W.values().data(), in, out);
    MapMat<T> Y(y.data(), B, out);
    Y.noalias() = X * Wm;
    Eigen::Map<const Eigen::Matrix<T, 1, Eigen::Dynamic>> bias(b.values().data(), out);
    Y.rowwise() += bias;
  }
  const std::size_t xid = x.id(), wid = W.id(), bid = b.id();
  return x.tape().record(
      "dense", {B, out}, std::move(y), {x, W, b},
      [xid, wid, bid, B, in, out](Tape<T>& tape, const typename Tape<T>::Node& self) {
        ConstMapMat<T> G(self.grad.data(), B, out);
        if (T* gx = tape.grad_buffer(xid)) {
          ConstMapMat<T> Wm(tape.node(wid).value.data(), in, out);
          MapMat<T>(gx, B, in).noalias() += G * Wm.transpose();
        }
        if (T* gw = tape.grad_buffer(wid)) {
          ConstMapMat<T> X(tape.node(xid).value.data(), B, in);
          MapMat<T>(gw, in, out).noalias() += X.transpose() * G;
        }
        if (T* gb = tape.grad_buffer(bid)) {
          const T* gs = self.grad.data();
          for (std::size_t r = 0; r < B; ++r)
            for (std::size_t c = 0; c < out; ++c) gb[c] += gs[r * out + c];
        }
      });
}

namespace {

struct ConvGeom {
  std::size_t B, C, H, W, O, kh, kw, stride, pad, Ho, Wo;
  std::size_t patch() const { return C * kh * kw; }
  std::size_t pixels() const { return Ho * Wo; }
};

// col[(c*kh + i)*kw + j][oy*Wo + ox] = x[c][oy*s - p + i][ox*s - p + j]
template <typename T>
void im2col(const T* x, const ConvGeom& g, T* col) {
  const auto pad = static_cast<std::ptrdiff_t>(g.pad);
  for (std::size_t c = 0; c < g.C; ++c) {
    const T* plane = x + c * g.H * g.W;
    for (std::size_t i = 0; i < g.kh; ++i) {
      for (std::size_t j = 0; j < g.kw; ++j) {
        T* row = col + ((c * g.kh + i) * g.kw + j) * g.pixels();
        for (std::size_t oy = 0; oy < g.Ho; ++oy) {
          const auto iy = static_cast<std::ptrdiff_t>(oy * g.stride + i) - pad;
          T* dst = row + oy * g.Wo;
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.H)) {
            std::fill(dst, dst + g.Wo, T(0));
            continue;
          }
          const T* src = plane + static_cast<std::size_t>(iy) * g.W;
          for (std::size_t ox = 0; ox < g.Wo; ++ox) {
            const auto ix = static_cast<std::ptrdiff_t>(ox * g.stride + j) - pad;
            dst[ox] = (ix < 0 || ix >= static_cast<std::ptrdiff_t>(g.W)) ? T(0)
                                                                        : src[static_cast<std::size_t>(ix)];
          }
        }
      }
    }
  }
}

template <typename T>
void col2im_add(const T* col, const ConvGeom& g, T* x) {
  const auto pad = static_cast<std::ptrdiff_t>(g.pad);
  for (std::size_t c = 0; c < g.C; ++c) {
    T* plane = x + c * g.H * g.W;
    for (std::size_t i = 0; i < g.kh; ++i) {
      for (std::size_t j = 0; j < g.kw; ++j) {
        const T* row = col + ((c * g.kh + i) * g.kw + j) * g.pixels();
        for (std::size_t oy = 0; oy < g.Ho; ++oy) {
          const auto iy = static_cast<std::ptrdiff_t>(oy * g.stride + i) - pad;
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.H)) continue;
          T* dst = plane + static_cast<std::size_t>(iy) * g.W;
          const T* src = row + oy * g.Wo;
          for (std::size_t ox = 0; ox < g.Wo; ++ox) {
            const auto ix = static_cast<std::ptrdiff_t>(ox * g.stride + j) - pad;
            if (ix >= 0 && ix < static_cast<std::ptrdiff_t>(g.W)) dst[ix] += src[ox];
          }
        }
      }
    }
  }
}

}  // namespace

template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& k, const Tensor<T>& bias,
                 Conv2dOptions options) {
  require_rank(x, 4, "conv2d");
  require_rank(k, 4, "conv2d");
  require_same_tape(x, k, "conv2d");
  if (options.stride == 0) throw InvalidArgument("conv2d: stride must be >= 1");
  ConvGeom g{};
  g.B = x.shape()[0];
  g.C = x.shape()[1];
  g.H = x.shape()[2];
  g.W = x.shape()[3];
  g.O = k.shape()[0];
  g.kh = k.shape()[2];
  g.kw = k.shape()[3];
  g.stride = options.stride;
  g.pad = options.padding;
  if (k.shape()[1] != g.C) shape_mismatch("conv2d", x.shape(), k.shape());
  if (g.H + 2 * g.pad < g.kh || g.W + 2 * g.pad < g.kw) shape_mismatch("conv2d", x.shape(), k.shape());
  if (bias.valid()) {
    require_rank(bias, 1, "conv2d");
    require_same_tape(x, bias, "conv2d");
    if (bias.shape()[0] != g.O) shape_mismatch("conv2d", k.shape(), bias.shape());
  }
  g.Ho = (g.H + 2 * g.pad - g.kh) / g.stride + 1;
  g.Wo = (g.W + 2 * g.pad - g.kw) / g.stride + 1;

  std::vector<T> y(g.B * g.O * g.pixels());
  std::vector<T> col(g.patch() * g.pixels());
  ConstMapMat<T> K(k.values().data(), g.O, g.patch());
  const std::size_t in_stride = g.C * g.H * g.W, out_stride = g.O * g.pixels();
  for (std::size_t b = 0; b < g.B; ++b) {
    im2col(x.values().data() + b * in_stride, g, col.data());
    MapMat<T> Y(y.data() + b * out_stride, g.O, g.pixels());
    Y.noalias() = K * ConstMapMat<T>(col.data(), g.patch(), g.pixels());
    if (bias.valid()) {
      for (std::size_t o = 0; o < g.O; ++o) Y.row(o).array() += bias.values()[o];
    }
  }

  const std::size_t xid = x.id(), kid = k.id();
  const std::size_t bid = bias.valid() ? bias.id() : std::numeric_limits<std::size_t>::max();
  return x.tape().record(
      "conv2d", {g.B, g.O, g.Ho, g.Wo}, std::move(y), {x, k, bias},
      [g, xid, kid, bid, in_stride, out_stride](Tape<T>& tape, const typename Tape<T>::Node& self) {
        T* gx = tape.grad_buffer(xid);
        T* gk = tape.grad_buffer(kid);
        T* gb = bid == std::numeric_limits<std::size_t>::max() ? nullptr : tape.grad_buffer(bid);
        const T* xv = tape.node(xid).value.data();
        ConstMapMat<T> K(tape.node(kid).value.data(), g.O, g.patch());
        std::vector<T> col(g.patch() * g.pixels());
        std::vector<T> gcol(gx ? col.size() : 0);
        for (std::size_t b = 0; b < g.B; ++b) {
          ConstMapMat<T> G(self.grad.data() + b * out_stride, g.O, g.pixels());
          if (gk) {
            im2col(xv + b * in_stride, g, col.data());
            MapMat<T>(gk, g.O, g.patch()).noalias() +=
                G * ConstMapMat<T>(col.data(), g.patch(), g.pixels()).transpose();
          }
          if (gx) {
            MapMat<T>(gcol.data(), g.patch(), g.pixels()).noalias() = K.transpose() * G;
            col2im_add(gcol.data(), g, gx + b * in_stride);
          }
          if (gb) {
            const T* gs = self.grad.data() + b * out_stride;
            for (std::size_t o = 0; o < g.O; ++o) {
              T acc = 0;
              for (std::size_t p = 0; p < g.pixels(); ++p) acc += gs[o * g.pixels() + p];
              gb[o] += acc;
            }
          }
        }
      });
}

template <typename T>
Tensor<T> relu(const Tensor<T>& x) {
  if (!x.valid()) throw ContractError("relu: invalid tensor");
  auto xv = x.values();
  std::vector<T> y(xv.size());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = xv[i] > T(0) ? xv[i] : T(0);
  const std::size_t xid = x.id();
  return x.tape().record("relu", x.shape(), std::move(y), {x},
                         [xid](Tape<T>& tape, const typename Tape<T>::Node& self) {
                           T* gx = tape.grad_buffer(xid);
                           if (!gx) return;
                           const auto& xv = tape.node(xid).value;
                           for (std::size_t i = 0; i < xv.size(); ++i) {
                             if (xv[i] > T(0)) gx[i] += self.grad[i];
                           }
                         });
}

template <typename T>
Tensor<T> global_avg_pool(const Tensor<T>& x) {
  require_rank(x, 4, "global_avg_pool");
  const std::size_t B = x.shape()[0], C = x.shape()[1], HW = x.shape()[2] * x.shape()[3];
  if (HW == 0) throw ShapeError("global_avg_pool: empty spatial extent");
  std::vector<T> y(B * C);
  auto xv = x.values();
  for (std::size_t i = 0; i < B * C; ++i) {
    T acc = 0;
    for (std::size_t p = 0; p < HW; ++p) acc += xv[i * HW + p];
    y[i] = acc / static_cast<T>(HW);
  }
  const std::size_t xid = x.id();
  return x.tape().record("global_avg_pool", {B, C}, std::move(y), {x},
                         [xid, B, C, HW](Tape<T>& tape, const typename Tape<T>::Node& self) {
                           T* gx = tape.grad_buffer(xid);
                           if (!gx) return;
                           const T inv = T(1) / static_cast<T>(HW);
                           for (std::size_t i = 0; i < B * C; ++i) {
                             const T gi = self.grad[i] * inv;
                             for (std::size_t p = 0; p < HW; ++p) gx[i * HW + p] += gi;
                           }
                         });
}

template <typename T>
Tensor<T> reshape(const Tensor<T>& x, Shape shape) {
  if (numel(shape) != numel(x.shape())) shape_mismatch("reshape", x.shape(), shape);
  std::vector<T> y(x.values().begin(), x.values().end());
  const std::size_t xid = x.id();
  return x.tape().record("reshape", std::move(shape), std::move(y), {x},
                         [xid](Tape<T>& tape, const typename Tape<T>::Node& self) {
                           T* gx = tape.grad_buffer(xid);
                           if (!gx) return;
                           for (std::size_t i = 0; i < self.grad.size(); ++i) gx[i] += self.grad[i];
                         });
}

template <typename T>
Tensor<T> l2_normalize(const Tensor<T>& v, T eps) {
  require_rank(v, 2, "l2_normalize");
  const std::size_t B = v.shape()[0], D = v.shape()[1];
  auto xv = v.values();
  std::vector<T> y(B * D);
  std::vector<T> norms(B);
  std::size_t degenerate = 0;
  for (std::size_t b = 0; b < B; ++b) {
    T ss = 0;
    for (std::size_t d = 0; d < D; ++d) ss += xv[b * D + d] * xv[b * D + d];
    norms[b] = std::sqrt(ss);
    if (norms[b] <= eps) ++degenerate;
    const T denom = std::max(norms[b], eps);
    for (std::size_t d = 0; d < D; ++d) y[b * D + d] = xv[b * D + d] / denom;
  }
  v.tape().note_degenerate_rows(degenerate);
  const std::size_t xid = v.id();
  return v.tape().record(
      "l2_normalize", {B, D}, std::move(y), {v},
      [xid, B, D, eps, norms = std::move(norms)](Tape<T>& tape, const typename Tape<T>::Node& self) {
        T* gx = tape.grad_buffer(xid);
        if (!gx) return;
        for (std::size_t b = 0; b < B; ++b) {
          const T* g = self.grad.data() + b * D;
          const T* yv = self.value.data() + b * D;
          if (norms[b] <= eps) {
            for (std::size_t d = 0; d < D; ++d) gx[b * D + d] += g[d] / eps;
            continue;
          }
          T dot = 0;
          for (std::size_t d = 0; d < D; ++d) dot += yv[d] * g[d];
          for (std::size_t d = 0; d < D; ++d) gx[b * D + d] += (g[d] - yv[d] * dot) / norms[b];
        }
      });
}

template <typename T>
Tensor<T> rowwise_dot(const Tensor<T>& a, const Tensor<T>& b) {
  require_rank(a, 2, "rowwise_dot");
  require_rank(b, 2, "rowwise_dot");
  require_same_tape(a, b, "rowwise_dot");
  if (a.shape() != b.shape()) shape_mismatch("rowwise_dot", a.shape(), b.shape());
  const std::size_t B = a.shape()[0], D = a.shape()[1];
  std::vector<T> y(B);
  for (std::size_t r = 0; r < B; ++r) {
    T acc = 0;
    for (std::size_t d = 0; d < D; ++d) acc += a.values()[r * D + d] * b.values()[r * D + d];
    y[r] = acc;
  }
  const std::size_t aid = a.id(), bid = b.id();
  return a.tape().record("rowwise_dot", {B}, std::move(y), {a, b},
                         [aid, bid, B, D](Tape<T>& tape, const typename Tape<T>::Node& self) {
                           // Read values before touching grads: a and b may be the same node.
                           const auto& av = tape.node(aid).value;
                           const auto& bv = tape.node(bid).value;
                           if (T* ga = tape.grad_buffer(aid)) {
                             for (std::size_t r = 0; r < B; ++r)
                               for (std::size_t d = 0; d < D; ++d) ga[r * D + d] += self.grad[r] * bv[r * D + d];
                           }
                           if (T* gb = tape.grad_buffer(bid)) {
                             for (std::size_t r = 0; r < B; ++r)
                               for (std::size_t d = 0; d < D; ++d) gb[r * D + d] += self.grad[r] * av[r * D + d];
                           }
                         });
}

template <typename T>
Tensor<T> cosine_similarity(const Tensor<T>& a, const Tensor<T>& b) {
  return rowwise_dot(l2_normalize(a), l2_normalize(b));
}

namespace {

template <typename T>
void check_simplex(const Tensor<T>& target, std::string_view op) {
  const std::size_t B = target.shape()[0], K = target.shape()[1];
  const T tol = std::sqrt(std::numeric_limits<T>::epsilon());
  auto t = target.values();
  for (std::size_t r = 0; r < B; ++r) {
    T s = 0;
    for (std::size_t k = 0; k < K; ++k) {
      if (t[r * K + k] < T(0)) throw InvalidInput(std::string(op) + ": negative target entry");
      s += t[r * K + k];
    }
    if (std::abs(s - T(1)) > tol) {
      throw InvalidInput(std::string(op) + ": target row " + std::to_string(r) + " does not sum to 1");
    }
  }
}

}  // namespace

template <typename T>
Tensor<T> cross_entropy_rows(const Tensor<T>& logits, const Tensor<T>& target) {
  require_rank(logits, 2, "cross_entropy");
  require_rank(target, 2, "cross_entropy");
  require_same_tape(logits, target, "cross_entropy");
  if (logits.shape() != target.shape()) shape_mismatch("cross_entropy", logits.shape(), target.shape());
  check_simplex(target, "cross_entropy");
  const std::size_t B = logits.shape()[0], K = logits.shape()[1];
  auto z = logits.values();
  auto t = target.values();
  std::vector<T> y(B);
  std::vector<T> probs(B * K);
  for (std::size_t r = 0; r < B; ++r) {
    const T* zr = z.data() + r * K;
    const T m = *std::max_element(zr, zr + K);
    T se = 0;
    for (std::size_t k = 0; k < K; ++k) se += std::exp(zr[k] - m);
    const T lse = m + std::log(se);
    T loss = 0;
    for (std::size_t k = 0; k < K; ++k) {
      probs[r * K + k] = std::exp(zr[k] - lse);
      loss -= t[r * K + k] * (zr[k] - lse);
    }
    y[r] = loss;
  }
  const std::size_t zid = logits.id(), tid = target.id();
  return logits.tape().record(
      "cross_entropy", {B}, std::move(y), {logits, target},
      [zid, tid, B, K, probs = std::move(probs)](Tape<T>& tape, const typename Tape<T>::Node& self) {
        T* gz = tape.grad_buffer(zid);
        if (!gz) return;
        const auto& t = tape.node(tid).value;
        for (std::size_t r = 0; r < B; ++r) {
          T tsum = 0;
          for (std::size_t k = 0; k < K; ++k) tsum += t[r * K + k];
          for (std::size_t k = 0; k < K; ++k) {
            gz[r * K + k] += self.grad[r] * (probs[r * K + k] * tsum - t[r * K + k]);
          }
        }
      });
}

template <typename T>
Tensor<T> softmax_cross_entropy(const Tensor<T>& logits, const Tensor<T>& target) {
  return mean(cross_entropy_rows(logits, target));
}

template <typename T>
Tensor<T> sigmoid_bce_rows(const Tensor<T>& logits, const Tensor<T>& target) {
  require_rank(logits, 2, "sigmoid_bce");
  require_rank(target, 2, "sigmoid_bce");
  require_same_tape(logits, target, "sigmoid_bce");
  if (logits.shape() != target.shape()) shape_mismatch("sigmoid_bce", logits.shape(), target.shape());
  const std::size_t B = logits.shape()[0], K = logits.shape()[1];
  auto z = logits.values();
  auto t = target.values();
  for (T v : t) {
    if (v < T(0) || v > T(1)) throw InvalidInput("sigmoid_bce: target outside [0, 1]");
  }
  std::vector<T> y(B);
  for (std::size_t r = 0; r < B; ++r) {
    T acc = 0;
    for (std::size_t k = 0; k < K; ++k) {
      const T zk = z[r * K + k];
      acc += std::max(zk, T(0)) - zk * t[r * K + k] + std::log1p(std::exp(-std::abs(zk)));
    }
    y[r] = acc / static_cast<T>(K);
  }
  const std::size_t zid = logits.id(), tid = target.id();
  return logits.tape().record(
      "sigmoid_bce", {B}, std::move(y), {logits, target},
      [zid, tid, B, K](Tape<T>& tape, const typename Tape<T>::Node& self) {
        T* gz = tape.grad_buffer(zid);
        if (!gz) return;
        const auto& z = tape.node(zid).value;
        const auto& t = tape.node(tid).value;
        const T invK = T(1) / static_cast<T>(K);
        for (std::size_t r = 0; r < B; ++r) {
          for (std::size_t k = 0; k < K; ++k) {
            const T zk = z[r * K + k];
            const T sig = zk >= T(0) ? T(1) / (T(1) + std::exp(-zk)) : std::exp(zk) / (T(1) + std::exp(zk));
            gz[r * K + k] += self.grad[r] * (sig - t[r * K + k]) * invK;
          }
        }
      });
}

template <typename T>
Tensor<T> sigmoid_bce(const Tensor<T>& logits, const Tensor<T>& target) {
  return mean(sigmoid_bce_rows(logits, target));
}

template <typename T>
Tensor<T> stop_gradient(const Tensor<T>& x) {
  if (!x.valid()) throw ContractError("stop_gradient: invalid tensor");
  std::vector<T> y(x.values().begin(), x.values().end());
  return x.tape().record("stop_gradient", x.shape(), std::move(y), {x}, nullptr);
}

template <typename T>
Tensor<T> sum(const Tensor<T>& x) {
  T acc = 0;
  for (T v : x.values()) acc += v;
  const std::size_t xid = x.id();
  return x.tape().record("sum", {}, {acc}, {x},
                         [xid](Tape<T>& tape, const typename Tape<T>::Node& self) {
                           T* gx = tape.grad_buffer(xid);
                           if (!gx) return;
                           const std::size_t n = tape.node(xid).value.size();
                           for (std::size_t i = 0; i < n; ++i) gx[i] += self.grad[0];
                         });
}

template <typename T>
Tensor<T> mean(const Tensor<T>& x) {
  const std::size_t n = x.values().size();
  if (n == 0) throw InvalidInput("mean: empty tensor");
  return scale(sum(x), T(1) / static_cast<T>(n));
}

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_tape(a, b, "add");
  if (a.shape() != b.shape()) shape_mismatch("add", a.shape(), b.shape());
  std::vector<T> y(a.values().size());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = a.values()[i] + b.values()[i];
  const std::size_t aid = a.id(), bid = b.id();
  return a.tape().record("add", a.shape(), std::move(y), {a, b},
                         [aid, bid](Tape<T>& tape, const typename Tape<T>::Node& self) {
                           for (std::size_t id : {aid, bid}) {
                             if (T* g = tape.grad_buffer(id)) {
                               for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i];
                             }
                           }
                         });
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_tape(a, b, "mul");
  if (a.shape() != b.shape()) shape_mismatch("mul", a.shape(), b.shape());
  std::vector<T> y(a.values().size());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = a.values()[i] * b.values()[i];
  const std::size_t aid = a.id(), bid = b.id();
  return a.tape().record("mul", a.shape(), std::move(y), {a, b},
                         [aid, bid](Tape<T>& tape, const typename Tape<T>::Node& self) {
                           const auto& av = tape.node(aid).value;
                           const auto& bv = tape.node(bid).value;
                           if (T* ga = tape.grad_buffer(aid)) {
                             for (std::size_t i = 0; i < self.grad.size(); ++i) ga[i] += self.grad[i] * bv[i];
                           }
                           if (T* gb = tape.grad_buffer(bid)) {
                             for (std::size_t i = 0; i < self.grad.size(); ++i) gb[i] += self.grad[i] * av[i];
                           }
                         });
}

template <typename T>
Tensor<T> scale(const Tensor<T>& x, T factor) {
  std::vector<T> y(x.values().size());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = x.values()[i] * factor;
  const std::size_t xid = x.id();
  return x.tape().record("scale", x.shape(), std::move(y), {x},
                         [xid, factor](Tape<T>& tape, const typename Tape<T>::Node& self) {
                           T* gx = tape.grad_buffer(xid);
                           if (!gx) return;
                           for (std::size_t i = 0; i < self.grad.size(); ++i) gx[i] += self.grad[i] * factor;
                         });
}

template <typename T>
Tensor<T> weighted_sum(const Tensor<T>& v, std::span<const T> weights) {
  require_rank(v, 1, "weighted_sum");
  if (weights.size() != v.shape()[0]) {
    throw ShapeError("weighted_sum: " + std::to_string(weights.size()) + " weights for shape " +
                     to_string(v.shape()));
  }
  T acc = 0;
  for (std::size_t i = 0; i < weights.size(); ++i) acc += weights[i] * v.values()[i];
  const std::size_t vid = v.id();
  return v.tape().record(
      "weighted_sum", {}, {acc}, {v},
      [vid, w = std::vector<T>(weights.begin(), weights.end())](Tape<T>& tape,
                                                                 const typename Tape<T>::Node& self) {
        T* gv = tape.grad_buffer(vid);
        if (!gv) return;
        for (std::size_t i = 0; i < w.size(); ++i) gv[i] += w[i] * self.grad[0];
      });
}

// ---------------------------------------------------------------------------
// Finite differences

GradCheckReport finite_difference_check(const LossFn& loss, ParameterSet<double>& params,
                                        double h_default, std::size_t max_coords, std::uint64_t seed,
                                        const std::map<std::string, double>& step_overrides) {
  params.zero_grad();
  double base = 0.0;
  {
    Tape<double> tape;
    Tensor<double> l = loss(tape, params);
    base = l.item();
    tape.backward(l);
  }
  {
    Tape<double> tape;
    const double again = loss(tape, params).item();
    if (again != base) {
      throw ContractError("finite_difference_check: computation is not deterministic");
    }
  }
  struct Probe {
    double value;
    std::vector<bool> relu_signs;
  };
  auto eval = [&]() {
    Tape<double> tape;
    tape.set_grad_enabled(false);
    Probe out{loss(tape, params).item(), {}};
    for (std::size_t id = 0; id < tape.size(); ++id) {
      const auto& n = tape.node(id);
      if (n.op != "relu") continue;
      for (double v : tape.node(n.inputs[0]).value) out.relu_signs.push_back(v > 0.0);
    }
    return out;
  };
  const std::vector<bool> base_signs = eval().relu_signs;

  struct Coord {
    std::size_t param;
    std::size_t index;
  };
  std::vector<Coord> coords;
  std::size_t pi = 0;
  for (const auto& p : params) {
    for (std::size_t i = 0; i < p.value.size(); ++i) coords.push_back({pi, i});
    ++pi;
  }
  if (max_coords != 0 && coords.size() > max_coords) {
    Rng rng(splitmix64(seed));
    std::shuffle(coords.begin(), coords.end(), rng);
    coords.resize(std::max<std::size_t>(max_coords, 200));
  }

  std::vector<Parameter<double>*> by_index;
  for (auto& p : params) by_index.push_back(&p);

  GradCheckReport report;
  for (const Coord& c : coords) {
    Parameter<double>& p = *by_index[c.param];
    const auto step = step_overrides.find(p.name);
    const double h = step == step_overrides.end() ? h_default : step->second;
    const double saved = p.value[c.index];
    p.value[c.index] = saved + h;
    const Probe plus = eval();
    p.value[c.index] = saved - h;
    const Probe minus = eval();
    p.value[c.index] = saved;
    if (plus.relu_signs != base_signs || minus.relu_signs != base_signs) {
      ++report.kinked;
      continue;
    }
    const double numeric = (plus.value - minus.value) / (2.0 * h);
    const double analytic = p.grad.empty() ? 0.0 : p.grad[c.index];
    const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-8});
    const double rel = std::abs(analytic - numeric) / denom;
    ++report.coords_checked;
    if (rel > report.max_rel_error) {
      report.max_rel_error = rel;
      report.worst_param = p.name;
      report.worst_index = c.index;
    }
  }
  return report;
}

// ---------------------------------------------------------------------------
// Explicit instantiations

#define COSMIX_INSTANTIATE(T)                                                                  \
  template struct Parameter<T>;                                                                \
  template class ParameterSet<T>;                                                              \
  template class Tensor<T>;                                                                    \
  template class Tape<T>;                                                                      \
  template Tensor<T> dense(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);              \
  template Tensor<T> conv2d(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, Conv2dOptions); \
  template Tensor<T> relu(const Tensor<T>&);                                                   \
  template Tensor<T> global_avg_pool(const Tensor<T>&);                                        \
  template Tensor<T> reshape(const Tensor<T>&, Shape);                                         \
  template Tensor<T> l2_normalize(const Tensor<T>&, T);                                        \
  template Tensor<T> rowwise_dot(const Tensor<T>&, const Tensor<T>&);                          \
  template Tensor<T> cosine_similarity(const Tensor<T>&, const Tensor<T>&);                    \
  template Tensor<T> cross_entropy_rows(const Tensor<T>&, const Tensor<T>&);                   \
  template Tensor<T> softmax_cross_entropy(const Tensor<T>&, const Tensor<T>&);                \
  template Tensor<T> sigmoid_bce_rows(const Tensor<T>&, const Tensor<T>&);                     \
  template Tensor<T> sigmoid_bce(const Tensor<T>&, const Tensor<T>&);                          \
  template Tensor<T> stop_gradient(const Tensor<T>&);                                          \
  template Tensor<T> sum(const Tensor<T>&);                                                    \
  template Tensor<T> mean(const Tensor<T>&);                                                   \
  template Tensor<T> add(const Tensor<T>&, const Tensor<T>&);                                  \
  template Tensor<T> mul(const Tensor<T>&, const Tensor<T>&);                                  \
  template Tensor<T> scale(const Tensor<T>&, T);                                               \
  template Tensor<T> weighted_sum(const Tensor<T>&, std::span<const T>);

COSMIX_INSTANTIATE(float)
COSMIX_INSTANTIATE(double)

#undef COSMIX_INSTANTIATE

}  // namespace cosmix::ad
