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

#ifndef COSMIX_AUTODIFF_H_
#define COSMIX_AUTODIFF_H_

// A small tape-based reverse-mode differentiation engine. It provides only
// the primitives the keyword model and its losses need; every op has an
// explicit gradient rule and explicit shapes (no broadcasting beyond the
// bias add in dense/conv2d).
//
// Nodes are appended to a Tape in evaluation order, so the node list is a
// topological order by construction and backward() is a single reverse
// sweep. Tensor is a cheap handle (tape pointer + node index).

#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace cosmix::ad {

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& shape);
std::string to_string(const Shape& shape);

template <typename T>
struct Parameter {
  std::string name;
  Shape shape;
  std::vector<T> value;
  std::vector<T> grad;  // empty until the first backward() reaches it
};

// Named trainable tensors in insertion order.
template <typename T>
class ParameterSet {
 public:
  Parameter<T>& add(std::string name, Shape shape, T fill = T(0));
  Parameter<T>& at(std::string_view name);
  const Parameter<T>& at(std::string_view name) const;
  bool contains(std::string_view name) const;

  std::size_t size() const { return params_.size(); }
  std::size_t scalar_count() const;
  void zero_grad();

  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }
  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }

  template <typename U>
  ParameterSet<U> cast() const {
    ParameterSet<U> out;
    for (const auto& p : params_) {
      auto& q = out.add(p.name, p.shape);
      for (std::size_t i = 0; i < p.value.size(); ++i) q.value[i] = static_cast<U>(p.value[i]);
    }
    return out;
  }

 private:
  std::vector<Parameter<T>> params_;
};

template <typename T>
class Tape;

template <typename T>
class Tensor {
 public:
  Tensor() = default;

  bool valid() const { return tape_ != nullptr; }
  std::size_t id() const { return id_; }
  Tape<T>& tape() const { return *tape_; }

  const Shape& shape() const;
  std::span<const T> values() const;
  // Empty when the node was never reached by backward().
  std::span<const T> grad() const;
  bool requires_grad() const;
  std::size_t size() const { return values().size(); }
  T item() const;

 private:
  friend class Tape<T>;
  Tensor(Tape<T>* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape<T>* tape_ = nullptr;
  std::size_t id_ = 0;
};

template <typename T>
class Tape {
 public:
  struct Node;
  using BackwardFn = std::function<void(Tape&, const Node&)>;

  struct Node {
    std::string_view op;
    Shape shape;
    std::vector<T> value;
    std::vector<T> grad;
    bool requires_grad = false;
    std::vector<std::size_t> inputs;
    BackwardFn backward;
    Parameter<T>* bound = nullptr;
  };

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // With gradients disabled, bound parameters are plain constants and ops
  // record no backward closures (evaluation and frozen target branches).
  void set_grad_enabled(bool enabled) { grad_enabled_ = enabled; }
  bool grad_enabled() const { return grad_enabled_; }

  Tensor<T> constant(Shape shape, std::vector<T> values);
  Tensor<T> variable(Shape shape, std::vector<T> values);
  // Leaf mirroring `param`; backward() adds its gradient into param.grad.
  // Binding the same parameter twice returns the same node.
  Tensor<T> bind(Parameter<T>& param);

  // Reverse sweep from a scalar loss. One call per tape.
  void backward(const Tensor<T>& loss);

  std::size_t size() const { return nodes_.size(); }
  const Node& node(std::size_t id) const { return nodes_[id]; }
  // Rows that hit the l2_normalize epsilon floor.
  std::size_t degenerate_rows() const { return degenerate_rows_; }
  void note_degenerate_rows(std::size_t n) { degenerate_rows_ += n; }

  // Text DAG, one node per line.
  std::string dump() const;

  // Used by op implementations.
  Tensor<T> record(std::string_view op, Shape shape, std::vector<T> value,
                   std::initializer_list<Tensor<T>> inputs, BackwardFn backward);
  // Gradient buffer of `id`, zero-initialised on first use; nullptr when the
  // node does not require a gradient.
  T* grad_buffer(std::size_t id);

 private:
  friend class Tensor<T>;
  std::vector<Node> nodes_;
  std::unordered_map<const Parameter<T>*, std::size_t> bound_;
  bool grad_enabled_ = true;
  bool backward_done_ = false;
  std::size_t degenerate_rows_ = 0;
};

struct Conv2dOptions {
  std::size_t stride = 1;
  std::size_t padding = 0;
};

// x [B, in] * W [in, out] + b [out]
template <typename T>
Tensor<T> dense(const Tensor<T>& x, const Tensor<T>& W, const Tensor<T>& b);

// Cross-correlation of x [B, C_in, H, W] with k [C_out, C_in, kh, kw]; `bias`
// [C_out] may be an invalid (default) Tensor for no bias.
template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& k, const Tensor<T>& bias,
                 Conv2dOptions options);

template <typename T>
Tensor<T> relu(const Tensor<T>& x);

// [B, C, H, W] -> [B, C]
template <typename T>
Tensor<T> global_avg_pool(const Tensor<T>& x);

template <typename T>
Tensor<T> reshape(const Tensor<T>& x, Shape shape);

// Rows divided by max(||row||, eps).
template <typename T>
Tensor<T> l2_normalize(const Tensor<T>& v, T eps = T(1e-12));

// [B, D] x [B, D] -> [B]
template <typename T>
Tensor<T> rowwise_dot(const Tensor<T>& a, const Tensor<T>& b);

template <typename T>
Tensor<T> cosine_similarity(const Tensor<T>& a, const Tensor<T>& b);

// Per-row -sum_k t_k log softmax(z)_k for soft targets on the simplex.
// Targets are treated as constants.
template <typename T>
Tensor<T> cross_entropy_rows(const Tensor<T>& logits, const Tensor<T>& target);

// Batch mean of cross_entropy_rows.
template <typename T>
Tensor<T> softmax_cross_entropy(const Tensor<T>& logits, const Tensor<T>& target);

// Per-row mean over K of max(z,0) - z t + log(1 + exp(-|z|)).
template <typename T>
Tensor<T> sigmoid_bce_rows(const Tensor<T>& logits, const Tensor<T>& target);

template <typename T>
Tensor<T> sigmoid_bce(const Tensor<T>& logits, const Tensor<T>& target);

// Identity forward; no gradient reaches anything upstream.
template <typename T>
Tensor<T> stop_gradient(const Tensor<T>& x);

template <typename T>
Tensor<T> sum(const Tensor<T>& x);

template <typename T>
Tensor<T> mean(const Tensor<T>& x);

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);

template <typename T>
Tensor<T> scale(const Tensor<T>& x, T factor);

// sum_i weights[i] * v[i] for a rank-1 v.
template <typename T>
Tensor<T> weighted_sum(const Tensor<T>& v, std::span<const T> weights);

// Mutation-testing hook: when set, the backward rule of the named op
// (e.g. "conv2d") returns a corrupted gradient. Empty string disables it.
void set_gradient_fault(std::string op);
const std::string& gradient_fault();

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::size_t coords_checked = 0;
  // Coordinates left out because some relu input changed sign between
  // p - h and p + h.
  std::size_t kinked = 0;
  std::string worst_param;
  std::size_t worst_index = 0;
};

using LossFn = std::function<Tensor<double>(Tape<double>&, ParameterSet<double>&)>;

// Central differences (f(p+h) - f(p-h)) / 2h against backward(). Checks
// every coordinate, or a seeded random subset of `max_coords` (>= 200) when
// the model is larger. Relative error uses max(|a|, |n|, 1e-8).
// `step_overrides` maps parameter names to their own step size.
// Coordinates whose step crosses a relu kink are counted, not compared.
GradCheckReport finite_difference_check(const LossFn& loss, ParameterSet<double>& params,
                                        double h = 1e-5, std::size_t max_coords = 0,
                                        std::uint64_t seed = 0,
                                        const std::map<std::string, double>& step_overrides = {});

}  // namespace cosmix::ad

#endif  // COSMIX_AUTODIFF_H_
