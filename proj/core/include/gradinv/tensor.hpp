// Copyright 2026 The gradinv Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace gradinv {

using Shape = std::vector<std::int64_t>;

std::int64_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

class Node;
struct TensorImpl;

// Dense float64 array that may carry a handle into the define-by-run graph.
//
// Tensors are values: ops never mutate their inputs, they allocate a new
// output. The storage of a leaf may be written through mutable_data() before
// it is used in any computation.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape);
  static Tensor full(Shape shape, double value);
  static Tensor scalar(double value);
  static Tensor from_data(Shape shape, std::vector<double> data,
                          bool requires_grad = false);

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const;
  std::int64_t dim(std::size_t i) const { return shape()[i]; }
  std::size_t rank() const { return shape().size(); }
  std::int64_t numel() const;

  std::span<const double> data() const;
  std::span<double> mutable_data();
  std::vector<double> to_vector() const;
  double item() const;
  double operator[](std::int64_t i) const { return data()[i]; }

  // True for leaves flagged as differentiation targets and for every tensor
  // produced by a recorded op.
  bool requires_grad() const;
  bool is_leaf() const;
  Tensor& set_requires_grad(bool flag);

  // Same values, no graph history, requires_grad=false. Shares storage.
  Tensor detach() const;
  // Deep copy of the values as a fresh leaf.
  Tensor clone() const;

  const std::shared_ptr<Node>& grad_fn() const;
  const TensorImpl* id() const { return impl_.get(); }

 private:
  friend Tensor make_result(Shape, std::vector<double>);
  friend void attach_node(Tensor&, std::shared_ptr<Node>);
  explicit Tensor(std::shared_ptr<TensorImpl> impl) : impl_(std::move(impl)) {}

  std::shared_ptr<TensorImpl> impl_;
};

// Backward rule of one recorded op. backward() must itself be expressed in
// differentiable ops so that running it with grad mode enabled records a
// graph of the gradient (double backprop).
class Node {
 public:
  Node(std::string name, std::vector<Tensor> inputs)
      : name_(std::move(name)), inputs_(std::move(inputs)) {}
  virtual ~Node() = default;

  std::string_view name() const { return name_; }
  const std::vector<Tensor>& inputs() const { return inputs_; }

  // Returns one gradient per input; entries whose `needs` flag is false may
  // be left undefined.
  virtual std::vector<Tensor> backward(const Tensor& grad_output,
                                       const std::vector<bool>& needs) const = 0;
  virtual bool supports_double_backward() const { return true; }

 private:
  std::string name_;
  std::vector<Tensor> inputs_;
};

using BackwardFn = std::function<std::vector<Tensor>(
    const Tensor& grad_output, const std::vector<bool>& needs)>;

// Records `output` as the result of `name` applied to `inputs` when grad mode
// is on and any input requires grad. Returns `output` for chaining.
Tensor record(std::string name, std::vector<Tensor> inputs, Tensor output,
              BackwardFn backward, bool double_backward = true);

// Fresh output tensor wrapping `data`; checks length and finiteness.
Tensor make_result(Shape shape, std::vector<double> data);
void attach_node(Tensor& t, std::shared_ptr<Node> node);

// Thread-local switch that controls op recording.
class GradMode {
 public:
  static bool enabled();
  static void set_enabled(bool enabled);
};

class GradModeGuard {
 public:
  explicit GradModeGuard(bool enabled) : previous_(GradMode::enabled()) {
    GradMode::set_enabled(enabled);
  }
  ~GradModeGuard() { GradMode::set_enabled(previous_); }
  GradModeGuard(const GradModeGuard&) = delete;
  GradModeGuard& operator=(const GradModeGuard&) = delete;

 private:
  bool previous_;
};

struct NoGradGuard : GradModeGuard {
  NoGradGuard() : GradModeGuard(false) {}
};

struct GradResult {
  std::vector<Tensor> grads;
  // unreachable[i] is set when wrt[i] does not influence the output; the
  // matching gradient is then all zeros.
  std::vector<bool> unreachable;
  bool any_unreachable() const;
};

// Reverse-mode derivative of a one-element tensor w.r.t. `wrt`. With
// create_graph the returned gradients are graph-recorded and can be
// differentiated again.
GradResult grad(const Tensor& output, std::span<const Tensor> wrt,
                bool create_graph = false);
GradResult grad(const Tensor& output, std::initializer_list<Tensor> wrt,
                bool create_graph = false);

// Live bytes held by tensor storage in this process, and the high-water mark
// since the last reset. Used for compute accounting.
std::int64_t tensor_bytes_live();
std::int64_t tensor_bytes_peak();
void reset_tensor_bytes_peak();

}  // namespace gradinv
