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

#include "gradinv/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <sstream>
#include <unordered_map>
#include <unordered_set>
#include <utility>

#include <Eigen/Core>

#include "gradinv/errors.hpp"
#include "gradinv/ops.hpp"

namespace gradinv {
namespace {

std::atomic<std::int64_t> g_live_bytes{0};
std::atomic<std::int64_t> g_peak_bytes{0};

void note_alloc(std::int64_t bytes) {
  const std::int64_t now = g_live_bytes.fetch_add(bytes) + bytes;
  std::int64_t peak = g_peak_bytes.load();
  while (now > peak && !g_peak_bytes.compare_exchange_weak(peak, now)) {
  }
}

thread_local bool t_grad_enabled = true;

class FunctionNode final : public Node {
 public:
  FunctionNode(std::string name, std::vector<Tensor> inputs, BackwardFn fn,
               bool double_backward)
      : Node(std::move(name), std::move(inputs)),
        fn_(std::move(fn)),
        double_backward_(double_backward) {}

  std::vector<Tensor> backward(const Tensor& grad_output,
                               const std::vector<bool>& needs) const override {
    return fn_(grad_output, needs);
  }
  bool supports_double_backward() const override { return double_backward_; }

 private:
  BackwardFn fn_;
  bool double_backward_;
};

}  // namespace

struct Storage {
  explicit Storage(std::vector<double> v) : values(std::move(v)) {
    note_alloc(static_cast<std::int64_t>(values.size() * sizeof(double)));
  }
  ~Storage() {
    g_live_bytes.fetch_sub(
        static_cast<std::int64_t>(values.size() * sizeof(double)));
  }
  Storage(const Storage&) = delete;
  Storage& operator=(const Storage&) = delete;

  std::vector<double> values;
};

struct TensorImpl {
  Shape shape;
  std::shared_ptr<Storage> storage;
  bool requires_grad = false;
  std::shared_ptr<Node> grad_fn;
};

std::int64_t shape_numel(const Shape& shape) {
  std::int64_t n = 1;
  for (auto d : shape) {
    if (d < 0) throw ShapeError("negative dimension in shape " + shape_str(shape));
    n *= d;
  }
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ", ";
    os << shape[i];
  }
  os << ']';
  return os.str();
}

Tensor Tensor::zeros(Shape shape) { return full(std::move(shape), 0.0); }

Tensor Tensor::full(Shape shape, double value) {
  const auto n = shape_numel(shape);
  return from_data(std::move(shape), std::vector<double>(n, value));
}

Tensor Tensor::scalar(double value) { return from_data({1}, {value}); }

Tensor Tensor::from_data(Shape shape, std::vector<double> data,
                         bool requires_grad) {
  if (static_cast<std::int64_t>(data.size()) != shape_numel(shape)) {
    throw ShapeError("data length " + std::to_string(data.size()) +
                     " does not match shape " + shape_str(shape));
  }
  auto impl = std::make_shared<TensorImpl>();
  impl->shape = std::move(shape);
  impl->storage = std::make_shared<Storage>(std::move(data));
  impl->requires_grad = requires_grad;
  return Tensor(std::move(impl));
}

const Shape& Tensor::shape() const { return impl_->shape; }

std::int64_t Tensor::numel() const {
  return static_cast<std::int64_t>(impl_->storage->values.size());
}

std::span<const double> Tensor::data() const { return impl_->storage->values; }

std::span<double> Tensor::mutable_data() { return impl_->storage->values; }

std::vector<double> Tensor::to_vector() const {
  return impl_->storage->values;
}

double Tensor::item() const {
  if (numel() != 1) {
    throw ShapeError("item() on tensor of shape " + shape_str(shape()));
  }
  return impl_->storage->values[0];
}

bool Tensor::requires_grad() const {
  return impl_ && (impl_->requires_grad || impl_->grad_fn != nullptr);
}

bool Tensor::is_leaf() const { return impl_->grad_fn == nullptr; }

Tensor& Tensor::set_requires_grad(bool flag) {
  if (impl_->grad_fn) {
    throw Error("set_requires_grad on a non-leaf tensor");
  }
  impl_->requires_grad = flag;
  return *this;
}

Tensor Tensor::detach() const {
  auto impl = std::make_shared<TensorImpl>();
  impl->shape = impl_->shape;
  impl->storage = impl_->storage;
  return Tensor(std::move(impl));
}

Tensor Tensor::clone() const {
  return from_data(impl_->shape, impl_->storage->values);
}

const std::shared_ptr<Node>& Tensor::grad_fn() const { return impl_->grad_fn; }

Tensor make_result(Shape shape, std::vector<double> data) {
  if (!Eigen::Map<const Eigen::ArrayXd>(data.data(), data.size()).allFinite()) {
    throw NumericFault("non-finite value produced (shape " + shape_str(shape) +
                       ")");
  }
  return Tensor::from_data(std::move(shape), std::move(data));
}

void attach_node(Tensor& t, std::shared_ptr<Node> node) {
  t.impl_->grad_fn = std::move(node);
}

Tensor record(std::string name, std::vector<Tensor> inputs, Tensor output,
              BackwardFn backward, bool double_backward) {
  if (!GradMode::enabled()) return output;
  const bool any = std::any_of(inputs.begin(), inputs.end(),
                               [](const Tensor& t) { return t.requires_grad(); });
  if (!any) return output;
  attach_node(output, std::make_shared<FunctionNode>(
                          std::move(name), std::move(inputs),
                          std::move(backward), double_backward));
  return output;
}

bool GradMode::enabled() { return t_grad_enabled; }
void GradMode::set_enabled(bool enabled) { t_grad_enabled = enabled; }

bool GradResult::any_unreachable() const {
  return std::any_of(unreachable.begin(), unreachable.end(),
                     [](bool b) { return b; });
}

GradResult grad(const Tensor& output, std::span<const Tensor> wrt,
                bool create_graph) {
  if (!output.defined() || output.numel() != 1) {
    throw ShapeError("grad() needs a one-element output, got " +
                     (output.defined() ? shape_str(output.shape())
                                       : std::string("undefined")));
  }
  std::unordered_set<const TensorImpl*> targets;
  for (const auto& w : wrt) {
    if (!w.requires_grad()) {
      throw Error("grad() target does not require grad");
    }
    targets.insert(w.id());
  }

  // Post-order DFS over tensors; `reaches` marks tensors from which some
  // target is reachable through recorded nodes.
  std::vector<Tensor> order;
  std::unordered_map<const TensorImpl*, bool> reaches;
  struct Frame {
    Tensor t;
    std::size_t next;
  };
  std::vector<Frame> stack;
  if (output.requires_grad()) {
    stack.push_back({output, 0});
    reaches.emplace(output.id(), targets.count(output.id()) > 0);
  }
  while (!stack.empty()) {
    Frame& top = stack.back();
    const auto& node = top.t.grad_fn();
    const std::size_t n_in = node ? node->inputs().size() : 0;
    if (top.next < n_in) {
      const Tensor& in = node->inputs()[top.next++];
      if (!in.requires_grad() || reaches.count(in.id())) continue;
      reaches.emplace(in.id(), targets.count(in.id()) > 0);
      stack.push_back({in, 0});
      continue;
    }
    bool r = reaches[top.t.id()];
    if (node) {
      for (const auto& in : node->inputs()) {
        if (in.requires_grad() && reaches[in.id()]) r = true;
      }
    }
    reaches[top.t.id()] = r;
    order.push_back(top.t);
    stack.pop_back();
  }

  GradModeGuard mode(create_graph);
  std::unordered_map<const TensorImpl*, Tensor> acc;
  if (output.requires_grad()) acc.emplace(output.id(), Tensor::full(output.shape(), 1.0));

  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    const Tensor& t = *it;
    const auto& node = t.grad_fn();
    if (!node || !reaches[t.id()]) continue;
    auto found = acc.find(t.id());
    if (found == acc.end()) continue;
    const Tensor g = found->second;
    if (!targets.count(t.id())) acc.erase(found);

    const auto& inputs = node->inputs();
    std::vector<bool> needs(inputs.size());
    bool any = false;
    for (std::size_t i = 0; i < inputs.size(); ++i) {
      needs[i] = inputs[i].requires_grad() && reaches[inputs[i].id()];
      any = any || needs[i];
    }
    if (!any) continue;
    if (create_graph && !node->supports_double_backward()) {
      throw UnsupportedOpError("op '" + std::string(node->name()) +
                               "' has no double-backward rule");
    }
    auto gins = node->backward(g, needs);
    for (std::size_t i = 0; i < inputs.size(); ++i) {
      if (!needs[i] || !gins[i].defined()) continue;
      auto [slot, inserted] = acc.try_emplace(inputs[i].id(), gins[i]);
      if (!inserted) slot->second = ops::add(slot->second, gins[i]);
    }
  }

  GradResult result;
  for (const auto& w : wrt) {
    auto found = acc.find(w.id());
    if (found == acc.end()) {
      result.grads.push_back(Tensor::zeros(w.shape()));
      result.unreachable.push_back(true);
    } else {
      result.grads.push_back(found->second);
      result.unreachable.push_back(false);
    }
  }
  return result;
}

GradResult grad(const Tensor& output, std::initializer_list<Tensor> wrt,
                bool create_graph) {
  return grad(output, std::span<const Tensor>(wrt.begin(), wrt.size()),
              create_graph);
}

std::int64_t tensor_bytes_live() { return g_live_bytes.load(); }
std::int64_t tensor_bytes_peak() { return g_peak_bytes.load(); }
void reset_tensor_bytes_peak() { g_peak_bytes.store(g_live_bytes.load()); }

}  // namespace gradinv
