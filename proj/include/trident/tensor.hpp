// Copyright 2026 The tridentse authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace trident::nn {

using Shape = std::vector<int>;

inline int64_t shape_numel(const Shape& s) {
  int64_t n = 1;
  for (int d : s) {
    if (d <= 0) throw std::invalid_argument("tensor: nonpositive extent in shape");
    n *= d;
  }
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::string out = "(";
  for (size_t i = 0; i < s.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(s[i]);
  }
  return out + ")";
}

// One dense array plus an optional gradient buffer of the same shape.
template <class Real>
struct Node {
  Shape shape;
  std::vector<Real> value;
  std::vector<Real> grad;  // empty until ensure_grad()
  bool requires_grad = false;
  int id = -1;  // assigned when the node enters a tape

  int64_t numel() const { return static_cast<int64_t>(value.size()); }

  void ensure_grad() {
    if (grad.size() != value.size()) grad.assign(value.size(), Real(0));
  }
  void zero_grad() {
    if (!grad.empty()) std::fill(grad.begin(), grad.end(), Real(0));
  }
};

// Value-semantic handle to a Node. Copies share the underlying storage.
template <class Real>
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::shared_ptr<Node<Real>> n) : node_(std::move(n)) {}

  static Tensor zeros(Shape shape) { return filled(std::move(shape), Real(0)); }

  static Tensor filled(Shape shape, Real v) {
    auto n = std::make_shared<Node<Real>>();
    int64_t count = shape_numel(shape);
    n->shape = std::move(shape);
    n->value.assign(static_cast<size_t>(count), v);
    return Tensor(std::move(n));
  }

  static Tensor from_data(Shape shape, std::vector<Real> data) {
    if (shape_numel(shape) != static_cast<int64_t>(data.size()))
      throw std::invalid_argument("tensor: data length does not match shape " + shape_str(shape));
    auto n = std::make_shared<Node<Real>>();
    n->shape = std::move(shape);
    n->value = std::move(data);
    return Tensor(std::move(n));
  }

  static Tensor scalar(Real v) { return filled({1}, v); }

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  int dim(int i) const { return node_->shape[static_cast<size_t>(i)]; }
  int rank() const { return static_cast<int>(node_->shape.size()); }
  int64_t numel() const { return node_->numel(); }

  std::vector<Real>& data() { return node_->value; }
  const std::vector<Real>& data() const { return node_->value; }
  std::vector<Real>& grad() { return node_->grad; }
  const std::vector<Real>& grad() const { return node_->grad; }

  Real item() const {
    if (numel() != 1) throw std::logic_error("tensor: item() on non-scalar");
    return node_->value[0];
  }

  bool requires_grad() const { return node_->requires_grad; }
  Tensor& set_requires_grad(bool b) {
    node_->requires_grad = b;
    return *this;
  }
  void ensure_grad() { node_->ensure_grad(); }
  void zero_grad() { node_->zero_grad(); }

  std::shared_ptr<Node<Real>> node() const { return node_; }

 private:
  std::shared_ptr<Node<Real>> node_;
};

// Record of executed primitives in forward order; backward walks it once in
// reverse. Forward order is a topological order by construction.
template <class Real>
class Tape {
 public:
  struct Entry {
    std::string op;
    std::vector<int> input_ids;
    int output_id = -1;
    std::function<void()> backward;
  };

  int register_node(const std::shared_ptr<Node<Real>>& n) {
    if (n->id < 0) {
      n->id = next_id_++;
    }
    return n->id;
  }

  void record(std::string op, const std::vector<Tensor<Real>>& inputs, const Tensor<Real>& output,
              std::function<void()> backward) {
    Entry e;
    e.op = std::move(op);
    for (const auto& t : inputs) e.input_ids.push_back(register_node(t.node()));
    e.output_id = register_node(output.node());
    e.backward = std::move(backward);
    entries_.push_back(std::move(e));
  }

  // Seeds d(loss)/d(loss) = 1 and propagates through every entry in reverse.
  void backward(const Tensor<Real>& loss) {
    if (loss.numel() != 1) throw std::invalid_argument("tape: backward seed must be scalar");
    loss.node()->ensure_grad();
    loss.node()->grad[0] += Real(1);
    backward_from_seeded();
  }

  // Propagates from whatever output grads the caller has already seeded.
  void backward_from_seeded() {
    for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) {
      it->backward();
      ++visited_;
    }
  }

  size_t size() const { return entries_.size(); }
  size_t visited() const { return visited_; }
  const std::vector<Entry>& entries() const { return entries_; }

  bool finite_checks = false;

 private:
  std::vector<Entry> entries_;
  size_t visited_ = 0;
  int next_id_ = 0;
};

template <class Real>
inline Tape<Real>*& tape_slot() {
  thread_local Tape<Real>* current = nullptr;
  return current;
}

template <class Real>
inline Tape<Real>* current_tape() {
  return tape_slot<Real>();
}

template <class Real>
class TapeScope {
 public:
  explicit TapeScope(Tape<Real>& t) : prev_(tape_slot<Real>()) { tape_slot<Real>() = &t; }
  ~TapeScope() { tape_slot<Real>() = prev_; }
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;

 private:
  Tape<Real>* prev_;
};

}  // namespace trident::nn
