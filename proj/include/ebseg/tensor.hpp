#pragma once

#include <algorithm>
#include <cstddef>
#include <functional>
#include <memory>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace ebseg {

using Shape = std::vector<std::size_t>;

inline std::size_t numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_str(const Shape& shape);

template <class T>
struct TensorNode {
  Shape shape;
  std::vector<T> data;
  std::vector<T> grad;  // empty until a gradient is first accumulated
  bool requires_grad = false;
  bool produced_by_tape = false;
};

/// Shared handle to a dense row-major array. Copies alias the same storage;
/// use clone() for a deep copy. Feature maps are laid out N,C,H,W.
template <class T>
class Tensor {
 public:
  Tensor() = default;

  explicit Tensor(Shape shape, T fill = T(0)) : node_(std::make_shared<TensorNode<T>>()) {
    node_->data.assign(ebseg::numel(shape), fill);
    node_->shape = std::move(shape);
  }

  Tensor(Shape shape, std::vector<T> values) : node_(std::make_shared<TensorNode<T>>()) {
    if (ebseg::numel(shape) != values.size()) {
      throw std::invalid_argument("tensor: " + std::to_string(values.size()) +
                                  " values do not fill shape " + shape_str(shape));
    }
    node_->shape = std::move(shape);
    node_->data = std::move(values);
  }

  static Tensor zeros(Shape shape) { return Tensor(std::move(shape), T(0)); }
  static Tensor parameter(Shape shape, std::vector<T> values) {
    Tensor t(std::move(shape), std::move(values));
    t.set_requires_grad(true);
    return t;
  }

  bool defined() const { return node_ != nullptr; }
  explicit operator bool() const { return defined(); }

  const Shape& shape() const { return node().shape; }
  std::size_t dim(std::size_t i) const { return node().shape.at(i); }
  std::size_t ndim() const { return node().shape.size(); }
  std::size_t numel() const { return node().data.size(); }

  std::span<T> data() { return node().data; }
  std::span<const T> data() const { return node().data; }
  T& operator[](std::size_t i) { return node().data[i]; }
  const T& operator[](std::size_t i) const { return node().data[i]; }
  T item() const {
    if (numel() != 1) throw std::invalid_argument("item() on tensor of shape " + shape_str(shape()));
    return node().data[0];
  }

  bool requires_grad() const { return node().requires_grad; }
  void set_requires_grad(bool on) { node().requires_grad = on; }

  bool has_grad() const { return !node().grad.empty(); }
  // Gradient buffers are the one mutable part of a tensor once created, so
  // access goes through the handle regardless of its constness.
  std::span<T> grad() const {
    ensure_grad();
    return node_->grad;
  }
  void ensure_grad() const {
    auto& n = *node_checked();
    if (n.grad.empty()) n.grad.assign(n.data.size(), T(0));
  }
  void zero_grad() const {
    auto& g = node_checked()->grad;
    std::fill(g.begin(), g.end(), T(0));
  }

  Tensor clone() const {
    Tensor t(shape(), std::vector<T>(node().data));
    t.set_requires_grad(requires_grad());
    return t;
  }

  template <class U>
  Tensor<U> cast() const {
    std::vector<U> v(node().data.begin(), node().data.end());
    Tensor<U> t(shape(), std::move(v));
    t.set_requires_grad(requires_grad());
    return t;
  }

  const std::shared_ptr<TensorNode<T>>& node_ptr() const { return node_; }
  static Tensor from_node(std::shared_ptr<TensorNode<T>> n) {
    Tensor t;
    t.node_ = std::move(n);
    return t;
  }

  bool same_storage(const Tensor& other) const { return node_ == other.node_; }

 private:
  TensorNode<T>* node_checked() const {
    if (!node_) throw std::logic_error("use of undefined tensor");
    return node_.get();
  }
  TensorNode<T>& node() {
    if (!node_) throw std::logic_error("use of undefined tensor");
    return *node_;
  }
  const TensorNode<T>& node() const {
    if (!node_) throw std::logic_error("use of undefined tensor");
    return *node_;
  }

  std::shared_ptr<TensorNode<T>> node_;
};

}  // namespace ebseg
