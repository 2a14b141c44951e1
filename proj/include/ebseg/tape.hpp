#pragma once

// Reverse-mode autodiff over dense tensors. A Tape records every op whose
// inputs require a gradient, in creation order; backward() replays the records
// in exact reverse order. One tape per forward pass; tapes are not shared
// across threads.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <span>
#include <vector>

#include "ebseg/label_map.hpp"
#include "ebseg/tensor.hpp"

namespace ebseg {

struct Conv2dOptions {
  std::size_t stride = 1;
  std::size_t dilation = 1;
  std::size_t pad = 0;
};

enum class NormMode { train, eval };

enum class EltwiseKind { add, sub, mul, relu, sigmoid };

template <class T>
struct BatchNormState {
  std::vector<T> running_mean;
  std::vector<T> running_var;
  T momentum = T(0.1);
  T eps = T(1e-5);

  explicit BatchNormState(std::size_t channels = 0)
      : running_mean(channels, T(0)), running_var(channels, T(1)) {}
};

template <class T>
class Tape {
 public:
  explicit Tape(bool recording = true) : recording_(recording) {}

  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;
  Tape(Tape&&) = default;
  Tape& operator=(Tape&&) = default;

  bool recording() const { return recording_; }
  std::size_t size() const { return ops_.size(); }
  void clear() { ops_.clear(); }

  /// x: N x Cin x H x W, w: Cout x Cin x K x K, b: Cout (or undefined for no bias).
  Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b,
                   Conv2dOptions opt = {});

  /// Bilinear interpolation with half-pixel centres (align_corners = false).
  Tensor<T> resize_bilinear(const Tensor<T>& x, std::size_t out_h, std::size_t out_w);

  Tensor<T> concat_channels(const Tensor<T>& a, const Tensor<T>& b);

  Tensor<T> eltwise(EltwiseKind kind, const Tensor<T>& a, const Tensor<T>& b = {});
  Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) { return eltwise(EltwiseKind::add, a, b); }
  Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) { return eltwise(EltwiseKind::sub, a, b); }
  Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) { return eltwise(EltwiseKind::mul, a, b); }
  Tensor<T> relu(const Tensor<T>& a) { return eltwise(EltwiseKind::relu, a); }
  Tensor<T> sigmoid(const Tensor<T>& a) { return eltwise(EltwiseKind::sigmoid, a); }

  Tensor<T> scale(const Tensor<T>& a, T factor);
  /// Sum of all elements, shape {1}.
  Tensor<T> sum(const Tensor<T>& a);

  /// a: M x K, b: K x P.
  Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b);
  Tensor<T> transpose(const Tensor<T>& a);
  /// Top-left rows x cols block of a 2-D tensor.
  Tensor<T> crop2d(const Tensor<T>& a, std::size_t rows, std::size_t cols);

  /// Per-channel normalisation over N,H,W. Train mode uses batch statistics and
  /// updates the running estimates in `state`; eval mode uses the running ones.
  Tensor<T> batchnorm2d(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta,
                        BatchNormState<T>& state, NormMode mode);

  /// Rows of image `n` of an N x C x H x W map at flat positions `indices`: K x C.
  Tensor<T> gather_points(const Tensor<T>& f, std::size_t n, std::span<const std::size_t> indices);

  /// Copy of `f` whose image-`n` columns at `indices` are replaced by the rows of `g`.
  Tensor<T> scatter_points(const Tensor<T>& f, std::size_t n, const Tensor<T>& g,
                           std::span<const std::size_t> indices);

  /// Mean softmax cross-entropy over pixels whose label != ignore. logits is
  /// N x C x H x W, labels N*H*W. Zero (and zero gradient) when every pixel is ignored.
  Tensor<T> cross_entropy_ignore(const Tensor<T>& logits, std::span<const std::uint8_t> labels,
                                 std::uint8_t ignore = kIgnoreLabel);

  /// 1 - (2 sum(p g) + eps) / (sum p + sum g + eps) over every element.
  Tensor<T> dice_loss(const Tensor<T>& pred, std::span<const std::uint8_t> target, T eps = T(1));

  void backward(const Tensor<T>& loss);

 private:
  struct Record {
    const char* name;
    Tensor<T> output;
    std::function<void()> backward;
  };

  bool needs_grad(std::initializer_list<const Tensor<T>*> inputs) const;
  Tensor<T> make_output(Shape shape, bool track);
  void push(const char* name, const Tensor<T>& out, std::function<void()> fn);

  bool recording_;
  std::vector<Record> ops_;
};

template <class T>
bool Tape<T>::needs_grad(std::initializer_list<const Tensor<T>*> inputs) const {
  if (!recording_) return false;
  for (const Tensor<T>* t : inputs) {
    if (t != nullptr && t->defined() && t->requires_grad()) return true;
  }
  return false;
}

template <class T>
Tensor<T> Tape<T>::make_output(Shape shape, bool track) {
  Tensor<T> out(std::move(shape));
  if (track) {
    out.set_requires_grad(true);
    out.node_ptr()->produced_by_tape = true;
  }
  return out;
}

template <class T>
void Tape<T>::push(const char* name, const Tensor<T>& out, std::function<void()> fn) {
  ops_.push_back(Record{name, out, std::move(fn)});
}

}  // namespace ebseg
