#pragma once

#include <cmath>
#include <cstddef>
#include <random>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "ebseg/tape.hpp"
#include "ebseg/tensor.hpp"

namespace ebseg {

/// Named trainable tensors plus batch-norm running statistics, kept in
/// insertion order so that serialisation and optimiser updates are stable.
template <class T>
class ParamStore {
 public:
  struct Entry {
    std::string name;
    Tensor<T> value;
  };
  struct BnEntry {
    std::string name;
    BatchNormState<T> state;
  };

  Tensor<T>& add(const std::string& name, Shape shape, std::vector<T> values) {
    if (index_.count(name)) throw std::invalid_argument("params: duplicate tensor " + name);
    index_[name] = tensors_.size();
    tensors_.push_back({name, Tensor<T>::parameter(std::move(shape), std::move(values))});
    return tensors_.back().value;
  }

  BatchNormState<T>& add_bn(const std::string& name, std::size_t channels) {
    if (bn_index_.count(name)) throw std::invalid_argument("params: duplicate batch norm " + name);
    bn_index_[name] = bn_.size();
    bn_.push_back({name, BatchNormState<T>(channels)});
    return bn_.back().state;
  }

  bool contains(const std::string& name) const { return index_.count(name) != 0; }

  const Tensor<T>& at(const std::string& name) const {
    const auto it = index_.find(name);
    if (it == index_.end()) throw std::out_of_range("params: no tensor named " + name);
    return tensors_[it->second].value;
  }

  BatchNormState<T>& bn(const std::string& name) {
    const auto it = bn_index_.find(name);
    if (it == bn_index_.end()) throw std::out_of_range("params: no batch norm named " + name);
    return bn_[it->second].state;
  }
  const BatchNormState<T>& bn(const std::string& name) const {
    return const_cast<ParamStore*>(this)->bn(name);
  }

  std::vector<Entry>& tensors() { return tensors_; }
  const std::vector<Entry>& tensors() const { return tensors_; }
  std::vector<BnEntry>& batch_norms() { return bn_; }
  const std::vector<BnEntry>& batch_norms() const { return bn_; }

  std::size_t scalar_count() const {
    std::size_t n = 0;
    for (const auto& e : tensors_) n += e.value.numel();
    return n;
  }

  void zero_grad() const {
    for (const auto& e : tensors_) e.value.zero_grad();
  }

  /// Deep copy, optionally converting precision.
  template <class U>
  ParamStore<U> cast() const {
    ParamStore<U> out;
    for (const auto& e : tensors_) {
      Tensor<U> t = e.value.template cast<U>();
      std::vector<U> values(t.data().begin(), t.data().end());
      out.add(e.name, e.value.shape(), std::move(values));
    }
    for (const auto& b : bn_) {
      auto& s = out.add_bn(b.name, b.state.running_mean.size());
      for (std::size_t c = 0; c < s.running_mean.size(); ++c) {
        s.running_mean[c] = static_cast<U>(b.state.running_mean[c]);
        s.running_var[c] = static_cast<U>(b.state.running_var[c]);
      }
    }
    return out;
  }

  ParamStore clone() const { return cast<T>(); }

 private:
  std::vector<Entry> tensors_;
  std::unordered_map<std::string, std::size_t> index_;
  std::vector<BnEntry> bn_;
  std::unordered_map<std::string, std::size_t> bn_index_;
};

/// Deterministic initialisation helpers.
class ParamInit {
 public:
  explicit ParamInit(std::uint64_t seed) : rng_(seed) {}

  /// He-normal weights, zero bias. `zero` gives an all-zero layer.
  void conv(ParamStore<float>& ps, const std::string& name, std::size_t cout, std::size_t cin, std::size_t k,
            bool zero = false) {
    std::vector<float> w(cout * cin * k * k, 0.0f);
    if (!zero) {
      std::normal_distribution<double> d(0.0, std::sqrt(2.0 / static_cast<double>(cin * k * k)));
      for (auto& v : w) v = static_cast<float>(d(rng_));
    }
    ps.add(name + ".w", {cout, cin, k, k}, std::move(w));
    ps.add(name + ".b", {cout}, std::vector<float>(cout, 0.0f));
  }

  void batch_norm(ParamStore<float>& ps, const std::string& name, std::size_t c) {
    ps.add(name + ".gamma", {c}, std::vector<float>(c, 1.0f));
    ps.add(name + ".beta", {c}, std::vector<float>(c, 0.0f));
    ps.add_bn(name, c);
  }

  void identity(ParamStore<float>& ps, const std::string& name, std::size_t n) {
    std::vector<float> v(n * n, 0.0f);
    for (std::size_t i = 0; i < n; ++i) v[i * n + i] = 1.0f;
    ps.add(name, {n, n}, std::move(v));
  }

 private:
  std::mt19937_64 rng_;
};

/// conv(x) with parameters `<name>.w`, `<name>.b`.
template <class T>
Tensor<T> conv_layer(Tape<T>& tape, const ParamStore<T>& ps, const std::string& name, const Tensor<T>& x,
                     Conv2dOptions opt = {}) {
  return tape.conv2d(x, ps.at(name + ".w"), ps.at(name + ".b"), opt);
}

template <class T>
Tensor<T> batch_norm_layer(Tape<T>& tape, ParamStore<T>& ps, const std::string& name, const Tensor<T>& x,
                           NormMode mode) {
  return tape.batchnorm2d(x, ps.at(name + ".gamma"), ps.at(name + ".beta"), ps.bn(name), mode);
}

/// 3x3 "same" convolution options for a given stride and dilation.
inline Conv2dOptions conv3x3(std::size_t stride = 1, std::size_t dilation = 1) {
  return Conv2dOptions{stride, dilation, dilation};
}

}  // namespace ebseg
