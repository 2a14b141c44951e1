#include <cmath>
#include <stdexcept>
#include <string>

#include "ebseg/tape.hpp"

namespace ebseg {

template <class T>
Tensor<T> Tape<T>::cross_entropy_ignore(const Tensor<T>& logits, std::span<const std::uint8_t> labels,
                                        std::uint8_t ignore) {
  if (logits.ndim() != 4) {
    throw std::invalid_argument("cross_entropy_ignore: logits must be N,C,H,W, got " + shape_str(logits.shape()));
  }
  const std::size_t n = logits.dim(0), c = logits.dim(1), hw = logits.dim(2) * logits.dim(3);
  if (labels.size() != n * hw) {
    throw std::invalid_argument("cross_entropy_ignore: " + std::to_string(labels.size()) +
                                " labels for logits " + shape_str(logits.shape()));
  }
  std::size_t valid = 0;
  for (std::uint8_t l : labels) {
    if (l == ignore) continue;
    if (l >= c) {
      throw std::invalid_argument("cross_entropy_ignore: label " + std::to_string(l) + " outside {0.." +
                                  std::to_string(c - 1) + ", ignore}");
    }
    ++valid;
  }

  const bool track = needs_grad({&logits});
  Tensor<T> out = make_output({1}, track);
  auto x = logits.data();
  // Cache softmax probabilities for the backward pass.
  std::vector<T> prob(track ? x.size() : 0);
  double total = 0;  // accumulated in double: thousands of pixels
  for (std::size_t i = 0; i < n; ++i) {
    const T* base = x.data() + i * c * hw;
    for (std::size_t p = 0; p < hw; ++p) {
      const std::uint8_t l = labels[i * hw + p];
      if (l == ignore) continue;
      T mx = base[p];
      for (std::size_t k = 1; k < c; ++k) mx = std::max(mx, base[k * hw + p]);
      T se = 0;
      for (std::size_t k = 0; k < c; ++k) se += std::exp(base[k * hw + p] - mx);
      const T lse = mx + std::log(se);
      total += static_cast<double>(lse - base[l * hw + p]);
      if (track) {
        for (std::size_t k = 0; k < c; ++k) prob[i * c * hw + k * hw + p] = std::exp(base[k * hw + p] - lse);
      }
    }
  }
  out[0] = valid > 0 ? static_cast<T>(total / static_cast<double>(valid)) : T(0);

  if (track) {
    std::vector<std::uint8_t> lab(labels.begin(), labels.end());
    push("cross_entropy_ignore", out,
         [logits, out, prob = std::move(prob), lab = std::move(lab), n, c, hw, valid, ignore]() mutable {
           if (valid == 0) return;
           const T g = std::as_const(out).grad()[0] / static_cast<T>(valid);
           auto gx = logits.grad();
           for (std::size_t i = 0; i < n; ++i)
             for (std::size_t p = 0; p < hw; ++p) {
               const std::uint8_t l = lab[i * hw + p];
               if (l == ignore) continue;
               for (std::size_t k = 0; k < c; ++k) {
                 const std::size_t e = i * c * hw + k * hw + p;
                 gx[e] += g * (prob[e] - (k == l ? T(1) : T(0)));
               }
             }
         });
  }
  return out;
}

template <class T>
Tensor<T> Tape<T>::dice_loss(const Tensor<T>& pred, std::span<const std::uint8_t> target, T eps) {
  if (target.size() != pred.numel()) {
    throw std::invalid_argument("dice_loss: " + std::to_string(target.size()) + " targets for prediction " +
                                shape_str(pred.shape()));
  }
  auto p = pred.data();
  double sp = 0, sg = 0, inter = 0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (target[i] > 1) throw std::invalid_argument("dice_loss: target must be binary");
    const double g = target[i];
    sp += p[i];
    sg += g;
    inter += p[i] * g;
  }
  const double num_d = 2.0 * inter + eps, den_d = sp + sg + eps;
  const T num = static_cast<T>(num_d);
  const T den = static_cast<T>(den_d);
  const bool track = needs_grad({&pred});
  Tensor<T> out = make_output({1}, track);
  out[0] = static_cast<T>(1.0 - num_d / den_d);
  if (track) {
    std::vector<std::uint8_t> tgt(target.begin(), target.end());
    push("dice_loss", out, [pred, out, tgt = std::move(tgt), num, den]() mutable {
      const T g = std::as_const(out).grad()[0];
      auto gp = pred.grad();
      const T den2 = den * den;
      for (std::size_t i = 0; i < gp.size(); ++i) {
        const T gi = static_cast<T>(tgt[i]);
        gp[i] += g * -(T(2) * gi * den - num) / den2;
      }
    });
  }
  return out;
}

#define EBSEG_INSTANTIATE_NN(T)                                                                               \
  template Tensor<T> Tape<T>::cross_entropy_ignore(const Tensor<T>&, std::span<const std::uint8_t>, std::uint8_t); \
  template Tensor<T> Tape<T>::dice_loss(const Tensor<T>&, std::span<const std::uint8_t>, T);

EBSEG_INSTANTIATE_NN(float)
EBSEG_INSTANTIATE_NN(double)

}  // namespace ebseg
