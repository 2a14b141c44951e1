#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>
#include <unordered_set>

#include "ebseg/simd/kernels.hpp"
#include "ebseg/tape.hpp"

namespace ebseg {

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ')';
  return os.str();
}

namespace {

template <class T>
void require_same_shape(const char* op, const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape() != b.shape()) {
    throw std::invalid_argument(std::string(op) + ": shape mismatch " + shape_str(a.shape()) +
                                " vs " + shape_str(b.shape()));
  }
}

template <class T>
void require_ndim(const char* op, const Tensor<T>& a, std::size_t nd) {
  if (a.ndim() != nd) {
    throw std::invalid_argument(std::string(op) + ": expected " + std::to_string(nd) +
                                "-d tensor, got " + shape_str(a.shape()));
  }
}

template <class T>
T sigmoid_of(T x) {
  // Split by sign so exp never overflows.
  if (x >= T(0)) return T(1) / (T(1) + std::exp(-x));
  const T e = std::exp(x);
  return e / (T(1) + e);
}

// Half-pixel source coordinate, clamped as in the common align_corners=false rule.
struct Tap {
  std::size_t i0, i1;
  double w1;
};

std::vector<Tap> bilinear_taps(std::size_t in, std::size_t out) {
  std::vector<Tap> taps(out);
  const double scale = static_cast<double>(in) / static_cast<double>(out);
  for (std::size_t o = 0; o < out; ++o) {
    double src = (static_cast<double>(o) + 0.5) * scale - 0.5;
    if (src < 0) src = 0;
    auto i0 = static_cast<std::size_t>(std::floor(src));
    if (i0 > in - 1) i0 = in - 1;
    const std::size_t i1 = std::min(i0 + 1, in - 1);
    double w1 = src - static_cast<double>(i0);
    if (i1 == i0) w1 = 0;
    taps[o] = {i0, i1, w1};
  }
  return taps;
}

}  // namespace

template <class T>
Tensor<T> Tape<T>::eltwise(EltwiseKind kind, const Tensor<T>& a, const Tensor<T>& b) {
  const bool binary = kind == EltwiseKind::add || kind == EltwiseKind::sub || kind == EltwiseKind::mul;
  if (binary) {
    if (!b.defined()) throw std::invalid_argument("eltwise: binary kind needs two operands");
    require_same_shape("eltwise", a, b);
  }
  const bool track = binary ? needs_grad({&a, &b}) : needs_grad({&a});
  Tensor<T> out = make_output(a.shape(), track);
  auto o = out.data();
  auto x = a.data();
  const std::size_t n = o.size();
  switch (kind) {
    case EltwiseKind::add: {
      auto y = b.data();
      for (std::size_t i = 0; i < n; ++i) o[i] = x[i] + y[i];
      break;
    }
    case EltwiseKind::sub: {
      auto y = b.data();
      for (std::size_t i = 0; i < n; ++i) o[i] = x[i] - y[i];
      break;
    }
    case EltwiseKind::mul: {
      auto y = b.data();
      for (std::size_t i = 0; i < n; ++i) o[i] = x[i] * y[i];
      break;
    }
    case EltwiseKind::relu:
      for (std::size_t i = 0; i < n; ++i) o[i] = x[i] > T(0) ? x[i] : T(0);
      break;
    case EltwiseKind::sigmoid:
      for (std::size_t i = 0; i < n; ++i) o[i] = sigmoid_of(x[i]);
      break;
  }
  if (!track) return out;

  push("eltwise", out, [kind, a, b, out]() mutable {
    auto go = std::as_const(out).grad();
    const std::size_t n = go.size();
    switch (kind) {
      case EltwiseKind::add:
      case EltwiseKind::sub: {
        if (a.requires_grad()) simd::axpy<T>(n, T(1), go.data(), a.grad().data());
        if (b.requires_grad()) simd::axpy<T>(n, kind == EltwiseKind::add ? T(1) : T(-1), go.data(), b.grad().data());
        break;
      }
      case EltwiseKind::mul: {
        if (a.requires_grad()) {
          auto ga = a.grad();
          auto y = std::as_const(b).data();
          for (std::size_t i = 0; i < n; ++i) ga[i] += go[i] * y[i];
        }
        if (b.requires_grad()) {
          auto gb = b.grad();
          auto x = std::as_const(a).data();
          for (std::size_t i = 0; i < n; ++i) gb[i] += go[i] * x[i];
        }
        break;
      }
      case EltwiseKind::relu: {
        if (!a.requires_grad()) break;
        auto ga = a.grad();
        auto x = std::as_const(a).data();
        for (std::size_t i = 0; i < n; ++i) ga[i] += x[i] > T(0) ? go[i] : T(0);
        break;
      }
      case EltwiseKind::sigmoid: {
        if (!a.requires_grad()) break;
        auto ga = a.grad();
        auto y = std::as_const(out).data();
        for (std::size_t i = 0; i < n; ++i) ga[i] += go[i] * y[i] * (T(1) - y[i]);
        break;
      }
    }
  });
  return out;
}

template <class T>
Tensor<T> Tape<T>::scale(const Tensor<T>& a, T factor) {
  const bool track = needs_grad({&a});
  Tensor<T> out = make_output(a.shape(), track);
  auto o = out.data();
  auto x = a.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = x[i] * factor;
  if (track) {
    push("scale", out, [a, out, factor]() mutable {
      auto go = std::as_const(out).grad();
      simd::axpy<T>(go.size(), factor, go.data(), a.grad().data());
    });
  }
  return out;
}

template <class T>
Tensor<T> Tape<T>::sum(const Tensor<T>& a) {
  const bool track = needs_grad({&a});
  Tensor<T> out = make_output({1}, track);
  double acc = 0;
  for (T v : a.data()) acc += v;
  out[0] = static_cast<T>(acc);
  if (track) {
    push("sum", out, [a, out]() mutable {
      const T g = std::as_const(out).grad()[0];
      for (T& v : a.grad()) v += g;
    });
  }
  return out;
}

template <class T>
Tensor<T> Tape<T>::matmul(const Tensor<T>& a, const Tensor<T>& b) {
  require_ndim("matmul", a, 2);
  require_ndim("matmul", b, 2);
  const std::size_t m = a.dim(0), k = a.dim(1), p = b.dim(1);
  if (b.dim(0) != k) {
    throw std::invalid_argument("matmul: inner dimensions disagree " + shape_str(a.shape()) + " x " +
                                shape_str(b.shape()));
  }
  const bool track = needs_grad({&a, &b});
  Tensor<T> out = make_output({m, p}, track);
  simd::gemm<T>(m, p, k, a.data().data(), k, b.data().data(), p, out.data().data(), p, false);
  if (track) {
    push("matmul", out, [a, b, out, m, k, p]() mutable {
      const T* go = std::as_const(out).grad().data();
      if (a.requires_grad()) {
        // dA = dC * B^T
        std::vector<T> bt(p * k);
        auto bd = std::as_const(b).data();
        for (std::size_t r = 0; r < k; ++r)
          for (std::size_t c = 0; c < p; ++c) bt[c * k + r] = bd[r * p + c];
        simd::gemm<T>(m, k, p, go, p, bt.data(), k, a.grad().data(), k, true);
      }
      if (b.requires_grad()) {
        // dB = A^T * dC
        std::vector<T> at(k * m);
        auto ad = std::as_const(a).data();
        for (std::size_t r = 0; r < m; ++r)
          for (std::size_t c = 0; c < k; ++c) at[c * m + r] = ad[r * k + c];
        simd::gemm<T>(k, p, m, at.data(), m, go, p, b.grad().data(), p, true);
      }
    });
  }
  return out;
}

template <class T>
Tensor<T> Tape<T>::transpose(const Tensor<T>& a) {
  require_ndim("transpose", a, 2);
  const std::size_t r = a.dim(0), c = a.dim(1);
  const bool track = needs_grad({&a});
  Tensor<T> out = make_output({c, r}, track);
  auto x = a.data();
  auto o = out.data();
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) o[j * r + i] = x[i * c + j];
  if (track) {
    push("transpose", out, [a, out, r, c]() mutable {
      auto go = std::as_const(out).grad();
      auto ga = a.grad();
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) ga[i * c + j] += go[j * r + i];
    });
  }
  return out;
}

template <class T>
Tensor<T> Tape<T>::crop2d(const Tensor<T>& a, std::size_t rows, std::size_t cols) {
  require_ndim("crop2d", a, 2);
  if (rows > a.dim(0) || cols > a.dim(1)) {
    throw std::invalid_argument("crop2d: block " + std::to_string(rows) + "x" + std::to_string(cols) +
                                " exceeds " + shape_str(a.shape()));
  }
  const std::size_t src_cols = a.dim(1);
  const bool track = needs_grad({&a});
  Tensor<T> out = make_output({rows, cols}, track);
  auto x = a.data();
  auto o = out.data();
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < cols; ++j) o[i * cols + j] = x[i * src_cols + j];
  if (track) {
    push("crop2d", out, [a, out, rows, cols, src_cols]() mutable {
      auto go = std::as_const(out).grad();
      auto ga = a.grad();
      for (std::size_t i = 0; i < rows; ++i)
        for (std::size_t j = 0; j < cols; ++j) ga[i * src_cols + j] += go[i * cols + j];
    });
  }
  return out;
}

template <class T>
Tensor<T> Tape<T>::concat_channels(const Tensor<T>& a, const Tensor<T>& b) {
  require_ndim("concat_channels", a, 4);
  require_ndim("concat_channels", b, 4);
  const std::size_t n = a.dim(0), ca = a.dim(1), cb = b.dim(1), h = a.dim(2), w = a.dim(3);
  if (b.dim(0) != n || b.dim(2) != h || b.dim(3) != w) {
    throw std::invalid_argument("concat_channels: N/H/W mismatch " + shape_str(a.shape()) + " vs " +
                                shape_str(b.shape()) + " (resize first)");
  }
  const std::size_t hw = h * w;
  const bool track = needs_grad({&a, &b});
  Tensor<T> out = make_output({n, ca + cb, h, w}, track);
  auto o = out.data();
  auto x = a.data();
  auto y = b.data();
  for (std::size_t i = 0; i < n; ++i) {
    std::copy_n(x.begin() + i * ca * hw, ca * hw, o.begin() + i * (ca + cb) * hw);
    std::copy_n(y.begin() + i * cb * hw, cb * hw, o.begin() + (i * (ca + cb) + ca) * hw);
  }
  if (track) {
    push("concat_channels", out, [a, b, out, n, ca, cb, hw]() mutable {
      auto go = std::as_const(out).grad();
      for (std::size_t i = 0; i < n; ++i) {
        if (a.requires_grad())
          simd::axpy<T>(ca * hw, T(1), go.data() + i * (ca + cb) * hw, a.grad().data() + i * ca * hw);
        if (b.requires_grad())
          simd::axpy<T>(cb * hw, T(1), go.data() + (i * (ca + cb) + ca) * hw, b.grad().data() + i * cb * hw);
      }
    });
  }
  return out;
}

template <class T>
Tensor<T> Tape<T>::resize_bilinear(const Tensor<T>& x, std::size_t out_h, std::size_t out_w) {
  require_ndim("resize_bilinear", x, 4);
  if (out_h == 0 || out_w == 0) throw std::invalid_argument("resize_bilinear: output size must be >= 1");
  const std::size_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  const bool track = needs_grad({&x});
  Tensor<T> out = make_output({n, c, out_h, out_w}, track);
  if (h == out_h && w == out_w) {
    std::copy(x.data().begin(), x.data().end(), out.data().begin());
  } else {
    const auto ty = bilinear_taps(h, out_h);
    const auto tx = bilinear_taps(w, out_w);
    auto src = x.data();
    auto dst = out.data();
    for (std::size_t plane = 0; plane < n * c; ++plane) {
      const T* s = src.data() + plane * h * w;
      T* d = dst.data() + plane * out_h * out_w;
      for (std::size_t oy = 0; oy < out_h; ++oy) {
        const T wy1 = static_cast<T>(ty[oy].w1), wy0 = T(1) - wy1;
        const T* r0 = s + ty[oy].i0 * w;
        const T* r1 = s + ty[oy].i1 * w;
        for (std::size_t ox = 0; ox < out_w; ++ox) {
          const T wx1 = static_cast<T>(tx[ox].w1), wx0 = T(1) - wx1;
          const std::size_t x0 = tx[ox].i0, x1 = tx[ox].i1;
          d[oy * out_w + ox] = wy0 * (wx0 * r0[x0] + wx1 * r0[x1]) + wy1 * (wx0 * r1[x0] + wx1 * r1[x1]);
        }
      }
    }
  }
  if (track) {
    push("resize_bilinear", out, [x, out, n, c, h, w, out_h, out_w]() mutable {
      auto go = std::as_const(out).grad();
      auto gx = x.grad();
      if (h == out_h && w == out_w) {
        simd::axpy<T>(go.size(), T(1), go.data(), gx.data());
        return;
      }
      const auto ty = bilinear_taps(h, out_h);
      const auto tx = bilinear_taps(w, out_w);
      for (std::size_t plane = 0; plane < n * c; ++plane) {
        const T* g = go.data() + plane * out_h * out_w;
        T* s = gx.data() + plane * h * w;
        for (std::size_t oy = 0; oy < out_h; ++oy) {
          const T wy1 = static_cast<T>(ty[oy].w1), wy0 = T(1) - wy1;
          T* r0 = s + ty[oy].i0 * w;
          T* r1 = s + ty[oy].i1 * w;
          for (std::size_t ox = 0; ox < out_w; ++ox) {
            const T wx1 = static_cast<T>(tx[ox].w1), wx0 = T(1) - wx1;
            const T v = g[oy * out_w + ox];
            r0[tx[ox].i0] += wy0 * wx0 * v;
            r0[tx[ox].i1] += wy0 * wx1 * v;
            r1[tx[ox].i0] += wy1 * wx0 * v;
            r1[tx[ox].i1] += wy1 * wx1 * v;
          }
        }
      }
    });
  }
  return out;
}

template <class T>
Tensor<T> Tape<T>::gather_points(const Tensor<T>& f, std::size_t n, std::span<const std::size_t> indices) {
  require_ndim("gather_points", f, 4);
  const std::size_t c = f.dim(1), hw = f.dim(2) * f.dim(3);
  if (n >= f.dim(0)) throw std::out_of_range("gather_points: image index out of range");
  for (std::size_t idx : indices) {
    if (idx >= hw) {
      throw std::out_of_range("gather_points: position " + std::to_string(idx) + " outside map of " +
                              std::to_string(hw) + " pixels");
    }
  }
  const std::size_t k = indices.size();
  const bool track = needs_grad({&f});
  Tensor<T> out = make_output({k, c}, track);
  auto src = f.data();
  auto dst = out.data();
  const std::size_t base = n * c * hw;
  for (std::size_t i = 0; i < k; ++i)
    for (std::size_t ch = 0; ch < c; ++ch) dst[i * c + ch] = src[base + ch * hw + indices[i]];
  if (track) {
    std::vector<std::size_t> idx(indices.begin(), indices.end());
    push("gather_points", out, [f, out, idx = std::move(idx), base, c, hw]() mutable {
      auto go = std::as_const(out).grad();
      auto gf = f.grad();
      for (std::size_t i = 0; i < idx.size(); ++i)
        for (std::size_t ch = 0; ch < c; ++ch) gf[base + ch * hw + idx[i]] += go[i * c + ch];
    });
  }
  return out;
}

template <class T>
Tensor<T> Tape<T>::scatter_points(const Tensor<T>& f, std::size_t n, const Tensor<T>& g,
                                  std::span<const std::size_t> indices) {
  require_ndim("scatter_points", f, 4);
  require_ndim("scatter_points", g, 2);
  const std::size_t c = f.dim(1), hw = f.dim(2) * f.dim(3);
  if (n >= f.dim(0)) throw std::out_of_range("scatter_points: image index out of range");
  if (g.dim(0) != indices.size() || g.dim(1) != c) {
    throw std::invalid_argument("scatter_points: rows " + shape_str(g.shape()) + " do not match " +
                                std::to_string(indices.size()) + " indices x " + std::to_string(c) + " channels");
  }
  std::unordered_set<std::size_t> seen;
  for (std::size_t idx : indices) {
    if (idx >= hw) throw std::out_of_range("scatter_points: position " + std::to_string(idx) + " out of range");
    if (!seen.insert(idx).second) {
      throw std::invalid_argument("scatter_points: duplicate position " + std::to_string(idx));
    }
  }
  const std::size_t k = indices.size();
  const bool track = needs_grad({&f, &g});
  Tensor<T> out = make_output(f.shape(), track);
  auto dst = out.data();
  std::copy(f.data().begin(), f.data().end(), dst.begin());
  auto rows = g.data();
  const std::size_t base = n * c * hw;
  for (std::size_t i = 0; i < k; ++i)
    for (std::size_t ch = 0; ch < c; ++ch) dst[base + ch * hw + indices[i]] = rows[i * c + ch];
  if (track) {
    std::vector<std::size_t> idx(indices.begin(), indices.end());
    push("scatter_points", out, [f, g, out, idx = std::move(idx), base, c, hw]() mutable {
      auto go = std::as_const(out).grad();
      if (g.requires_grad()) {
        auto gg = g.grad();
        for (std::size_t i = 0; i < idx.size(); ++i)
          for (std::size_t ch = 0; ch < c; ++ch) gg[i * c + ch] += go[base + ch * hw + idx[i]];
      }
      if (f.requires_grad()) {
        auto gf = f.grad();
        std::vector<char> replaced(hw, 0);
        for (std::size_t i : idx) replaced[i] = 1;
        const std::size_t total = go.size();
        for (std::size_t e = 0; e < total; ++e) {
          const bool in_image = e >= base && e < base + c * hw;
          if (in_image && replaced[(e - base) % hw]) continue;
          gf[e] += go[e];
        }
      }
    });
  }
  return out;
}

template <class T>
void Tape<T>::backward(const Tensor<T>& loss) {
  if (!loss.defined() || loss.numel() != 1) {
    throw std::invalid_argument("backward: loss must be a scalar tensor, got " +
                                (loss.defined() ? shape_str(loss.shape()) : std::string("undefined")));
  }
  if (ops_.empty()) throw std::logic_error("backward: tape is empty");
  for (auto& rec : ops_) {
    if (rec.output.has_grad()) rec.output.zero_grad();
  }
  Tensor<T> seed = loss;
  seed.grad()[0] += T(1);
  for (auto it = ops_.rbegin(); it != ops_.rend(); ++it) {
    if (!it->output.has_grad()) continue;  // not on any path to the loss
    it->backward();
  }
}

#define EBSEG_INSTANTIATE_BASIC(T)                                                                   \
  template Tensor<T> Tape<T>::eltwise(EltwiseKind, const Tensor<T>&, const Tensor<T>&);             \
  template Tensor<T> Tape<T>::scale(const Tensor<T>&, T);                                           \
  template Tensor<T> Tape<T>::sum(const Tensor<T>&);                                                \
  template Tensor<T> Tape<T>::matmul(const Tensor<T>&, const Tensor<T>&);                           \
  template Tensor<T> Tape<T>::transpose(const Tensor<T>&);                                          \
  template Tensor<T> Tape<T>::crop2d(const Tensor<T>&, std::size_t, std::size_t);                   \
  template Tensor<T> Tape<T>::concat_channels(const Tensor<T>&, const Tensor<T>&);                  \
  template Tensor<T> Tape<T>::resize_bilinear(const Tensor<T>&, std::size_t, std::size_t);          \
  template Tensor<T> Tape<T>::gather_points(const Tensor<T>&, std::size_t, std::span<const std::size_t>); \
  template Tensor<T> Tape<T>::scatter_points(const Tensor<T>&, std::size_t, const Tensor<T>&,       \
                                             std::span<const std::size_t>);                         \
  template void Tape<T>::backward(const Tensor<T>&);

EBSEG_INSTANTIATE_BASIC(float)
EBSEG_INSTANTIATE_BASIC(double)

}  // namespace ebseg
