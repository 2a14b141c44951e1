#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "ebseg/simd/kernels.hpp"
#include "ebseg/tape.hpp"

namespace ebseg {
namespace {

struct ConvGeom {
  std::size_t cin, h, w, k, stride, dilation, pad, oh, ow;
  std::size_t rows() const { return cin * k * k; }
  std::size_t cols() const { return oh * ow; }
};

// col[(c*k + ky)*k + kx][oy*ow + ox] = x[c][oy*s - p + ky*d][ox*s - p + kx*d], zero outside.
template <class T>
void im2col(const T* x, const ConvGeom& g, T* col) {
  for (std::size_t c = 0; c < g.cin; ++c) {
    const T* plane = x + c * g.h * g.w;
    for (std::size_t ky = 0; ky < g.k; ++ky) {
      for (std::size_t kx = 0; kx < g.k; ++kx) {
        T* row = col + ((c * g.k + ky) * g.k + kx) * g.cols();
        for (std::size_t oy = 0; oy < g.oh; ++oy) {
          const long iy = static_cast<long>(oy * g.stride + ky * g.dilation) - static_cast<long>(g.pad);
          T* dst = row + oy * g.ow;
          if (iy < 0 || iy >= static_cast<long>(g.h)) {
            std::fill(dst, dst + g.ow, T(0));
            continue;
          }
          const T* src = plane + static_cast<std::size_t>(iy) * g.w;
          for (std::size_t ox = 0; ox < g.ow; ++ox) {
            const long ix = static_cast<long>(ox * g.stride + kx * g.dilation) - static_cast<long>(g.pad);
            dst[ox] = (ix < 0 || ix >= static_cast<long>(g.w)) ? T(0) : src[ix];
          }
        }
      }
    }
  }
}

template <class T>
void col2im_add(const T* col, const ConvGeom& g, T* x) {
  for (std::size_t c = 0; c < g.cin; ++c) {
    T* plane = x + c * g.h * g.w;
    for (std::size_t ky = 0; ky < g.k; ++ky) {
      for (std::size_t kx = 0; kx < g.k; ++kx) {
        const T* row = col + ((c * g.k + ky) * g.k + kx) * g.cols();
        for (std::size_t oy = 0; oy < g.oh; ++oy) {
          const long iy = static_cast<long>(oy * g.stride + ky * g.dilation) - static_cast<long>(g.pad);
          if (iy < 0 || iy >= static_cast<long>(g.h)) continue;
          T* dst = plane + static_cast<std::size_t>(iy) * g.w;
          const T* src = row + oy * g.ow;
          for (std::size_t ox = 0; ox < g.ow; ++ox) {
            const long ix = static_cast<long>(ox * g.stride + kx * g.dilation) - static_cast<long>(g.pad);
            if (ix >= 0 && ix < static_cast<long>(g.w)) dst[ix] += src[ox];
          }
        }
      }
    }
  }
}

template <class T>
void transpose_into(const T* src, std::size_t rows, std::size_t cols, T* dst) {
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) dst[c * rows + r] = src[r * cols + c];
}

}  // namespace

template <class T>
Tensor<T> Tape<T>::conv2d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b, Conv2dOptions opt) {
  if (x.ndim() != 4) throw std::invalid_argument("conv2d: input must be N,C,H,W, got " + shape_str(x.shape()));
  if (w.ndim() != 4) throw std::invalid_argument("conv2d: weight must be O,I,Kh,Kw, got " + shape_str(w.shape()));
  if (w.dim(2) != w.dim(3)) throw std::invalid_argument("conv2d: kernel must be square, got " + shape_str(w.shape()));
  if (w.dim(1) != x.dim(1)) {
    throw std::invalid_argument("conv2d: weight expects " + std::to_string(w.dim(1)) + " input channels, input " +
                                shape_str(x.shape()) + " has " + std::to_string(x.dim(1)));
  }
  if (b.defined() && (b.ndim() != 1 || b.dim(0) != w.dim(0))) {
    throw std::invalid_argument("conv2d: bias " + shape_str(b.shape()) + " does not match " +
                                std::to_string(w.dim(0)) + " output channels");
  }
  if (opt.stride == 0 || opt.dilation == 0) throw std::invalid_argument("conv2d: stride and dilation must be >= 1");

  ConvGeom g{};
  g.cin = x.dim(1);
  g.h = x.dim(2);
  g.w = x.dim(3);
  g.k = w.dim(2);
  g.stride = opt.stride;
  g.dilation = opt.dilation;
  g.pad = opt.pad;
  const long span = static_cast<long>(g.dilation * (g.k - 1) + 1);
  const long eff_h = static_cast<long>(g.h + 2 * g.pad) - span;
  const long eff_w = static_cast<long>(g.w + 2 * g.pad) - span;
  if (eff_h < 0 || eff_w < 0) {
    throw std::invalid_argument("conv2d: kernel extent exceeds padded input " + shape_str(x.shape()));
  }
  g.oh = static_cast<std::size_t>(eff_h) / g.stride + 1;
  g.ow = static_cast<std::size_t>(eff_w) / g.stride + 1;

  const std::size_t n = x.dim(0), cout = w.dim(0);
  const bool track = needs_grad({&x, &w, &b});
  Tensor<T> out = make_output({n, cout, g.oh, g.ow}, track);

  std::vector<T> col(g.rows() * g.cols());
  const T* wd = w.data().data();
  for (std::size_t i = 0; i < n; ++i) {
    im2col(x.data().data() + i * g.cin * g.h * g.w, g, col.data());
    T* o = out.data().data() + i * cout * g.cols();
    if (b.defined()) {
      for (std::size_t oc = 0; oc < cout; ++oc) std::fill(o + oc * g.cols(), o + (oc + 1) * g.cols(), b[oc]);
    }
    simd::gemm<T>(cout, g.cols(), g.rows(), wd, g.rows(), col.data(), g.cols(), o, g.cols(), b.defined());
  }

  if (track) {
    push("conv2d", out, [x, w, b, out, g, n, cout]() mutable {
      const T* go = std::as_const(out).grad().data();
      const std::size_t rows = g.rows(), cols = g.cols();
      if (b.defined() && b.requires_grad()) {
        auto gb = b.grad();
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t oc = 0; oc < cout; ++oc) {
            const T* p = go + (i * cout + oc) * cols;
            T acc = 0;
            for (std::size_t j = 0; j < cols; ++j) acc += p[j];
            gb[oc] += acc;
          }
      }
      std::vector<T> col(rows * cols);
      std::vector<T> colt;
      std::vector<T> wt;
      if (w.requires_grad()) colt.resize(rows * cols);
      if (x.requires_grad()) {
        wt.resize(rows * cout);
        transpose_into(std::as_const(w).data().data(), cout, rows, wt.data());
      }
      for (std::size_t i = 0; i < n; ++i) {
        const T* goi = go + i * cout * cols;
        if (w.requires_grad()) {
          im2col(std::as_const(x).data().data() + i * g.cin * g.h * g.w, g, col.data());
          transpose_into(col.data(), rows, cols, colt.data());
          // dW (cout x rows) += dOut (cout x cols) * col^T (cols x rows)
          simd::gemm<T>(cout, rows, cols, goi, cols, colt.data(), rows, w.grad().data(), rows, true);
        }
        if (x.requires_grad()) {
          // dcol (rows x cols) = W^T (rows x cout) * dOut (cout x cols)
          simd::gemm<T>(rows, cols, cout, wt.data(), cout, goi, cols, col.data(), cols, false);
          col2im_add(col.data(), g, x.grad().data() + i * g.cin * g.h * g.w);
        }
      }
    });
  }
  return out;
}

template <class T>
Tensor<T> Tape<T>::batchnorm2d(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta,
                               BatchNormState<T>& state, NormMode mode) {
  if (x.ndim() != 4) throw std::invalid_argument("batchnorm2d: input must be N,C,H,W, got " + shape_str(x.shape()));
  const std::size_t n = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
  if (gamma.numel() != c || beta.numel() != c || state.running_mean.size() != c || state.running_var.size() != c) {
    throw std::invalid_argument("batchnorm2d: per-channel parameters do not match " + std::to_string(c) +
                                " channels of " + shape_str(x.shape()));
  }
  const std::size_t count = n * hw;
  std::vector<T> mean(c), invstd(c);
  auto xd = x.data();
  if (mode == NormMode::train) {
    for (std::size_t ch = 0; ch < c; ++ch) {
      double s = 0;
      for (std::size_t i = 0; i < n; ++i) {
        const T* p = xd.data() + (i * c + ch) * hw;
        for (std::size_t j = 0; j < hw; ++j) s += p[j];
      }
      const double mu_d = s / static_cast<double>(count);
      double v = 0;
      for (std::size_t i = 0; i < n; ++i) {
        const T* p = xd.data() + (i * c + ch) * hw;
        for (std::size_t j = 0; j < hw; ++j) v += (p[j] - mu_d) * (p[j] - mu_d);
      }
      const T mu = static_cast<T>(mu_d);
      const T var = static_cast<T>(v / static_cast<double>(count));
      mean[ch] = mu;
      invstd[ch] = T(1) / std::sqrt(var + state.eps);
      const T unbiased = count > 1 ? static_cast<T>(v / static_cast<double>(count - 1)) : var;
      state.running_mean[ch] = (T(1) - state.momentum) * state.running_mean[ch] + state.momentum * mu;
      state.running_var[ch] = (T(1) - state.momentum) * state.running_var[ch] + state.momentum * unbiased;
    }
  } else {
    for (std::size_t ch = 0; ch < c; ++ch) {
      mean[ch] = state.running_mean[ch];
      invstd[ch] = T(1) / std::sqrt(state.running_var[ch] + state.eps);
    }
  }

  const bool track = needs_grad({&x, &gamma, &beta});
  Tensor<T> out = make_output(x.shape(), track);
  auto od = out.data();
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t ch = 0; ch < c; ++ch) {
      const T* p = xd.data() + (i * c + ch) * hw;
      T* q = od.data() + (i * c + ch) * hw;
      const T a = gamma[ch] * invstd[ch];
      const T sh = beta[ch] - mean[ch] * a;
      for (std::size_t j = 0; j < hw; ++j) q[j] = p[j] * a + sh;
    }

  if (track) {
    push("batchnorm2d", out, [x, gamma, beta, out, mean, invstd, n, c, hw, mode]() mutable {
      auto go = std::as_const(out).grad();
      auto xd = std::as_const(x).data();
      const T cnt = static_cast<T>(n * hw);
      for (std::size_t ch = 0; ch < c; ++ch) {
        double sum_gd = 0, sum_gxd = 0;
        for (std::size_t i = 0; i < n; ++i) {
          const T* gp = go.data() + (i * c + ch) * hw;
          const T* p = xd.data() + (i * c + ch) * hw;
          for (std::size_t j = 0; j < hw; ++j) {
            sum_gd += gp[j];
            sum_gxd += gp[j] * (p[j] - mean[ch]) * invstd[ch];
          }
        }
        const T sum_g = static_cast<T>(sum_gd), sum_gx = static_cast<T>(sum_gxd);
        if (gamma.requires_grad()) gamma.grad()[ch] += sum_gx;
        if (beta.requires_grad()) beta.grad()[ch] += sum_g;
        if (!x.requires_grad()) continue;
        auto gx = x.grad();
        const T gi = gamma[ch] * invstd[ch];
        for (std::size_t i = 0; i < n; ++i) {
          const T* gp = go.data() + (i * c + ch) * hw;
          const T* p = xd.data() + (i * c + ch) * hw;
          T* q = gx.data() + (i * c + ch) * hw;
          if (mode == NormMode::train) {
            for (std::size_t j = 0; j < hw; ++j) {
              const T xhat = (p[j] - mean[ch]) * invstd[ch];
              q[j] += gi * (gp[j] - sum_g / cnt - xhat * sum_gx / cnt);
            }
          } else {
            for (std::size_t j = 0; j < hw; ++j) q[j] += gi * gp[j];
          }
        }
      }
    });
  }
  return out;
}

#define EBSEG_INSTANTIATE_CONV(T)                                                                        \
  template Tensor<T> Tape<T>::conv2d(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, Conv2dOptions); \
  template Tensor<T> Tape<T>::batchnorm2d(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&,           \
                                          BatchNormState<T>&, NormMode);

EBSEG_INSTANTIATE_CONV(float)
EBSEG_INSTANTIATE_CONV(double)

}  // namespace ebseg
