#include "ebseg/rdm.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <iostream>

namespace ebseg {

namespace {

void require_channels(const char* stage, const char* what, std::size_t got, std::size_t want) {
  if (got != want)
    throw std::invalid_argument(std::string("rdm ") + stage + ": " + what + " has " + std::to_string(got) +
                                " channels, expected " + std::to_string(want));
}

}  // namespace

template <class T>
RdmParams<T> RdmParams<T>::bind(const ParamStore<T>& ps, const std::string& prefix, bool edge_relu) {
  RdmParams p;
  p.prefix = prefix;
  p.edge_relu = edge_relu;
  const Shape& we = ps.at(prefix + ".edge.w").shape();
  const Shape& wr = ps.at(prefix + ".refine.w").shape();
  p.channels = we[0];
  p.c_low = we[1] - we[0];
  p.c_high = wr[1] - wr[0];
  return p;
}

void init_rdm_params(ParamStore<float>& ps, ParamInit& init, const std::string& prefix, std::size_t channels,
                     std::size_t c_low, std::size_t c_high) {
  const std::size_t half = std::max<std::size_t>(1, channels / 2);
  init.conv(ps, prefix + ".edge", channels, channels + c_low, 3);
  init.conv(ps, prefix + ".edgehead1", half, channels, 3);
  init.conv(ps, prefix + ".edgehead2", 1, half, 1, /*zero=*/true);
  init.conv(ps, prefix + ".refine", channels, channels + c_high, 3);
  init.conv(ps, prefix + ".reshead1", half, channels, 3);
  init.conv(ps, prefix + ".reshead2", 2, half, 3, /*zero=*/true);
}

template <class T>
RdmOutputs<T> rdm_forward(Tape<T>& tape, const ParamStore<T>& ps, const RdmParams<T>& p, const Tensor<T>& f_in,
                          const Tensor<T>& f_low, const Tensor<T>& f_high) {
  if (f_in.ndim() != 4 || f_low.ndim() != 4 || f_high.ndim() != 4)
    throw std::invalid_argument("rdm: feature maps must be N x C x H x W");
  require_channels("edge fusion", "f_in", f_in.dim(1), p.channels);
  require_channels("edge fusion", "f_low", f_low.dim(1), p.c_low);
  require_channels("residual refinement", "f_high", f_high.dim(1), p.c_high);
  const std::size_t h = f_in.dim(2), w = f_in.dim(3);
  const std::string& pre = p.prefix;

  RdmOutputs<T> o;
  Tensor<T> low = tape.resize_bilinear(f_low, h, w);
  o.f_edge = conv_layer(tape, ps, pre + ".edge", tape.concat_channels(low, f_in), conv3x3());
  if (p.edge_relu) o.f_edge = tape.relu(o.f_edge);

  Tensor<T> eh = tape.relu(conv_layer(tape, ps, pre + ".edgehead1", o.f_edge, conv3x3()));
  o.f_b = tape.sigmoid(conv_layer(tape, ps, pre + ".edgehead2", eh));

  o.f_residual = tape.sub(f_in, o.f_edge);

  Tensor<T> high = tape.resize_bilinear(f_high, h, w);
  o.f_residual_ref =
      tape.relu(conv_layer(tape, ps, pre + ".refine", tape.concat_channels(o.f_residual, high), conv3x3()));

  Tensor<T> rh = tape.relu(conv_layer(tape, ps, pre + ".reshead1", o.f_residual_ref, conv3x3()));
  o.f_r = conv_layer(tape, ps, pre + ".reshead2", rh, conv3x3());

  o.f_merge = tape.add(o.f_residual_ref, o.f_edge);
  return o;
}

PcaResult pca_components(const Tensor<float>& f, std::size_t dims) {
  std::size_t c, h, w;
  if (f.ndim() == 3) {
    c = f.dim(0), h = f.dim(1), w = f.dim(2);
  } else if (f.ndim() == 4 && f.dim(0) == 1) {
    c = f.dim(1), h = f.dim(2), w = f.dim(3);
  } else {
    throw std::invalid_argument("pca_project: expected C x h x w, got " + shape_str(f.shape()));
  }
  if (dims < 1 || c < dims)
    throw std::invalid_argument("pca_project: need 1 <= dims <= C (C=" + std::to_string(c) + ")");
  const std::size_t hw = h * w;

  // Rows are pixels, columns channels.
  Eigen::MatrixXd x(hw, c);
  auto src = f.data();
  for (std::size_t ch = 0; ch < c; ++ch)
    for (std::size_t p = 0; p < hw; ++p) x(p, ch) = src[ch * hw + p];
  x.rowwise() -= x.colwise().mean();
  const Eigen::MatrixXd cov = (x.transpose() * x) / static_cast<double>(hw);

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov);
  if (es.info() != Eigen::Success) throw std::runtime_error("pca_project: eigen decomposition failed");
  // Eigen sorts ascending.
  const Eigen::VectorXd evals = es.eigenvalues().reverse();
  const Eigen::MatrixXd evecs = es.eigenvectors().rowwise().reverse();

  // Variance far below the float rounding of the input is noise, not a direction.
  const double tol = std::max(evals(0), 0.0) * 1e-9;
  PcaResult r;
  r.projection = Tensor<double>({dims, h, w});
  std::size_t rank_short = 0;
  for (std::size_t d = 0; d < dims; ++d) {
    const double ev = evals(static_cast<Eigen::Index>(d));
    r.eigenvalues.push_back(std::max(ev, 0.0));
    if (!(ev > tol)) {
      ++rank_short;
      r.eigenvalues.back() = 0.0;
      continue;  // projection stays zero
    }
    const Eigen::VectorXd proj = x * evecs.col(static_cast<Eigen::Index>(d));
    for (std::size_t p = 0; p < hw; ++p) r.projection[d * hw + p] = proj(static_cast<Eigen::Index>(p));
  }
  if (rank_short > 0)
    std::cerr << "warning: pca_project: covariance rank below " << dims << ", " << rank_short
              << " component(s) padded with zeros\n";
  return r;
}

Tensor<float> pca_project(const Tensor<float>& f, std::size_t dims) {
  const PcaResult r = pca_components(f, dims);
  const std::size_t hw = r.projection.numel() / dims;
  Tensor<float> out({dims, r.projection.dim(1), r.projection.dim(2)});
  for (std::size_t d = 0; d < dims; ++d) {
    auto first = r.projection.data().begin() + static_cast<std::ptrdiff_t>(d * hw);
    const auto [lo, hi] = std::minmax_element(first, first + static_cast<std::ptrdiff_t>(hw));
    const double range = *hi - *lo;
    for (std::size_t p = 0; p < hw; ++p)
      out[d * hw + p] = range > 0 ? static_cast<float>((r.projection[d * hw + p] - *lo) / range) : 0.0f;
  }
  return out;
}

template struct RdmParams<float>;
template struct RdmParams<double>;
template RdmOutputs<float> rdm_forward(Tape<float>&, const ParamStore<float>&, const RdmParams<float>&,
                                       const Tensor<float>&, const Tensor<float>&, const Tensor<float>&);
template RdmOutputs<double> rdm_forward(Tape<double>&, const ParamStore<double>&, const RdmParams<double>&,
                                        const Tensor<double>&, const Tensor<double>&, const Tensor<double>&);

}  // namespace ebseg
