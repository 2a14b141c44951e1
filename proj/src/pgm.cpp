#include "ebseg/pgm.hpp"

#include <algorithm>
#include <numeric>

namespace ebseg {

template <class T>
std::vector<std::size_t> sample_topk(std::span<const T> confidence, std::size_t k) {
  std::vector<std::size_t> idx(confidence.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  const std::size_t take = std::min(k, idx.size());
  auto before = [&](std::size_t a, std::size_t b) {
    return confidence[a] > confidence[b] || (confidence[a] == confidence[b] && a < b);
  };
  std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(take), idx.end(), before);
  idx.resize(take);
  return idx;
}

template <class T>
Tensor<T> graph_conv(Tape<T>& tape, const Tensor<T>& g_in, const Tensor<T>& w_g, const Tensor<T>& a_g,
                     bool laplacian_variant, GraphActivation act) {
  if (g_in.ndim() != 2 || w_g.ndim() != 2 || a_g.ndim() != 2)
    throw std::invalid_argument("graph_conv: g_in, w_g and a_g must be matrices");
  const std::size_t kp = g_in.dim(0), c = g_in.dim(1);
  if (w_g.dim(0) != c || w_g.dim(1) != c)
    throw std::invalid_argument("graph_conv: w_g is " + shape_str(w_g.shape()) + ", expected " +
                                std::to_string(c) + "x" + std::to_string(c));
  if (a_g.dim(0) != a_g.dim(1) || a_g.dim(0) < kp)
    throw std::invalid_argument("graph_conv: a_g is " + shape_str(a_g.shape()) + ", need a square matrix of at least " +
                                std::to_string(kp) + " nodes");
  Tensor<T> a = a_g.dim(0) == kp ? a_g : tape.crop2d(a_g, kp, kp);
  if (laplacian_variant) {
    Tensor<T> eye = Tensor<T>::zeros({kp, kp});
    for (std::size_t i = 0; i < kp; ++i) eye[i * kp + i] = T(1);
    a = tape.sub(eye, a);
  }
  Tensor<T> mixed = tape.matmul(tape.transpose(a), g_in);
  Tensor<T> out = tape.matmul(mixed, tape.transpose(w_g));
  return act == GraphActivation::relu ? tape.relu(out) : out;
}

void init_pgm_params(ParamStore<float>& ps, ParamInit& init, const std::string& prefix, std::size_t channels,
                     std::size_t k) {
  // Identity start: relu(I * G * I) == G for the non-negative merge features.
  init.identity(ps, prefix + ".w_g", channels);
  init.identity(ps, prefix + ".a_g", k);
}

template <class T>
Tensor<T> pgm_forward(Tape<T>& tape, const Tensor<T>& f_b, const Tensor<T>& f_merge, const Tensor<T>& w_g,
                      const Tensor<T>& a_g, std::size_t k, bool laplacian_variant,
                      std::vector<std::vector<std::size_t>>* indices_out) {
  if (f_b.ndim() != 4 || f_merge.ndim() != 4 || f_b.dim(1) != 1 || f_b.dim(0) != f_merge.dim(0) ||
      f_b.dim(2) != f_merge.dim(2) || f_b.dim(3) != f_merge.dim(3))
    throw std::invalid_argument("pgm: f_b " + shape_str(f_b.shape()) + " does not match f_merge " +
                                shape_str(f_merge.shape()));
  if (indices_out) indices_out->assign(f_merge.dim(0), {});
  if (k == 0) return f_merge;
  const std::size_t hw = f_b.dim(2) * f_b.dim(3);
  Tensor<T> out = f_merge;
  for (std::size_t n = 0; n < f_merge.dim(0); ++n) {
    const std::vector<std::size_t> idx = sample_topk(f_b.data().subspan(n * hw, hw), k);
    Tensor<T> g = gather_features(tape, f_merge, n, idx);
    Tensor<T> g_out = graph_conv(tape, g, w_g, a_g, laplacian_variant);
    out = scatter_back(tape, out, n, g_out, idx);
    if (indices_out) (*indices_out)[n] = idx;
  }
  return out;
}

template std::vector<std::size_t> sample_topk(std::span<const float>, std::size_t);
template std::vector<std::size_t> sample_topk(std::span<const double>, std::size_t);
template Tensor<float> graph_conv(Tape<float>&, const Tensor<float>&, const Tensor<float>&, const Tensor<float>&,
                                  bool, GraphActivation);
template Tensor<double> graph_conv(Tape<double>&, const Tensor<double>&, const Tensor<double>&,
                                   const Tensor<double>&, bool, GraphActivation);
template Tensor<float> pgm_forward(Tape<float>&, const Tensor<float>&, const Tensor<float>&, const Tensor<float>&,
                                   const Tensor<float>&, std::size_t, bool, std::vector<std::vector<std::size_t>>*);
template Tensor<double> pgm_forward(Tape<double>&, const Tensor<double>&, const Tensor<double>&,
                                    const Tensor<double>&, const Tensor<double>&, std::size_t, bool,
                                    std::vector<std::vector<std::size_t>>*);

}  // namespace ebseg
