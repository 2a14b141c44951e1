#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "ebseg/params.hpp"

namespace ebseg {

/// Positions of the min(K, size) largest confidences, in descending order of
/// confidence; equal confidences are ordered by ascending position.
template <class T>
std::vector<std::size_t> sample_topk(std::span<const T> confidence, std::size_t k);

enum class GraphActivation { relu, identity };

/// Rows of image `n` of f_merge at `indices`: K' x C.
template <class T>
Tensor<T> gather_features(Tape<T>& tape, const Tensor<T>& f_merge, std::size_t n,
                          std::span<const std::size_t> indices) {
  return tape.gather_points(f_merge, n, indices);
}

/// act(A'^T G W^T) with G the K' x C node features, W the C x C weight and A'
/// the top-left K' x K' block of the adjacency (or I - A' for the Laplacian form).
template <class T>
Tensor<T> graph_conv(Tape<T>& tape, const Tensor<T>& g_in, const Tensor<T>& w_g, const Tensor<T>& a_g,
                     bool laplacian_variant, GraphActivation act = GraphActivation::relu);

template <class T>
Tensor<T> scatter_back(Tape<T>& tape, const Tensor<T>& f_merge, std::size_t n, const Tensor<T>& g_out,
                       std::span<const std::size_t> indices) {
  return tape.scatter_points(f_merge, n, g_out, indices);
}

void init_pgm_params(ParamStore<float>& ps, ParamInit& init, const std::string& prefix, std::size_t channels,
                     std::size_t k);

/// Per image: top-K of f_b, gather from f_merge, graph conv, scatter back.
/// The selection is a constant of the forward pass (no gradient through it).
/// k == 0 returns f_merge itself. `indices_out`, if given, receives the
/// positions chosen for each image.
template <class T>
Tensor<T> pgm_forward(Tape<T>& tape, const Tensor<T>& f_b, const Tensor<T>& f_merge, const Tensor<T>& w_g,
                      const Tensor<T>& a_g, std::size_t k, bool laplacian_variant,
                      std::vector<std::vector<std::size_t>>* indices_out = nullptr);

}  // namespace ebseg
