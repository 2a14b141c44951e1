#pragma once

#include <string>
#include <vector>

#include "ebseg/params.hpp"

namespace ebseg {

/// Handles to one differential module's weights inside a ParamStore.
/// edge: (C + C_low) -> C fusion; edgehead1/2: C -> C/2 -> 1;
/// refine: (C + C_high) -> C; reshead1/2: C -> C/2 -> 2.
template <class T>
struct RdmParams {
  std::string prefix;
  std::size_t channels = 0;
  std::size_t c_low = 0;
  std::size_t c_high = 0;
  bool edge_relu = true;

  static RdmParams bind(const ParamStore<T>& ps, const std::string& prefix, bool edge_relu = true);
};

template <class T>
struct RdmOutputs {
  Tensor<T> f_edge;          // C
  Tensor<T> f_b;             // 1, edge probability
  Tensor<T> f_residual;      // C
  Tensor<T> f_residual_ref;  // C
  Tensor<T> f_r;             // 2, residual logits
  Tensor<T> f_merge;         // C
};

void init_rdm_params(ParamStore<float>& ps, ParamInit& init, const std::string& prefix, std::size_t channels,
                     std::size_t c_low, std::size_t c_high);

/// All maps are N x C x h x w. f_low and f_high are resized to h x w.
template <class T>
RdmOutputs<T> rdm_forward(Tape<T>& tape, const ParamStore<T>& ps, const RdmParams<T>& p, const Tensor<T>& f_in,
                          const Tensor<T>& f_low, const Tensor<T>& f_high);

/// Per-pixel PCA of a C x h x w (or 1 x C x h x w) map onto its top `dims`
/// principal directions, min-max scaled to [0,1] per output channel.
Tensor<float> pca_project(const Tensor<float>& f, std::size_t dims = 3);

struct PcaResult {
  Tensor<double> projection;        // dims x h x w, centred, unscaled
  std::vector<double> eigenvalues;  // descending, population covariance
};
PcaResult pca_components(const Tensor<float>& f, std::size_t dims = 3);

}  // namespace ebseg
